"""Command-line entry point.

One executable, ``power-attest``, exposes every stage as a subcommand so
whole experiments can be scripted and reproduced. Exit codes: 0 on success,
1 when an attestation or simulated defense came back negative, 2 for
validation errors (bad arguments, bad config, malformed files), 3 for
unexpected internal errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import CONFIG_ENV_VAR, resolve_config
from .errors import PowerAttestError
from .evaluate import evaluate, worst_fp_rate, write_report, write_report_csv
from .matcher import attest_multi, attest_single
from .pipeline import report_recall, run_pipeline
from .plotting import emit_trace_image, emit_trace_plot
from .protocol.actors import World
from .protocol.attacks import run_attack, run_honest_campaign
from .security import (
    DEFAULT_P_ALPHA,
    DEFAULT_P_BETA,
    anchored_params,
    format_level_table,
    honest_fail_prob,
    level_table,
    min_traces_for_level,
)
from .synth import (
    default_profiles,
    profile_bucket,
    read_corpus,
    read_profiles,
    synth_to_dir,
)
from .template import build_template, calibrate_threshold, read_template, write_template
from .trace import detect_triggers, read_capture, read_trace, write_trace

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_VALIDATION = 2
EXIT_INTERNAL = 3


def emit_table1(p_alpha: float = DEFAULT_P_ALPHA, p_beta: float = DEFAULT_P_BETA) -> str:
    """Provisioning table for all anchored security levels, formatted."""
    return format_level_table(level_table(p_alpha, p_beta))


def _cmd_decode(args, config) -> int:
    trace = read_capture(args.infile)
    if args.detect_triggers:
        detect_triggers(trace, config.trigger)
    write_trace(trace, args.out)
    print(
        f"decoded {trace.samples.size} samples"
        + (f", triggers at {trace.triggers}" if trace.triggers else "")
        + f" -> {args.out}"
    )
    return EXIT_OK


def _cmd_synth(args, config) -> int:
    profiles = (
        read_profiles(args.profiles) if args.profiles else default_profiles()
    )
    seed = config.seed if args.seed is None else args.seed
    manifest = synth_to_dir(
        profiles, args.per_program, seed, args.out, config.trigger
    )
    print(f"wrote {len(profiles) * args.per_program} traces, manifest {manifest}")
    return EXIT_OK


def _cmd_template(args, config) -> int:
    window = config.filter_window if args.window is None else args.window
    order = config.filter_order if args.order is None else args.order
    profiles = {p.program_id: p for p in default_profiles()}
    if args.bucket is not None:
        bucket = args.bucket
    elif args.program in profiles:
        bucket = profile_bucket(profiles[args.program])
    else:
        raise PowerAttestError(
            f"no bundled profile {args.program!r}; pass --bucket explicitly"
        )
    template = build_template(
        read_corpus(args.corpus, args.program, args.start, args.count),
        bucket,
        window,
        order,
    )
    write_template(template, args.out)
    print(f"built template {template.program_id!r} from {template.trace_count} traces")
    return EXIT_OK


def _cmd_calibrate(args, config) -> int:
    percentile = config.percentile if args.percentile is None else args.percentile
    template = read_template(args.template)
    calibrated = calibrate_threshold(
        template,
        read_corpus(args.corpus, template.program_id, args.start, args.count),
        percentile,
    )
    out = args.out or args.template
    write_template(calibrated, out)
    print(
        f"calibrated {calibrated.program_id!r}: corr_thres "
        f"{calibrated.corr_thres:.6f} (percentile {percentile}) -> {out}"
    )
    return EXIT_OK


def _cmd_attest(args, config) -> int:
    template = read_template(args.template)
    trace = read_trace(args.trace)
    decision = attest_single(trace, template, max_lag=args.max_lag)
    verdict = "PASS" if decision.passed else "FAIL"
    print(
        f"{verdict} correlation {decision.correlation:.6f} vs "
        f"threshold {decision.threshold_used:.6f}"
    )
    return EXIT_OK if decision.passed else EXIT_NEGATIVE


def _cmd_attest_multi(args, config) -> int:
    template = read_template(args.template)
    traces = read_corpus(args.corpus, args.program, args.start, args.count)
    decision = attest_multi(traces, template, args.x_th)
    verdict = "PASS" if decision.passed else "FAIL"
    print(
        f"{verdict} {decision.pass_count} traces passed, "
        f"required {args.x_th}"
    )
    return EXIT_OK if decision.passed else EXIT_NEGATIVE


def _cmd_eval(args, config) -> int:
    template_count = args.template_count
    calibration_count = args.calibration_count
    programs = sorted(
        {entry.program_id for entry in _manifest_entries(args.corpus)}
    )
    profiles = {p.program_id: p for p in default_profiles()}
    templates = {}
    for program in programs:
        if program not in profiles:
            raise PowerAttestError(f"no bundled profile for program {program!r}")
        built = build_template(
            read_corpus(args.corpus, program, 0, template_count),
            profile_bucket(profiles[program]),
            config.filter_window,
            config.filter_order,
        )
        templates[program] = calibrate_threshold(
            built,
            read_corpus(args.corpus, program, template_count, calibration_count),
            config.percentile,
        )
    report = evaluate(
        templates,
        read_corpus(
            args.corpus, None, template_count + calibration_count, args.eval_count
        ),
    )
    write_report(report, args.out_json)
    if args.out_csv:
        write_report_csv(report, args.out_csv)
    impostor, victim, count, rate = worst_fp_rate(report)
    print(f"recall {report_recall(report):.4f} over {len(programs)} programs")
    print(
        f"worst false-positive source: {impostor!r} against {victim!r} "
        f"({count} hits, rate {rate:.4f})"
    )
    return EXIT_OK


def _manifest_entries(manifest_path):
    from .synth import read_manifest

    return read_manifest(manifest_path)


def _cmd_secparam(args, config) -> int:
    p_alpha = config.p_alpha if args.p_alpha is None else args.p_alpha
    p_beta = config.p_beta if args.p_beta is None else args.p_beta
    if args.table or args.level is None:
        print(emit_table1(p_alpha, p_beta))
        return EXIT_OK
    if args.scan:
        params = min_traces_for_level(p_alpha, p_beta, args.level)
    else:
        params = anchored_params(args.level, p_alpha, p_beta)
    print(
        f"level {args.level}-bit: n {params.n}, x_th {params.x_th}, "
        f"p_cheat {params.p_cheat:.3e}, honest_fail "
        f"{honest_fail_prob(params.n, params.x_th, p_beta):.3e}"
    )
    return EXIT_OK


def _cmd_protocol_sim(args, config) -> int:
    seed = config.seed if args.seed is None else args.seed
    if args.attack == "subst-app" and args.mode == "bernoulli":
        result = run_attack(
            "subst-app",
            mode="bernoulli",
            sessions=args.sessions,
            seed=seed,
        )
        print(json.dumps(result.details, sort_keys=True, indent=2))
        return EXIT_OK if result.details["hits"] < 3 else EXIT_NEGATIVE

    params = anchored_params(config.level_bits, config.p_alpha, config.p_beta)
    trace_count = params.n if args.trace_count is None else args.trace_count
    pass_threshold = (
        params.x_th if args.pass_threshold is None else args.pass_threshold
    )

    if args.attack == "none":
        world = World(
            apps=(args.app,),
            seed=seed,
            trace_count=trace_count,
            pass_threshold=pass_threshold,
            pool_size=max(128, trace_count),
            template_count=64,
            calibration_count=120,
            percentile=config.percentile,
            filter_window=config.filter_window,
            filter_order=config.filter_order,
        )
        campaign = run_honest_campaign(world, args.sessions, app_id=args.app)
        if args.transcript:
            world.write_transcript(args.transcript)
        print(
            f"{campaign.accepted}/{campaign.sessions} sessions accepted, "
            f"{campaign.aborted} aborted "
            f"(n={trace_count}, x_th={pass_threshold})"
        )
        return EXIT_OK if campaign.accepted == campaign.sessions else EXIT_NEGATIVE

    if args.attack == "subst-app":
        result = run_attack(
            "subst-app", mode="full", sessions=args.sessions, seed=seed
        )
        print(json.dumps(result.details, sort_keys=True, indent=2))
        return EXIT_OK if result.details["target_in_interval"] else EXIT_NEGATIVE

    result = run_attack(args.attack, seed=seed, rounds=args.rounds)
    defense_held = True
    for variant, record in result.variants.items():
        expected = result.details.get("expected", {}).get(variant)
        line = (
            f"{variant}: accepted={record.accepted} verdict={record.verdict} "
            f"abort={record.abort_reason or '-'}@{record.abort_tag or '-'}"
        )
        if expected:
            line += f" (expected {expected})"
            if record.accepted or record.abort_reason != expected:
                defense_held = False
        print(line)
    campaign = result.details.get("campaign", {})
    for variant, counts in campaign.items():
        if counts["expected_matches"] != counts["sessions"]:
            defense_held = False
        if counts["sessions"] > 1:
            print(
                f"{variant}: {counts['expected_matches']}/{counts['sessions']} "
                "rounds aborted with the expected reason"
            )
    print("defense held" if defense_held else "DEFENSE BREACHED")
    return EXIT_OK if defense_held else EXIT_NEGATIVE


def _cmd_pipeline(args, config) -> int:
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)
    result = run_pipeline(
        config,
        args.out,
        sessions=args.sessions,
        progress=lambda msg: print(msg),
    )
    print(f"pipeline complete under {result.out_dir}")
    for label, rel in sorted(result.artifacts.items()):
        print(f"  {label}: {rel}")
    return EXIT_OK


def _cmd_plot(args, config) -> int:
    if args.template and not args.trace:
        subject = read_template(args.template)
        overlay = None
    elif args.trace:
        subject = read_trace(args.trace)
        overlay = read_template(args.template) if args.template else None
    else:
        raise PowerAttestError("plot needs --trace and/or --template")
    emit_trace_plot(subject, args.out, template=overlay, stride=args.stride)
    print(f"wrote plot data {args.out}")
    if args.image:
        emit_trace_image(args.out, args.image)
        print(f"wrote image {args.image}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="power-attest",
        description="Power-trace attestation toolkit: synthesis, templates, "
        "matching, security parameterization, and protocol simulation.",
    )
    parser.add_argument(
        "--config",
        help=f"config file path (default: ${CONFIG_ENV_VAR} or built-ins)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode a raw capture file to a trace")
    p.add_argument("infile")
    p.add_argument("--out", required=True)
    p.add_argument("--detect-triggers", action="store_true")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("synth", help="synthesize a trace corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-program", type=int, default=8)
    p.add_argument("--seed", type=int)
    p.add_argument("--profiles", help="profiles JSON (default: bundled programs)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("template", help="build a template from corpus traces")
    p.add_argument("--corpus", required=True, help="corpus manifest path")
    p.add_argument("--program", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--window", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--bucket", type=int, help="bucket exponent override")
    p.set_defaults(func=_cmd_template)

    p = sub.add_parser("calibrate", help="calibrate a template's threshold")
    p.add_argument("--template", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--percentile", type=float)
    p.add_argument("--out", help="output path (default: overwrite input)")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("attest", help="attest a single trace")
    p.add_argument("--template", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--max-lag", type=int, default=0)
    p.set_defaults(func=_cmd_attest)

    p = sub.add_parser("attest-multi", help="attest a batch from a corpus")
    p.add_argument("--template", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--x-th", type=int, required=True)
    p.add_argument("--program")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=_cmd_attest_multi)

    p = sub.add_parser("eval", help="confusion metrics over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv")
    p.add_argument("--template-count", type=int, default=5)
    p.add_argument("--calibration-count", type=int, default=5)
    p.add_argument("--eval-count", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("secparam", help="security parameterization")
    p.add_argument("--level", type=int)
    p.add_argument("--table", action="store_true", help="print all levels")
    p.add_argument("--p-alpha", type=float)
    p.add_argument("--p-beta", type=float)
    p.add_argument(
        "--scan",
        action="store_true",
        help="scan for the smallest n instead of the anchored value",
    )
    p.set_defaults(func=_cmd_secparam)

    p = sub.add_parser("protocol-sim", help="run protocol sessions")
    p.add_argument("--sessions", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--app", default="alpha")
    p.add_argument(
        "--attack",
        choices=("none", "subst-meas", "false-result", "subst-app"),
        default="none",
    )
    p.add_argument(
        "--mode",
        choices=("full", "bernoulli"),
        default="full",
        help="subst-app only: full protocol runs or binomial shortcut",
    )
    p.add_argument("--trace-count", type=int)
    p.add_argument("--pass-threshold", type=int)
    p.add_argument(
        "--rounds",
        type=int,
        default=1,
        help="subst-meas/false-result: repetitions per adversarial variant",
    )
    p.add_argument("--transcript", help="write transcript JSONL here")
    p.set_defaults(func=_cmd_protocol_sim)

    p = sub.add_parser("pipeline", help="run every stage under one directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--sessions", type=int, default=20)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("plot", help="emit plot data (CSV) for a trace/template")
    p.add_argument("--trace")
    p.add_argument("--template")
    p.add_argument("--out", required=True)
    p.add_argument("--image", help="optional raster output (needs matplotlib)")
    p.add_argument("--stride", type=int)
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = resolve_config(args.config)
        return args.func(args, config)
    except PowerAttestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
