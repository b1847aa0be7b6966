"""End-to-end artifact pipeline.

``run_pipeline`` chains every stage, synthesis, template building, threshold
calibration, evaluation, security parameterization, and an honest protocol
campaign, writing all artifacts under one output directory. Every stage is
seeded from the config, so running the same config twice produces
byte-identical output trees. On the first module error a machine-readable
``error.json`` is written before the exception propagates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .config import Config, save_config
from .errors import ConfigError, PowerAttestError
from .evaluate import evaluate, worst_fp_rate, write_report, write_report_csv
from .protocol.actors import World
from .protocol.attacks import run_honest_campaign
from .security import anchored_params, format_level_table, level_table
from .synth import default_profiles, profile_bucket, read_corpus, synth_to_dir
from .template import build_template, calibrate_threshold, write_template

PIPELINE_STAGES = (
    "synth",
    "template",
    "calibrate",
    "eval",
    "secparam",
    "protocol-sim",
)


@dataclass
class PipelineResult:
    out_dir: Path
    artifacts: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def run_pipeline(
    config: Config,
    out_dir,
    *,
    profile_count: int = 2,
    per_program: int = 12,
    template_count: int = 5,
    calibration_count: int = 5,
    sessions: int = 20,
    progress=None,
) -> PipelineResult:
    """Run every stage under out_dir; deterministic for a fixed config."""
    eval_count = per_program - template_count - calibration_count
    if eval_count < 1:
        raise ConfigError(
            f"per_program={per_program} leaves no evaluation traces after "
            f"{template_count} template and {calibration_count} calibration"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = PipelineResult(out_dir=out)
    stage = "config"

    def note(message: str) -> None:
        if progress is not None:
            progress(message)

    try:
        save_config(config, out / "config.json")
        result.artifacts["config"] = "config.json"

        stage = "synth"
        note("synth: generating corpus")
        profiles = default_profiles()[:profile_count]
        corpus_dir = out / config.corpus_dir
        manifest = synth_to_dir(
            profiles, per_program, config.seed, corpus_dir, config.trigger
        )
        result.artifacts["corpus_manifest"] = str(
            manifest.relative_to(out)
        )

        stage = "template"
        note("template: building per-program templates")
        template_dir = out / config.template_dir
        template_dir.mkdir(parents=True, exist_ok=True)
        templates = {}
        for profile in profiles:
            built = build_template(
                read_corpus(manifest, profile.program_id, 0, template_count),
                profile_bucket(profile),
                config.filter_window,
                config.filter_order,
            )
            stage = "calibrate"
            calibrated = calibrate_threshold(
                built,
                read_corpus(
                    manifest, profile.program_id, template_count, calibration_count
                ),
                config.percentile,
            )
            write_template(calibrated, template_dir / f"{profile.program_id}.tpl")
            templates[profile.program_id] = calibrated
            stage = "template"
        result.artifacts["templates"] = config.template_dir

        stage = "eval"
        note("eval: scoring held-out traces")
        report = evaluate(
            templates,
            read_corpus(
                manifest, None, template_count + calibration_count, eval_count
            ),
        )
        (out / "eval").mkdir(parents=True, exist_ok=True)
        write_report(report, out / "eval" / "report.json")
        write_report_csv(report, out / "eval" / "report.csv")
        result.artifacts["eval_report"] = "eval/report.json"
        impostor, victim, fp_count, fp_rate = worst_fp_rate(report)

        stage = "secparam"
        note("secparam: computing provisioning table")
        rows = level_table(config.p_alpha, config.p_beta)
        _write_json(out / "security" / "table.json", rows)
        (out / "security" / "table.txt").write_text(
            format_level_table(rows) + "\n"
        )
        result.artifacts["security_table"] = "security/table.json"
        params = anchored_params(config.level_bits, config.p_alpha, config.p_beta)

        stage = "protocol-sim"
        note(
            f"protocol-sim: {sessions} honest sessions at "
            f"n={params.n}, x_th={params.x_th}"
        )
        app_id = profiles[0].program_id
        world = World(
            profiles,
            apps=(app_id,),
            seed=config.seed,
            trace_count=params.n,
            pass_threshold=params.x_th,
            template_count=64,
            calibration_count=120,
            pool_size=max(128, params.n),
            percentile=config.percentile,
            filter_window=config.filter_window,
            filter_order=config.filter_order,
        )
        campaign = run_honest_campaign(world, sessions, app_id=app_id)
        (out / "protocol").mkdir(parents=True, exist_ok=True)
        world.write_transcript(out / "protocol" / "transcript.jsonl")
        protocol_summary = {
            "sessions": campaign.sessions,
            "accepted": campaign.accepted,
            "aborted": campaign.aborted,
            "acceptance_rate": campaign.acceptance_rate,
            "trace_count": params.n,
            "pass_threshold": params.x_th,
            "app_id": app_id,
        }
        _write_json(out / "protocol" / "summary.json", protocol_summary)
        result.artifacts["protocol_transcript"] = "protocol/transcript.jsonl"
        result.artifacts["protocol_summary"] = "protocol/summary.json"

        result.summary = {
            "stages": list(PIPELINE_STAGES),
            "profiles": [p.program_id for p in profiles],
            "per_program": per_program,
            "recall": report_recall(report),
            "worst_false_positive": {
                "impostor": impostor,
                "victim": victim,
                "count": fp_count,
                "rate": fp_rate,
            },
            "protocol": protocol_summary,
        }
        _write_json(out / "summary.json", result.summary)
        result.artifacts["summary"] = "summary.json"
        return result
    except PowerAttestError as exc:
        _write_json(
            out / "error.json",
            {
                "stage": stage,
                "error": type(exc).__name__,
                "message": str(exc),
            },
        )
        raise


def report_recall(report) -> float:
    """Aggregate recall over all programs in an evaluation report."""
    true_pos = sum(r.stats.tp for r in report.entries.values())
    false_neg = sum(r.stats.fn for r in report.entries.values())
    total = true_pos + false_neg
    return true_pos / total if total else 0.0
