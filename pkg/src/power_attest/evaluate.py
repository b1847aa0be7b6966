"""All-pairs evaluation of templates against a labeled corpus.

Every trace in the corpus is attested against every template: own-label
decisions feed TP/FN, foreign-label decisions feed FP/TN, and the foreign
program contributing the most false positives is tracked per template. The
resulting report carries precision/recall/F1 per template and supports the
worst-pair false-positive rate used to pick an operating p_alpha.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import EmptyCorpus, FormatError, MissingTemplate
from .matcher import attest_single
from .synth import (
    ProgramProfile,
    TriggerConfig,
    corpus,
    default_profiles,
    generate_trace,
    profile_bucket,
    trace_seed,
)
from .template import (
    DEFAULT_FILTER_ORDER,
    DEFAULT_FILTER_WINDOW,
    DEFAULT_PERCENTILE,
    Template,
    build_template,
    calibrate_threshold,
)
from .trace import Trace

DEFAULT_TEMPLATE_COUNT = 100
DEFAULT_CALIBRATION_COUNT = 200
DEFAULT_EVAL_COUNT = 300


@dataclass
class ConfusionStats:
    """Attestation decision counts for one template."""

    program_id: str
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    per_program_fp: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalResult:
    stats: ConfusionStats
    metrics: Metrics
    max_fp_program: str | None
    max_fp_count: int
    max_fp_tied: tuple[str, ...]
    corr_thres: float


@dataclass(frozen=True)
class EvalReport:
    entries: dict[str, EvalResult]
    trace_counts: dict[str, int]


def metrics(stats: ConfusionStats) -> Metrics:
    """Precision, recall, and F1 with the defined-zero rule.

    Any zero denominator yields 0 for that metric, and F1 is 0 whenever
    either factor is 0.
    """
    precision = stats.tp / (stats.tp + stats.fp) if stats.tp + stats.fp else 0.0
    recall = stats.tp / (stats.tp + stats.fn) if stats.tp + stats.fn else 0.0
    if precision > 0.0 and recall > 0.0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
    return Metrics(precision=precision, recall=recall, f1=f1)


def _normalize_templates(
    templates: dict[str, Template] | Iterable[Template],
) -> dict[str, Template]:
    if isinstance(templates, dict):
        return dict(templates)
    return {t.program_id: t for t in templates}


def evaluate(
    templates: dict[str, Template] | Iterable[Template],
    traces: Iterable[Trace],
) -> EvalReport:
    """Attest every corpus trace against every template.

    The corpus is consumed as a stream. Per-impostor false-positive counts
    are kept for every foreign program (zeros included), so fp always
    equals the sum over per_program_fp.
    """
    by_id = _normalize_templates(templates)
    stats = {
        tid: ConfusionStats(
            program_id=tid,
            per_program_fp={other: 0 for other in by_id if other != tid},
        )
        for tid in by_id
    }
    trace_counts: dict[str, int] = {tid: 0 for tid in by_id}
    total = 0
    for trace in traces:
        label = trace.program_id
        if label not in by_id:
            raise MissingTemplate(f"no template for corpus label {label!r}")
        trace_counts[label] += 1
        total += 1
        for tid, template in by_id.items():
            passed = attest_single(trace, template).passed
            entry = stats[tid]
            if tid == label:
                if passed:
                    entry.tp += 1
                else:
                    entry.fn += 1
            else:
                if passed:
                    entry.fp += 1
                    entry.per_program_fp[label] += 1
                else:
                    entry.tn += 1
    if total == 0:
        raise EmptyCorpus("evaluation corpus yielded no traces")

    entries = {}
    for tid in sorted(by_id):
        entry = stats[tid]
        max_count = max(entry.per_program_fp.values(), default=0)
        tied = tuple(
            sorted(
                p
                for p, c in entry.per_program_fp.items()
                if c == max_count and max_count > 0
            )
        )
        entries[tid] = EvalResult(
            stats=entry,
            metrics=metrics(entry),
            max_fp_program=tied[0] if tied else None,
            max_fp_count=max_count,
            max_fp_tied=tied,
            corr_thres=by_id[tid].corr_thres,
        )
    return EvalReport(entries=entries, trace_counts=trace_counts)


def worst_fp_rate(report: EvalReport) -> tuple[str, str, int, float]:
    """The (template, impostor) pair with the most false positives.

    Returns (template_id, impostor_id, fp_count, fp_count / impostor trace
    count). Ties break lexicographically on (template_id, impostor_id).
    """
    if not report.entries:
        raise ValueError("report holds no templates")
    best: tuple[str, str, int, float] | None = None
    for tid in sorted(report.entries):
        for impostor in sorted(report.entries[tid].stats.per_program_fp):
            count = report.entries[tid].stats.per_program_fp[impostor]
            denom = report.trace_counts.get(impostor, 0)
            rate = count / denom if denom else 0.0
            if best is None or count > best[2]:
                best = (tid, impostor, count, rate)
    return best


def reference_templates(
    profiles: list[ProgramProfile],
    template_count: int = DEFAULT_TEMPLATE_COUNT,
    calibration_count: int = DEFAULT_CALIBRATION_COUNT,
    seed: int = 0,
    *,
    trigger: TriggerConfig | None = None,
    window: int = DEFAULT_FILTER_WINDOW,
    order: int = DEFAULT_FILTER_ORDER,
    percentile: float = DEFAULT_PERCENTILE,
    share_calibration: bool = False,
) -> dict[str, Template]:
    """Build and calibrate one template per profile from streamed traces.

    Calibration traces are disjoint from template-building traces by
    default (trace indices continue past the building population);
    share_calibration=True reuses the building traces instead.
    """
    trigger = trigger or TriggerConfig()
    templates = {}
    for i, profile in enumerate(profiles):
        bucket = profile_bucket(profile)
        build_stream = (
            generate_trace(profile, trigger, seed=trace_seed(seed, i, j))
            for j in range(template_count)
        )
        template = build_template(build_stream, bucket, window, order)
        offset = 0 if share_calibration else template_count
        calib_stream = (
            generate_trace(profile, trigger, seed=trace_seed(seed, i, offset + j))
            for j in range(calibration_count)
        )
        templates[profile.program_id] = calibrate_threshold(
            template, calib_stream, percentile
        )
    return templates


def default_evaluation(
    profiles: list[ProgramProfile] | None = None,
    template_count: int = DEFAULT_TEMPLATE_COUNT,
    calibration_count: int = DEFAULT_CALIBRATION_COUNT,
    eval_count: int = DEFAULT_EVAL_COUNT,
    seed: int = 0,
    *,
    trigger: TriggerConfig | None = None,
    window: int = DEFAULT_FILTER_WINDOW,
    order: int = DEFAULT_FILTER_ORDER,
    percentile: float = DEFAULT_PERCENTILE,
) -> EvalReport:
    """Full evaluation harness over the (default) synthetic profile set.

    Evaluation traces are held out: their indices start after the template
    and calibration populations of the same master seed.
    """
    profiles = profiles if profiles is not None else default_profiles()
    trigger = trigger or TriggerConfig()
    templates = reference_templates(
        profiles,
        template_count,
        calibration_count,
        seed,
        trigger=trigger,
        window=window,
        order=order,
        percentile=percentile,
    )
    eval_stream = corpus(
        profiles,
        eval_count,
        seed,
        trigger,
        start_index=template_count + calibration_count,
    )
    return evaluate(templates, eval_stream)


# Report files: JSON object per template (threshold, worst impostor,
# metrics, decision counts) plus the per-program trace counts.


def report_to_dict(report: EvalReport) -> dict:
    return {
        "templates": {
            tid: {
                "corr_thres": entry.corr_thres,
                "max_fp": {
                    "program": entry.max_fp_program,
                    "count": entry.max_fp_count,
                    "tied": list(entry.max_fp_tied),
                },
                "precision": entry.metrics.precision,
                "recall": entry.metrics.recall,
                "f1": entry.metrics.f1,
                "tp": entry.stats.tp,
                "fp": entry.stats.fp,
                "tn": entry.stats.tn,
                "fn": entry.stats.fn,
                "per_program_fp": dict(
                    sorted(entry.stats.per_program_fp.items())
                ),
            }
            for tid, entry in sorted(report.entries.items())
        },
        "trace_counts": dict(sorted(report.trace_counts.items())),
    }


def report_from_dict(doc: dict) -> EvalReport:
    try:
        entries = {}
        for tid, fields in doc["templates"].items():
            stats = ConfusionStats(
                program_id=tid,
                tp=fields["tp"],
                fp=fields["fp"],
                tn=fields["tn"],
                fn=fields["fn"],
                per_program_fp=dict(fields["per_program_fp"]),
            )
            entries[tid] = EvalResult(
                stats=stats,
                metrics=Metrics(
                    precision=fields["precision"],
                    recall=fields["recall"],
                    f1=fields["f1"],
                ),
                max_fp_program=fields["max_fp"]["program"],
                max_fp_count=fields["max_fp"]["count"],
                max_fp_tied=tuple(fields["max_fp"]["tied"]),
                corr_thres=fields["corr_thres"],
            )
        return EvalReport(
            entries=entries, trace_counts=dict(doc["trace_counts"])
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed evaluation report: {exc}") from exc


def write_report(report: EvalReport, path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
    )


def read_report(path) -> EvalReport:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return report_from_dict(doc)


def write_report_csv(report: EvalReport, path) -> None:
    """Flat CSV, one row per template."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "program_id",
                "corr_thres",
                "max_fp_program",
                "max_fp_count",
                "precision",
                "recall",
                "f1",
            ]
        )
        for tid, entry in sorted(report.entries.items()):
            writer.writerow(
                [
                    tid,
                    f"{entry.corr_thres:.6f}",
                    entry.max_fp_program or "",
                    entry.max_fp_count,
                    f"{entry.metrics.precision:.4f}",
                    f"{entry.metrics.recall:.4f}",
                    f"{entry.metrics.f1:.4f}",
                ]
            )
