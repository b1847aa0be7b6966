"""Pearson correlation and single/multi-trace attestation decisions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import (
    DegenerateInput,
    LengthMismatch,
    ThresholdExceedsBatch,
    UncalibratedTemplate,
)
from .trace import Trace, execution_window

if TYPE_CHECKING:
    from .template import Template

_CHUNK = 65536


@dataclass(frozen=True)
class AttestDecision:
    """Outcome of an attestation check.

    Single-trace decisions populate `correlation`; multi-trace decisions
    populate `pass_count`. `threshold_used` is the correlation threshold or
    the required pass count respectively.
    """

    passed: bool
    threshold_used: float
    correlation: float | None = None
    pass_count: int | None = None


def pearson(a, b) -> float:
    """Sample Pearson correlation of two equal-length vectors.

    Single pass over both inputs: per-chunk moments are taken about the
    first chunk's means (so accumulated sums stay small) and combined
    across chunks with compensated summation. Million-sample traces keep
    full double precision this way.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("inputs must be 1-D")
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise DegenerateInput("correlation needs at least 2 samples")
    shift_x = float(x[:_CHUNK].mean())
    shift_y = float(y[:_CHUNK].mean())
    sums = np.zeros(5)
    comp = np.zeros(5)
    for start in range(0, n, _CHUNK):
        cx = x[start : start + _CHUNK] - shift_x
        cy = y[start : start + _CHUNK] - shift_y
        part = np.array([cx.sum(), cy.sum(), cx @ cx, cy @ cy, cx @ cy])
        total = sums + part
        swap = np.abs(sums) >= np.abs(part)
        comp += np.where(swap, (sums - total) + part, (part - total) + sums)
        sums = total
    dx, dy, dxx, dyy, dxy = sums + comp
    mx = dx / n
    my = dy / n
    var_x = dxx - n * mx * mx
    var_y = dyy - n * my * my
    if var_x <= 0.0 or var_y <= 0.0:
        raise DegenerateInput("constant input has no defined correlation")
    r = (dxy - n * mx * my) / math.sqrt(var_x * var_y)
    return min(1.0, max(-1.0, r))


def attest_single(
    trace: Trace, template: "Template", max_lag: int = 0
) -> AttestDecision:
    """Correlate one trace against a calibrated template.

    The trace is trimmed to the template's bucket at its trigger anchor.
    With max_lag > 0 the window start is additionally searched within
    +-max_lag samples and the best correlation is used (off by default;
    trigger anchoring is normally exact).
    """
    if template.corr_thres is None:
        raise UncalibratedTemplate(
            f"template {template.program_id!r} has no correlation threshold"
        )
    size = template.bucket.size
    if max_lag > 0 and trace.triggers is not None and trace.samples.size > size:
        n = trace.samples.size
        anchor = min(trace.triggers[0], n - size)
        starts = sorted(
            {
                min(max(anchor + delta, 0), n - size)
                for delta in range(-max_lag, max_lag + 1)
            }
        )
        r = max(
            pearson(trace.samples[s : s + size], template.samples)
            for s in starts
        )
    else:
        r = pearson(execution_window(trace, template.bucket), template.samples)
    return AttestDecision(
        passed=r >= template.corr_thres,
        threshold_used=template.corr_thres,
        correlation=r,
    )


def attest_multi(
    traces: Iterable[Trace], template: "Template", x_th: int
) -> AttestDecision:
    """Attest a batch: passed iff at least x_th traces pass individually.

    A threshold of zero passes vacuously (useful for degenerate parameter
    studies); the count of supplied traces must reach x_th.
    """
    if x_th < 0:
        raise ValueError(f"x_th must be non-negative, got {x_th}")
    pass_count = 0
    total = 0
    for trace in traces:
        total += 1
        if attest_single(trace, template).passed:
            pass_count += 1
    if x_th > total:
        raise ThresholdExceedsBatch(
            f"x_th {x_th} exceeds batch of {total} traces"
        )
    return AttestDecision(
        passed=pass_count >= x_th,
        threshold_used=float(x_th),
        pass_count=pass_count,
    )
