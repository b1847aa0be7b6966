"""Per-program templates: filtered mean traces with calibrated thresholds.

A template is the pointwise mean of many execution windows of one program,
smoothed with a Savitzky-Golay filter. Its correlation threshold is
calibrated afterwards as a low percentile of self-correlations, so a known
fraction of honest traces scores at or above it.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.signal import savgol_coeffs

from .errors import (
    BadFilterParams,
    FormatError,
    InsufficientTraces,
    MixedLabels,
)
from .trace import LengthBucket, Trace, as_bucket, execution_window

DEFAULT_FILTER_WINDOW = 51
DEFAULT_FILTER_ORDER = 3
DEFAULT_PERCENTILE = 25.0

TEMPLATE_MAGIC = b"PWRTPL01"


def _validate_filter(window: int, order: int, length: int | None = None) -> None:
    if window < 1 or window % 2 == 0:
        raise BadFilterParams(f"window must be odd and positive, got {window}")
    if not 0 <= order < window:
        raise BadFilterParams(
            f"order must satisfy 0 <= order < window, got order {order} "
            f"for window {window}"
        )
    if length is not None and window > length:
        raise BadFilterParams(
            f"window {window} exceeds input length {length}"
        )


@lru_cache(maxsize=32)
def _filter_taps(window: int, order: int) -> np.ndarray:
    return savgol_coeffs(window, order)


def savitzky_golay(samples, window: int, order: int) -> np.ndarray:
    """Least-squares polynomial smoothing with mirror-padded edges.

    Every output sample is the center value of the degree-`order`
    polynomial fit over the surrounding `window` samples; the input is
    mirror-padded (edge sample not repeated) so the output length matches
    the input length.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("samples must be a non-empty 1-D array")
    _validate_filter(window, order, x.size)
    if window == 1:
        return x.copy()
    half = window // 2
    padded = np.pad(x, half, mode="reflect")
    return np.convolve(padded, _filter_taps(window, order), mode="valid")


@dataclass(frozen=True)
class Template:
    """Filtered mean execution window for one program."""

    program_id: str
    samples: np.ndarray
    bucket: LengthBucket
    corr_thres: float | None
    trace_count: int
    filter_window: int
    filter_order: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        bucket = as_bucket(self.bucket)
        object.__setattr__(self, "bucket", bucket)
        if not self.program_id:
            raise ValueError("program_id must be non-empty")
        if samples.ndim != 1 or samples.size != bucket.size:
            raise ValueError(
                f"template must hold exactly {bucket.size} samples, "
                f"got {samples.size}"
            )
        if self.trace_count < 1:
            raise ValueError("trace_count must be positive")
        _validate_filter(self.filter_window, self.filter_order)
        if self.corr_thres is not None and not -1.0 < self.corr_thres < 1.0:
            raise ValueError(
                f"corr_thres must lie strictly inside (-1, 1), "
                f"got {self.corr_thres}"
            )

    @property
    def calibrated(self) -> bool:
        return self.corr_thres is not None


def build_template(
    traces: Iterable[Trace],
    bucket: LengthBucket | int,
    window: int = DEFAULT_FILTER_WINDOW,
    order: int = DEFAULT_FILTER_ORDER,
) -> Template:
    """Average execution windows and smooth the result; threshold unset.

    Traces are consumed as a stream, so a generator of full captures works
    without holding the whole population in memory. All traces must carry
    the same program label.
    """
    b = as_bucket(bucket)
    _validate_filter(window, order, b.size)
    acc = np.zeros(b.size, dtype=np.float64)
    count = 0
    program_id: str | None = None
    for trace in traces:
        if trace.program_id is None or (
            program_id is not None and trace.program_id != program_id
        ):
            raise MixedLabels(
                f"expected every trace labeled {program_id!r}, "
                f"got {trace.program_id!r}"
            )
        program_id = trace.program_id
        acc += execution_window(trace, b)
        count += 1
    if count < 2:
        raise InsufficientTraces(f"need at least 2 traces, got {count}")
    mean = acc / count
    return Template(
        program_id=program_id,
        samples=savitzky_golay(mean, window, order),
        bucket=b,
        corr_thres=None,
        trace_count=count,
        filter_window=window,
        filter_order=order,
    )


def calibrate_threshold(
    template: Template,
    traces: Iterable[Trace],
    percentile: float = DEFAULT_PERCENTILE,
) -> Template:
    """Set corr_thres to a low percentile of self-correlations.

    Correlates every trace against the template, sorts ascending, and picks
    the value at index floor(percentile/100 * count) (no interpolation), so
    with 1000 distinct correlations at percentile 25 exactly 750 of them
    sit at or above the threshold. Returns a new calibrated Template.
    """
    from .matcher import pearson

    if not 0 <= percentile <= 100:
        raise ValueError(f"percentile must lie in [0, 100], got {percentile}")
    corrs = []
    for trace in traces:
        if trace.program_id != template.program_id:
            raise MixedLabels(
                f"trace labeled {trace.program_id!r} cannot calibrate a "
                f"{template.program_id!r} template"
            )
        corrs.append(
            pearson(execution_window(trace, template.bucket), template.samples)
        )
    if len(corrs) < 4:
        raise InsufficientTraces(
            f"need at least 4 calibration traces, got {len(corrs)}"
        )
    corrs.sort()
    index = min(
        math.floor(percentile / 100.0 * len(corrs)), len(corrs) - 1
    )
    return replace(template, corr_thres=float(corrs[index]))


# Template files: fixed header followed by the sample vector. corr_thres is
# stored as NaN while uncalibrated, since the field is always present.


def write_template(template: Template, path) -> None:
    program = template.program_id.encode("utf-8")
    thres = math.nan if template.corr_thres is None else template.corr_thres
    header = TEMPLATE_MAGIC + struct.pack(
        f"<H{len(program)}sBdIHB",
        len(program),
        program,
        template.bucket.exponent,
        thres,
        template.trace_count,
        template.filter_window,
        template.filter_order,
    )
    Path(path).write_bytes(header + template.samples.astype("<f8").tobytes())


def read_template(path) -> Template:
    raw = Path(path).read_bytes()
    if len(raw) < 10 or raw[:8] != TEMPLATE_MAGIC:
        raise FormatError(f"{path}: not a template file")
    (name_len,) = struct.unpack_from("<H", raw, 8)
    fixed = struct.calcsize(f"<H{name_len}sBdIHB")
    if len(raw) < 8 + fixed:
        raise FormatError(f"{path}: truncated template header")
    name_bytes, exponent, thres, trace_count, window, order = struct.unpack_from(
        f"<{name_len}sBdIHB", raw, 10
    )
    body = raw[8 + fixed :]
    size = 1 << exponent
    if len(body) != 8 * size:
        raise FormatError(
            f"{path}: expected {size} samples, found {len(body) // 8}"
        )
    try:
        return Template(
            program_id=name_bytes.decode("utf-8"),
            samples=np.frombuffer(body, dtype="<f8").copy(),
            bucket=LengthBucket(exponent),
            corr_thres=None if math.isnan(thres) else thres,
            trace_count=trace_count,
            filter_window=window,
            filter_order=order,
        )
    except ValueError as exc:
        raise FormatError(f"{path}: invalid template: {exc}") from exc
