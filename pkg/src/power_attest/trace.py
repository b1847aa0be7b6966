"""Trace data model, raw capture decoding, trigger location, and trimming.

A capture is a flat little-endian byte stream of 32-bit words, each word
packing two 16-bit samples (low half first) whose 12 significant bits sit in
the most-significant positions. Decoded samples are therefore integers in
[0, 4095] stored as float64. Execution windows are delimited by two trigger
pulses and trimmed to power-of-two length buckets between 2^17 and 2^21.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import (
    EmptyCapture,
    FormatError,
    MalformedCapture,
    TooShort,
    TriggersNotFound,
)

SAMPLE_RATE_HZ = 1_000_000
ADC_BITS = 12
ADC_SHIFT = 16 - ADC_BITS
ADC_LEVELS = 1 << ADC_BITS
CAPTURE_SAMPLES = 1 << 21

BUCKET_EXPONENTS = (17, 18, 19, 20, 21)

TRC_MAGIC = b"PWRTRC01"
_TRIGGER_UNSET = 0xFFFFFFFF


@dataclass
class Trace:
    """A sequence of voltage samples with optional trigger marks and label."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ
    triggers: tuple[int, int] | None = None
    program_id: str | None = None

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must all be finite")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        self.samples = samples
        if self.triggers is not None:
            start, end = self.triggers
            if not 0 <= start < end <= samples.size:
                raise ValueError(
                    f"triggers ({start}, {end}) out of range for "
                    f"{samples.size} samples"
                )
            self.triggers = (int(start), int(end))

    def __len__(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class LengthBucket:
    """A power-of-two execution-window length, 2^17 through 2^21 samples."""

    exponent: int

    def __post_init__(self) -> None:
        if self.exponent not in BUCKET_EXPONENTS:
            raise ValueError(
                f"bucket exponent must be one of {BUCKET_EXPONENTS}, "
                f"got {self.exponent}"
            )

    @property
    def size(self) -> int:
        return 1 << self.exponent


def as_bucket(bucket: LengthBucket | int) -> LengthBucket:
    """Coerce a bare exponent into a LengthBucket."""
    if isinstance(bucket, LengthBucket):
        return bucket
    return LengthBucket(int(bucket))


def bucket_for_length(n: int) -> LengthBucket:
    """Smallest bucket that holds n samples."""
    for exponent in BUCKET_EXPONENTS:
        if n <= 1 << exponent:
            return LengthBucket(exponent)
    raise ValueError(
        f"no bucket holds {n} samples (largest is 2^{BUCKET_EXPONENTS[-1]})"
    )


def decode_capture(raw: bytes) -> Trace:
    """Decode a raw capture byte stream into a Trace.

    Consecutive little-endian 16-bit halves are the sample stream; each
    value keeps its 12 significant bits after dropping the low alignment
    bits. No triggers or label are set on the result.
    """
    if len(raw) == 0:
        raise EmptyCapture("capture byte stream is empty")
    if len(raw) % 4 != 0:
        raise MalformedCapture(
            f"capture length {len(raw)} is not a whole number of 32-bit words"
        )
    halves = np.frombuffer(raw, dtype="<u2")
    samples = (halves >> ADC_SHIFT).astype(np.float64)
    return Trace(samples=samples)


def encode_capture(samples: np.ndarray) -> bytes:
    """Pack quantized samples back into the raw capture byte layout.

    Inverse of decode_capture: values must be integers in [0, 4096) and the
    count must be even, since every 32-bit word carries two samples.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise EmptyCapture("no samples to encode")
    if arr.size % 2 != 0:
        raise MalformedCapture(
            f"sample count {arr.size} is odd; capture words hold two samples"
        )
    ints = np.rint(arr)
    if not np.array_equal(ints, arr):
        raise ValueError("samples must hold integer values to encode")
    if arr.min() < 0 or arr.max() >= ADC_LEVELS:
        raise ValueError(f"samples must lie in [0, {ADC_LEVELS})")
    halves = ints.astype(np.uint16) << ADC_SHIFT
    return halves.astype("<u2").tobytes()


def quantize_samples(samples: np.ndarray) -> np.ndarray:
    """Map real-valued samples in [0, 1) onto the 12-bit integer grid."""
    arr = np.asarray(samples, dtype=np.float64)
    return np.clip(np.rint(arr * ADC_LEVELS), 0, ADC_LEVELS - 1)


def detect_triggers(trace: Trace, config) -> tuple[int, int]:
    """Locate the two trigger pulses bracketing the execution window.

    The trace is detrended with a moving average several pulse widths wide;
    samples whose detrended magnitude clears the noise floor by
    config.min_excursion are clustered, clusters are ranked by peak
    magnitude, and the onsets of the top two are returned earliest-first.
    The indices are also stored on the trace.

    min_excursion is expressed in normalized units; a trace still in raw
    12-bit units (any sample above 1) has the threshold scaled by the ADC
    level count so both unit systems detect identically.
    """
    samples = trace.samples
    if samples.size < 1 << BUCKET_EXPONENTS[0]:
        raise ValueError(
            f"trigger detection needs at least 2^{BUCKET_EXPONENTS[0]} samples"
        )
    width = int(config.width_samples)
    window = 8 * width + 1
    scale = ADC_LEVELS if float(samples.max()) > 1.0 else 1.0
    detrended = samples - uniform_filter1d(samples, size=window, mode="reflect")
    magnitude = np.abs(detrended)
    floor = float(np.median(magnitude))
    candidates = np.flatnonzero(magnitude > floor + config.min_excursion * scale)
    if candidates.size == 0:
        raise TriggersNotFound("no excursion clears the detrended noise floor")
    breaks = np.flatnonzero(np.diff(candidates) > width) + 1
    clusters = np.split(candidates, breaks)
    if len(clusters) < 2:
        raise TriggersNotFound(
            f"found {len(clusters)} trigger pulse(s), need two"
        )
    peaks = np.array([magnitude[c].max() for c in clusters])
    keep = np.argsort(peaks)[::-1][:2]
    start, end = sorted(int(clusters[i][0]) for i in keep)
    trace.triggers = (start, end)
    return start, end


def trim_to_bucket(trace: Trace, bucket: LengthBucket | int) -> Trace:
    """Cut the execution window out of a trace.

    Returns a new Trace holding the 2^exponent samples that start at the
    first trigger; the label is preserved and the trigger marks are dropped
    (the window now starts at its own origin).
    """
    b = as_bucket(bucket)
    if trace.triggers is None:
        raise TriggersNotFound("trace has no trigger marks")
    start = trace.triggers[0]
    if start + b.size > trace.samples.size:
        raise TooShort(
            f"window of {b.size} samples at {start} exceeds trace "
            f"length {trace.samples.size}"
        )
    window = trace.samples[start : start + b.size].copy()
    return Trace(
        samples=window,
        sample_rate_hz=trace.sample_rate_hz,
        triggers=None,
        program_id=trace.program_id,
    )


def execution_window(trace: Trace, bucket: LengthBucket | int) -> np.ndarray:
    """Best-effort execution window used by matching and evaluation.

    Unlike trim_to_bucket this clamps the window start so a trace whose
    trigger sits close to the end still fills the bucket, and an
    already-trimmed vector (no triggers, exact bucket length) passes
    through unchanged. TooShort is still raised when the trace simply has
    fewer samples than the bucket.
    """
    b = as_bucket(bucket)
    n = trace.samples.size
    if n < b.size:
        raise TooShort(f"trace of {n} samples cannot fill a {b.size} window")
    if trace.triggers is None:
        if n == b.size:
            return trace.samples
        raise TriggersNotFound(
            "trace has no trigger marks and is not already trimmed"
        )
    start = min(trace.triggers[0], n - b.size)
    return trace.samples[start : start + b.size]


def write_trace(trace: Trace, path) -> None:
    """Write a decoded trace file: magic, counts, trigger marks, f64 samples."""
    start, end = trace.triggers if trace.triggers is not None else (
        _TRIGGER_UNSET,
        _TRIGGER_UNSET,
    )
    header = TRC_MAGIC + struct.pack(
        "<IIII", trace.samples.size, trace.sample_rate_hz, start, end
    )
    Path(path).write_bytes(header + trace.samples.astype("<f8").tobytes())


def read_trace(path) -> Trace:
    """Read a decoded trace file written by write_trace."""
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:8] != TRC_MAGIC:
        raise FormatError(f"{path}: not a trace file")
    count, rate, start, end = struct.unpack("<IIII", raw[8:24])
    body = raw[24:]
    if len(body) != 8 * count:
        raise FormatError(
            f"{path}: header promises {count} samples, body holds "
            f"{len(body) // 8}"
        )
    samples = np.frombuffer(body, dtype="<f8").copy()
    triggers = None
    if start != _TRIGGER_UNSET and end != _TRIGGER_UNSET:
        triggers = (start, end)
    return Trace(samples=samples, sample_rate_hz=rate, triggers=triggers)


def read_capture(path) -> Trace:
    """Decode a raw capture file."""
    return decode_capture(Path(path).read_bytes())


def write_capture(samples: np.ndarray, path) -> None:
    """Write quantized samples as a raw capture file."""
    Path(path).write_bytes(encode_capture(samples))
