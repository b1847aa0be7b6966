"""Deterministic synthetic trace source standing in for capture hardware.

Each program profile defines a repeatable power signature: a handful of
sinusoid components riding on a piecewise-constant activity envelope, plus a
baseline level and Gaussian noise. A generated capture is always 2^21
samples: baseline lead-in, a rectangular trigger pulse, the signature for
duration_samples, a second trigger pulse, and a baseline tail. Signals stay
inside [0, 1) so they quantize onto the 12-bit capture grid without
clipping (largest defaults: baseline 0.45 + pulse 0.35 + 6 sigma of noise).

Trigger recovery: detection detrends with a moving average and needs the
pulse to clear the noise floor by min_excursion. With the default pulse
amplitude 0.35 that holds comfortably for noise_sigma up to about 0.03;
above that, onset estimates drift beyond the default tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DuplicateProgramId, FormatError, ProfileTooLong
from .trace import (
    CAPTURE_SAMPLES,
    SAMPLE_RATE_HZ,
    Trace,
    bucket_for_length,
)


@dataclass(frozen=True)
class TriggerConfig:
    """Shape of the injected trigger pulses and detection tolerances."""

    amplitude: float = 0.35
    width_samples: int = 64
    min_excursion: float = 0.1
    tolerance_samples: int = 16

    def __post_init__(self) -> None:
        if self.width_samples < 1:
            raise ValueError("width_samples must be at least 1")
        if self.min_excursion <= 0:
            raise ValueError("min_excursion must be positive")
        if self.tolerance_samples < 1:
            raise ValueError("tolerance_samples must be at least 1")


@dataclass(frozen=True)
class ProgramProfile:
    """Deterministic power signature of one synthetic program.

    signature holds (frequency_hz, amplitude, phase) sinusoid components;
    envelope holds (offset, level) pairs describing a piecewise-constant
    activity level added from each offset (relative to execution start)
    until the next one. Both contribute additively on top of baseline_level.
    """

    program_id: str
    duration_samples: int
    signature: tuple[tuple[float, float, float], ...] = ()
    envelope: tuple[tuple[int, float], ...] = ()
    baseline_level: float = 0.45
    noise_sigma: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "signature", tuple(tuple(c) for c in self.signature)
        )
        object.__setattr__(
            self,
            "envelope",
            tuple((int(o), float(l)) for o, l in self.envelope),
        )
        if not self.program_id:
            raise ValueError("program_id must be non-empty")
        if self.duration_samples < 1:
            raise ValueError("duration_samples must be positive")
        if self.duration_samples > CAPTURE_SAMPLES:
            raise ProfileTooLong(
                f"{self.program_id}: duration {self.duration_samples} exceeds "
                f"a {CAPTURE_SAMPLES}-sample capture"
            )
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        for freq, _, _ in self.signature:
            if not 0 < freq < SAMPLE_RATE_HZ / 2:
                raise ValueError(
                    f"{self.program_id}: frequency {freq} outside "
                    f"(0, {SAMPLE_RATE_HZ // 2})"
                )
        offsets = [o for o, _ in self.envelope]
        if offsets != sorted(set(offsets)):
            raise ValueError(
                f"{self.program_id}: envelope offsets must strictly increase"
            )
        if offsets and (offsets[0] < 0 or offsets[-1] >= self.duration_samples):
            raise ValueError(
                f"{self.program_id}: envelope offsets must lie in "
                f"[0, {self.duration_samples})"
            )


def _layout(profile: ProgramProfile, trigger: TriggerConfig) -> tuple[int, int]:
    """Return (first_pulse_onset, second_pulse_onset) for a capture."""
    slack = (
        CAPTURE_SAMPLES - profile.duration_samples - 2 * trigger.width_samples
    )
    if slack < 0:
        raise ProfileTooLong(
            f"{profile.program_id}: duration {profile.duration_samples} plus "
            f"two {trigger.width_samples}-sample pulses exceeds "
            f"{CAPTURE_SAMPLES} samples"
        )
    lead_in = min(1024, slack // 2)
    start = lead_in
    end = lead_in + trigger.width_samples + profile.duration_samples
    return start, end


@lru_cache(maxsize=64)
def _base_signal(
    profile: ProgramProfile, trigger: TriggerConfig
) -> np.ndarray:
    """Noiseless capture for a profile, cached and marked read-only."""
    start, end = _layout(profile, trigger)
    width = trigger.width_samples
    base = np.full(CAPTURE_SAMPLES, profile.baseline_level, dtype=np.float64)
    base[start : start + width] += trigger.amplitude
    base[end : end + width] += trigger.amplitude

    exec_start = start + width
    duration = profile.duration_samples
    t = np.arange(duration, dtype=np.float64) / SAMPLE_RATE_HZ
    segment = np.zeros(duration, dtype=np.float64)
    for freq, amplitude, phase in profile.signature:
        segment += amplitude * np.sin(2.0 * np.pi * freq * t + phase)
    if profile.envelope:
        offsets = [o for o, _ in profile.envelope] + [duration]
        for (offset, level), stop in zip(profile.envelope, offsets[1:]):
            segment[offset:stop] += level
    base[exec_start : exec_start + duration] += segment
    base.flags.writeable = False
    return base


def noiseless_trace(
    profile: ProgramProfile, trigger: TriggerConfig | None = None
) -> Trace:
    """The deterministic signal a profile produces with noise_sigma = 0."""
    trigger = trigger or TriggerConfig()
    start, end = _layout(profile, trigger)
    return Trace(
        samples=_base_signal(profile, trigger).copy(),
        triggers=(start, end),
        program_id=profile.program_id,
    )


def generate_trace(
    profile: ProgramProfile,
    trigger: TriggerConfig | None = None,
    *,
    seed: int,
) -> Trace:
    """Generate one full capture for a profile.

    Deterministic in (profile, trigger, seed); the trigger onsets are set
    on the returned trace. Noise is drawn from a counter-based generator in
    float32 (half the generation cost; the quantization grid is far coarser
    than float32 resolution) and added into the float64 base signal.
    """
    trigger = trigger or TriggerConfig()
    start, end = _layout(profile, trigger)
    base = _base_signal(profile, trigger)
    if profile.noise_sigma > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        noise = rng.standard_normal(CAPTURE_SAMPLES, dtype=np.float32)
        samples = base + profile.noise_sigma * noise.astype(np.float64)
    else:
        samples = base.copy()
    return Trace(
        samples=samples,
        triggers=(start, end),
        program_id=profile.program_id,
    )


def trace_seed(master_seed: int, profile_index: int, trace_index: int) -> int:
    """Per-trace seed derived from the master seed by position counters."""
    seq = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(profile_index, trace_index)
    )
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _check_distinct(profiles: list[ProgramProfile]) -> None:
    seen: set[str] = set()
    for profile in profiles:
        if profile.program_id in seen:
            raise DuplicateProgramId(profile.program_id)
        seen.add(profile.program_id)


def corpus_plan(
    profiles: list[ProgramProfile],
    per_program: int,
    seed: int,
    start_index: int = 0,
) -> list[tuple[str, int]]:
    """The (program_id, seed) schedule corpus() follows, without generating.

    start_index offsets the per-profile trace counter, so disjoint corpus
    segments (template building, calibration, evaluation) come from one
    master seed without overlap.
    """
    if not profiles:
        raise ValueError("profiles must be non-empty")
    if per_program < 1:
        raise ValueError("per_program must be positive")
    if start_index < 0:
        raise ValueError("start_index must be non-negative")
    _check_distinct(profiles)
    return [
        (profile.program_id, trace_seed(seed, i, start_index + j))
        for i, profile in enumerate(profiles)
        for j in range(per_program)
    ]


def corpus(
    profiles: list[ProgramProfile],
    per_program: int,
    seed: int,
    trigger: TriggerConfig | None = None,
    start_index: int = 0,
) -> Iterator[Trace]:
    """Yield a deterministic labeled corpus, profile-major order.

    Lazy on purpose: a full corpus of 2^21-sample traces does not fit in
    memory at realistic sizes, so callers stream it.
    """
    trigger = trigger or TriggerConfig()
    plan = corpus_plan(profiles, per_program, seed, start_index)
    by_id = {p.program_id: p for p in profiles}
    for program_id, trace_seed_value in plan:
        yield generate_trace(by_id[program_id], trigger, seed=trace_seed_value)


def generate_window(
    profile: ProgramProfile,
    trigger: TriggerConfig | None,
    seed: int,
    bucket=None,
) -> np.ndarray:
    """Generate just the trimmed execution window of a capture.

    Equivalent in distribution to generate_trace followed by trimming, but
    synthesizes noise only inside the window, which matters when thousands
    of windows feed a simulation. Not sample-identical to the full-capture
    path under the same seed (the noise stream starts at the window).
    """
    from .trace import as_bucket

    trigger = trigger or TriggerConfig()
    b = as_bucket(bucket) if bucket is not None else profile_bucket(profile)
    start, _ = _layout(profile, trigger)
    base = _base_signal(profile, trigger)
    w_start = min(start, CAPTURE_SAMPLES - b.size)
    window = base[w_start : w_start + b.size]
    if profile.noise_sigma > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        noise = rng.standard_normal(b.size, dtype=np.float32)
        return window + profile.noise_sigma * noise.astype(np.float64)
    return window.copy()


def default_profiles() -> list[ProgramProfile]:
    """Eight bundled synthetic programs spanning all five length buckets.

    Signature frequencies are pairwise disjoint across profiles, so
    cross-program correlations sit near zero while within-program
    correlations are dominated by the noise level.
    """
    width = TriggerConfig().width_samples
    specs = [
        ("alpha", 17, (233.0, 521.0, 1303.0), (0.02, -0.03, 0.04, -0.01)),
        ("bravo", 17, (307.0, 661.0, 1511.0), (-0.04, 0.01, -0.02, 0.05)),
        ("charlie", 18, (389.0, 811.0, 1709.0), (0.05, -0.02, 0.01, -0.04)),
        ("delta", 18, (449.0, 929.0, 1907.0), (-0.01, 0.04, -0.05, 0.02)),
        ("echo", 19, (257.0, 577.0, 1361.0), (0.03, -0.05, 0.02, 0.04)),
        ("foxtrot", 19, (331.0, 709.0, 1571.0), (-0.05, 0.03, -0.01, -0.03)),
        ("golf", 20, (419.0, 863.0, 1777.0), (0.04, 0.02, -0.04, 0.01)),
        ("hotel", 21, (479.0, 983.0, 1973.0), (-0.02, 0.05, 0.03, -0.05)),
    ]
    amplitudes = (0.05, 0.04, 0.03)
    profiles = []
    for index, (name, exponent, freqs, env_levels) in enumerate(specs):
        if exponent == 21:
            duration = CAPTURE_SAMPLES - 2 * width
        else:
            duration = (1 << exponent) - 3 * width
        signature = tuple(
            (freq, amp, 0.7 * index + 0.4 * k)
            for k, (freq, amp) in enumerate(zip(freqs, amplitudes))
        )
        quarter = duration // 4
        envelope = tuple(
            (k * quarter, level) for k, level in enumerate(env_levels)
        )
        profiles.append(
            ProgramProfile(
                program_id=name,
                duration_samples=duration,
                signature=signature,
                envelope=envelope,
            )
        )
    return profiles


def profile_bucket(profile: ProgramProfile):
    """The length bucket a profile's execution window is matched in."""
    return bucket_for_length(profile.duration_samples)


# Profile set files: a JSON object mapping program_id to profile fields.

_PROFILE_KEYS = {
    "duration_samples",
    "signature",
    "envelope",
    "baseline_level",
    "noise_sigma",
}


def write_profiles(profiles: list[ProgramProfile], path) -> None:
    _check_distinct(profiles)
    doc = {
        p.program_id: {
            "duration_samples": p.duration_samples,
            "signature": [list(c) for c in p.signature],
            "envelope": [list(c) for c in p.envelope],
            "baseline_level": p.baseline_level,
            "noise_sigma": p.noise_sigma,
        }
        for p in profiles
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_profiles(path) -> list[ProgramProfile]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: profile set must be a JSON object")
    profiles = []
    for program_id, fields in doc.items():
        if not isinstance(fields, dict):
            raise FormatError(f"{path}: profile {program_id} must be an object")
        unknown = set(fields) - _PROFILE_KEYS
        if unknown:
            raise FormatError(
                f"{path}: profile {program_id} has unknown keys {sorted(unknown)}"
            )
        try:
            profiles.append(
                ProgramProfile(
                    program_id=program_id,
                    duration_samples=fields["duration_samples"],
                    signature=tuple(map(tuple, fields.get("signature", ()))),
                    envelope=tuple(map(tuple, fields.get("envelope", ()))),
                    baseline_level=fields.get("baseline_level", 0.45),
                    noise_sigma=fields.get("noise_sigma", 0.01),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(
                f"{path}: profile {program_id} is malformed: {exc}"
            ) from exc
    return profiles


# Corpus manifest: JSON lines, one {program_id, path, seed} object per trace.


@dataclass(frozen=True)
class ManifestEntry:
    program_id: str
    path: str
    seed: int


def write_manifest(entries: list[ManifestEntry], path) -> None:
    with open(path, "w") as handle:
        for entry in entries:
            handle.write(
                json.dumps(
                    {
                        "program_id": entry.program_id,
                        "path": entry.path,
                        "seed": entry.seed,
                    }
                )
                + "\n"
            )


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entries.append(
                    ManifestEntry(
                        program_id=obj["program_id"],
                        path=obj["path"],
                        seed=int(obj["seed"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(
                    f"{path}:{lineno}: bad manifest line: {exc}"
                ) from exc
    return entries


def read_corpus(
    manifest_path,
    program_id: str | None = None,
    start: int = 0,
    count: int | None = None,
):
    """Stream labeled traces back from a corpus directory via its manifest.

    start and count select a per-program slice (skip the first `start`
    traces of each program, then yield up to `count`), which is how callers
    carve template, calibration, and evaluation segments out of one corpus.
    """
    from .trace import read_trace

    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    positions: dict[str, int] = {}
    for entry in read_manifest(manifest_path):
        if program_id is not None and entry.program_id != program_id:
            continue
        index = positions.get(entry.program_id, 0)
        positions[entry.program_id] = index + 1
        if index < start:
            continue
        if count is not None and index - start >= count:
            continue
        trace = read_trace(base / entry.path)
        trace.program_id = entry.program_id
        yield trace


def synth_to_dir(
    profiles: list[ProgramProfile],
    per_program: int,
    seed: int,
    out_dir,
    trigger: TriggerConfig | None = None,
) -> Path:
    """Write a corpus of .trc files plus manifest.jsonl; returns manifest path."""
    from .trace import write_trace

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trigger = trigger or TriggerConfig()
    by_id = {p.program_id: p for p in profiles}
    entries = []
    counters: dict[str, int] = {}
    for program_id, child_seed in corpus_plan(profiles, per_program, seed):
        index = counters.get(program_id, 0)
        counters[program_id] = index + 1
        name = f"{program_id}-{index:05d}.trc"
        trace = generate_trace(by_id[program_id], trigger, seed=child_seed)
        write_trace(trace, out / name)
        entries.append(
            ManifestEntry(program_id=program_id, path=name, seed=child_seed)
        )
    manifest = out / "manifest.jsonl"
    write_manifest(entries, manifest)
    return manifest
