"""Shared fixtures: a small on-disk corpus and cheap window factories."""

import numpy as np
import pytest

from power_attest import (
    Trace,
    default_profiles,
    generate_window,
    synth_to_dir,
    trace_seed,
)

CORPUS_SEED = 101
CORPUS_PER_PROGRAM = 8


@pytest.fixture(scope="session")
def two_profiles():
    return default_profiles()[:2]


@pytest.fixture(scope="session")
def corpus_manifest(tmp_path_factory, two_profiles):
    """Two programs, eight full captures each, written once per session."""
    out = tmp_path_factory.mktemp("corpus")
    return synth_to_dir(two_profiles, CORPUS_PER_PROGRAM, CORPUS_SEED, out)


def window_trace(profile, index: int, label: str | None = None) -> Trace:
    """A bucket-length labeled trace, noise synthesized only in the window."""
    samples = generate_window(profile, None, trace_seed(7000, 0, index))
    return Trace(samples=samples, program_id=label or profile.program_id)


def window_batch(profile, count: int, offset: int = 0) -> list[Trace]:
    return [window_trace(profile, offset + i) for i in range(count)]


@pytest.fixture(scope="session")
def alpha_profile(two_profiles):
    return two_profiles[0]


@pytest.fixture(scope="session")
def bravo_profile(two_profiles):
    return two_profiles[1]


@pytest.fixture
def rng():
    """Fresh deterministic generator per test, so draws never couple tests."""
    return np.random.default_rng(20240301)
