from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracheat.gridfn import GridFunction, make_grid

settings.register_profile(
    "fracheat",
    max_examples=30,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("fracheat")


def grid_function(seed: int, dim: int = 1, L: float = 4.0, M: int = 64, zero_frac: float = 0.3,
                  signed: bool = False) -> GridFunction:
    rng = np.random.default_rng(seed)
    spec = make_grid(dim, L, M)
    v = rng.lognormal(0.0, 1.0, spec.shape)
    if signed:
        v *= rng.choice([-1.0, 1.0], spec.shape)
    v[rng.uniform(size=spec.shape) < zero_frac] = 0.0
    # a few repeated values exercise the deduplication
    v.flat[: spec.size // 8] = v.flat[0]
    return GridFunction(spec, v)


def compact_function(seed: int, M: int = 64, width: int = 8) -> GridFunction:
    """Non-negative 1-d function supported in ``width`` consecutive cells."""
    rng = np.random.default_rng(seed)
    spec = make_grid(1, 4.0, M)
    v = np.zeros(M)
    start = int(rng.integers(0, M - width))
    v[start : start + width] = rng.uniform(0.0, 3.0, width)
    return GridFunction(spec, v)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
