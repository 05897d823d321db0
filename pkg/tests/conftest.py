import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bellqkd.spectral import EncodingParams, SeparationWarning

settings.register_profile(
    "bellqkd", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("bellqkd")

GHZ = 2 * math.pi * 1e-3  # rad/ps per GHz
THZ = 2 * math.pi


def reference_encoding(sigma_w: float = 1.1 * GHZ, sigma_t: float = 17.0) -> EncodingParams:
    """Bins 0 / 19 GHz and 0 / 220 ps, the reference encoding used throughout."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        return EncodingParams(0.0, 0.019 * THZ, sigma_w, 0.0, 220.0, sigma_t)


@pytest.fixture
def enc_ref() -> EncodingParams:
    return reference_encoding()


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; the lines are echoed at the end of the run."""

    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter) -> None:
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
