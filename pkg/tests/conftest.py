"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import math

import numpy as np
import pytest

from dimerlab.model import DimerParams

#: Ratios of the guiding example: N kappa / Omega, mu / Omega, omega / Omega.
ALPHA, DRIVE_RATIO, FREQ_RATIO = 0.92, 0.4, 1.9

_ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, passed: bool, detail: str):
    """Register the outcome of one acceptance criterion for the final summary."""
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    _ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[number])


def pendulum_params(n_particles: int, **changes) -> DimerParams:
    return DimerParams.from_ratios(n_particles, ALPHA, DRIVE_RATIO, FREQ_RATIO).replace(**changes)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def small_params():
    """A generic driven dimer with irrational-looking ratios, N = 6."""
    return DimerParams(n_particles=6, omega_hop=1.3, kappa=0.21, mu=0.7,
                       omega_drive=math.sqrt(5.0), drive_phase=0.4)
