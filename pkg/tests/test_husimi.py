from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import symbolic_coherent_state

from dimerlab.husimi import (
    PhasePoint,
    coherent_overlap,
    coherent_state,
    coherent_states,
    husimi_at,
    husimi_grid,
    husimi_value,
    wrap_phase,
)

points = st.tuples(st.floats(-1.0, 1.0), st.floats(-math.pi, math.pi))


def test_coherent_state_matches_symbolic_expansion():
    ref = symbolic_coherent_state(6, sp.pi / 2, sp.pi / 3)  # p = cos(theta) = 0
    np.testing.assert_allclose(coherent_state(6, (0.0, math.pi / 3)), ref, atol=1e-12)


def test_coherent_state_off_equator_matches_symbolic_expansion():
    theta = sp.acos(sp.Rational(-2, 5))
    ref = symbolic_coherent_state(5, theta, -sp.Rational(7, 10))
    np.testing.assert_allclose(coherent_state(5, (-0.4, -0.7)), ref, atol=1e-12)


def test_poles_are_fock_states():
    top = coherent_state(4, (1.0, 0.3))
    assert abs(top[-1]) == pytest.approx(1.0)  # all particles on site 1
    bottom = coherent_state(4, (-1.0, 0.3))
    assert abs(bottom[0]) == pytest.approx(1.0)


def test_large_particle_number_is_finite_and_normalized():
    psi = coherent_state(20000, (0.3, 1.0))
    assert np.all(np.isfinite(psi))
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_population_imbalance_expectation():
    n = 50
    psi = coherent_state(n, (0.37, 2.0))
    j = np.arange(n + 1)
    assert np.sum(np.abs(psi) ** 2 * (2 * j - n)) / n == pytest.approx(0.37, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(a=points, b=points, n=st.integers(1, 60))
def test_overlap_formula_matches_inner_product(a, b, n):
    direct = abs(np.vdot(coherent_state(n, a), coherent_state(n, b))) ** 2
    assert coherent_overlap(n, a, b) == pytest.approx(direct, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=points, shift=st.floats(-math.pi, math.pi), n=st.integers(1, 40))
def test_phase_covariance(a, shift, n):
    # shifting phi multiplies |j, N-j> by exp(i (N-j) shift)
    j = np.arange(n + 1)
    moved = coherent_state(n, (a[0], a[1] + shift))
    np.testing.assert_allclose(moved, np.exp(1j * (n - j) * shift) * coherent_state(n, a), atol=1e-12)


def test_husimi_of_coherent_state_peaks_at_its_point():
    n = 400
    grid = husimi_grid(coherent_state(n, (0.5, 1.0)), 201, 201)
    best = grid.argmax()
    assert abs(best.p - 0.5) <= 0.01 and abs(best.phi - 1.0) <= 2 * math.pi / 201
    assert grid.q.max() <= 1.0


def test_husimi_resolution_of_identity():
    # (N + 1) / (4 pi) times the integral of Q over dp dphi is one
    n = 30
    rng = np.random.default_rng(3)
    psi = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    psi /= np.linalg.norm(psi)
    grid = husimi_grid(psi, 801, 400)
    integral = np.trapezoid(grid.q.sum(axis=1) * (2 * math.pi / 400), grid.p)
    assert (n + 1) / (4 * math.pi) * integral == pytest.approx(1.0, rel=1e-4)


def test_grid_layout_and_helpers():
    grid = husimi_grid(coherent_state(10, (0.0, 0.0)), 5, 8)
    assert grid.q.shape == (5, 8)
    assert grid.phi[-1] == pytest.approx(math.pi) and grid.phi[0] > -math.pi
    assert grid.triples().shape == (40, 3)
    assert grid.mass_fraction(np.ones_like(grid.q, dtype=bool)) == pytest.approx(1.0)


def test_point_evaluations_agree():
    psi = coherent_state(12, (0.2, 0.4))
    pts = [(0.2, 0.4), (-0.3, 2.0)]
    vals = husimi_at(psi, pts)
    assert vals[0] == pytest.approx(1.0)
    assert husimi_value(psi, pts[1]) == pytest.approx(coherent_overlap(12, pts[0], pts[1]))


def test_wrap_phase_range():
    w = wrap_phase(np.array([-3 * math.pi, -math.pi, 0.0, math.pi, 7.0]))
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    np.testing.assert_allclose(np.exp(1j * w), np.exp(1j * np.array([-3 * math.pi, -math.pi, 0.0, math.pi, 7.0])))


def test_phase_point_validation():
    assert PhasePoint.make(0.5, 4.0).phi == pytest.approx(4.0 - 2 * math.pi)
    with pytest.raises(ValueError):
        PhasePoint.make(1.5, 0.0)
    with pytest.raises(ValueError):
        coherent_states(0, [(0.0, 0.0)])
