from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import pendulum_params

from dimerlab.floquet import circular_distance, floquet_solve
from dimerlab.meanfield import CurveError, find_periodic_orbit
from dimerlab.model import DimerParams, static_spectrum
from dimerlab.semiclassics import (
    SemiclassicalScale,
    contour_action,
    match_states_to_tubes,
    quantize_island,
    semiclassical_quasienergy,
    target_action,
)


@pytest.fixture(scope="module")
def main_tubes():
    params = pendulum_params(2000)
    tubes = quantize_island(params, (0.5, 0.0), 1, [0, 1, 2])
    for t in tubes:
        t.quasienergy = semiclassical_quasienergy(t)
    return params, tubes


def test_circle_action():
    r = 0.2
    theta = np.linspace(0.0, 2 * math.pi, 512, endpoint=False)
    circle = np.column_stack((0.1 + r * np.sin(theta), 0.3 + r * np.cos(theta)))
    assert contour_action(circle) == pytest.approx(math.pi * r * r, rel=1e-3)


def test_degenerate_contour_returns_zero_with_warning():
    with pytest.warns(RuntimeWarning):
        assert contour_action(np.tile([0.2, 0.1], (50, 1))) == 0.0


def test_self_intersecting_contour_rejected():
    t = np.linspace(0.0, 2 * math.pi, 200, endpoint=False)
    figure_eight = np.column_stack((0.2 * np.sin(2 * t), 0.3 * np.sin(t)))
    with pytest.raises(CurveError):
        contour_action(figure_eight)


def test_target_action_arithmetic():
    assert target_action(2 / 10000, 0) == pytest.approx(6.2832e-4, rel=1e-4)
    assert target_action(0.01, 3) - target_action(0.01, 2) == pytest.approx(2 * math.pi * 0.01)


def test_main_island_tubes(main_tubes):
    params, tubes = main_tubes
    for t in tubes:
        assert t.fits and t.status == "fits" and t.kind == "floquet"
        assert t.action == pytest.approx(target_action(params.hbar_eff, t.n), rel=5e-3)
        assert t.curve.period_multiplicity == 1
    spacing = np.diff([t.action for t in tubes])
    np.testing.assert_allclose(spacing, 2 * math.pi * params.hbar_eff, rtol=1e-2)
    assert tubes[0].displacement < tubes[1].displacement < tubes[2].displacement


def test_photon_index_shift(main_tubes):
    params, tubes = main_tubes
    q0 = tubes[0].quasienergy
    q1 = semiclassical_quasienergy(tubes[0], m=1)
    width = 2 * math.pi * params.hbar_eff / params.scaled_period
    assert q1.scaled - q0.scaled == pytest.approx(width, rel=1e-9)
    assert q1.rate - q0.rate == pytest.approx(params.omega_drive, rel=1e-9)
    assert q0.zone_width_scaled == pytest.approx(width)


def test_harmonic_ladder_spacing(main_tubes):
    # near the elliptic point the ladder spacing is hbar_eff * nu / dtau, modulo the zone
    params, tubes = main_tubes
    orb = find_periodic_orbit(params.meanfield(), (0.5, 0.0), 1)
    zone = 2 * math.pi * params.hbar_eff / params.scaled_period
    harmonic = params.hbar_eff * orb.stability_angle / params.scaled_period
    for a, b in zip(tubes[:-1], tubes[1:]):
        step = circular_distance(b.quasienergy.scaled - a.quasienergy.scaled, 0.0, zone)
        assert step == pytest.approx(harmonic, rel=0.1)


def test_linear_limit_reproduces_exact_levels():
    # kappa = 0 and no drive: the shifted convention is exact
    params = DimerParams(n_particles=100, omega_hop=1.0, omega_drive=math.sqrt(3.0))
    tubes = quantize_island(params, (0.0, 0.0), 1, [0, 1, 2], convention="shifted")
    exact = static_spectrum(params)[0]
    for t in tubes:
        q = semiclassical_quasienergy(t)
        assert circular_distance(q.rate, exact[t.n], params.omega_drive) < 1e-6


def test_integrable_limit_assignments_follow_static_ordering():
    params = DimerParams.from_ratios(60, 0.92, 0.0, math.sqrt(3.0))
    fs, _ = floquet_solve(params, tol=1e-10)
    tubes = quantize_island(params, (0.0, 0.0), 1, [0, 1, 2, 3])
    _, vecs = static_spectrum(params)
    for m in match_states_to_tubes(fs, tubes):
        assert abs(np.vdot(vecs[:, m.tube.n], fs.state(m.state_index))) == pytest.approx(1.0, abs=1e-6)
        assert not m.ambiguous


def test_scales_and_conventions():
    params = pendulum_params(500)
    plain = SemiclassicalScale.from_params(params)
    shifted = SemiclassicalScale.from_params(params, "shifted")
    assert plain.hbar_eff == pytest.approx(2 / 500)
    assert shifted.hbar_eff == pytest.approx(2 / 501)
    assert plain.zone_width(3) == pytest.approx(plain.zone_width(1) / 3)
    with pytest.raises(ValueError):
        SemiclassicalScale.from_params(params, "other")


def test_negative_quantum_number_rejected():
    with pytest.raises(ValueError):
        quantize_island(pendulum_params(100), (0.5, 0.0), 1, [-1])


def test_fig3_quantum_numbers_fit_at_large_particle_number():
    tubes = quantize_island(pendulum_params(10000), (0.5, 0.0), 1, [0, 109, 193, 275, 767, 971, 1414, 1672])
    assert all(t.fits for t in tubes)
    assert np.all(np.diff([t.displacement for t in tubes]) > 0)


def test_small_island_rejected_with_explicit_status():
    tube = quantize_island(pendulum_params(40), (-0.497, 0.0), 3, [0])[0]
    assert not tube.fits and tube.status == "too_small"
    assert "island too small" in tube.message
    assert tube.action < tube.target_action


@pytest.mark.slow
def test_third_order_island_capacity():
    center = (-0.4279, 0.0)
    coarse = quantize_island(pendulum_params(2000), center, 18, [0])[0]
    fine = quantize_island(pendulum_params(5000), center, 18, [0])[0]
    assert coarse.status == "too_small"
    # the island encloses more than the N = 5000 ground-tube action
    assert fine.status != "too_small"
