from __future__ import annotations

import math

import numpy as np
import pytest
from oracles import extrapolated_propagator, ladder_hamiltonian, ode_propagator
from scipy.linalg import expm

from dimerlab.husimi import coherent_state
from dimerlab.model import DimerParams
from dimerlab.propagation import (
    Propagator,
    SymmetryError,
    evolve_state,
    fock_occupation_series,
    half_period_symmetry,
    monodromy,
    return_probability_series,
    symmetry_witness,
    unitarity_defect,
)

ORACLE_TOL = 1e-8


def test_monodromy_matches_fine_product(small_params):
    u = monodromy(small_params, tol=1e-12)
    ref = extrapolated_propagator(small_params, 0.0, small_params.period, 4000)
    assert np.max(np.abs(u - ref)) < ORACLE_TOL


def test_partial_propagation_matches_adaptive_ode():
    params = DimerParams(n_particles=4, omega_hop=1.0, kappa=0.3, mu=0.9, omega_drive=1.9)
    psi0 = coherent_state(params, (0.3, 0.7))
    got = evolve_state(params, psi0, 0.4, 5.3, tol=1e-12)
    ref = ode_propagator(params, 0.4, 5.3) @ psi0
    assert np.max(np.abs(got - ref)) < ORACLE_TOL


def test_static_evolution_is_exact_exponential():
    params = DimerParams(n_particles=8, kappa=0.25)
    psi0 = coherent_state(params, (-0.2, 1.0))
    got = evolve_state(params, psi0, 0.0, 7.5, tol=1e-12)
    ref = expm(-7.5j * ladder_hamiltonian(params, 0.0)) @ psi0
    assert np.max(np.abs(got - ref)) < 1e-10


def test_unitarity_defect_small(small_params):
    assert unitarity_defect(monodromy(small_params, tol=1e-10)) <= 1e-8


def test_large_unitarity_defect():
    params = DimerParams.from_ratios(200, 0.92, 0.4, 1.9)
    assert unitarity_defect(monodromy(params, tol=1e-8)) <= 1e-8


def test_half_period_witness(small_params):
    u = monodromy(small_params, tol=1e-12)
    v = half_period_symmetry(small_params, tol=1e-12, monodromy_matrix=u)
    assert symmetry_witness(v, u) <= 1e-7


def test_witness_failure_raises():
    # a drive that is not antisymmetric under the half-period shift breaks V^2 = U
    params = DimerParams(n_particles=4, kappa=0.2, mu=0.8, omega_drive=1.3)
    u = monodromy(params, tol=1e-12)
    with pytest.raises(SymmetryError):
        half_period_symmetry(params, tol=1e-12, monodromy_matrix=u @ expm(0.1j * np.eye(5) + 0.05j *
                                                                            np.diag(np.arange(5.0))))


def test_time_translation_by_one_period(small_params):
    psi0 = coherent_state(small_params, (0.1, -0.4))
    a = evolve_state(small_params, psi0, 0.3, 1.7)
    b = evolve_state(small_params, psi0, 0.3 + small_params.period, 1.7 + small_params.period)
    assert np.max(np.abs(a - b)) < 1e-12


def test_composition_of_intervals(small_params):
    psi0 = coherent_state(small_params, (0.5, 0.2))
    direct = evolve_state(small_params, psi0, 0.0, 3.0)
    split = evolve_state(small_params, evolve_state(small_params, psi0, 0.0, 1.2), 1.2, 3.0)
    assert np.max(np.abs(direct - split)) < 1e-9


def test_backward_interval_rejected(small_params):
    with pytest.raises(ValueError):
        evolve_state(small_params, coherent_state(small_params, (0.0, 0.0)), 2.0, 1.0)


def test_tolerance_range_enforced(small_params):
    with pytest.raises(ValueError):
        Propagator(small_params, tol=1e-3)
    with pytest.raises(ValueError):
        Propagator(small_params, tol=1e-16)


def test_wrong_state_dimension(small_params):
    with pytest.raises(ValueError, match="dimension"):
        evolve_state(small_params, np.ones(3), 0.0, 1.0)


def test_dense_limit_enforced():
    with pytest.raises(ValueError, match="dense limit"):
        monodromy(DimerParams(n_particles=50), max_dim=32)


def test_return_probability_series_shape_and_start():
    params = DimerParams.from_ratios(40, 0.92, 0.4, 1.9)
    times, pr = return_probability_series(params, coherent_state(params, (-0.497, 0.0)), 3, 4)
    assert times.shape == pr.shape == (13,)
    assert times[-1] == pytest.approx(3 * params.period)
    assert pr[0] == pytest.approx(1.0)
    assert np.all((pr >= 0) & (pr <= 1))


def test_fock_occupations_normalized_and_consistent():
    params = DimerParams.from_ratios(30, 0.92, 0.4, 1.9)
    psi0 = coherent_state(params, (0.2, 0.0))
    times, occ = fock_occupation_series(params, psi0, 2, 3)
    np.testing.assert_allclose(occ.sum(axis=1), 1.0, atol=1e-10)
    final = evolve_state(params, psi0, 0.0, times[-1])
    np.testing.assert_allclose(occ[-1], np.abs(final) ** 2, atol=1e-12)


def test_quarter_period_phase_convention():
    # with the default phase the drive starts at its maximum: f(0) = mu
    params = DimerParams(n_particles=2, mu=0.6, omega_drive=2.0)
    assert params.drive(0.0) == pytest.approx(0.6)
    assert params.drive(0.25 * params.period) == pytest.approx(0.0, abs=1e-15)
    assert math.isclose(params.drive_phase, math.pi / 2)
