from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import ladder_hamiltonian

from dimerlab.model import (
    DimerParams,
    apply_hamiltonian,
    hamiltonian_matrix,
    load_params,
    read_config,
    site_swap,
    static_spectrum,
)


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_hamiltonian_matches_ladder_operators(n):
    params = DimerParams(n_particles=n, omega_hop=1.1, kappa=0.3, mu=0.5, omega_drive=1.7,
                         drive_phase=0.9)
    for t in (0.0, 0.37, 2.2):
        np.testing.assert_allclose(hamiltonian_matrix(params, t), ladder_hamiltonian(params, t),
                                   atol=1e-12)


def test_matrix_free_application_agrees_with_dense(small_params, rng):
    psi = rng.normal(size=(7, 3)) + 1j * rng.normal(size=(7, 3))
    dense = hamiltonian_matrix(small_params, 1.3)
    np.testing.assert_allclose(apply_hamiltonian(small_params, psi, 1.3), dense @ psi, atol=1e-12)


@pytest.mark.parametrize("n", [2, 5, 8])
def test_static_spectrum_matches_brute_force(n):
    params = DimerParams(n_particles=n, omega_hop=1.0, kappa=0.17, mu=0.0)
    energies, vecs = static_spectrum(params)
    np.testing.assert_allclose(energies, np.linalg.eigvalsh(ladder_hamiltonian(params, 0.0)),
                               atol=1e-12)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(n + 1), atol=1e-12)


def test_noninteracting_spectrum_is_equally_spaced():
    # kappa = 0: N independent two-level particles with splitting Omega
    params = DimerParams(n_particles=9, omega_hop=1.4)
    energies, _ = static_spectrum(params)
    np.testing.assert_allclose(energies, -0.7 * (9 - 2 * np.arange(10)), atol=1e-12)


def test_static_spectrum_ignores_drive():
    a = static_spectrum(DimerParams(n_particles=6, kappa=0.2, mu=0.0))[0]
    b = static_spectrum(DimerParams(n_particles=6, kappa=0.2, mu=0.8))[0]
    np.testing.assert_array_equal(a, b)


def test_derived_quantities():
    params = DimerParams.from_ratios(2000, 0.92, 0.4, 1.9)
    assert params.alpha == pytest.approx(0.92)
    assert params.hbar_eff == pytest.approx(1e-3)
    assert params.period == pytest.approx(2 * math.pi / 1.9)
    assert params.scaled_period == pytest.approx(2 * math.pi / 1.9)
    assert params.dim == 2001
    assert params.kappa == pytest.approx(0.92 / 2000)


@pytest.mark.parametrize("bad", [{"n_particles": 0}, {"n_particles": 2.5}, {"n_particles": 3, "kappa": -1.0},
                                 {"n_particles": 3, "mu": -0.1}, {"n_particles": 3, "omega_hop": 0.0}])
def test_invalid_parameters_are_rejected(bad):
    with pytest.raises(ValueError):
        DimerParams(**bad)


def test_site_swap_is_an_involution(rng):
    psi = rng.normal(size=9) + 1j * rng.normal(size=9)
    np.testing.assert_array_equal(site_swap(site_swap(psi)), psi)


def test_drive_symmetry_under_half_period_shift(small_params):
    # S H(t + T/2) S = H(t) underlies the generalized parity
    swap = np.eye(small_params.dim)[::-1]
    for t in (0.0, 0.3, 1.1):
        shifted = hamiltonian_matrix(small_params, t + 0.5 * small_params.period)
        np.testing.assert_allclose(swap @ shifted @ swap, hamiltonian_matrix(small_params, t), atol=1e-12)


def test_config_file_round_trip(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# guiding example\nn_particles = 40\nalpha = 0.92\ndrive_ratio = 0.4  # mu/Omega\n"
                   "freq_ratio = 1.9\n")
    params = load_params(read_config(cfg))
    assert params == DimerParams.from_ratios(40, 0.92, 0.4, 1.9)


def test_config_rejects_malformed_lines(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_particles 40\n")
    with pytest.raises(ValueError, match="key = value"):
        read_config(cfg)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 30), omega=st.floats(0.1, 3.0), kappa=st.floats(0.0, 1.0),
       mu=st.floats(0.0, 2.0), freq=st.floats(0.2, 5.0), t=st.floats(-10.0, 10.0))
def test_hamiltonian_is_hermitian(n, omega, kappa, mu, freq, t):
    h = hamiltonian_matrix(DimerParams(n_particles=n, omega_hop=omega, kappa=kappa, mu=mu,
                                       omega_drive=freq), t)
    np.testing.assert_array_equal(h, h.conj().T)
