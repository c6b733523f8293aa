"""Unitary time evolution of the driven dimer.

Each time step applies the fourth-order Magnus exponent built from two
Gauss-Legendre samples of H(t).  Because the driven part of H is diagonal,
the commutator term stays tridiagonal and the whole exponent is a Hermitian
tridiagonal matrix ``M``; ``exp(-i h M)`` is applied with a Chebyshev series,
whose coefficients decay super-exponentially once the order exceeds
``h * ||M||``.  The only error source is therefore the O(h^5) Magnus
truncation per step, which the step selection below controls.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from ._chebyshev import expm_tridiagonal
from .model import DimerParams, check_state, hamiltonian_bands, site_swap

__all__ = [
    "DENSE_LIMIT",
    "IntegrationError",
    "Propagator",
    "SymmetryError",
    "evolve_state",
    "fock_occupation_series",
    "half_period_symmetry",
    "monodromy",
    "propagate_samples",
    "return_probability_series",
    "symmetry_witness",
    "unitarity_defect",
]

DENSE_LIMIT = 4096
TOL_RANGE = (1e-13, 1e-6)
MAX_STEPS_PER_PERIOD = 2**16

_GAUSS = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)
_BOUND_NODES = 33
_PROBE_SEED = 20240611
_N_PROBES = 3


class IntegrationError(RuntimeError):
    """Propagation could not reach the requested accuracy.

    Attributes
    ----------
    last_time : float
        Last time at which the state is known to the requested accuracy.
    """

    def __init__(self, message, last_time):
        super().__init__(f"{message} (last good time {last_time:.12g})")
        self.last_time = last_time


class SymmetryError(RuntimeError):
    """The half-period symmetry witness failed."""


def _extreme_eigenvalues(diag, off):
    n = diag.size
    if n == 1:
        return diag[0], diag[0]
    lo = eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0]
    hi = eigvalsh_tridiagonal(diag, off, select="i", select_range=(n - 1, n - 1))[0]
    return lo, hi


class Propagator:
    """Time stepper for one parameter set.

    Parameters
    ----------
    params : DimerParams
    tol : float
        Target error per driving period, measured in the 2-norm of the state.
    steps_per_period : int, optional
        Fixes the step count per driving period instead of selecting it.
    """

    def __init__(self, params: DimerParams, tol: float = 1e-10, steps_per_period=None):
        if not TOL_RANGE[0] <= tol <= TOL_RANGE[1]:
            raise ValueError(f"tol must lie in [{TOL_RANGE[0]:g}, {TOL_RANGE[1]:g}], got {tol:g}")
        self.params = params
        self.tol = tol
        self.static, self.off, self.zdiag = hamiltonian_bands(params)
        self._hop_norm = 0.5 * params.omega_hop * params.n_particles
        self._init_bounds()
        self.steps_per_period = None if steps_per_period is None else int(steps_per_period)

    def _init_bounds(self):
        # lambda_max(D0 + f Z + E) is convex in f and lambda_min concave, so
        # chords between sampled values bound them on each sub-interval.
        mu = self.params.mu
        nodes = np.linspace(-mu, mu, _BOUND_NODES) if mu > 0 else np.zeros(1)
        ext = np.array([_extreme_eigenvalues(self.static + f * self.zdiag, self.off) for f in nodes])
        self._f_nodes = nodes
        self._lo_nodes = ext[:, 0]
        self._hi_nodes = ext[:, 1]

    def spectral_bounds(self, fbar: float, beta: float):
        """Interval containing the spectrum of the step exponent."""
        if self._f_nodes.size == 1:
            lo, hi = self._lo_nodes[0], self._hi_nodes[0]
        else:
            lo = np.interp(fbar, self._f_nodes, self._lo_nodes)
            hi = np.interp(fbar, self._f_nodes, self._hi_nodes)
        stretch = (math.sqrt(1.0 + beta * beta) - 1.0) * self._hop_norm
        pad = 0.01 * (hi - lo) + 1e-9 * (abs(lo) + abs(hi)) + 1e-12
        return lo - stretch - pad, hi + stretch + pad

    def step(self, x: np.ndarray, a: float, b: float) -> np.ndarray:
        """Advance the block ``x`` (shape (N+1, m)) from time a to b."""
        h = b - a
        f1, f2 = (float(self.params.drive(a + c * h)) for c in _GAUSS)
        beta = math.sqrt(3.0) * h * (f2 - f1) / 6.0
        fbar = 0.5 * (f1 + f2)
        diag = self.static + fbar * self.zdiag
        upper = self.off * (1.0 + 1j * beta)
        lo, hi = self.spectral_bounds(fbar, beta)
        return expm_tridiagonal(diag, upper, h, lo, hi, x)

    def grid(self, t0: float, t1: float, steps_per_period: int, extra=()) -> np.ndarray:
        """Step boundaries: the uniform grid anchored at t = 0, plus the end points."""
        period = self.params.period
        n = steps_per_period
        k_first = math.floor(t0 / period * n) + 1
        k_last = math.ceil(t1 / period * n) - 1
        inner = period * (np.arange(k_first, k_last + 1) / n)
        pts = np.concatenate(([t0, t1], inner, np.asarray(extra, dtype=float)))
        pts = np.unique(pts[(pts >= t0) & (pts <= t1)])
        keep = np.concatenate(([True], np.diff(pts) > 1e-9 * period / n))
        pts = pts[keep]
        pts[-1] = t1
        return pts

    def _run(self, x, t0, t1, steps_per_period):
        pts = self.grid(t0, t1, steps_per_period)
        for a, b in zip(pts[:-1], pts[1:]):
            x = self.step(x, a, b)
        return x

    def select_steps(self, probe: np.ndarray, t0: float = 0.0) -> int:
        """Choose a step count per period meeting ``tol`` on ``probe`` over one period.

        Successive doublings are compared; once the error ratio shows the
        asymptotic h^4 behaviour the required count is extrapolated.
        """
        probe = np.asarray(probe, dtype=complex)
        if probe.ndim == 1:
            probe = probe[:, None]
        t1 = t0 + self.params.period
        n = 8
        coarse = self._run(probe, t0, t1, n)
        prev_diff = None
        while True:
            if 2 * n > MAX_STEPS_PER_PERIOD:
                raise IntegrationError(
                    f"step count per period would exceed {MAX_STEPS_PER_PERIOD}", t0
                )
            fine = self._run(probe, t0, t1, 2 * n)
            diff = float(np.max(np.linalg.norm(fine - coarse, axis=0)))
            if prev_diff is not None and diff > 0 and prev_diff / diff > 12.0:
                err_fine = diff / 15.0
                need = 2 * n * (err_fine / self.tol) ** 0.25 * 1.15
                return max(8, math.ceil(need))
            if diff <= self.tol:
                return 2 * n
            prev_diff = diff
            coarse = fine
            n *= 2

    def ensure_steps(self, probe, t0=0.0) -> int:
        if self.steps_per_period is None:
            self.steps_per_period = self.select_steps(probe, t0)
        return self.steps_per_period

    def evolve(self, x, t0: float, t1: float) -> np.ndarray:
        """Propagate a vector or block from t0 to t1."""
        x = np.asarray(x, dtype=complex)
        vector = x.ndim == 1
        block = x[:, None] if vector else x
        if self.steps_per_period is None:
            self.ensure_steps(block if vector else _probe_vectors(block.shape[0]), t0)
        out = self._run(block, t0, t1, self.steps_per_period)
        return out[:, 0] if vector else out

    def samples(self, x, times, t0: float = 0.0):
        """Yield ``(t, state)`` for each time in the non-decreasing sequence ``times``."""
        x = np.asarray(x, dtype=complex)
        vector = x.ndim == 1
        block = x[:, None] if vector else x
        if self.steps_per_period is None:
            self.ensure_steps(block if vector else _probe_vectors(block.shape[0]), t0)
        t = t0
        for target in times:
            target = float(target)
            if target < t:
                raise ValueError("sample times must be non-decreasing and not before t0")
            if target > t:
                block = self._run(block, t, target, self.steps_per_period)
                t = target
            yield t, (block[:, 0] if vector else block)


def _probe_vectors(dim: int) -> np.ndarray:
    rng = np.random.default_rng(_PROBE_SEED)
    v = rng.standard_normal((dim, _N_PROBES)) + 1j * rng.standard_normal((dim, _N_PROBES))
    return v / np.linalg.norm(v, axis=0)


def _check_drift(psi_norm0, psi_norm1, tol, periods, t1):
    drift = abs(psi_norm1 - psi_norm0)
    bound = 10.0 * tol * max(1.0, periods)
    if drift > bound:
        warnings.warn(
            f"norm drift {drift:.3e} exceeds {bound:.3e} at t = {t1:.6g}", RuntimeWarning, stacklevel=3
        )
    return drift


def evolve_state(params: DimerParams, psi, t0: float, t1: float, tol: float = 1e-10,
                 steps_per_period=None) -> np.ndarray:
    """Solve i d psi/dt = H(t) psi from t0 to t1.

    The state is never renormalized; a ``RuntimeWarning`` is issued if the
    norm drifts by more than ``10 * tol`` per driving period.
    """
    psi = check_state(params, psi)
    if not t1 > t0:
        raise ValueError("t1 must be larger than t0")
    prop = Propagator(params, tol, steps_per_period)
    out = prop.evolve(psi, t0, t1)
    _check_drift(np.linalg.norm(psi), np.linalg.norm(out), tol, (t1 - t0) / params.period, t1)
    return out


def propagate_samples(params: DimerParams, psi0, times, tol: float = 1e-10, t0: float = 0.0):
    """Generator over ``(t, psi(t))`` at the requested times."""
    psi0 = check_state(params, psi0)
    return Propagator(params, tol).samples(psi0, times, t0)


def _sample_times(params: DimerParams, horizon: int, samples_per_period: int) -> np.ndarray:
    if horizon < 1 or samples_per_period < 1:
        raise ValueError("horizon and samples_per_period must be positive")
    k = np.arange(horizon * samples_per_period + 1)
    return params.period * (k / samples_per_period)


def return_probability_series(params: DimerParams, psi0, horizon: int, samples_per_period: int = 8,
                              tol: float = 1e-10):
    """Return probability |<psi(0)|psi(t)>|^2 sampled over ``horizon`` periods.

    Returns
    -------
    times, values : ndarray
        ``times[i] = i T / samples_per_period``.
    """
    psi0 = np.asarray(check_state(params, psi0), dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    times = _sample_times(params, horizon, samples_per_period)
    values = np.empty(times.size)
    psi = psi0
    for i, (_, psi) in enumerate(propagate_samples(params, psi0, times, tol)):
        values[i] = abs(np.vdot(psi0, psi)) ** 2
    _check_drift(1.0, np.linalg.norm(psi), tol, horizon, times[-1])
    return times, np.clip(values, 0.0, 1.0)


def fock_occupation_series(params: DimerParams, psi0, horizon: int, samples_per_period: int = 8,
                           tol: float = 1e-10):
    """Fock occupations F[i, j] = |<j, N - j|psi(t_i)>|^2 over ``horizon`` periods."""
    psi0 = np.asarray(check_state(params, psi0), dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    times = _sample_times(params, horizon, samples_per_period)
    occ = np.empty((times.size, params.dim))
    for i, (_, psi) in enumerate(propagate_samples(params, psi0, times, tol)):
        occ[i] = np.abs(psi) ** 2
    return times, occ


def unitarity_defect(u: np.ndarray) -> float:
    """max |U^+ U - 1|."""
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def _check_dense(params: DimerParams, max_dim: int):
    if params.dim > max_dim:
        raise ValueError(
            f"N + 1 = {params.dim} exceeds the dense limit {max_dim}; "
            "use evolve_state / return_probability_series for matrix-free observables"
        )


def monodromy(params: DimerParams, tol: float = 1e-10, max_dim: int = DENSE_LIMIT,
              steps_per_period=None) -> np.ndarray:
    """One-period propagator U(T, 0) as a dense matrix."""
    _check_dense(params, max_dim)
    prop = Propagator(params, tol, steps_per_period)
    return prop.evolve(np.eye(params.dim, dtype=complex), 0.0, params.period)


def half_period_symmetry(params: DimerParams, tol: float = 1e-10, max_dim: int = DENSE_LIMIT,
                         monodromy_matrix=None, steps_per_period=None, witness_tol: float = 1e-7):
    """Generalized parity operator V = S U(T/2, 0) with S the site swap.

    The drive obeys S H(t + T/2) S = H(t), hence V^2 = U(T, 0).  When
    ``monodromy_matrix`` is given this identity is checked and a
    :class:`SymmetryError` raised if it fails by more than ``witness_tol``.
    """
    _check_dense(params, max_dim)
    prop = Propagator(params, tol, steps_per_period)
    half = prop.evolve(np.eye(params.dim, dtype=complex), 0.0, 0.5 * params.period)
    v = site_swap(half)
    if monodromy_matrix is not None:
        w = symmetry_witness(v, monodromy_matrix)
        if w > witness_tol:
            raise SymmetryError(
                f"||V^2 - U||_max = {w:.3e} exceeds {witness_tol:g}; check the drive phase convention"
            )
    return v


def symmetry_witness(v: np.ndarray, u: np.ndarray) -> float:
    """max |V^2 - U|."""
    return float(np.max(np.abs(v @ v - u)))
