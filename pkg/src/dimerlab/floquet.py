"""Floquet decomposition, generalized parity and quasienergy sweeps."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur

from .model import DimerParams
from .propagation import DENSE_LIMIT, half_period_symmetry, unitarity_defect

__all__ = [
    "FloquetSolution",
    "Splitting",
    "SweepResult",
    "circular_distance",
    "doublet_splitting",
    "floquet_decompose",
    "floquet_solve",
    "fold_quasienergy",
    "quasienergy_sweep",
]

EVEN, ODD = 1, -1
SWEEP_LIMIT = 512


def fold_quasienergy(eps, omega: float):
    """Map quasienergies into the first zone [-omega/2, omega/2)."""
    eps = np.asarray(eps, dtype=float)
    return eps - omega * np.floor(eps / omega + 0.5)


def circular_distance(a, b, period: float):
    """Distance between a and b on a circle of circumference ``period``."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), period)
    return np.minimum(d, period - d)


@dataclass
class FloquetSolution:
    """Floquet spectrum at t = 0.

    Attributes
    ----------
    quasienergies : ndarray
        Ascending, folded into [-omega/2, omega/2), in rate units.
    states : ndarray
        Floquet functions |u(0)> as orthonormal columns.
    parity : ndarray
        +1 (even) or -1 (odd) branch of the half-period operator.
    omega : float
        Zone width.
    """

    quasienergies: np.ndarray
    states: np.ndarray
    parity: np.ndarray
    omega: float
    params: DimerParams | None = None

    @property
    def size(self) -> int:
        return self.quasienergies.size

    @property
    def parity_labels(self) -> list:
        return ["even" if s > 0 else "odd" for s in self.parity]

    @property
    def symmetry_phases(self) -> np.ndarray:
        """Eigenphases of the half-period operator, in (-pi, pi].

        Levels of either parity class lie on one circle here; noncrossing
        applies to these phases.
        """
        period = 2 * math.pi / self.omega
        ang = -0.5 * self.quasienergies * period + np.where(self.parity > 0, 0.0, math.pi)
        return np.angle(np.exp(1j * ang))

    def state(self, index: int) -> np.ndarray:
        return self.states[:, index]


def _branch_quasienergies(lam_v: np.ndarray, omega: float):
    # lam_V = sigma exp(-i eps T/2), eps in [-omega/2, omega/2)
    period = 2 * math.pi / omega
    eps = fold_quasienergy(-np.angle(lam_v * lam_v) / period, omega)
    sigma = np.real(lam_v * np.exp(0.5j * eps * period))
    parity = np.where(sigma >= 0, EVEN, ODD)
    return eps, parity


def floquet_decompose(u: np.ndarray, params: DimerParams, v: np.ndarray | None = None,
                      tol: float = 1e-10, max_defect: float = 1e-6) -> FloquetSolution:
    """Floquet states and folded quasienergies of the monodromy ``u``.

    The eigenbasis is taken from the half-period operator ``v`` (computed if
    absent), whose eigenvectors are Floquet states with definite parity.  A
    complex Schur form of the normal matrix ``v`` directly yields an
    orthonormal eigenbasis, also inside degenerate subspaces.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (params.dim, params.dim):
        raise ValueError(f"monodromy must be {params.dim}x{params.dim}")
    defect = unitarity_defect(u)
    if defect > max_defect:
        raise ValueError(f"monodromy is not unitary: defect {defect:.2e} > {max_defect:g}")
    if v is None:
        v = half_period_symmetry(params, tol, max_dim=max(params.dim, DENSE_LIMIT))
    sol = _decompose_symmetry(v, params)
    residual = _eigen_residual(u, sol)
    if residual > max(1e-6, 100 * defect):
        raise ValueError(f"half-period operator does not diagonalize U (residual {residual:.2e})")
    return sol


def _decompose_symmetry(v: np.ndarray, params: DimerParams) -> FloquetSolution:
    try:
        tri, vecs = schur(v, output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"Schur decomposition failed: {exc}") from exc
    lam = np.diag(tri)
    eps, parity = _branch_quasienergies(lam, params.omega_drive)
    order = np.argsort(eps, kind="stable")
    return FloquetSolution(eps[order], vecs[:, order], parity[order], params.omega_drive, params)


def _eigen_residual(u, sol: FloquetSolution) -> float:
    phases = np.exp(-1j * sol.quasienergies * (2 * math.pi / sol.omega))
    return float(np.max(np.abs(u @ sol.states - sol.states * phases)))


def floquet_solve(params: DimerParams, tol: float = 1e-10, max_dim: int = DENSE_LIMIT):
    """Floquet decomposition from one half-period propagation.

    Returns the solution and the monodromy U = V^2.
    """
    v = half_period_symmetry(params, tol, max_dim=max_dim)
    u = v @ v
    return _decompose_symmetry(v, params), u


@dataclass
class Splitting:
    """Width of a quasienergy multiplet.

    ``tunneling_time`` is ``None`` for an exactly degenerate multiplet.
    """

    delta: float
    tunneling_time: float | None
    near_degenerate: bool
    threshold: float
    indices: tuple = ()
    message: str = ""


def doublet_splitting(fs: FloquetSolution, indices, threshold: float | None = None,
                      modulus: float | None = None) -> Splitting:
    """Largest pairwise circular distance within a multiplet.

    Parameters
    ----------
    indices : sequence of int
        States forming the multiplet.
    threshold : float, optional
        Widths above this are flagged as not near-degenerate; default
        ``1e-3 * omega / (N + 1)``.
    modulus : float, optional
        Circle circumference; ``omega`` by default, ``omega / k`` for
        multiplets built from k-periodic tubes.
    """
    idx = tuple(int(i) for i in indices)
    if len(idx) < 2:
        raise ValueError("a multiplet needs at least two states")
    period = fs.omega if modulus is None else modulus
    if threshold is None:
        threshold = 1e-3 * fs.omega / fs.size
    e = fs.quasienergies[list(idx)]
    delta = float(np.max(circular_distance(e[:, None], e[None, :], period)))
    t_tun = math.pi / delta if delta > 0 else None
    near = delta <= threshold
    msg = "" if near else f"multiplet width {delta:.3e} exceeds degeneracy threshold {threshold:.3e}"
    if msg:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return Splitting(delta, t_tun, near, threshold, idx, msg)


@dataclass
class SweepResult:
    """Folded quasienergies along a parameter grid.

    Attributes
    ----------
    axis : str
        ``"mu"`` or ``"omega_drive"``.
    grid : ndarray
    quasienergies, parity : ndarray
        Shape (n_points, N + 1); rows of failed points are NaN / 0.
    failed : ndarray of bool
    same_class_gap : ndarray
        Per point, smallest gap between levels of one symmetry class, in
        quasienergy units (measured on the half-period eigenphase circle).
    any_gap : ndarray
        Per point, smallest gap between any two folded quasienergies.
    pair_min_gaps : ndarray
        For each adjacent same-class pair (tracked through the sweep), the
        minimal gap over the grid.
    """

    axis: str
    grid: np.ndarray
    quasienergies: np.ndarray
    parity: np.ndarray
    failed: np.ndarray
    same_class_gap: np.ndarray
    any_gap: np.ndarray
    pair_min_gaps: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def min_same_class_gap(self) -> float:
        ok = ~self.failed
        return float(np.min(self.same_class_gap[ok])) if ok.any() else float("nan")


def _sorted_phase_gaps(phases):
    s = np.sort(phases)
    return s, np.diff(np.concatenate((s, [s[0] + 2 * math.pi])))


def _align(prev_sorted, cur_sorted):
    # cyclic shift of cur that best matches prev
    n = cur_sorted.size
    best, best_cost = 0, np.inf
    for shift in range(n):
        d = np.angle(np.exp(1j * (np.roll(cur_sorted, -shift) - prev_sorted)))
        cost = float(np.sum(d * d))
        if cost < best_cost:
            best, best_cost = shift, cost
    return best


def quasienergy_sweep(params: DimerParams, axis: str, grid, tol: float = 1e-10,
                      max_dim: int = SWEEP_LIMIT) -> SweepResult:
    """Floquet spectra along ``grid`` values of ``mu`` or ``omega_drive``.

    The other parameters are taken from ``params``.  Failing grid points are
    flagged and skipped.
    """
    if axis not in ("mu", "omega_drive"):
        raise ValueError("axis must be 'mu' or 'omega_drive'")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if params.dim > max_dim:
        raise ValueError(f"N + 1 = {params.dim} exceeds the sweep limit {max_dim}")
    npts, dim = grid.size, params.dim
    eps = np.full((npts, dim), np.nan)
    par = np.zeros((npts, dim), dtype=int)
    failed = np.zeros(npts, dtype=bool)
    same_gap = np.full(npts, np.nan)
    any_gap = np.full(npts, np.nan)
    pair_gaps = np.full((npts, dim), np.nan)
    errors = {}
    prev = None
    for i, value in enumerate(grid):
        try:
            p = params.replace(**{axis: float(value)})
            fs, _ = floquet_solve(p, tol, max_dim=max_dim)
        except Exception as exc:  # a failing point must not stop the sweep
            failed[i] = True
            errors[i] = repr(exc)
            continue
        eps[i], par[i] = fs.quasienergies, fs.parity
        # half-period phase circle: 2 pi corresponds to 2 omega in quasienergy
        to_eps = p.omega_drive / math.pi
        phases, gaps = _sorted_phase_gaps(fs.symmetry_phases)
        if dim > 1:
            if prev is not None:
                shift = _align(prev, phases)
                gaps = np.roll(gaps, -shift)
                phases = np.roll(phases, -shift)
            prev = phases
            pair_gaps[i] = gaps * to_eps
            same_gap[i] = gaps.min() * to_eps
            e = np.sort(fs.quasienergies)
            any_gap[i] = np.diff(np.concatenate((e, [e[0] + p.omega_drive]))).min()
    pair_min = np.nanmin(pair_gaps, axis=0) if (~failed).any() else np.full(dim, np.nan)
    return SweepResult(axis, grid, eps, par, failed, same_gap, any_gap, pair_min, errors)
