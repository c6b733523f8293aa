"""SU(2) coherent states and Husimi projections on the (p, phi) plane."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, xlogy

__all__ = [
    "HusimiGrid",
    "PhasePoint",
    "coherent_overlap",
    "coherent_state",
    "coherent_states",
    "husimi_at",
    "husimi_grid",
    "husimi_value",
    "wrap_phase",
]

DEFAULT_RESOLUTION = 201


def wrap_phase(phi):
    """Reduce angles into (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = phi - 2 * math.pi * np.ceil((phi - math.pi) / (2 * math.pi))
    return out if out.ndim else float(out)


class PhasePoint(NamedTuple):
    """Mean-field point: population imbalance ``p`` and relative phase ``phi``."""

    p: float
    phi: float

    @classmethod
    def make(cls, p, phi) -> PhasePoint:
        """Validated point with ``phi`` reduced into (-pi, pi]."""
        p = float(p)
        if not -1.0 <= p <= 1.0:
            raise ValueError(f"population imbalance must lie in [-1, 1], got {p}")
        return cls(p, float(wrap_phase(phi)))


def _n_of(obj) -> int:
    n = getattr(obj, "n_particles", obj)
    if int(n) != n or n < 1:
        raise ValueError(f"particle number must be a positive integer, got {n}")
    return int(n)


def _log_amplitudes(n: int, p: np.ndarray) -> np.ndarray:
    """log |amplitude| on |j, N-j>, shape (len(p), N+1)."""
    p = np.asarray(p, dtype=float)
    if np.any(np.abs(p) > 1.0):
        raise ValueError("population imbalance must lie in [-1, 1]")
    j = np.arange(n + 1, dtype=float)
    log_binom = 0.5 * (gammaln(n + 1.0) - gammaln(j + 1.0) - gammaln(n - j + 1.0))
    # cos^2(theta/2) = (1 + p)/2, sin^2(theta/2) = (1 - p)/2
    c2 = (0.5 * (1.0 + p))[:, None]
    s2 = (0.5 * (1.0 - p))[:, None]
    return log_binom + 0.5 * (xlogy(j, c2) + xlogy(n - j, s2))


def coherent_states(n_particles, points) -> np.ndarray:
    """Coherent states for many points as columns, shape (N+1, len(points))."""
    n = _n_of(n_particles)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p, phi = pts[:, 0], pts[:, 1]
    j = np.arange(n + 1, dtype=float)
    logs = _log_amplitudes(n, p)
    amp = np.exp(logs) * np.exp(1j * np.outer(phi, n - j))
    amp /= np.linalg.norm(amp, axis=1, keepdims=True)
    return amp.T.copy()


def coherent_state(n_particles, point) -> np.ndarray:
    """Normalized coherent N-particle state centred at ``point`` = (p, phi).

    ``n_particles`` may be an int or a :class:`~dimerlab.model.DimerParams`.
    """
    p, phi = point
    return coherent_states(n_particles, [(p, phi)])[:, 0]


def coherent_overlap(n_particles, a, b) -> float:
    """|<a|b>|^2 = cos^{2N}(gamma/2) for the Bloch-sphere angle gamma between a and b."""
    n = _n_of(n_particles)

    def bloch(pt):
        p, phi = pt
        s = math.sqrt(max(0.0, 1.0 - p * p))
        return np.array([s * math.cos(phi), s * math.sin(phi), p])

    cos_gamma = float(np.clip(bloch(a) @ bloch(b), -1.0, 1.0))
    return (0.5 * (1.0 + cos_gamma)) ** n


def husimi_value(psi, point) -> float:
    """Q = |<psi|coherent(point)>|^2."""
    psi = np.asarray(psi)
    return float(husimi_at(psi, [point])[0])


def husimi_at(psi, points) -> np.ndarray:
    """Husimi values at many points."""
    psi = np.asarray(psi, dtype=complex)
    states = coherent_states(psi.shape[0] - 1, points)
    return np.abs(psi.conj() @ states) ** 2


@dataclass
class HusimiGrid:
    """Husimi values ``q[i, k]`` at ``(p[i], phi[k])``; both axes ascending."""

    p: np.ndarray
    phi: np.ndarray
    q: np.ndarray

    def argmax(self) -> PhasePoint:
        i, k = np.unravel_index(np.argmax(self.q), self.q.shape)
        return PhasePoint(float(self.p[i]), float(self.phi[k]))

    @property
    def total(self) -> float:
        return float(self.q.sum())

    def mass_fraction(self, mask: np.ndarray) -> float:
        """Share of the summed grid values on nodes where ``mask`` is true."""
        return float(self.q[mask].sum() / self.q.sum())

    def mesh(self):
        """(P, PHI) arrays shaped like ``q``."""
        return np.meshgrid(self.p, self.phi, indexing="ij")

    def triples(self) -> np.ndarray:
        """Rows (p, phi, Q) in grid order."""
        pp, ff = self.mesh()
        return np.column_stack((pp.ravel(), ff.ravel(), self.q.ravel()))


def husimi_grid(psi, p_resolution: int = DEFAULT_RESOLUTION,
                phi_resolution: int = DEFAULT_RESOLUTION) -> HusimiGrid:
    """Husimi projection on a uniform grid over [-1, 1] x (-pi, pi].

    The phase dependence factorizes, so the grid costs one matrix product.
    """
    psi = np.asarray(psi, dtype=complex)
    n = psi.shape[0] - 1
    p = np.linspace(-1.0, 1.0, p_resolution)
    phi = np.linspace(-math.pi, math.pi, phi_resolution + 1)[1:]
    amp = np.exp(_log_amplitudes(n, p))  # (P, N+1)
    j = np.arange(n + 1)
    phase = np.exp(1j * np.outer(n - j, phi))  # (N+1, F)
    overlap = (amp * psi.conj()[None, :]) @ phase
    q = np.clip(np.abs(overlap) ** 2, 0.0, 1.0)
    return HusimiGrid(p, phi, q)
