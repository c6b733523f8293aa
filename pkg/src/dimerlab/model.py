"""Driven Bose-Hubbard dimer in the fixed-N Fock basis.

The Hamiltonian (with hbar = 1, all rates in the same inverse-time unit) is

    H(t) = -(Omega/2) (a2^+ a1 + a1^+ a2)
           + kappa (a1^+ a1^+ a1 a1 + a2^+ a2^+ a2 a2)
           + mu sin(omega t + phase) (a1^+ a1 - a2^+ a2)

acting on the N + 1 Fock states |j, N - j>, where j counts the particles on
site 1.  In this basis H(t) is real tridiagonal, so it is stored as three
bands and applied without ever forming a matrix.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "DEFAULT_DRIVE_PHASE",
    "DimerParams",
    "apply_hamiltonian",
    "check_state",
    "hamiltonian_bands",
    "hamiltonian_matrix",
    "load_params",
    "read_config",
    "site_swap",
    "static_spectrum",
]

#: Drive phase at t = 0.  With pi/2 the stroboscopic section at t = 0 mod T
#: is the one on which the symmetric periodic orbits sit on phi = 0.
DEFAULT_DRIVE_PHASE = math.pi / 2

DENSE_LIMIT = 64


@dataclass(frozen=True)
class DimerParams:
    """Physical parameters of the driven dimer.

    Parameters
    ----------
    n_particles : int
        Total particle number N.
    omega_hop : float
        Tunneling rate Omega.
    kappa : float
        On-site interaction rate.
    mu : float
        Drive amplitude rate.
    omega_drive : float
        Drive angular frequency.
    drive_phase : float
        Phase of the sinusoidal drive at t = 0.
    """

    n_particles: int
    omega_hop: float = 1.0
    kappa: float = 0.0
    mu: float = 0.0
    omega_drive: float = 1.0
    drive_phase: float = DEFAULT_DRIVE_PHASE

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError(f"n_particles must be a positive integer, got {self.n_particles}")
        object.__setattr__(self, "n_particles", int(self.n_particles))
        if not self.omega_hop > 0:
            raise ValueError("omega_hop must be positive")
        if not self.omega_drive > 0:
            raise ValueError("omega_drive must be positive")
        if self.kappa < 0 or self.mu < 0:
            raise ValueError("kappa and mu must be non-negative")

    @classmethod
    def from_ratios(cls, n_particles, alpha, drive_ratio, freq_ratio, omega_hop=1.0,
                    drive_phase=DEFAULT_DRIVE_PHASE):
        """Build parameters from the dimensionless triple (N kappa/Omega, mu/Omega, omega/Omega)."""
        return cls(
            n_particles=n_particles,
            omega_hop=omega_hop,
            kappa=alpha * omega_hop / n_particles,
            mu=drive_ratio * omega_hop,
            omega_drive=freq_ratio * omega_hop,
            drive_phase=drive_phase,
        )

    @property
    def dim(self) -> int:
        return self.n_particles + 1

    @property
    def alpha(self) -> float:
        return self.n_particles * self.kappa / self.omega_hop

    @property
    def hbar_eff(self) -> float:
        return 2.0 / self.n_particles

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega_drive

    @property
    def scaled_period(self) -> float:
        return 2.0 * math.pi * self.omega_hop / self.omega_drive

    @property
    def drive_ratio(self) -> float:
        return self.mu / self.omega_hop

    @property
    def freq_ratio(self) -> float:
        return self.omega_drive / self.omega_hop

    @property
    def energy_offset(self) -> float:
        """Constant part of the interaction energy, kappa N (N - 2) / 2."""
        return 0.5 * self.kappa * self.n_particles * (self.n_particles - 2)

    def replace(self, **changes) -> DimerParams:
        return dataclasses.replace(self, **changes)

    def drive(self, t):
        """Drive amplitude mu sin(omega t + phase) at time(s) t."""
        return self.mu * np.sin(self.omega_drive * np.asarray(t) + self.drive_phase)

    def meanfield(self):
        from .meanfield import MeanFieldParams

        return MeanFieldParams(
            alpha=self.alpha,
            drive_ratio=self.drive_ratio,
            freq_ratio=self.freq_ratio,
            drive_phase=self.drive_phase,
        )

    def derived(self) -> dict:
        return {
            "alpha": self.alpha,
            "hbar_eff": self.hbar_eff,
            "period": self.period,
            "scaled_period": self.scaled_period,
            "drive_ratio": self.drive_ratio,
            "freq_ratio": self.freq_ratio,
            "dim": self.dim,
        }

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def check_state(params: DimerParams, psi) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.shape[0] != params.dim:
        raise ValueError(
            f"state has leading dimension {psi.shape[0]}, expected N + 1 = {params.dim}"
        )
    return psi


def hamiltonian_bands(params: DimerParams):
    """Return ``(static_diag, offdiag, drive_diag)``.

    ``H(t) = diag(static_diag + f(t) * drive_diag) + offdiag on both side bands``
    with ``f(t) = params.drive(t)``.
    """
    n = params.n_particles
    j = np.arange(n + 1, dtype=float)
    static = params.kappa * (j * (j - 1.0) + (n - j) * (n - j - 1.0))
    off = -0.5 * params.omega_hop * np.sqrt((j[:-1] + 1.0) * (n - j[:-1]))
    drive = 2.0 * j - n
    return static, off, drive


def _tridiag_apply(diag, off, psi):
    out = diag.reshape((-1,) + (1,) * (psi.ndim - 1)) * psi
    off = off.reshape((-1,) + (1,) * (psi.ndim - 1))
    out[:-1] += off * psi[1:]
    out[1:] += off * psi[:-1]
    return out


def apply_hamiltonian(params: DimerParams, psi, t: float = 0.0) -> np.ndarray:
    """Return H(t) psi (not normalized).  ``psi`` may be a vector or a block of columns."""
    psi = check_state(params, psi)
    static, off, drive = hamiltonian_bands(params)
    return _tridiag_apply(static + float(params.drive(t)) * drive, off, psi.astype(complex))


def hamiltonian_matrix(params: DimerParams, t: float = 0.0, max_dim: int = DENSE_LIMIT) -> np.ndarray:
    """Dense H(t).  Only meant for small N; refuses above ``max_dim`` states."""
    if params.dim > max_dim:
        raise ValueError(f"refusing to build a dense {params.dim}x{params.dim} Hamiltonian")
    static, off, drive = hamiltonian_bands(params)
    h = np.diag(static + float(params.drive(t)) * drive)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def static_spectrum(params: DimerParams):
    """Eigenpairs of the undriven Hamiltonian (mu is ignored).

    Returns
    -------
    energies : ndarray
        Ascending eigenvalues E/hbar, in the units of ``omega_hop``.
    vectors : ndarray
        Orthonormal eigenvectors as columns.
    """
    static, off, _ = hamiltonian_bands(params)
    if params.dim == 1:
        return static.copy(), np.ones((1, 1))
    try:
        return eigh_tridiagonal(static, off)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"tridiagonal eigensolver did not converge: {exc}") from exc


def site_swap(psi) -> np.ndarray:
    """Exchange the two sites, |j, N - j> -> |N - j, j>."""
    return np.asarray(psi)[::-1].copy()


_PARAM_KEYS = ("n_particles", "omega_hop", "kappa", "mu", "omega_drive", "drive_phase")


def read_config(path) -> dict:
    """Parse a ``key = value`` text file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = parse_value(value)
    return out


def parse_value(value: str):
    """Interpret a config string as int, float, bool or plain string."""
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def load_params(config: dict) -> DimerParams:
    """Build :class:`DimerParams` from a config mapping.

    Either the absolute rates (``kappa``, ``mu``, ``omega_drive``) or the ratios
    (``alpha``, ``drive_ratio``, ``freq_ratio``) may be given; absolute rates win.
    """
    if "n_particles" not in config:
        raise KeyError("config is missing 'n_particles'")
    omega = float(config.get("omega_hop", 1.0))
    n = int(config["n_particles"])
    kw = {"n_particles": n, "omega_hop": omega}
    if "kappa" in config:
        kw["kappa"] = float(config["kappa"])
    elif "alpha" in config:
        kw["kappa"] = float(config["alpha"]) * omega / n
    if "mu" in config:
        kw["mu"] = float(config["mu"])
    elif "drive_ratio" in config:
        kw["mu"] = float(config["drive_ratio"]) * omega
    if "omega_drive" in config:
        kw["omega_drive"] = float(config["omega_drive"])
    elif "freq_ratio" in config:
        kw["omega_drive"] = float(config["freq_ratio"]) * omega
    if "drive_phase" in config:
        kw["drive_phase"] = float(config["drive_phase"])
    return DimerParams(**kw)
