"""Figure presets, dataset bundles on disk and their validation.

A bundle is a directory holding CSV data files and a ``summary.json``
record with the full configuration, its hash, the tolerances, derived
quantities, the software version and the wall time.  CSV bodies depend
only on the configuration, so repeated runs give identical files.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely

from . import __version__
from .floquet import floquet_solve, quasienergy_sweep
from .husimi import PhasePoint, coherent_state, husimi_grid, wrap_phase
from .meanfield import (
    ConvergenceError,
    CurveError,
    SingularityError,
    chain_boundaries,
    find_periodic_orbit,
    flow,
    orbit_points,
    outermost_curve,
    poincare_section,
    scan_periodic_orbits,
    trace_invariant_curve,
    tube_period,
)
from .model import load_params, static_spectrum
from .propagation import (
    DENSE_LIMIT,
    IntegrationError,
    SymmetryError,
    evolve_state,
    fock_occupation_series,
    return_probability_series,
    unitarity_defect,
)
from .semiclassics import match_states_to_tubes, quantize_island, semiclassical_quasienergy

__all__ = [
    "PHYSICS_ERRORS",
    "PRESETS",
    "BundleReport",
    "CriterionCheck",
    "ExperimentError",
    "ExperimentSpec",
    "PhysicsRejection",
    "run_experiment",
    "scaled_quantum_numbers",
    "side_peak_ratio",
    "validate_bundle",
]

log = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"

_PENDULUM = {"alpha": 0.92, "drive_ratio": 0.4, "freq_ratio": 1.9}

#: Preset configurations; parameters follow the figure captions.
PRESETS: dict = {
    "fig1": {**_PENDULUM, "task": "return_probability", "n_particles": 2000, "p0": -0.497,
             "phi0": 0.0, "periods": 16, "samples_per_period": 8, "clock_period": 3},
    "fig2": {**_PENDULUM, "task": "poincare", "n_particles": 2000, "n_seeds": 48, "periods": 400,
             "scan_resolution": 20, "reference_p": -0.497},
    "fig3": {**_PENDULUM, "task": "husimi_main", "n_particles": 2000, "reference_particles": 10000,
             "quantum_numbers": "0,109,193,275,767,971,1414,1672", "husimi_resolution": 201},
    "fig5": {**_PENDULUM, "task": "tubes", "n_particles": 2000, "main_offset": 0.2,
             "chain_offset": 0.03, "chain_guess_p": -0.497, "curve_points": 64,
             "samples_per_period": 32},
    "fig6": {**_PENDULUM, "task": "chain_husimi", "n_particles": 2000, "scan_resolution": 20,
             "husimi_resolution": 201, "mass_threshold": 0.8},
    "fig7": {**_PENDULUM, "task": "fock_occupation", "n_particles": 2000, "p0": -0.497,
             "phi0": 0.0, "periods": 16, "samples_per_period": 8},
    "fig8": {**_PENDULUM, "task": "poincare_zoom", "n_particles": 2000, "center_p": -0.497,
             "center_phi": 0.0, "zoom_p_max": -0.38, "n_seeds": 40, "periods": 300,
             "orbit_guess_p": -0.4278, "orbit_period": 18},
    "fig9a": {**_PENDULUM, "task": "return_probability", "n_particles": 2000, "p0": -0.4278,
              "phi0": 0.0, "periods": 40, "samples_per_period": 8, "clock_period": 18},
    "fig9b": {**_PENDULUM, "task": "return_probability", "n_particles": 5000, "p0": -0.4278,
              "phi0": 0.0, "periods": 40, "samples_per_period": 8, "clock_period": 18},
    "custom": {},
}

DEFAULT_TOLERANCES = {"propagation": 1e-8, "floquet": 1e-6, "meanfield_rtol": 1e-11}

# thresholds used by validate_bundle
PEAK_MIN = 0.7
TROUGH_MAX = 0.3
DOMINANCE_FACTOR = 1.5
ORBIT_P_TOL = 0.02
TUBE_CLOSURE_TOL = 1e-3
NORM_TOL = 1e-8


class ExperimentError(RuntimeError):
    """A stage of an experiment failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class PhysicsRejection(RuntimeError):
    """The requested physics is not available, e.g. an island too small for hbar_eff."""


PHYSICS_ERRORS = (PhysicsRejection, SingularityError, ConvergenceError, CurveError)


@dataclass
class ExperimentSpec:
    """What to run and where to write it.

    Parameters
    ----------
    preset : str
        One of :data:`PRESETS`.
    overrides : dict
        Keys replacing preset values; a ``custom`` run needs all parameters.
    out_dir : path
        Bundle directory, created if missing.
    tolerances : dict
        Entries replacing :data:`DEFAULT_TOLERANCES`.
    """

    preset: str
    overrides: dict = field(default_factory=dict)
    out_dir: Path | str = "bundle"
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerance keys {sorted(unknown)}")

    def config(self) -> dict:
        cfg = dict(PRESETS[self.preset])
        cfg.update(self.overrides)
        if self.preset == "custom" and "task" not in cfg:
            if float(cfg.get("mu", cfg.get("drive_ratio", 0.0))) != 0.0:
                raise ValueError("a driven custom run needs a 'task'")
            cfg["task"] = "static"
        if cfg.get("task") not in _TASKS:
            raise ValueError(f"unknown task {cfg.get('task')!r}; choose from {sorted(_TASKS)}")
        return cfg

    def resolved_tolerances(self) -> dict:
        return {**DEFAULT_TOLERANCES, **{k: float(v) for k, v in self.tolerances.items()}}

    def config_hash(self) -> str:
        blob = json.dumps({"config": self.config(), "tolerances": self.resolved_tolerances()},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class _Table:
    header: list
    rows: np.ndarray


# ---------------------------------------------------------------------------
# tasks: each returns (tables, results); nothing is written until the end

def _point(cfg, pk="p0", fk="phi0"):
    return PhasePoint.make(cfg[pk], cfg.get(fk, 0.0))


def _task_return_probability(cfg, params, tol):
    psi0 = coherent_state(params, _point(cfg))
    times, pr = return_probability_series(params, psi0, int(cfg["periods"]),
                                          int(cfg["samples_per_period"]), tol["propagation"])
    t_over_T = times / params.period
    results = {"peaks": {str(k): float(pr[k * int(cfg["samples_per_period"])])
                         for k in range(1, int(cfg["periods"]) + 1)}}
    return {"return_probability": _Table(["t_over_T", "return_probability"],
                                         np.column_stack((t_over_T, pr)))}, results


def _task_fock_occupation(cfg, params, tol):
    psi0 = coherent_state(params, _point(cfg))
    times, occ = fock_occupation_series(params, psi0, int(cfg["periods"]),
                                        int(cfg["samples_per_period"]), tol["propagation"])
    header = ["t_over_T"] + [f"j{j}" for j in range(params.dim)]
    spp = int(cfg["samples_per_period"])
    bc = np.sqrt(occ * occ[0]).sum(axis=1)
    results = {"bhattacharyya_at_periods": [float(b) for b in bc[::spp]]}
    return {"fock_occupation": _Table(header, np.column_stack((times / params.period, occ)))}, results


def _orbit_table(mf, orbits, tol):
    rows = []
    for cid, orb in enumerate(orbits):
        for j, (p, phi) in enumerate(orbit_points(mf, orb.point, orb.k, rtol=tol["meanfield_rtol"])):
            rows.append((orb.k, cid, j, p, float(wrap_phase(phi)), orb.trace,
                         float(orb.elliptic)))
    return _Table(["k", "cycle", "member", "p", "phi", "trace", "elliptic"],
                  np.array(rows, dtype=float).reshape(-1, 7))


def _scan_grid(cfg):
    n = int(cfg["scan_resolution"])
    return np.linspace(-0.95, 0.95, n), np.linspace(-math.pi, math.pi, n, endpoint=False)


def _task_poincare(cfg, params, tol):
    mf = params.meanfield()
    seeds = np.column_stack((np.linspace(-0.95, 0.95, int(cfg["n_seeds"])),
                             np.zeros(int(cfg["n_seeds"]))))
    sec = poincare_section(mf, seeds, int(cfg["periods"]), tol["meanfield_rtol"])
    p_grid, phi_grid = _scan_grid(cfg)
    orbits = []
    for k in (1, 3):
        orbits += scan_periodic_orbits(mf, k, p_grid, phi_grid)
    tables = {
        "poincare": _Table(["seed", "iterate", "p", "phi"], np.array(sec.rows(), dtype=float)),
        "orbits": _orbit_table(mf, orbits, tol),
    }
    results = {"aborted_seeds": int(sec.aborted.sum()),
               "elliptic_cycles": {str(k): sum(o.k == k for o in orbits) for k in (1, 3)}}
    return tables, results


def _task_poincare_zoom(cfg, params, tol):
    mf = params.meanfield()
    center = find_periodic_orbit(mf, (cfg["center_p"], cfg["center_phi"]), 3).point
    n = int(cfg["n_seeds"])
    seeds = np.column_stack((np.linspace(center.p, float(cfg["zoom_p_max"]), n + 1)[1:],
                             np.full(n, center.phi)))
    # sample every third period so each orbit stays near the magnified island
    taus = 3 * mf.scaled_period * np.arange(1, int(cfg["periods"]) + 1)
    rows = []
    for sid, seed in enumerate(seeds):
        try:
            traj = flow(mf, [seed], 0.0, taus, tol["meanfield_rtol"])[:, 0]
        except SingularityError:
            continue
        for it, (p, phi) in enumerate(traj, start=1):
            rows.append((sid, it, p, float(wrap_phase(phi))))
    k = int(cfg["orbit_period"])
    orb = find_periodic_orbit(mf, (cfg["orbit_guess_p"], 0.0), k)
    period = tube_period(mf, orb.point, k_max=k)
    tables = {
        "poincare_zoom": _Table(["seed", "iterate", "p", "phi"], np.array(rows, dtype=float)),
        "orbits": _orbit_table(mf, [orb], tol),
    }
    results = {"center": list(center), "orbit_point": list(orb.point), "orbit_period": period,
               "orbit_elliptic": orb.elliptic}
    return tables, results


CURVE_SAMPLES = 2048


def _curve_table(curve):
    return _Table(["p", "phi"], curve.sample(CURVE_SAMPLES))


def _quasienergy_table(fs):
    return _Table(["index", "quasienergy", "parity"],
                  np.column_stack((np.arange(fs.size), fs.quasienergies, fs.parity)))


def _husimi_table(psi, res):
    return _Table(["p", "phi", "q"], husimi_grid(psi, res, res).triples())


def scaled_quantum_numbers(n_list, n_particles: int, reference_particles: int) -> list:
    """Quantum numbers enclosing the same action at ``n_particles`` as ``n_list`` at the reference."""
    out = []
    for n in n_list:
        out.append(max(0, int(round((n + 0.5) * n_particles / reference_particles - 0.5))))
    return out


def _parse_ints(value) -> list:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",") if v.strip()]


def _task_husimi_main(cfg, params, tol):
    mf = params.meanfield()
    center = find_periodic_orbit(mf, (0.5, 0.0), 1).point
    ref = _parse_ints(cfg["quantum_numbers"])
    n_list = scaled_quantum_numbers(ref, params.n_particles, int(cfg["reference_particles"]))
    tubes = quantize_island(params, center, 1, n_list)
    if not tubes[0].fits:
        raise PhysicsRejection(f"main island too small for n = {n_list[0]}: {tubes[0].message}")
    fitting = [t for t in tubes if t.fits]
    for tube in fitting:
        try:
            tube.quasienergy = semiclassical_quasienergy(tube)
        except (CurveError, SingularityError) as exc:
            log.warning("no semiclassical quasienergy for n = %d: %s", tube.n, exc)
    boundary = outermost_curve(mf, center, 1)
    if boundary is None:
        raise PhysicsRejection("no invariant curve around the main elliptic point")
    fs, _ = _solve(cfg, params, tol)
    matches = {m.tube.n: m for m in match_states_to_tubes(fs, fitting)}
    rows, tables = [], {}
    res = int(cfg["husimi_resolution"])
    for n_ref, tube in zip(ref, tubes):
        m = matches.get(tube.n)
        rows.append((n_ref, tube.n, tube.target_action, tube.action, float(tube.fits),
                     m.state_index if m else -1, m.score if m else math.nan,
                     float(m.ambiguous) if m else math.nan, m.exact_rate if m else math.nan,
                     m.semiclassical_rate if m else math.nan))
        if m is not None:
            tables[f"husimi_n{tube.n}"] = _husimi_table(fs.states[:, m.state_index], res)
    tables["tubes"] = _Table(["n_reference", "n", "target_action", "action", "fits", "state",
                              "score", "ambiguous", "exact_rate", "semiclassical_rate"],
                             np.array(rows, dtype=float))
    tables["main_boundary"] = _curve_table(boundary)
    tables["quasienergies"] = _quasienergy_table(fs)
    results = {"center": list(center), "boundary_action": boundary.enclosed_action,
               "quantum_numbers": n_list, "ground_state": matches[tubes[0].n].state_index}
    return tables, results


def _task_chain_husimi(cfg, params, tol):
    mf = params.meanfield()
    p_grid, phi_grid = _scan_grid(cfg)
    cycles = scan_periodic_orbits(mf, 3, p_grid, phi_grid)
    if len(cycles) != 2:
        raise PhysicsRejection(f"expected two elliptic period-3 cycles, found {len(cycles)}")
    centers, bounds, tubes = [], [], []
    for orb in cycles:
        # quantize on the member farthest from the poles and map the tube around the cycle
        pts = orbit_points(mf, orb.point, 3)
        start = PhasePoint.make(*pts[int(np.argmin(np.abs(pts[:, 0])))])
        chain = chain_boundaries(mf, start, 3)
        if not chain:
            raise PhysicsRejection(f"no invariant curve around {start}")
        tube = quantize_island(params, start, 3, [0])[0]
        if not tube.fits:
            raise PhysicsRejection(f"secondary island at {start} too small: {tube.message}")
        bounds += chain
        for j in range(3):
            curve = tube.curve if j == 0 else tube.curve.image(j)
            centers.append(curve.center)
            tubes.append(dataclasses.replace(tube, curve=curve))
    fs, _ = _solve(cfg, params, tol)
    matches = match_states_to_tubes(fs, tubes)
    idx = [m.state_index for m in matches]
    res = int(cfg["husimi_resolution"])
    grids = [husimi_grid(fs.states[:, i], res, res) for i in idx]
    total = grids[0].q.copy()
    for g in grids[1:]:
        total += g.q
    pp, ff = grids[0].mesh()
    summed = np.column_stack((pp.ravel(), ff.ravel(), total.ravel()))
    brows = []
    for island, b in enumerate(bounds):
        for p, phi in b.sample(CURVE_SAMPLES):
            brows.append((island, p, phi))
    tables = {
        "chain_states": _Table(["island", "center_p", "center_phi", "state", "score", "ambiguous",
                                "quasienergy", "parity"],
                               np.array([(i, c.p, c.phi, m.state_index, m.score, float(m.ambiguous),
                                          fs.quasienergies[m.state_index], fs.parity[m.state_index])
                                         for i, (c, m) in enumerate(zip(centers, matches))])),
        "island_boundaries": _Table(["island", "p", "phi"], np.array(brows)),
        "husimi_representative": _Table(["p", "phi", "q"], grids[0].triples()),
        "husimi_sum": _Table(["p", "phi", "q"], summed),
        "quasienergies": _quasienergy_table(fs),
    }
    results = {"states": idx, "island_actions": [b.enclosed_action for b in bounds]}
    return tables, results


def _tube_samples(mf, curve, k, n_points, spp, rtol):
    pts = curve.sample(n_points)
    taus = curve.tau0 + mf.scaled_period * np.arange(k * spp + 1) / spp
    traj = flow(mf, pts, curve.tau0, taus, rtol)  # (len(taus), n_points, 2)
    rows = []
    for i, tau in enumerate(taus):
        for c in range(n_points):
            rows.append((c, (tau - curve.tau0) / mf.scaled_period, traj[i, c, 0], traj[i, c, 1]))
    return np.array(rows)


def _task_tubes(cfg, params, tol):
    mf = params.meanfield()
    rtol = tol["meanfield_rtol"]
    main = find_periodic_orbit(mf, (0.5, 0.0), 1).point
    chain = find_periodic_orbit(mf, (cfg["chain_guess_p"], 0.0), 3).point
    tables, results = {}, {}
    for name, center, k, off in (("main", main, 1, cfg["main_offset"]),
                                 ("chain", chain, 3, cfg["chain_offset"])):
        seed = (center.p - float(off), center.phi)
        curve = trace_invariant_curve(mf, seed, k, center=center)
        tables[f"tube_{name}"] = _Table(
            ["curve_point", "t_over_T", "p", "phi"],
            _tube_samples(mf, curve, k, int(cfg["curve_points"]), int(cfg["samples_per_period"]), rtol))
        tables[f"curve_{name}"] = _curve_table(curve)
        results[name] = {"k": k, "center": list(center), "action": curve.enclosed_action}
    return tables, results


@functools.lru_cache(maxsize=2)
def _cached_floquet(params, tol: float, max_dim: int):
    # presets sharing N and ratios reuse one decomposition within a process
    return floquet_solve(params, tol, max_dim=max_dim)


def _solve(cfg, params, tol):
    return _cached_floquet(params, float(tol["floquet"]), int(cfg.get("max_dim", DENSE_LIMIT)))


def _task_static(cfg, params, tol):
    energies, vecs = static_spectrum(params)
    parity = np.sign(np.real(np.sum(vecs[::-1] * vecs, axis=0)))
    return {"spectrum": _Table(["index", "energy", "parity"],
                               np.column_stack((np.arange(energies.size), energies, parity)))}, {
        "ground_energy": float(energies[0]), "levels": int(energies.size)}


def _task_floquet(cfg, params, tol):
    fs, u = _solve(cfg, params, tol)
    return {"quasienergies": _quasienergy_table(fs)}, {
        "levels": fs.size, "unitarity_defect": unitarity_defect(u), "omega_drive": params.omega_drive}


def _task_sweep(cfg, params, tol):
    axis = str(cfg.get("axis", "mu"))
    grid = np.linspace(float(cfg["start"]), float(cfg["stop"]), int(cfg["points"]))
    sw = quasienergy_sweep(params, axis, grid, tol["floquet"])
    dim = sw.quasienergies.shape[1]
    rows = [(x, lvl, sw.quasienergies[i, lvl], sw.parity[i, lvl])
            for i, x in enumerate(sw.grid) for lvl in range(dim)]
    gaps = np.column_stack((sw.grid, sw.same_class_gap, sw.any_gap, sw.failed.astype(float)))
    tables = {"sweep": _Table([axis, "level", "quasienergy", "parity"], np.array(rows)),
              "gaps": _Table([axis, "same_class_gap", "any_gap", "failed"], gaps)}
    return tables, {"min_same_class_gap": sw.min_same_class_gap, "failed_points": int(sw.failed.sum()),
                    "errors": {str(k): str(v) for k, v in sw.errors.items()}}


def _task_husimi(cfg, params, tol):
    source = str(cfg.get("source", "coherent"))
    res = int(cfg.get("husimi_resolution", 201))
    if source == "coherent":
        psi = coherent_state(params, _point(cfg))
        periods = int(cfg.get("periods", 0))
        if periods:
            psi = evolve_state(params, psi, 0.0, periods * params.period, tol["propagation"])
    elif source == "floquet":
        fs, _ = _solve(cfg, params, tol)
        psi = fs.state(int(cfg["index"]))
    else:
        raise ValueError(f"unknown husimi source {source!r}; use 'coherent' or 'floquet'")
    grid = husimi_grid(psi, res, res)
    return {"husimi": _Table(["p", "phi", "q"], grid.triples())}, {"argmax": list(grid.argmax())}


def _task_orbit(cfg, params, tol):
    mf = params.meanfield()
    k = int(cfg.get("k", 1))
    orb = find_periodic_orbit(mf, (cfg["guess_p"], cfg.get("guess_phi", 0.0)), k)
    return {"orbits": _orbit_table(mf, [orb], tol)}, {
        "point": list(orb.point), "k": k, "trace": orb.trace, "elliptic": orb.elliptic,
        "residual": orb.residual, "tube_period": tube_period(mf, orb.point, k_max=max(24, k))}


def _task_tube(cfg, params, tol):
    mf = params.meanfield()
    k = int(cfg.get("k", 1))
    center = find_periodic_orbit(mf, (cfg["center_p"], cfg.get("center_phi", 0.0)), k).point
    seed = (center.p - float(cfg["offset"]), center.phi)
    curve = trace_invariant_curve(mf, seed, k, center=center)
    samples = _tube_samples(mf, curve, k, int(cfg.get("curve_points", 64)),
                            int(cfg.get("samples_per_period", 32)), tol["meanfield_rtol"])
    return {"curve": _curve_table(curve), "tube": _Table(["curve_point", "t_over_T", "p", "phi"], samples)}, {
        "center": list(center), "action": curve.enclosed_action, "rotation": curve.rotation}


def _task_requantize(cfg, params, tol):
    mf = params.meanfield()
    k = int(cfg.get("k", 1))
    center = find_periodic_orbit(mf, (cfg["center_p"], cfg.get("center_phi", 0.0)), k).point
    n_list = _parse_ints(cfg.get("quantum_numbers", "0"))
    tubes = quantize_island(params, center, k, n_list, convention=str(cfg.get("convention", "plain")))
    fitting = [t for t in tubes if t.fits]
    if not fitting:
        raise PhysicsRejection(tubes[0].message)
    for tube in fitting:
        tube.quasienergy = semiclassical_quasienergy(tube)
    matched = {}
    if cfg.get("match", False):
        fs, _ = _solve(cfg, params, tol)
        matched = {m.tube.n: m for m in match_states_to_tubes(fs, fitting)}
    rows = []
    for t in tubes:
        q, m = t.quasienergy, matched.get(t.n)
        rows.append((t.n, t.target_action, t.action, float(t.fits),
                     q.scaled if q else math.nan, q.rate if q else math.nan,
                     q.per_particle if q else math.nan,
                     m.state_index if m else -1, m.exact_rate if m else math.nan,
                     m.residual_rate if m else math.nan))
    header = ["n", "target_action", "action", "fits", "quasienergy_scaled", "quasienergy_rate",
              "quasienergy_per_particle", "state", "exact_rate", "residual_rate"]
    records = []
    for t in tubes:
        q = t.quasienergy
        records.append({
            "n": t.n, "k": t.k, "kind": t.kind, "status": t.status, "target_action": t.target_action,
            "action": t.action, "message": t.message,
            "quasienergy": None if q is None else {
                "per_particle": q.per_particle, "rate": q.rate, "scaled": q.scaled, "photon_index": q.m,
                "zone_width_scaled": q.zone_width_scaled, "zone_width_rate": q.zone_width_rate},
        })
    return {"tubes": _Table(header, np.array(rows))}, {
        "center": list(center), "tubes": records, "zone_width_rate": params.omega_drive / k}


_TASKS = {
    "return_probability": _task_return_probability,
    "fock_occupation": _task_fock_occupation,
    "poincare": _task_poincare,
    "poincare_zoom": _task_poincare_zoom,
    "husimi_main": _task_husimi_main,
    "chain_husimi": _task_chain_husimi,
    "tubes": _task_tubes,
    "static": _task_static,
    "floquet": _task_floquet,
    "sweep": _task_sweep,
    "husimi": _task_husimi,
    "orbit": _task_orbit,
    "tube": _task_tube,
    "requantize": _task_requantize,
}


# ---------------------------------------------------------------------------
# writing

def _write_csv(path: Path, table: _Table):
    rows = np.asarray(table.rows, dtype=float).reshape(-1, len(table.header))
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=",".join(table.header), comments="")


def _read_csv(path: Path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, rows.reshape(-1, len(header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run a preset and write its bundle; returns the summary record.

    Raises
    ------
    ExperimentError
        Naming the failing stage (``config``, the task name, or ``write``).
    """
    try:
        cfg = spec.config()
        tol = spec.resolved_tolerances()
        params = load_params(cfg)
    except (KeyError, ValueError, TypeError) as exc:
        raise ExperimentError("config", exc) from exc
    if spec.overrides:
        log.info("preset %s overridden: %s", spec.preset, spec.overrides)
    task = cfg["task"]
    start = time.perf_counter()
    try:
        tables, results = _TASKS[task](cfg, params, tol)
    except (*PHYSICS_ERRORS, IntegrationError, SymmetryError, ValueError, RuntimeError) as exc:
        raise ExperimentError(task, exc) from exc
    wall = time.perf_counter() - start
    out = Path(spec.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        for name in sorted(tables):
            fname = f"{name}.csv"
            _write_csv(out / fname, tables[name])
            files[name] = fname
        summary = {
            "preset": spec.preset,
            "task": task,
            "config": cfg,
            "overrides": spec.overrides,
            "config_hash": spec.config_hash(),
            "tolerances": tol,
            "parameters": params.to_dict(),
            "derived": params.derived(),
            "results": results,
            "files": files,
            "version": __version__,
            "wall_time_s": wall,
        }
        (out / SUMMARY_FILE).write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    except OSError as exc:
        raise ExperimentError("write", exc) from exc
    return summary


# ---------------------------------------------------------------------------
# validation

@dataclass
class CriterionCheck:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class BundleReport:
    """Outcome of :func:`validate_bundle`.  ``structural`` lists missing or malformed content."""

    path: str
    preset: str | None = None
    checks: list = field(default_factory=list)
    structural: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.structural and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return _jsonable({
            "path": self.path, "preset": self.preset, "passed": self.passed,
            "structural": self.structural,
            "checks": [c.__dict__ for c in self.checks],
        })

    def summary(self) -> str:
        lines = [f"bundle {self.path} (preset {self.preset}): {'PASS' if self.passed else 'FAIL'}"]
        for s in self.structural:
            lines.append(f"  structural failure: {s}")
        for c in self.checks:
            lines.append(f"  {'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} "
                         f"(threshold {c.threshold:.6g}) {c.detail}".rstrip())
        return "\n".join(lines)


def _phase_mask(polygon, p, phi):
    # grid points on or beyond +-pi are tested in shifted copies as well
    inside = np.zeros(p.shape, dtype=bool)
    for shift in (-2 * math.pi, 0.0, 2 * math.pi):
        inside |= shapely.contains_xy(polygon, phi + shift, p)
    return inside


def _polygon(rows):
    # rows (p, phi) -> polygon in (phi, p)
    return shapely.Polygon(np.column_stack((rows[:, 1], rows[:, 0])))


def _check_return_probability(cfg, data, report):
    t, pr = data["return_probability"][:, 0], data["return_probability"][:, 1]

    def at(k):
        hit = np.nonzero(np.isclose(t, k))[0]
        return float(pr[hit[0]]) if hit.size else math.nan

    clock = int(cfg.get("clock_period", 0))
    periods = int(round(t[-1]))
    if clock == 3 and periods >= 15:
        peaks = [at(3 * k) for k in range(1, 6) if 3 * k <= periods]
        troughs = [at(k) for k in range(1, min(periods, 15) + 1) if k % 3]
        report.checks.append(CriterionCheck("subharmonic_peaks", min(peaks) >= PEAK_MIN, min(peaks),
                                            PEAK_MIN, "min P_r(3kT), k = 1..5"))
        report.checks.append(CriterionCheck("off_peak_troughs", max(troughs) <= TROUGH_MAX,
                                            max(troughs), TROUGH_MAX, "max P_r(kT), 3 does not divide k"))
    elif clock == 18 and periods >= 18:
        side = max(at(3 * k) for k in range(1, 6))
        main = at(18)
        ratio = main / side if side > 0 else math.inf
        report.checks.append(CriterionCheck("high_order_dominance", ratio >= DOMINANCE_FACTOR, ratio,
                                            DOMINANCE_FACTOR, "P_r(18T) / max P_r(3kT), k = 1..5"))


def side_peak_ratio(data_rows) -> float:
    """Largest 3kT return peak off the 18T comb, relative to P_r(18T)."""
    t, pr = data_rows[:, 0], data_rows[:, 1]
    at = {int(round(x)): v for x, v in zip(t, pr) if abs(x - round(x)) < 1e-9}
    side = [v for k, v in at.items() if k > 0 and k % 3 == 0 and k % 18]
    return max(side) / at[18]


def _check_poincare(cfg, data, report):
    rows = data["orbits"]
    k1 = {int(c) for k, c, *_ in rows if k == 1}
    k3 = {int(c) for k, c, *_ in rows if k == 3}
    report.checks.append(CriterionCheck("main_island", len(k1) == 1, len(k1), 1,
                                        "elliptic period-1 points"))
    report.checks.append(CriterionCheck("six_island_chain", len(k3) == 2, len(k3), 2,
                                        "elliptic period-3 cycles"))
    if "reference_p" not in cfg:
        return
    pts3 = rows[rows[:, 0] == 3]
    on_axis = pts3[np.abs(pts3[:, 4]) < 1e-6]
    dist = float(np.min(np.abs(on_axis[:, 3] - float(cfg["reference_p"])))) if on_axis.size else math.inf
    report.checks.append(CriterionCheck("period3_location", dist <= ORBIT_P_TOL, dist, ORBIT_P_TOL,
                                        f"|p - {cfg['reference_p']}| on phi = 0"))


def _check_poincare_zoom(cfg, data, report):
    rows = data["orbits"]
    k = int(cfg["orbit_period"])
    on_axis = rows[np.abs(rows[:, 4]) < 1e-6]
    dist = float(np.min(np.abs(on_axis[:, 3] - float(cfg["orbit_guess_p"])))) if on_axis.size else math.inf
    report.checks.append(CriterionCheck("high_order_orbit", bool(rows[0, 6]) and dist <= ORBIT_P_TOL,
                                        dist, ORBIT_P_TOL, f"elliptic period-{k} point near the start"))
    report.checks.append(CriterionCheck("high_order_cycle", len(rows) == k, len(rows), k,
                                        "points on the cycle"))


def _check_husimi_main(cfg, data, report):
    tubes = data["tubes"]
    n0 = int(tubes[0, 1])
    grid = data.get(f"husimi_n{n0}")
    if grid is None:
        report.structural.append(f"missing husimi_n{n0}.csv")
        return
    p, phi, q = grid[np.argmax(grid[:, 2])]
    poly = _polygon(data["main_boundary"])
    inside = bool(_phase_mask(poly, np.array([p]), np.array([phi]))[0])
    report.checks.append(CriterionCheck("ground_state_localized", inside, float(inside), 1.0,
                                        f"Husimi argmax at (p, phi) = ({p:.4f}, {phi:.4f})"))


def _check_chain_husimi(cfg, data, report):
    b = data["island_boundaries"]
    polys = [_polygon(b[b[:, 0] == i][:, 1:]) for i in np.unique(b[:, 0])]
    union = shapely.unary_union(polys)
    grid = data["husimi_sum"]
    mask = _phase_mask(union, grid[:, 0], grid[:, 1])
    frac = float(grid[mask, 2].sum() / grid[:, 2].sum())
    thr = float(cfg.get("mass_threshold", 0.8))
    report.checks.append(CriterionCheck("chain_mass_fraction", frac >= thr, frac, thr,
                                        f"summed Husimi mass inside {len(polys)} islands"))


def _check_tubes(cfg, data, report):
    for name, k in (("main", 1), ("chain", 3)):
        tube = data[f"tube_{name}"]
        ring = shapely.LinearRing(np.column_stack((data[f"curve_{name}"][:, 1],
                                                   data[f"curve_{name}"][:, 0])))
        end = tube[np.isclose(tube[:, 1], k)]
        d = float(np.max(shapely.distance(ring, shapely.points(end[:, 3], end[:, 2]))))
        report.checks.append(CriterionCheck(f"{name}_tube_closes", d <= TUBE_CLOSURE_TOL, d,
                                            TUBE_CLOSURE_TOL, f"distance to the section curve after {k}T"))


def _check_fock(cfg, data, report):
    occ = data["fock_occupation"][:, 1:]
    dev = float(np.max(np.abs(occ.sum(axis=1) - 1.0)))
    report.checks.append(CriterionCheck("normalization", dev <= NORM_TOL, dev, NORM_TOL,
                                        "max |sum_j F(j; t) - 1|"))


def _check_static(cfg, data, report):
    e = data["spectrum"][:, 1]
    ok = bool(np.all(np.diff(e) >= 0)) and e.size == int(cfg["n_particles"]) + 1
    report.checks.append(CriterionCheck("spectrum_complete", ok, e.size, int(cfg["n_particles"]) + 1,
                                        "ascending levels"))


_CHECKS = {
    "return_probability": _check_return_probability,
    "fock_occupation": _check_fock,
    "poincare": _check_poincare,
    "poincare_zoom": _check_poincare_zoom,
    "husimi_main": _check_husimi_main,
    "chain_husimi": _check_chain_husimi,
    "tubes": _check_tubes,
    "static": _check_static,
}


def validate_bundle(bundle) -> BundleReport:
    """Check a bundle written by :func:`run_experiment` against the acceptance thresholds.

    Tasks without thresholds (floquet, sweep, ...) are only checked for
    completeness.  Missing or unreadable files are reported as structural failures and
    make the report fail; they do not raise.
    """
    path = Path(bundle)
    report = BundleReport(str(path))
    summary_path = path / SUMMARY_FILE
    if not summary_path.is_file():
        report.structural.append(f"missing {SUMMARY_FILE}")
        return report
    try:
        summary = json.loads(summary_path.read_text())
        cfg, files, task = summary["config"], summary["files"], summary["task"]
    except (json.JSONDecodeError, KeyError) as exc:
        report.structural.append(f"malformed {SUMMARY_FILE}: {exc}")
        return report
    report.preset = summary.get("preset")
    for key in ("config_hash", "tolerances", "version"):
        if key not in summary:
            report.structural.append(f"summary lacks '{key}'")
    data = {}
    for name, fname in files.items():
        f = path / fname
        if not f.is_file():
            report.structural.append(f"missing {fname}")
            continue
        try:
            data[name] = _read_csv(f)[1]
        except ValueError as exc:
            report.structural.append(f"unreadable {fname}: {exc}")
    if report.structural:
        return report
    if task not in _TASKS:
        report.structural.append(f"unknown task {task!r}")
        return report
    check = _CHECKS.get(task)
    if check is not None:
        try:
            check(cfg, data, report)
        except (KeyError, IndexError, ValueError) as exc:
            report.structural.append(f"incomplete {task} data: {exc!r}")
    return report
