"""EBK requantization of invariant tubes and comparison with exact Floquet states.

A tube of the k-fold stroboscopic map carries a quantum state when its
section encloses the action 2 pi hbar_eff (n + 1/2) (two turning points,
hence the 1/2).  Its quasienergy follows from the action of one trajectory
running along the tube for k periods, closed back along the section curve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
import shapely
from scipy.interpolate import CubicSpline

from . import _odeint
from .floquet import FloquetSolution, circular_distance
from .husimi import PhasePoint, coherent_states, wrap_phase
from .meanfield import (
    ATOL,
    GUARD,
    MAX_STEPS,
    RTOL,
    CurveError,
    InvariantCurve,
    MeanFieldParams,
    SingularityError,
    find_periodic_orbit,
    trace_invariant_curve,
)
from .model import DimerParams

__all__ = [
    "QuantizedTube",
    "SemiclassicalQuasienergy",
    "SemiclassicalScale",
    "TubeMatch",
    "contour_action",
    "match_states_to_tubes",
    "quantize_island",
    "scan_ray",
    "semiclassical_quasienergy",
    "target_action",
]

CONVENTIONS = ("plain", "shifted")


@dataclass(frozen=True)
class SemiclassicalScale:
    """Map between mean-field quantities and the N-particle problem.

    With the ``"plain"`` convention the classical spin length is N/2 and
    hbar_eff = 2/N.  The ``"shifted"`` convention uses (N+1)/2 and
    2/(N+1), which makes the linear (kappa = 0) problem exact.  In both
    cases the rate-unit energy is ``energy_scale * H_mf + offset``.
    """

    mf: MeanFieldParams
    hbar_eff: float
    energy_scale: float
    offset: float
    omega_drive: float
    omega_hop: float
    n_particles: int
    convention: str = "plain"

    @classmethod
    def from_params(cls, params: DimerParams, convention: str = "plain") -> SemiclassicalScale:
        if convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        length = 0.5 * params.n_particles if convention == "plain" else 0.5 * (params.n_particles + 1)
        mf = MeanFieldParams(
            alpha=2.0 * params.kappa * length / params.omega_hop,
            drive_ratio=params.drive_ratio,
            freq_ratio=params.freq_ratio,
            drive_phase=params.drive_phase,
        )
        return cls(mf, 1.0 / length, params.omega_hop * length, params.energy_offset,
                   params.omega_drive, params.omega_hop, params.n_particles, convention)

    def zone_width(self, k: int) -> float:
        """Sub-zone width in H_mf units, 2 pi hbar_eff / (k * scaled period)."""
        return 2 * math.pi * self.hbar_eff / (k * self.mf.scaled_period)

    def to_rate(self, e_scaled):
        return self.energy_scale * np.asarray(e_scaled) + self.offset


def target_action(hbar_eff: float, n: int) -> float:
    """2 pi hbar_eff (n + 1/2)."""
    return 2 * math.pi * hbar_eff * (n + 0.5)


def _resampled_area(x, y, rel=1e-5, max_points=2**16):
    # periodic spline through the closed polyline, parametrized by chord length
    seg = np.hypot(np.diff(np.append(x, x[0])), np.diff(np.append(y, y[0])))
    s = np.concatenate(([0.0], np.cumsum(seg)))
    sx = CubicSpline(s, np.append(x, x[0]), bc_type="periodic")
    sy = CubicSpline(s, np.append(y, y[0]), bc_type="periodic")
    n, prev = max(256, x.size), None
    while True:
        t = np.linspace(0.0, s[-1], n, endpoint=False)
        xs, ys = sx(t), sy(t)
        area = 0.5 * float(np.sum(xs * np.roll(ys, -1) - np.roll(xs, -1) * ys))
        if prev is not None and abs(area - prev) <= rel * abs(area):
            return area
        if n >= max_points:
            return area
        prev, n = area, 2 * n


def contour_action(curve) -> float:
    """Enclosed action, the loop integral of p dphi, returned positive.

    ``curve`` is an :class:`InvariantCurve` or an (M, 2) array of (p, phi)
    vertices of a closed polyline.  The value is refined by doubling the
    sampling of a smooth periodic interpolant until the relative change
    drops below 1e-5.

    Raises
    ------
    CurveError
        If the polyline intersects itself.
    """
    if isinstance(curve, InvariantCurve):
        return curve.enclosed_action
    pts = np.asarray(curve, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (M, 2) array of (p, phi) vertices")
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    distinct = np.unique(np.round(pts, 14), axis=0)
    if distinct.shape[0] < 3:
        warnings.warn("degenerate contour encloses no area", RuntimeWarning, stacklevel=2)
        return 0.0
    ring = shapely.LinearRing(pts[:, ::-1])
    if not ring.is_simple:
        raise CurveError("polyline self-intersects")
    # area in the (phi, p) plane
    return abs(_resampled_area(pts[:, 1], pts[:, 0]))


@dataclass
class SemiclassicalQuasienergy:
    """Semiclassical quasienergy of one tube.

    ``scaled`` is in H_mf units, ``rate`` in the rate units of the exact
    spectrum (not folded), ``per_particle`` is ``rate / (N Omega)``.
    """

    scaled: float
    rate: float
    per_particle: float
    m: int
    k: int
    zone_width_scaled: float
    zone_width_rate: float
    closure_error: float


@dataclass
class QuantizedTube:
    """Requantized tube for quantum number ``n``.

    ``status`` is ``"fits"``, ``"too_small"`` (the island ends before the
    target action; ``curve`` is then the outermost traced curve and
    ``action`` its enclosed action) or ``"resonance"`` (the island is large
    enough but the target action falls into a resonance layer without
    invariant curves; ``curve`` is None).
    """

    n: int
    k: int
    target_action: float
    action: float
    curve: InvariantCurve | None
    fits: bool
    scale: SemiclassicalScale
    displacement: float = float("nan")
    quasienergy: SemiclassicalQuasienergy | None = None
    message: str = ""
    status: str = "fits"

    @property
    def kind(self) -> str:
        return "floquet" if self.k == 1 else "pre-floquet"

    @property
    def relative_error(self) -> float:
        return abs(self.action - self.target_action) / self.target_action


@dataclass
class RayScan:
    """Actions of traced curves along a ray from an island center."""

    center: PhasePoint
    direction: np.ndarray
    s: list = field(default_factory=list)
    action: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    boundary: float = float("nan")

    def accepted(self):
        pairs = [(s, a) for s, a in zip(self.s, self.action) if a is not None]
        return sorted(pairs)

    @property
    def max_action(self) -> float:
        acc = self.accepted()
        return acc[-1][1] if acc else 0.0


def _trace_on_ray(mf, center, direction, s, k, cache):
    if s in cache:
        return cache[s]
    seed = np.array([center.p, center.phi]) + s * direction
    curve = None
    if abs(seed[0]) < 1.0 - 10 * GUARD:
        try:
            curve = trace_invariant_curve(mf, seed, k, center=center)
        except (CurveError, SingularityError):
            curve = None
    cache[s] = curve
    return curve


def scan_ray(mf: MeanFieldParams, center, k: int, direction=(-1.0, 0.0), s_start: float = 1e-3,
             growth: float = 1.25, stop_action: float = np.inf, max_rejections: int = 3,
             refine: int = 10) -> RayScan:
    """Trace curves at growing distance along a ray until the island ends.

    The island boundary is taken where ``max_rejections`` consecutive seeds
    fail to produce a curve; it is then located by bisection (``refine``
    steps) between the last accepted and the first rejected distance.
    """
    center = PhasePoint(float(center[0]), float(center[1]))
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    scan = RayScan(center, d)
    cache = {}
    s, misses, last_good, first_bad = s_start, 0, None, None
    while True:
        curve = _trace_on_ray(mf, center, d, s, k, cache)
        scan.s.append(s)
        scan.action.append(None if curve is None else curve.enclosed_action)
        if curve is None:
            misses += 1
            if first_bad is None:
                first_bad = s
            if misses >= max_rejections or abs(center.p + s * growth * d[0]) >= 1.0:
                break
        else:
            misses, last_good, first_bad = 0, s, None
            if curve.enclosed_action > stop_action:
                break
        s *= growth
    if last_good is not None and first_bad is not None and first_bad > last_good:
        lo, hi = last_good, first_bad
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            curve = _trace_on_ray(mf, center, d, mid, k, cache)
            scan.s.append(mid)
            scan.action.append(None if curve is None else curve.enclosed_action)
            if curve is None:
                hi = mid
            else:
                lo = mid
        scan.boundary = lo
    scan.curves = {s: c for s, c in cache.items() if c is not None}
    return scan


def _solve_on_ray(mf, scan, k, target, rel_tol, max_iter=80):
    """Distance along the ray whose curve encloses ``target``; None if bracketing fails."""
    acc = scan.accepted()
    lo = (0.0, 0.0)
    hi = None
    for s, a in acc:
        if a < target:
            lo = (s, a)
        else:
            hi = (s, a)
            break
    if hi is None:
        return None, None
    cache = dict(scan.curves)
    last_side, stale = 0, 0
    for _ in range(max_iter):
        (s0, a0), (s1, a1) = lo, hi
        # sqrt(action) is nearly linear in the distance from the center
        r0, r1, rt = math.sqrt(a0), math.sqrt(a1), math.sqrt(target)
        s = s0 + (s1 - s0) * (rt - r0) / (r1 - r0)
        if not s0 < s < s1 or stale >= 2:
            s, stale = 0.5 * (s0 + s1), 0
        curve = None
        for offset in (0.0, 0.01, -0.01, 0.03, -0.03):
            trial = s + offset * (s1 - s0)
            if s0 < trial < s1:
                curve = _trace_on_ray(mf, scan.center, scan.direction, trial, k, cache)
                if curve is not None:
                    s = trial
                    break
        if curve is None:
            return None, None
        a = curve.enclosed_action
        if abs(a - target) <= rel_tol * target:
            return s, curve
        side = 1 if a < target else -1
        stale = stale + 1 if side == last_side else 0
        last_side = side
        if side > 0:
            lo = (s, a)
        else:
            hi = (s, a)
        if s1 - s0 < 1e-14:
            break
    return None, None


#: Rays tried, in order, after the requested one when a tube does not fit.
RAY_DIRECTIONS = ((-1.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, -1.0),
                  (-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))


def _rays(direction, fallback: bool):
    first = np.asarray(direction, dtype=float)
    first = first / np.linalg.norm(first)
    rays = [first]
    if fallback:
        for d in RAY_DIRECTIONS:
            d = np.asarray(d) / np.linalg.norm(d)
            if max(float(d @ r) for r in rays) < 1.0 - 1e-9:
                rays.append(d)
    return rays


def quantize_island(params: DimerParams, center, k: int, n_list, convention: str = "plain",
                    direction=(-1.0, 0.0), rel_tol: float = 1e-7, accept_tol: float = 5e-3,
                    refine_center: bool = True, fallback: bool = True) -> list:
    """Requantized tubes around an island center.

    Parameters
    ----------
    center : PhasePoint
        Elliptic fixed point of the k-fold map (refined by Newton unless
        ``refine_center`` is false).
    n_list : sequence of int
        Quantum numbers.
    direction : (dp, dphi)
        First ray along which seeds are displaced.
    rel_tol, accept_tol : float
        The search aims at ``rel_tol`` relative action error and rejects
        results worse than ``accept_tol``.
    fallback : bool
        If a tube does not fit along ``direction``, try the rays of
        :data:`RAY_DIRECTIONS` as well.  A ray can stop early at a thin
        resonance layer inside the island, while nested invariant curves
        further out are still reachable from other directions.

    Returns
    -------
    list of QuantizedTube
        One per n; ``fits`` is false where the island is too small for
        this hbar_eff.
    """
    scale = SemiclassicalScale.from_params(params, convention)
    mf = scale.mf
    if refine_center:
        center = find_periodic_orbit(mf, center, k).point
    center = PhasePoint(float(center[0]), float(center[1]))
    n_list = [int(n) for n in n_list]
    if any(n < 0 for n in n_list):
        raise ValueError("quantum numbers must be non-negative")
    targets = {n: target_action(scale.hbar_eff, n) for n in n_list}
    found = {}
    best = None
    for d in _rays(direction, fallback):
        pending = [n for n in targets if n not in found]
        if not pending:
            break
        scan = scan_ray(mf, center, k, d, stop_action=1.05 * max(targets[n] for n in pending))
        if best is None or scan.max_action > best.max_action:
            best = scan
        for n in pending:
            target = targets[n]
            if scan.max_action < target:
                continue
            s, curve = _solve_on_ray(mf, scan, k, target, rel_tol)
            if curve is not None and abs(curve.enclosed_action - target) <= accept_tol * target:
                found[n] = QuantizedTube(n, k, target, curve.enclosed_action, curve, True, scale, s)
    acc = best.accepted()
    outer = best.curves.get(acc[-1][0]) if acc else None
    tubes = []
    for n in n_list:
        if n in found:
            tubes.append(found[n])
        elif best.max_action < targets[n]:
            tubes.append(QuantizedTube(
                n, k, targets[n], best.max_action, outer, False, scale,
                message=f"island too small for this hbar_eff: largest traced action {best.max_action:.4g}",
                status="too_small",
            ))
        else:
            tubes.append(QuantizedTube(
                n, k, targets[n], float("nan"), None, False, scale,
                message="no invariant curve with the target action along the rays (resonance zone)",
                status="resonance",
            ))
    return tubes


@numba.njit(cache=True)
def _tube_rhs(tau, y, prm, out):
    # y = (p, phi, p_c, phi_c, int p dphi, int H dtau, polar angle about the center)
    alpha, amp, freq, phase = prm[0], prm[1], prm[2], prm[3]
    drive = 2.0 * amp * math.sin(freq * tau + phase)
    for off in (0, 2):
        p = y[off]
        s = math.sqrt(max(1.0 - p * p, GUARD * GUARD))
        out[off] = -s * math.sin(y[off + 1])
        out[off + 1] = 2.0 * alpha * p + p * math.cos(y[off + 1]) / s + drive
    p, phi = y[0], y[1]
    out[4] = p * out[1]
    out[5] = alpha * p * p - math.sqrt(max(1.0 - p * p, 0.0)) * math.cos(phi) + p * drive
    u = y[1] - y[3]
    v = y[0] - y[2]
    du = out[1] - out[3]
    dv = out[0] - out[2]
    out[6] = (u * dv - v * du) / (u * u + v * v)


def _closing_integral(curve: InvariantCurve, theta_a: float, theta_b: float, n_per_turn: int = 16384) -> float:
    """Integral of p dphi along the curve from polar angle theta_a to theta_b."""
    if theta_b == theta_a:
        return 0.0
    spline = curve.radius()
    deriv = spline.derivative()
    n = max(64, int(n_per_turn * abs(theta_b - theta_a) / (2 * math.pi)) + 1)
    theta = np.linspace(theta_a, theta_b, n)
    r, dr = spline(theta), deriv(theta)
    p = curve.center.p + r * np.sin(theta)
    dphi = dr * np.cos(theta) - r * np.sin(theta)
    return float(np.trapezoid(p * dphi, theta))


def semiclassical_quasienergy(tube: QuantizedTube, m: int = 0, rtol: float = RTOL,
                              closure_tol: float = 0.02) -> SemiclassicalQuasienergy:
    """Quasienergy carried by a quantized tube.

    One trajectory is launched on the section curve and followed for k
    periods while accumulating the integrals of p dphi and of H dtau; the
    loop is closed along the section curve.  The photon index ``m`` shifts
    the result by whole sub-zone widths.

    Raises
    ------
    CurveError
        If the trajectory does not return onto the section curve.
    """
    if tube.curve is None or not tube.fits:
        raise ValueError("tube has no quantized curve")
    curve, scale, k = tube.curve, tube.scale, tube.k
    mf = curve.mf
    c = curve.center
    p0, phi_raw = curve.points[0]
    u0 = float(wrap_phase(phi_raw - c.phi))
    phi0 = c.phi + u0
    theta0 = math.atan2(p0 - c.p, u0)
    y0 = np.array([p0, phi0, c.p, c.phi, 0.0, 0.0, theta0])
    duration = k * mf.scaled_period
    prm = np.array([mf.alpha, mf.drive_ratio, mf.freq_ratio, mf.drive_phase])
    res, status, t_stop, _, _ = _odeint.integrate(
        _tube_rhs, prm, y0, curve.tau0, np.array([curve.tau0 + duration]), rtol, ATOL,
        np.array([0, 2]), 1.0 - GUARD, MAX_STEPS,
    )
    if status != _odeint.OK:
        raise SingularityError(f"tube trajectory failed at tau = {t_stop:.6g}", t_stop)
    p1, phi1, pc1, phic1, s_pdphi, s_h, theta1 = res[0]
    r_end = math.hypot(phi1 - phic1, p1 - pc1)
    r_curve = float(curve.radius()(theta1))
    mean_r = float(np.mean(curve.polar()[1]))
    closure = abs(r_end - r_curve) / mean_r
    if closure > closure_tol or math.hypot(pc1 - c.p, phic1 - c.phi) > closure_tol * mean_r:
        raise CurveError(f"trajectory leaves the tube (closure mismatch {closure:.3e})")
    closing = _closing_integral(curve, theta0, theta1)
    total = s_pdphi - s_h - closing
    width = scale.zone_width(k)
    e = -total / duration + m * width
    rate = float(scale.to_rate(e))
    return SemiclassicalQuasienergy(
        scaled=e, rate=rate, per_particle=rate / (scale.n_particles * scale.omega_hop), m=m, k=k,
        zone_width_scaled=width, zone_width_rate=scale.omega_drive / k, closure_error=closure,
    )


@dataclass
class TubeMatch:
    """Assignment of one Floquet state to one tube."""

    tube: QuantizedTube
    state_index: int
    score: float
    runner_up_index: int | None
    runner_up_score: float
    ambiguous: bool
    exact_rate: float
    semiclassical_rate: float = float("nan")
    residual_rate: float = float("nan")

    @property
    def residual_per_particle(self) -> float:
        s = self.tube.scale
        return self.residual_rate / (s.n_particles * s.omega_hop)


def tube_scores(fs: FloquetSolution, tubes, n_samples: int = 512) -> np.ndarray:
    """Mean Husimi value of every Floquet state along every tube, shape (n_tubes, n_states)."""
    n = fs.states.shape[0] - 1
    scores = np.empty((len(tubes), fs.size))
    for i, tube in enumerate(tubes):
        if tube.curve is None:
            scores[i] = np.nan
            continue
        coh = coherent_states(n, tube.curve.sample(n_samples))
        scores[i] = np.mean(np.abs(fs.states.conj().T @ coh) ** 2, axis=1)
    return scores


def match_states_to_tubes(fs: FloquetSolution, tubes, n_samples: int = 512,
                          ambiguity: float = 0.05) -> list:
    """Greedy assignment of Floquet states to tubes by Husimi weight along each tube.

    Tubes are processed in the given order; each takes the best-scoring
    state not yet assigned.  An assignment is flagged ambiguous when the
    runner-up scores within ``ambiguity`` (relative) of the winner.
    """
    scores = tube_scores(fs, tubes, n_samples)
    taken = set()
    out = []
    for i, tube in enumerate(tubes):
        if tube.curve is None:
            continue
        order = [j for j in np.argsort(-scores[i]) if j not in taken]
        best = int(order[0])
        runner = int(order[1]) if len(order) > 1 else None
        runner_score = float(scores[i, runner]) if runner is not None else 0.0
        taken.add(best)
        match = TubeMatch(
            tube, best, float(scores[i, best]), runner, runner_score,
            runner is not None and runner_score >= (1.0 - ambiguity) * scores[i, best],
            float(fs.quasienergies[best]),
        )
        if tube.quasienergy is not None:
            match.semiclassical_rate = tube.quasienergy.rate
            match.residual_rate = float(circular_distance(
                match.exact_rate, tube.quasienergy.rate, tube.scale.omega_drive / tube.k))
        out.append(match)
    return out
