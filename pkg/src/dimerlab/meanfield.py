"""Mean-field driven pendulum: flow, stroboscopic map, periodic orbits, invariant curves.

In scaled time tau = Omega t the mean-field energy per particle is

    H(p, phi, tau) = alpha p^2 - sqrt(1 - p^2) cos(phi)
                     + 2 (mu/Omega) p sin((omega/Omega) tau + phase)

with canonical pair (phi, p): dphi/dtau = dH/dp, dp/dtau = -dH/dphi.
The stroboscopic map advances by one scaled period 2 pi Omega/omega.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import shapely
from scipy.interpolate import CubicSpline

from . import _odeint
from .husimi import PhasePoint, wrap_phase
from .model import DEFAULT_DRIVE_PHASE

__all__ = [
    "ConvergenceError",
    "CurveError",
    "chain_boundaries",
    "InvariantCurve",
    "MeanFieldParams",
    "PeriodicOrbit",
    "PoincareSection",
    "SingularityError",
    "find_periodic_orbit",
    "flow",
    "meanfield_hamiltonian",
    "meanfield_rhs",
    "orbit_points",
    "outermost_curve",
    "poincare_section",
    "scan_periodic_orbits",
    "stroboscopic_map",
    "trace_invariant_curve",
    "tube_period",
]

GUARD = 1e-9
RHS_LIMIT = 1e-12
RTOL = 1e-11
ATOL = 1e-13


class SingularityError(RuntimeError):
    """Trajectory entered the guard band near |p| = 1."""

    def __init__(self, message, tau=None, seeds=()):
        super().__init__(message)
        self.tau = tau
        self.seeds = tuple(seeds)


class ConvergenceError(RuntimeError):
    """Newton iteration did not converge; ``last`` holds the final iterate."""

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class CurveError(ValueError):
    """Point set is not an invariant curve of the map."""


@dataclass(frozen=True)
class MeanFieldParams:
    """Dimensionless mean-field parameters.

    Parameters
    ----------
    alpha : float
        N kappa / Omega.
    drive_ratio : float
        mu / Omega.
    freq_ratio : float
        omega / Omega.
    drive_phase : float
        Drive phase at tau = 0.
    """

    alpha: float
    drive_ratio: float
    freq_ratio: float
    drive_phase: float = DEFAULT_DRIVE_PHASE

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not self.freq_ratio > 0:
            raise ValueError("freq_ratio must be positive")

    @property
    def scaled_period(self) -> float:
        return 2.0 * math.pi / self.freq_ratio

    def drive(self, tau):
        return 2.0 * self.drive_ratio * np.sin(self.freq_ratio * np.asarray(tau) + self.drive_phase)


def meanfield_hamiltonian(mf: MeanFieldParams, p, phi, tau=0.0):
    """Mean-field energy per particle in units of N Omega / 2."""
    p = np.asarray(p, dtype=float)
    return mf.alpha * p * p - np.sqrt(1.0 - p * p) * np.cos(phi) + p * mf.drive(tau)


def meanfield_rhs(mf: MeanFieldParams, point, tau: float = 0.0):
    """Return ``(dp/dtau, dphi/dtau)`` at ``point = (p, phi)``."""
    p, phi = (float(v) for v in point)
    if abs(p) >= 1.0 - RHS_LIMIT:
        raise SingularityError(f"|p| = {abs(p):.15f} is inside the polar singularity band", tau)
    s = math.sqrt(1.0 - p * p)
    dp = -s * math.sin(phi)
    dphi = 2.0 * mf.alpha * p + p * math.cos(phi) / s + float(mf.drive(tau))
    return dp, dphi


@numba.njit(cache=True)
def _pendulum_rhs(tau, y, prm, out):
    # y = (p_1..p_m, phi_1..phi_m); prm = (alpha, mu/Omega, omega/Omega, phase)
    m = y.size // 2
    drive = 2.0 * prm[1] * math.sin(prm[2] * tau + prm[3])
    for i in range(m):
        p = y[i]
        s = math.sqrt(max(1.0 - p * p, GUARD * GUARD))
        out[i] = -s * math.sin(y[m + i])
        out[m + i] = 2.0 * prm[0] * p + p * math.cos(y[m + i]) / s + drive


MAX_STEPS = 50_000_000


def _prm(mf: MeanFieldParams) -> np.ndarray:
    return np.array([mf.alpha, mf.drive_ratio, mf.freq_ratio, mf.drive_phase])


def flow(mf: MeanFieldParams, points, tau0: float, taus, rtol: float = RTOL):
    """Integrate a batch of points.

    Parameters
    ----------
    points : array_like, shape (m, 2)
        Initial (p, phi) values.
    taus : array_like
        Output times, ascending and not before ``tau0``.

    Returns
    -------
    ndarray, shape (len(taus), m, 2)
        (p, phi) with phi continued (not wrapped).

    Raises
    ------
    SingularityError
        If any trajectory enters the guard band |p| > 1 - 1e-9.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(np.abs(pts[:, 0]) > 1.0 - GUARD):
        raise SingularityError("initial point inside the guard band", tau0,
                               np.nonzero(np.abs(pts[:, 0]) > 1.0 - GUARD)[0])
    y0 = np.concatenate((pts[:, 0], pts[:, 1]))
    out = np.empty((taus.size, m, 2))
    at_start = taus <= tau0
    out[at_start] = pts
    later = taus[~at_start]
    if later.size:
        res, status, t_stop, _, y_stop = _odeint.integrate(
            _pendulum_rhs, _prm(mf), y0, float(tau0), later, rtol, ATOL,
            np.arange(m), 1.0 - GUARD, MAX_STEPS,
        )
        if status == _odeint.GUARD_HIT:
            bad = np.nonzero(np.abs(y_stop[:m]) > 1.0 - GUARD)[0]
            raise SingularityError(
                f"trajectory entered |p| > 1 - {GUARD:g} at tau = {t_stop:.6g}", float(t_stop), bad
            )
        if status != _odeint.OK:
            raise RuntimeError(f"mean-field integration failed at tau = {t_stop:.6g}")
        out[~at_start] = np.stack((res[:, :m], res[:, m:]), axis=-1)
    return out


def stroboscopic_map(mf: MeanFieldParams, point, k: int = 1, tau0: float = 0.0,
                     rtol: float = RTOL) -> PhasePoint:
    """k-fold stroboscopic image of ``point``, phi wrapped into (-pi, pi]."""
    res = flow(mf, [point], tau0, [tau0 + k * mf.scaled_period], rtol)[0, 0]
    return PhasePoint(float(res[0]), float(wrap_phase(res[1])))


@dataclass
class PoincareSection:
    """Stroboscopic iterates per seed; ``orbits[i]`` has shape (n_i, 2) with columns (p, phi)."""

    seeds: np.ndarray
    orbits: list
    aborted: np.ndarray
    n_periods: int

    def rows(self):
        """Rows ``(seed_id, iterate, p, phi)``."""
        out = []
        for sid, orb in enumerate(self.orbits):
            for it, (p, phi) in enumerate(orb, start=1):
                out.append((sid, it, p, phi))
        return out


def poincare_section(mf: MeanFieldParams, seeds, n_periods: int, rtol: float = RTOL,
                     tau0: float = 0.0) -> PoincareSection:
    """Stroboscopic iterates at tau0 + j * period, j = 1..n_periods, for each seed.

    Seeds are integrated independently.  A seed that enters the singular band
    is truncated at its last complete iterate and flagged in ``aborted``.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    taus = tau0 + mf.scaled_period * np.arange(1, n_periods + 1)
    orbits, aborted = [], np.zeros(len(seeds), dtype=bool)
    for i, seed in enumerate(seeds):
        try:
            traj = flow(mf, [seed], tau0, taus, rtol)[:, 0]
        except SingularityError as exc:
            aborted[i] = True
            n_ok = int(np.sum(taus < exc.tau)) if exc.tau is not None else 0
            traj = flow(mf, [seed], tau0, taus[:n_ok], rtol)[:, 0] if n_ok else np.empty((0, 2))
        traj = traj.copy()
        traj[:, 1] = wrap_phase(traj[:, 1])
        orbits.append(traj)
    return PoincareSection(seeds, orbits, aborted, n_periods)


@dataclass
class PeriodicOrbit:
    """Refined periodic point of the k-fold map."""

    point: PhasePoint
    k: int
    jacobian: np.ndarray
    residual: float
    iterations: int

    @property
    def trace(self) -> float:
        return float(np.trace(self.jacobian))

    @property
    def elliptic(self) -> bool:
        return abs(self.trace) < 2.0

    @property
    def stability_angle(self) -> float:
        """Rotation angle nu = arccos(trace/2) per k periods; NaN unless elliptic."""
        return math.acos(self.trace / 2.0) if self.elliptic else float("nan")


def _map_with_jacobian(mf, x, k, tau0, fd_step, rtol):
    h = fd_step
    pts = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
    res = flow(mf, pts, tau0, [tau0 + k * mf.scaled_period], rtol)[0]
    jac = np.column_stack(((res[1] - res[2]) / (2 * h), (res[3] - res[4]) / (2 * h)))
    return res[0], jac


def _residual(x, image):
    return np.array([image[0] - x[0], float(wrap_phase(image[1] - x[1]))])


def find_periodic_orbit(mf: MeanFieldParams, guess, k: int = 1, tol: float = 1e-10,
                        fd_step: float = 1e-6, max_iter: int = 40, max_step: float = 0.05,
                        tau0: float = 0.0, rtol: float = RTOL) -> PeriodicOrbit:
    """Newton refinement of a fixed point of the k-fold stroboscopic map.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations without reaching ``tol``.
    """
    x = np.array(guess, dtype=float)
    best = None
    for it in range(1, max_iter + 1):
        image, jac = _map_with_jacobian(mf, x, k, tau0, fd_step, rtol)
        f = _residual(x, image)
        norm = float(np.linalg.norm(f))
        if best is None or norm < best[1]:
            best = (x.copy(), norm)
        if norm <= tol:
            point = PhasePoint(float(x[0]), float(wrap_phase(x[1])))
            return PeriodicOrbit(point, k, jac, norm, it)
        try:
            dx = np.linalg.solve(jac - np.eye(2), -f)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Newton matrix: {exc}", best[0], best[1]) from exc
        size = float(np.linalg.norm(dx))
        if size > max_step:
            dx *= max_step / size
        x = x + dx
        if abs(x[0]) >= 1.0 - GUARD:
            raise ConvergenceError("Newton iterate left the sphere chart", best[0], best[1])
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations (residual {best[1]:.2e})", best[0], best[1]
    )


def orbit_points(mf: MeanFieldParams, point, k: int, tau0: float = 0.0, rtol: float = RTOL) -> np.ndarray:
    """The k stroboscopic iterates x, P(x), ..., P^{k-1}(x), phi wrapped."""
    taus = tau0 + mf.scaled_period * np.arange(k)
    traj = flow(mf, [point], tau0, taus, rtol)[:, 0].copy()
    traj[:, 1] = wrap_phase(traj[:, 1])
    return traj


def tube_period(mf: MeanFieldParams, fixed_point, k_max: int = 24, tol: float = 1e-8,
                tau0: float = 0.0, rtol: float = RTOL) -> int:
    """Smallest k <= k_max with P^k(x) = x within ``tol``."""
    x = np.asarray(fixed_point, dtype=float)
    taus = tau0 + mf.scaled_period * np.arange(1, k_max + 1)
    traj = flow(mf, [x], tau0, taus, rtol)[:, 0]
    for k, img in enumerate(traj, start=1):
        if np.linalg.norm(_residual(x, img)) <= tol:
            return k
    raise ValueError(f"point does not return within k_max = {k_max} periods")


@dataclass
class InvariantCurve:
    """Closed invariant curve of the k-fold stroboscopic map.

    ``points`` holds (p, phi) rows ordered by polar angle about ``center``;
    phi is continued around the center rather than wrapped.  Curves made by
    :meth:`image` need not be star-shaped about their center; they keep the
    order inherited from the source curve and carry a periodic spline in
    that parameter instead of a polar radius.
    """

    points: np.ndarray
    k: int
    center: PhasePoint
    enclosed_action: float
    seed: PhasePoint
    rotation: float
    mf: MeanFieldParams
    tau0: float = 0.0
    _spline: CubicSpline | None = field(default=None, repr=False)
    _param: CubicSpline | None = field(default=None, repr=False)

    @property
    def star_shaped(self) -> bool:
        """True when the curve is stored as a polar radius about its center."""
        return self._param is None

    @property
    def period_multiplicity(self) -> int:
        return self.k

    @property
    def kind(self) -> str:
        return "floquet" if self.k == 1 else "pre-floquet"

    def polar(self):
        """Angles (ascending, in [theta_0, theta_0 + 2 pi)) and radii about the center."""
        u = self.points[:, 1] - self.center.phi
        v = self.points[:, 0] - self.center.p
        return np.arctan2(v, u), np.hypot(u, v)

    def radius(self) -> CubicSpline:
        """Periodic spline r(theta) about the center."""
        if not self.star_shaped:
            raise CurveError("curve is not stored in polar form about its center")
        if self._spline is None:
            theta, r = self.polar()
            order = np.argsort(theta)
            theta, r = theta[order], r[order]
            keep = np.concatenate(([True], np.diff(theta) > 1e-12))
            theta, r = theta[keep], r[keep]
            self._spline = CubicSpline(
                np.append(theta, theta[0] + 2 * math.pi), np.append(r, r[0]), bc_type="periodic"
            )
        return self._spline

    def sample(self, n: int) -> np.ndarray:
        """``n`` points on the smoothed curve as (p, phi).

        Uniform in polar angle for traced curves, uniform in the inherited
        parameter for mapped ones.
        """
        theta = np.linspace(-math.pi, math.pi, n, endpoint=False)
        if not self.star_shaped:
            return self._param(theta)
        r = self.radius()(theta)
        return np.column_stack((self.center.p + r * np.sin(theta), self.center.phi + r * np.cos(theta)))

    def polygon(self):
        """Shapely polygon in (phi, p) coordinates."""
        return shapely.Polygon(self.points[:, ::-1])

    def closed(self) -> np.ndarray:
        return np.vstack((self.points, self.points[:1]))

    def image(self, j: int, n_points: int = 1024, rtol: float = RTOL) -> InvariantCurve:
        """Image of the curve under the j-fold stroboscopic map.

        For a curve around a period-k point this is the corresponding curve
        around the j-th point of the cycle; the enclosed action is kept.
        """
        theta = np.linspace(-math.pi, math.pi, n_points, endpoint=False)
        pts = self.sample(n_points)
        span = [self.tau0 + j * self.mf.scaled_period]
        img = flow(self.mf, pts, self.tau0, span, rtol)[0]
        c = flow(self.mf, [self.center], self.tau0, span, rtol)[0, 0]
        center = PhasePoint(float(c[0]), float(wrap_phase(c[1])))
        # the map keeps the cyclic order of the points, so the source
        # parameter still parametrizes the image even when it is not
        # star-shaped (islands near the poles are crescents)
        img[:, 1] = center.phi + wrap_phase(img[:, 1] - center.phi)
        closed = np.vstack((img, img[:1]))
        param = CubicSpline(np.append(theta, math.pi), closed, bc_type="periodic")
        curve = InvariantCurve(img, self.k, center, 0.0, PhasePoint(*img[0]), self.rotation,
                               self.mf, self.tau0, _param=param)
        curve.enclosed_action = _parametric_area(param)
        return curve


_MAX_GAP = math.pi / 4
_MAX_ROUGHNESS = 0.05


def _iterates(mf, start, k, n, tau0, rtol):
    taus = tau0 + k * mf.scaled_period * np.arange(1, n + 1)
    pts = flow(mf, [start], tau0, taus, rtol)[:, 0].copy()
    pts[:, 1] = wrap_phase(pts[:, 1])
    return pts


def _polar_about(pts, center):
    u = wrap_phase(pts[:, 1] - center.phi)
    v = pts[:, 0] - center.p
    return np.arctan2(v, u), np.hypot(u, v)


def _max_gap(sorted_theta):
    return float(np.max(np.diff(np.append(sorted_theta, sorted_theta[0] + 2 * math.pi))))


def trace_invariant_curve(mf: MeanFieldParams, seed, k: int = 1, n_returns: int = 256,
                          center=None, tau0: float = 0.0, rtol: float = RTOL,
                          max_returns: int = 4096) -> InvariantCurve:
    """Collect ``n_returns`` iterates of P^k from ``seed`` and close them into a curve.

    Parameters
    ----------
    center : PhasePoint, optional
        Enclosed fixed point of P^k.  Refined by Newton from the point cloud
        centroid when absent.
    max_returns : int
        The orbit is extended by doubling, up to this many returns, while the
        iterates leave angular gaps (rotation close to a low-order resonance).

    Raises
    ------
    CurveError
        If the iterates do not lie on a simple closed curve around the center
        (scrambled circular order, rough radius profile or gaps in angle).
    SingularityError
        If the orbit hits the polar singularity.
    """
    seed = np.asarray(seed, dtype=float)
    pts = _iterates(mf, seed, k, n_returns, tau0, rtol)
    if center is None:
        ref = seed[1]
        phis = ref + wrap_phase(pts[:, 1] - ref)
        guess = (float(pts[:, 0].mean()), float(phis.mean()))
        center = find_periodic_orbit(mf, guess, k, tau0=tau0, rtol=rtol).point
    center = PhasePoint(float(center[0]), float(center[1]))
    while True:
        theta, r = _polar_about(pts, center)
        gap = _max_gap(np.sort(theta))
        # near-resonant rotation clusters the iterates; extend the orbit
        if gap <= _MAX_GAP or pts.shape[0] >= max_returns:
            break
        more = _iterates(mf, pts[-1], k, pts.shape[0], tau0, rtol)
        pts = np.vstack((pts, more))
    n_returns = pts.shape[0]
    if np.min(r) <= 0:
        raise CurveError("seed coincides with the center")

    order = np.argsort(theta)
    pos = np.empty(n_returns, dtype=int)
    pos[order] = np.arange(n_returns)
    shifts = np.unique(np.mod(np.diff(pos), n_returns))
    if shifts.size > 2 or (shifts.size == 2 and (shifts[1] - shifts[0]) % n_returns not in (1, n_returns - 1)):
        raise CurveError("iterates do not preserve circular order (chaotic or non-enclosing seed)")
    th, rr = theta[order], r[order]
    if gap > _MAX_GAP:
        raise CurveError(f"angular coverage has a gap of {gap:.3f} rad after {n_returns} returns")
    # radius versus the chord of its angular neighbours
    th_ext = np.concatenate((th[-1:] - 2 * math.pi, th, th[:1] + 2 * math.pi))
    r_ext = np.concatenate((rr[-1:], rr, rr[:1]))
    w = (th_ext[1:-1] - th_ext[:-2]) / (th_ext[2:] - th_ext[:-2])
    interp = r_ext[:-2] + w * (r_ext[2:] - r_ext[:-2])
    roughness = float(np.max(np.abs(rr - interp)) / np.median(rr))
    if roughness > _MAX_ROUGHNESS:
        raise CurveError(f"radius profile is not smooth (roughness {roughness:.3f})")

    poly = np.column_stack((center.p + rr * np.sin(th), center.phi + rr * np.cos(th)))
    if not shapely.LinearRing(poly[:, ::-1]).is_simple:
        raise CurveError("closed polyline self-intersects")
    # mean polar-angle advance per return of P^k
    unwrapped = np.unwrap(theta)
    rotation = float((unwrapped[-1] - unwrapped[0]) / (n_returns - 1))
    curve = InvariantCurve(poly, k, center, 0.0, PhasePoint(float(seed[0]), float(seed[1])),
                           rotation, mf, tau0)
    curve.enclosed_action = _polar_area(curve)
    return curve


def _polar_area(curve: InvariantCurve, start: int = 256, rel: float = 1e-5, max_points: int = 2**16) -> float:
    spline = curve.radius()
    n, prev = start, None
    while True:
        theta = np.linspace(-math.pi, math.pi, n, endpoint=False)
        area = 0.5 * float(np.mean(spline(theta) ** 2)) * 2 * math.pi
        if prev is not None and abs(area - prev) <= rel * abs(area):
            return area
        if n >= max_points:
            return area
        prev, n = area, 2 * n


def _parametric_area(param: CubicSpline, start: int = 256, rel: float = 1e-8,
                     max_points: int = 2**16) -> float:
    # Green's theorem, 1/2 |sum(phi dp - p dphi)|, on a refining periodic grid
    deriv = param.derivative()
    n, prev = start, None
    while True:
        theta = np.linspace(-math.pi, math.pi, n, endpoint=False)
        (p, phi), (dp, dphi) = param(theta).T, deriv(theta).T
        area = 0.5 * abs(float(np.mean(phi * dp - p * dphi))) * 2 * math.pi
        if (prev is not None and abs(area - prev) <= rel * area) or n >= max_points:
            return area
        prev, n = area, 2 * n


def scan_periodic_orbits(mf: MeanFieldParams, k: int, p_values, phi_values, tol: float = 1e-10,
                         merge: float = 1e-6, elliptic_only: bool = True, tau0: float = 0.0) -> list:
    """Newton searches for period-k points started from a grid of guesses.

    Returns one :class:`PeriodicOrbit` per distinct cycle, i.e. points
    related by the map are merged; periodic points of a smaller period
    dividing k are dropped.
    """
    found = []
    for p in p_values:
        for phi in phi_values:
            try:
                orb = find_periodic_orbit(mf, (p, phi), k, tol=tol, tau0=tau0)
            except (ConvergenceError, SingularityError):
                continue
            if elliptic_only and not orb.elliptic:
                continue
            if any(_on_cycle(mf, orb.point, other, tau0) < merge for other in found):
                continue
            if k > 1 and tube_period(mf, orb.point, k, tol=1e-7, tau0=tau0) < k:
                continue
            found.append(orb)
    return found


def _on_cycle(mf, point, orbit: PeriodicOrbit, tau0):
    pts = orbit_points(mf, orbit.point, orbit.k, tau0)
    d = np.hypot(pts[:, 0] - point[0], wrap_phase(pts[:, 1] - point[1]))
    return float(d.min())


def chain_boundaries(mf: MeanFieldParams, center, k: int, directions=None) -> list:
    """Outermost curves of the k islands around the cycle through ``center``.

    The curve is traced around ``center`` and carried to the other islands
    by the map, which keeps all k boundaries consistent.  Rays only find
    star-shaped curves, so ``center`` should be the cycle member farthest
    from the poles.
    """
    first = outermost_curve(mf, center, k, directions)
    if first is None:
        return []
    return [first] + [first.image(j) for j in range(1, k)]


def outermost_curve(mf: MeanFieldParams, center, k: int = 1, directions=None, refine: int = 12):
    """Largest traced invariant curve around ``center`` over a few rays.

    Approximates the boundary of a regular island.  Returns ``None`` when no
    curve can be traced.
    """
    from .semiclassics import scan_ray

    if directions is None:
        directions = [(-1.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
    best = None
    for d in directions:
        scan = scan_ray(mf, center, k, d, refine=refine)
        acc = scan.accepted()
        if not acc:
            continue
        curve = scan.curves[acc[-1][0]]
        if best is None or curve.enclosed_action > best.enclosed_action:
            best = curve
    return best
