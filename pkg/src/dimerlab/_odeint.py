"""Compiled adaptive Dormand-Prince 8(5,3) integrator for small ODE systems.

Same tableau, error norm and step-size control as ``scipy.integrate.DOP853``,
but the loop and the right-hand side run in numba.  Instead of dense output
the stepper shortens steps to land exactly on each requested output time.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = _dop.N_STAGES
A = np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES])
B = np.ascontiguousarray(_dop.B)
C = np.ascontiguousarray(_dop.C[:N_STAGES])
E3 = np.ascontiguousarray(_dop.E3)
E5 = np.ascontiguousarray(_dop.E5)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXP = -1.0 / 8.0

OK, GUARD_HIT, STEP_FAILURE = 0, 1, 2


@numba.njit(cache=True)
def _initial_step(rhs, prm, t0, y0, f0, rtol, atol):
    n = y0.size
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = np.empty(n)
    rhs(t0 + h0, y1, prm, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1)


@numba.njit(cache=True)
def integrate(rhs, prm, y0, t0, t_out, rtol, atol, guard_idx, guard_limit, max_steps):
    """Integrate ``y' = rhs(t, y)`` and record ``y`` at each time in ``t_out``.

    ``rhs(t, y, prm, out)`` fills ``out``.  Integration stops when any
    ``|y[guard_idx]|`` exceeds ``guard_limit``.

    Returns
    -------
    out : (len(t_out), n) array
    status : int
        0 success, 1 guard band entered, 2 step-size failure.
    t_stop : float
        Time reached.
    n_out : int
        Number of output rows filled.
    y : (n,) array
        State at ``t_stop``.
    """
    n = y0.size
    n_t = t_out.size
    out = np.empty((n_t, n))
    K = np.empty((N_STAGES + 1, n))
    y = y0.copy()
    f = np.empty(n)
    rhs(t0, y, prm, f)
    t = t0
    h_abs = _initial_step(rhs, prm, t0, y0, f, rtol, atol)
    ynew = np.empty(n)
    ystage = np.empty(n)
    steps = 0
    for j in range(n_t):
        target = t_out[j]
        while t < target:
            rejected = False
            accepted = False
            while not accepted:
                min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
                if h_abs < min_step:
                    return out, STEP_FAILURE, t, j, y
                h = h_abs
                clipped = False
                if t + h >= target:
                    h = target - t
                    clipped = True
                # stages
                for i in range(n):
                    K[0, i] = f[i]
                for s in range(1, N_STAGES):
                    for i in range(n):
                        acc = 0.0
                        for q in range(s):
                            acc += A[s, q] * K[q, i]
                        ystage[i] = y[i] + h * acc
                    rhs(t + C[s] * h, ystage, prm, K[s])
                for i in range(n):
                    acc = 0.0
                    for q in range(N_STAGES):
                        acc += B[q] * K[q, i]
                    ynew[i] = y[i] + h * acc
                rhs(t + h, ynew, prm, K[N_STAGES])
                e5 = 0.0
                e3 = 0.0
                for i in range(n):
                    sc = atol + max(abs(y[i]), abs(ynew[i])) * rtol
                    a5 = 0.0
                    a3 = 0.0
                    for q in range(N_STAGES + 1):
                        a5 += E5[q] * K[q, i]
                        a3 += E3[q] * K[q, i]
                    e5 += (a5 / sc) ** 2
                    e3 += (a3 / sc) ** 2
                if e5 == 0.0 and e3 == 0.0:
                    err = 0.0
                else:
                    err = abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * n)
                if err < 1.0:
                    factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** ERR_EXP)
                    if rejected:
                        factor = min(1.0, factor)
                    # a step shortened to hit the target does not shrink the proposal
                    h_abs = max(h_abs, h * factor) if clipped else h * factor
                    accepted = True
                else:
                    h_abs = h * max(MIN_FACTOR, SAFETY * err ** ERR_EXP)
                    rejected = True
            t = target if clipped else t + h
            for i in range(n):
                y[i] = ynew[i]
                f[i] = K[N_STAGES, i]
            for g in guard_idx:
                if abs(y[g]) > guard_limit:
                    return out, GUARD_HIT, t, j, y
            steps += 1
            if steps > max_steps:
                return out, STEP_FAILURE, t, j, y
        for i in range(n):
            out[j, i] = y[i]
    return out, OK, t, n_t, y
