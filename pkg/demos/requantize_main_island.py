"""Semiclassical quasienergies of the main island compared with exact Floquet states.

For each quantum number the invariant tube enclosing (n + 1/2) 2 pi hbar_eff
is found, its quasienergy is evaluated from the action integral, and the
Floquet state with the largest Husimi weight along the tube is paired
with it.  Residuals are folded into the Brillouin zone of width omega.
"""

from __future__ import annotations

import argparse

from dimerlab import DimerParams, find_periodic_orbit, floquet_solve, quantize_island
from dimerlab.semiclassics import match_states_to_tubes, semiclassical_quasienergy


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--particles", type=int, default=500)
    parser.add_argument("--quanta", type=int, nargs="+", default=[0, 1, 2, 5, 10])
    parser.add_argument("--convention", choices=("plain", "shifted"), default="plain")
    args = parser.parse_args()

    params = DimerParams.from_ratios(args.particles, alpha=0.92, drive_ratio=0.4, freq_ratio=1.9)
    center = find_periodic_orbit(params.meanfield(), (0.5, 0.0), 1).point
    tubes = quantize_island(params, center, 1, args.quanta, convention=args.convention)
    fitting = [t for t in tubes if t.fits]
    for t in tubes:
        if not t.fits:
            print(f"n = {t.n}: {t.status} ({t.message})")
    for t in fitting:
        t.quasienergy = semiclassical_quasienergy(t)

    fs, _ = floquet_solve(params, tol=1e-8)
    print(f"N = {args.particles}, {args.convention} convention, zone width {params.omega_drive:.4f}")
    print("  n   action    state  exact      semicl.    residual  ambiguous")
    for m in match_states_to_tubes(fs, fitting):
        print(f"{m.tube.n:3d}  {m.tube.action:.5f}  {m.state_index:5d}  {m.exact_rate:+.5f}  "
              f"{m.semiclassical_rate:+.5f}  {m.residual_rate:.5f}   {m.ambiguous}")


if __name__ == "__main__":
    main()
