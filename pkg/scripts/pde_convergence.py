"""Feynman-Kac estimates against the finite-difference value as paths grow
and the time step shrinks.

    python scripts/pde_convergence.py
"""

import argparse

import numpy as np

from parabolic_cl.fkpde import default_suite, estimate_fk, fd_value_at


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="bump_mid", choices=[p.problem_id for p in default_suite()])
    ap.add_argument("--paths", type=int, nargs="+", default=[100, 1000, 10_000, 100_000])
    ap.add_argument("--dts", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3, 5e-4])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    p = next(q for q in default_suite() if q.problem_id == args.problem)
    fd = fd_value_at(p)
    print(f"{p.problem_id}: finite-difference value {fd:.5f}")

    def est(n, dt):
        return estimate_fk(p.x0, p.t, p.sigma, p.source, p.boundary(), n, dt,
                           np.random.default_rng(args.seed), drift=p.drift, mode=p.mode,
                           domain=(p.lo, p.hi))

    print("paths      fk        stderr    |fk-fd|")
    for n in args.paths:
        e = est(n, 1e-3)
        print(f"{n:<10d} {e.value:.5f}  {e.stderr:.5f}  {abs(e.value - fd):.5f}")
    print("dt         fk        stderr    mean hitting time")
    for dt in args.dts:
        e = est(20_000, dt)
        print(f"{dt:<10g} {e.value:.5f}  {e.stderr:.5f}  {e.mean_hitting_time:.4f}")


if __name__ == "__main__":
    main()
