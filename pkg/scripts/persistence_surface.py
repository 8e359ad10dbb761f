"""Estimated persistence surfaces for AR(1) and kinked-persistence data."""

import argparse

import numpy as np
import pandas as pd

from healthdyn.health_dynamics import (KinkedQuantileProcess, estimate_quantile_table, persistence,
                                       simulate_generator)

TAUS = (0.1, 0.25, 0.5, 0.75, 0.9)


def surface(paths, n_rows=15):
    grid = np.quantile(paths[:, 0], np.linspace(0.025, 0.975, n_rows))
    qt = estimate_quantile_table(paths, eta_grid=grid)
    rows = grid[1:-1]
    vals = np.array([[float(persistence(qt, e, t)) for t in TAUS] for e in rows])
    return pd.DataFrame(vals, index=pd.Index(np.round(rows, 3), name="eta"), columns=[f"tau={t}" for t in TAUS])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--rho", type=float, default=0.953)
    args = ap.parse_args()

    r = np.random.default_rng(args.seed)
    s2 = 0.084
    prev = r.normal(0, np.sqrt(s2 / (1 - args.rho**2)), args.n)
    ar1 = np.column_stack([prev, args.rho * prev + np.sqrt(s2) * r.standard_normal(args.n)])
    print(f"AR(1), rho = {args.rho}")
    print(surface(ar1).to_string(float_format="%.3f"))

    gen = KinkedQuantileProcess()
    print("\nkinked persistence (estimate, then truth)")
    est = surface(simulate_generator(gen, args.n, 2, seed=args.seed))
    print(est.to_string(float_format="%.3f"))
    true = pd.DataFrame([[float(gen.slope(e, t)) for t in TAUS] for e in est.index], index=est.index,
                        columns=est.columns)
    print(true.to_string(float_format="%.3f"))


if __name__ == "__main__":
    main()
