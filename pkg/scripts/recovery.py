"""Parameter recovery for the canonical health process and the wage process.

    python scripts/recovery.py --persons 50000 --seeds 0 1 2
"""

import argparse
import time

import pandas as pd

from healthdyn.earnings import WAGE_DEFAULTS, EarningsProcess, estimate_earnings_process, simulate_wage_panel
from healthdyn.health_dynamics import CanonicalParams, estimate_canonical, simulate_canonical
from healthdyn.health_dynamics.canonical import paths_to_panel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--persons", type=int, default=50_000)
    ap.add_argument("--waves", type=int, default=5)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()

    truth_h = CanonicalParams.defaults().as_dict()
    rows = []
    for seed in args.seeds:
        t0 = time.perf_counter()
        h, _ = simulate_canonical(CanonicalParams.defaults(), args.persons, args.waves, seed=seed)
        fit = estimate_canonical(paths_to_panel(h)).params.as_dict()
        rows += [("health", seed, k, truth_h[k], fit[k], time.perf_counter() - t0) for k in truth_h]
        t0 = time.perf_counter()
        wp = estimate_earnings_process(simulate_wage_panel(EarningsProcess(), args.persons, args.waves, seed=seed))
        rows += [("wage", seed, k, v, getattr(wp.process, k), time.perf_counter() - t0) for k, v in WAGE_DEFAULTS.items()]
    out = pd.DataFrame(rows, columns=["process", "seed", "param", "truth", "estimate", "seconds"])
    out["error"] = out.estimate - out.truth
    print(out.to_string(index=False, float_format="%.4f"))


if __name__ == "__main__":
    main()
