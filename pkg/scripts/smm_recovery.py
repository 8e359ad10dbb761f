"""Self-recovery of the utility weight on consumption by SMM on the reduced instance."""

import argparse
import time

from healthdyn.lifecycle import solve
from healthdyn.simulation import compute_moments, simulate_histories
from healthdyn.smm import SmmConfig, estimate
from healthdyn.synthetic import reduced_grid, synthetic_inputs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--histories", type=int, default=2000)
    ap.add_argument("--start", type=float, default=0.30)
    ap.add_argument("--weighting", default="identity", choices=("identity", "diagonal"))
    ap.add_argument("--data-seed", type=int, default=101)
    args = ap.parse_args()

    t0 = time.perf_counter()
    inp = synthetic_inputs("nonlinear", grid=reduced_grid())
    data = compute_moments(simulate_histories(solve(inp), args.histories, seed=args.data_seed))
    cfg = SmmConfig(free=("gamma",), bounds={"gamma": (0.2, 0.6)}, start={"gamma": args.start},
                    n_histories=args.histories, sim_seed=7, n_starts=3, weighting=args.weighting)
    est = estimate(cfg, data, inp)
    print(f"gamma {est.values['gamma']:.4f} (truth {inp.params.gamma}), loss {est.loss:.4g}, "
          f"{est.n_evals} evaluations, converged {est.converged}, {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
