"""Constant-alpha runs on the twelve-point i.i.d. market versus exact limits.

    python scripts/run_consistency.py [--horizon N] [--alphas 0.5 2 8]
"""

import argparse
import math
import os

from mvonline.experiment import StrategyConfig, load_config, run_experiment
from mvonline.markets import discrete_expected_log
from mvonline.solver import solve_mv

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "iid_constant.yaml")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--horizon", type=int, default=200_000)
    p.add_argument("--alphas", type=float, nargs="+", default=[0.5, 2.0, 8.0])
    args = p.parse_args()
    base = load_config(CONFIG)
    atoms, w = base.market.law()
    mom = base.market.moments()
    print(f"{'alpha':>6} {'U_n':>10} {'U*':>10} {'Sh_n':>8} {'Sh*':>8} {'W_n':>9} {'W*':>9}")
    for a in args.alphas:
        cfg = base.with_overrides(strategy=StrategyConfig("constant", alpha=a),
                                  horizon=args.horizon, output=None)
        f = run_experiment(cfg, write=False).final
        best = solve_mv(a, mom)
        b = best.portfolio
        sh = mom.portfolio_mean(b) / math.sqrt(mom.portfolio_variance(b))
        print(f"{a:6g} {f.utility:10.6f} {best.utility:10.6f} {f.Sh_n:8.4f} {sh:8.4f} "
              f"{f.W_n:9.5f} {discrete_expected_log(atoms, w, b):9.5f}")


if __name__ == "__main__":
    main()
