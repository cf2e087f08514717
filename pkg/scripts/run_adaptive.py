"""Adaptive-alpha selection trace on the twelve-point i.i.d. market.

    python scripts/run_adaptive.py [--objective sharpe|log_growth] [--horizon N]
"""

import argparse
import os

import numpy as np

from mvonline.experiment import StrategyConfig, load_config, run_experiment

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "iid_adaptive.yaml")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--objective", default="sharpe")
    p.add_argument("--horizon", type=int, default=200_000)
    p.add_argument("--blocks", type=int, default=10)
    args = p.parse_args()
    base = load_config(CONFIG)
    alphas = base.strategy.alphas
    cfg = base.with_overrides(
        strategy=StrategyConfig("adaptive", alphas=alphas, objective=args.objective),
        horizon=args.horizon, output=None)
    res = run_experiment(cfg, write=False)
    sel = res.selected
    edges = np.linspace(cfg.warmup, args.horizon, args.blocks + 1).astype(int)
    for lo, hi in zip(edges, edges[1:]):
        counts = np.bincount(sel[lo:hi], minlength=len(alphas))
        share = ", ".join(f"{a:g}:{c / (hi - lo):.2f}" for a, c in zip(alphas, counts) if c)
        print(f"steps {lo + 1:>7}-{hi:<7} {share}")
    f = res.final
    print(f"final Sh_n={f.Sh_n:.5f} W_n={f.W_n:.5f}")


if __name__ == "__main__":
    main()
