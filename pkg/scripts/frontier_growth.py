"""Frontier sweep on the truncated-lognormal market: mean, variance, Sharpe
and Gaussian expected log along alpha, with the max-Sharpe alpha marked.

    python scripts/frontier_growth.py
"""

import os

import numpy as np

from mvonline.analytics import frontier_sweep, sharpe_optimal_alpha
from mvonline.experiment import load_config

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "lognormal_constant.yaml")


def main():
    mom = load_config(CONFIG).market.moments()
    star = sharpe_optimal_alpha(mom)
    print(f"max-Sharpe alpha = {star:.6g}")
    print(f"{'alpha':>10} {'mean':>9} {'variance':>10} {'Sharpe':>8} {'E log':>9}  portfolio")
    for p in frontier_sweep(mom, np.geomspace(star / 8, star * 16, 12)):
        mark = "*" if p.alpha >= star else " "
        print(f"{p.alpha:10.4g}{mark}{p.mean:9.6f} {p.variance:10.3e} {p.sharpe:8.4f} "
              f"{p.expected_log:9.6f}  {np.round(p.portfolio, 4)}")


if __name__ == "__main__":
    main()
