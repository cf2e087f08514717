"""Constant and adaptive online strategies versus the Bayesian oracle on
random reversible chains, with the exact stationary limits of each side.

The Bayesian portfolio depends only on the previous state s, so its
per-period return <b_s, x_s'> has the finite law pi_s T[s, s'] and its
limiting mean, variance, Sharpe ratio and growth rate are exact sums.

    python scripts/run_chain_comparison.py [--seeds 20] [--alpha 4] [--horizon N] [--exact-only]
"""

import argparse

import numpy as np

from mvonline.experiment import ExperimentConfig, StrategyConfig, run_experiment
from mvonline.markets import conditional_moments, make_reversible_chain, stationary_moments
from mvonline.solver import solve_mv


def bayesian_limit(chain, alpha):
    B = np.array([solve_mv(alpha, conditional_moments(chain, s)).portfolio for s in range(chain.K)])
    R = B @ chain.state_returns.T
    W = chain.stationary[:, None] * chain.transition
    mean = float((W * R).sum())
    var = float((W * (R - mean) ** 2).sum())
    return mean - alpha * var, mean / np.sqrt(var), float((W * np.log(R)).sum())


def static_limit(chain, alpha):
    mom = stationary_moments(chain)
    res = solve_mv(alpha, mom)
    b = res.portfolio
    r = chain.state_returns @ b
    pi = chain.stationary
    return res.utility, mom.portfolio_mean(b) / np.sqrt(mom.portfolio_variance(b)), float(pi @ np.log(r))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--horizon", type=int, default=200_000)
    p.add_argument("--exact-only", action="store_true")
    args = p.parse_args()
    a = args.alpha
    print(f"{'seed':>4} {'U_C*-U_B*':>11} {'U_C-U_B':>11}")
    for s in range(args.seeds):
        chain = make_reversible_chain(8, 3, s)
        exact = static_limit(chain, a)[0] - bayesian_limit(chain, a)[0]
        line = f"{s:4d} {exact:+11.4e}"
        if not args.exact_only:
            runs = [run_experiment(ExperimentConfig(market=chain, horizon=args.horizon, strategy=st,
                                                    seed=1000 + s), write=False).final
                    for st in (StrategyConfig("constant", alpha=a), StrategyConfig("bayesian", alpha=a))]
            line += f" {runs[0].utility - runs[1].utility:+11.4e}"
        print(line)


if __name__ == "__main__":
    main()
