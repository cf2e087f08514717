"""Experiment configuration, orchestration and trace output.

A run pre-generates the market path from the seed, computes every
portfolio with a fused loop from :mod:`mvonline._kernels` (bit-identical to
the step-wise classes in :mod:`mvonline.strategies`), folds the portfolio
returns into running metrics and writes one JSON object per line:

    {"kind": "trace", "step": n, "portfolio": [...], "alpha_selected": a,
     "metrics": {...}, "ground_truth_gap": g}

every ``report_every`` steps, followed by one ``"kind": "summary"`` record.
Floats are written with 17 significant digits; non-finite values are
written as the strings "inf", "-inf" and "nan".
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import _kernels
from .core import M_BOUND, Moments, as_portfolio, check_alpha, uniform_portfolio
from .errors import BankruptcyError, ConfigurationError, MVError
from .markets import (
    CsvSource,
    IidSpec,
    MarkovChainSpec,
    conditional_moments,
    iid_path,
    load_csv,
    make_reversible_chain,
    markov_path,
    stationary_moments,
)
from .metrics import MetricsReport, MetricsTracker
from .solver import DEFAULT_OPTIONS, SolveOptions, raise_for_status, solve_mv
from .strategies import (
    BayesianStrategy,
    IidOracle,
    MarkovOracle,
    ObjectiveKind,
    default_warmup,
)

STRATEGY_KINDS = ("constant", "adaptive", "bayesian", "fixed")


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    alpha: float | None = None
    alphas: tuple | None = None
    objective: ObjectiveKind = ObjectiveKind.SHARPE
    portfolio: tuple | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigurationError(f"strategy type must be one of {STRATEGY_KINDS}, got {self.kind!r}")
        if self.kind in ("constant", "bayesian"):
            if self.alpha is None:
                raise ConfigurationError(f"{self.kind} strategy needs alpha")
            object.__setattr__(self, "alpha", check_alpha(self.alpha))
        if self.kind == "adaptive":
            if not self.alphas:
                raise ConfigurationError("adaptive strategy needs a non-empty alphas list")
            alphas = tuple(check_alpha(a) for a in self.alphas)
            if any(b <= a for a, b in zip(alphas, alphas[1:])):
                raise ConfigurationError("adaptive alphas must be strictly increasing")
            object.__setattr__(self, "alphas", alphas)
            object.__setattr__(self, "objective", ObjectiveKind.parse(self.objective))
        if self.kind == "fixed":
            if self.portfolio is None:
                raise ConfigurationError("fixed strategy needs a portfolio")
            w = as_portfolio(self.portfolio, tol=1e-9)
            object.__setattr__(self, "portfolio", tuple(float(v) for v in w))
            if self.alpha is not None:
                object.__setattr__(self, "alpha", check_alpha(self.alpha))

    def label(self) -> str:
        if self.kind == "adaptive":
            return f"adaptive({self.objective.value}, alphas={list(self.alphas)})"
        if self.kind == "fixed":
            return f"fixed({list(self.portfolio)})"
        return f"{self.kind}(alpha={self.alpha:g})"

    def as_dict(self) -> dict:
        d = {"type": self.kind}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.alphas is not None:
            d["alphas"] = list(self.alphas)
            d["objective"] = self.objective.value
        if self.portfolio is not None:
            d["portfolio"] = list(self.portfolio)
        return d


Market = IidSpec | MarkovChainSpec | CsvSource


@dataclass(frozen=True)
class ExperimentConfig:
    market: Market
    horizon: int
    strategy: StrategyConfig
    h: int | None = None
    seed: int | None = None
    report_every: int = 1000
    output: str | None = None
    solver: SolveOptions = DEFAULT_OPTIONS
    name: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.report_every < 1:
            raise ConfigurationError("report_every must be >= 1")
        if self.h is not None and self.h < 1:
            raise ConfigurationError("h must be >= 1")
        if self.warmup > self.horizon:
            raise ConfigurationError(f"horizon {self.horizon} is shorter than warm-up {self.warmup}")
        if not isinstance(self.market, CsvSource) and self.seed is None:
            raise ConfigurationError("synthetic markets need a seed")
        if self.strategy.kind == "bayesian" and isinstance(self.market, CsvSource):
            raise ConfigurationError("the Bayesian oracle needs a synthetic market")
        if self.strategy.kind == "fixed" and len(self.strategy.portfolio) != self.m:
            raise ConfigurationError("fixed portfolio width does not match the market")

    @property
    def m(self) -> int:
        if isinstance(self.market, CsvSource):
            if self.market.asset_names is None:
                raise ConfigurationError("CSV market needs asset_names to know m in advance")
            return len(self.market.asset_names)
        return self.market.m

    @property
    def warmup(self) -> int:
        if self.h is not None:
            return self.h
        return default_warmup(self.m)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw) if kw else self


def _market_from_dict(d: dict, base_dir: str) -> Market:
    d = dict(d)
    kind = d.pop("type", None)
    m_bound = float(d.pop("m_bound", M_BOUND))
    try:
        if kind == "iid_discrete":
            return IidSpec.discrete(d["points"], d.get("probs"), m_bound=m_bound)
        if kind == "iid_lognormal":
            return IidSpec.truncated_lognormal(
                d["mu_log"], d["sigma_log"], tuple(d.get("bounds", (1e-3, m_bound))),
                m_bound=m_bound, max_rejection_mass=float(d.get("max_rejection_mass", 1e-6)))
        if kind == "markov":
            return MarkovChainSpec(np.asarray(d["state_returns"], dtype=float),
                                   np.asarray(d["transition"], dtype=float),
                                   d.get("stationary"), m_bound=m_bound)
        if kind == "reversible_chain":
            return make_reversible_chain(int(d["K"]), int(d["m"]), int(d["chain_seed"]),
                                         factor_vol=float(d.get("factor_vol", 0.55)),
                                         m_bound=m_bound)
        if kind == "csv":
            path = d["path"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            names = d.get("asset_names")
            if names is None:
                with open(path, encoding="utf-8") as fh:
                    names = [h.strip() for h in fh.readline().strip().split(",")]
            return CsvSource(path, d.get("kind", "returns"), tuple(names),
                             d.get("on_bound_violation", "reject"), m_bound)
    except KeyError as e:
        raise ConfigurationError(f"market of type {kind!r} is missing field {e}") from None
    raise ConfigurationError(f"unknown market type {kind!r}")


def config_from_dict(d: dict, base_dir: str = ".") -> ExperimentConfig:
    """Build a config from the parsed YAML schema (see configs/)."""
    if not isinstance(d, dict):
        raise ConfigurationError("config must be a mapping")
    known = {"name", "market", "strategy", "horizon", "h", "seed", "report_every", "output", "solver"}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    for key in ("market", "strategy", "horizon"):
        if key not in d:
            raise ConfigurationError(f"config is missing {key!r}")
    s = dict(d["strategy"])
    kind = s.pop("type", None)
    strategy = StrategyConfig(
        kind, alpha=s.get("alpha"),
        alphas=tuple(s["alphas"]) if "alphas" in s else None,
        objective=s.get("objective", "sharpe"),
        portfolio=tuple(s["portfolio"]) if "portfolio" in s else None)
    solver = SolveOptions(**d.get("solver", {})) if d.get("solver") else DEFAULT_OPTIONS
    output = d.get("output")
    if output is not None and not os.path.isabs(output):
        output = os.path.join(base_dir, output)
    return ExperimentConfig(
        market=_market_from_dict(d["market"], base_dir), horizon=int(d["horizon"]),
        strategy=strategy, h=None if d.get("h") is None else int(d["h"]),
        seed=None if d.get("seed") is None else int(d["seed"]),
        report_every=int(d.get("report_every", 1000)), output=output, solver=solver,
        name=str(d.get("name", "")))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: {e}") from None
    return config_from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))


def market_fingerprint(market: Market) -> str:
    """Stable hash of a market's defining data."""
    h = hashlib.sha256()
    h.update(type(market).__name__.encode())
    if isinstance(market, IidSpec):
        h.update(market.kind.encode())
        for a in (market.points, market.probs, market.mu_log, market.sigma_log):
            if a is not None:
                h.update(np.ascontiguousarray(a).tobytes())
        h.update(repr((market.bounds, market.m_bound)).encode())
    elif isinstance(market, MarkovChainSpec):
        for a in (market.state_returns, market.transition, market.stationary):
            h.update(np.ascontiguousarray(a).tobytes())
    else:
        h.update(repr(dataclasses.astuple(market)).encode())
    return h.hexdigest()


# -------------------------------------------------------------------- path

@dataclass(frozen=True)
class MarketPath:
    returns: np.ndarray
    states: np.ndarray | None
    sha256: str


def generate_path(market: Market, seed: int | None, horizon: int) -> MarketPath:
    """The realized return sequence of a run.

    Synthetic markets draw from ``numpy.random.default_rng(seed)``; no other
    component consumes that stream, so configs sharing market and seed see
    the same path whatever their strategy.
    """
    states = None
    if isinstance(market, CsvSource):
        X = load_csv(market)
        if X.shape[0] < horizon:
            raise ConfigurationError(f"horizon {horizon} exceeds the {X.shape[0]} returns in {market.path}")
        X = X[:horizon]
    else:
        rng = np.random.default_rng(seed)
        if isinstance(market, IidSpec):
            X = iid_path(market, rng, horizon)
        else:
            X, states = markov_path(market, rng, horizon)
    X = np.ascontiguousarray(X, dtype=np.float64)
    return MarketPath(X, states, hashlib.sha256(X.tobytes()).hexdigest())


def limiting_moments(market: Market) -> Moments | None:
    if isinstance(market, IidSpec):
        return market.moments()
    if isinstance(market, MarkovChainSpec):
        return stationary_moments(market)
    return None


def first_seen_atoms(path: np.ndarray):
    """Distinct rows in order of first appearance, and each row's index."""
    uniq, first, inv = np.unique(path, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return np.ascontiguousarray(uniq[order]), rank[np.asarray(inv).ravel()].astype(np.int64)


# ------------------------------------------------------------------ engine

@dataclass
class StrategyTrace:
    portfolios: np.ndarray
    selected: np.ndarray | None
    steps_done: int
    error: MVError | None = None


def compute_portfolios(cfg: ExperimentConfig, mp: MarketPath) -> StrategyTrace:
    """Portfolio played at every step (row n-1 is step n)."""
    s, X, h = cfg.strategy, mp.returns, cfg.warmup
    N, m = X.shape
    tol, maxit = cfg.solver.kkt_tolerance, cfg.solver.max_iterations
    if s.kind == "fixed":
        return StrategyTrace(np.tile(np.asarray(s.portfolio), (N, 1)), None, N)
    if s.kind == "constant":
        P, done, status = _kernels.run_constant(X, s.alpha, h, tol, maxit)
        return StrategyTrace(P, None, done, _status_error(status, P, done))
    if s.kind == "adaptive":
        atoms, ids = first_seen_atoms(X)
        code = _kernels.OBJ_SHARPE if s.objective is ObjectiveKind.SHARPE else _kernels.OBJ_LOG
        P, sel, done, status = _kernels.run_adaptive(
            X, atoms, ids, np.asarray(s.alphas, dtype=np.float64), h, code, tol, maxit)
        return StrategyTrace(P, sel, done, _status_error(status, P, done))
    # Bayesian: one cached solve per conditional law.
    market = cfg.market
    oracle = MarkovOracle(market) if isinstance(market, MarkovChainSpec) else IidOracle(market.moments())
    strat = BayesianStrategy(s.alpha, oracle, m, h, cfg.solver)
    P = np.empty((N, m))
    P[: min(h, N)] = uniform_portfolio(m)
    if N > h:
        if isinstance(market, MarkovChainSpec):
            prev = mp.states[h - 1: N - 1]
            table = np.array([strat.portfolio_for(k, conditional_moments(market, k))
                              for k in range(market.K)])
            P[h:] = table[prev]
        else:
            P[h:] = strat.portfolio_for(*oracle.current())
    return StrategyTrace(P, None, N)


def _status_error(status, P, done):
    if status == _kernels.CERTIFIED:
        return None
    try:
        raise_for_status(status, P[done - 1] if done else P[0], math.nan, 0, math.nan)
    except MVError as e:
        e.args = (f"step {done + 1}: {e.args[0]}",)
        return e
    return None


# ----------------------------------------------------------------- records

@dataclass(frozen=True)
class TraceRecord:
    step: int
    portfolio: np.ndarray
    alpha_selected: float | None
    metrics: MetricsReport
    ground_truth_gap: float | None
    kind: str = "trace"

    def as_dict(self) -> dict:
        return {"kind": self.kind, "step": self.step, "portfolio": list(self.portfolio),
                "alpha_selected": self.alpha_selected, "metrics": self.metrics.as_dict(),
                "ground_truth_gap": self.ground_truth_gap}


def _encode(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return format(v, ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(x) for x in v) + "]"
    raise TypeError(f"cannot encode {type(v).__name__}")


def encode_record(d: dict) -> str:
    """One JSON line with 17-significant-digit floats."""
    return _encode(d)


def decode_number(v):
    """Inverse of the non-finite float encoding used in trace files."""
    if isinstance(v, str) and v in ("inf", "-inf", "nan"):
        return float(v)
    return v


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list
    summary: dict
    path_sha256: str
    portfolios: np.ndarray = field(repr=False)
    returns: np.ndarray = field(repr=False)
    selected: np.ndarray | None = field(default=None, repr=False)

    @property
    def final(self) -> MetricsReport:
        return self.records[-1].metrics


def _alpha_for(cfg: ExperimentConfig, sel: np.ndarray | None, step: int) -> float | None:
    s = cfg.strategy
    if s.kind == "adaptive":
        i = int(sel[step - 1])
        return None if i < 0 else s.alphas[i]
    return s.alpha


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """Run one strategy on one market path; write the trace if configured."""
    mp = generate_path(cfg.market, cfg.seed, cfg.horizon)
    tr = compute_portfolios(cfg, mp)
    done = tr.steps_done
    P, X = tr.portfolios[:done], mp.returns[:done]
    r = _kernels.portfolio_returns(P, X)
    every = cfg.report_every
    steps = list(range(every, done + 1, every))
    report_steps = np.array(steps + [done], dtype=np.int64)
    snaps, folded = _kernels.fold_metrics(r, report_steps)
    error = tr.error
    if folded < done:
        error = BankruptcyError(f"step {folded + 1}: non-positive portfolio return {r[folded]!r}")
        done = folded
        report_steps = report_steps[report_steps <= done]

    limit = limiting_moments(cfg.market)
    optimum: dict = {}

    def gap(alpha, util):
        if limit is None or alpha is None:
            return None
        if alpha not in optimum:
            # Reference optimum; cfg.solver only governs the strategy.
            optimum[alpha] = solve_mv(alpha, limit).utility
        return abs(util - optimum[alpha])

    records = []
    for i, n in enumerate(report_steps):
        n = int(n)
        if n == 0:
            continue
        alpha = _alpha_for(cfg, tr.selected, n)
        rep = MetricsTracker.from_state(snaps[i]).report(0.0 if alpha is None else alpha)
        kind = "summary" if i == len(report_steps) - 1 else "trace"
        records.append(TraceRecord(n, P[n - 1], alpha, rep, gap(alpha, rep.utility), kind))

    summary = {"kind": "summary", "name": cfg.name, "strategy": cfg.strategy.as_dict(),
               "seed": cfg.seed, "horizon": cfg.horizon, "steps": done,
               "path_sha256": mp.sha256}
    if records:
        last = records[-1]
        summary.update(step=last.step, portfolio=list(last.portfolio),
                       alpha_selected=last.alpha_selected, metrics=last.metrics.as_dict(),
                       ground_truth_gap=last.ground_truth_gap)
    if error is not None:
        summary["error"] = str(error)

    if write and cfg.output:
        _write_trace(cfg.output, records, summary)
    result = RunResult(cfg, records, summary, mp.sha256, P, r, tr.selected)
    if error is not None:
        error.result = result
        raise error
    return result


def _write_trace(path, records, summary):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records[:-1]:
            fh.write(encode_record(rec.as_dict()) + "\n")
        fh.write(encode_record(summary) + "\n")


def summary_line(res: RunResult) -> str:
    s = res.summary
    label = res.config.strategy.label()
    if "metrics" not in s:
        return f"{label}: no completed steps"
    mt = s["metrics"]
    g = s["ground_truth_gap"]
    return (f"{label} n={s['step']} M={mt['M_n']:.6g} V={mt['V_n']:.6g} Sh={mt['Sh_n']:.6g} "
            f"W={mt['W_n']:.6g} S={mt['S_n']:.6g} U={mt['utility']:.6g} "
            f"gap={'n/a' if g is None else format(g, '.3g')}")


# ----------------------------------------------------------------- compare

@dataclass
class Comparison:
    results: list
    table: list
    differences: list

    def lines(self) -> list[str]:
        out = []
        for row in self.table:
            out.append(f"{row['label']:<48} U={row['utility']:.8g} Sh={row['Sh_n']:.8g} W={row['W_n']:.8g}")
        for d in self.differences:
            out.append(f"{d['a']} - {d['b']}: dU={d['utility']:.3g} dSh={d['Sh_n']:.3g} dW={d['W_n']:.3g}")
        return out


def compare_strategies(cfgs) -> Comparison:
    """Run several strategies on one realized path and tabulate differences."""
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigurationError("nothing to compare")
    ref = cfgs[0]
    key = market_fingerprint(ref.market)
    for c in cfgs[1:]:
        if market_fingerprint(c.market) != key or c.seed != ref.seed or c.horizon != ref.horizon:
            raise ConfigurationError("compared configs must share market, seed and horizon")
    results = [run_experiment(c) for c in cfgs]
    hashes = {r.path_sha256 for r in results}
    if len(hashes) != 1:
        raise ConfigurationError("runs saw different return paths")
    table = []
    for c, r in zip(cfgs, results):
        f = r.final
        table.append({"label": c.name or c.strategy.label(), "utility": f.utility,
                      "Sh_n": f.Sh_n, "W_n": f.W_n, "M_n": f.M_n, "V_n": f.V_n})
    diffs = []
    for i in range(len(table)):
        for j in range(i + 1, len(table)):
            a, b = table[i], table[j]
            diffs.append({"a": a["label"], "b": b["label"],
                          **{k: a[k] - b[k] for k in ("utility", "Sh_n", "W_n")}})
    return Comparison(results, table, diffs)
