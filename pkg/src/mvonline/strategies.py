"""Sequential portfolio rules.

* Constant risk aversion: uniform for the first h periods, then the M-V
  optimum for the empirical moments of everything observed so far.
* Adaptive risk aversion: runs one constant-alpha rule per candidate alpha
  on a shared history, scores each candidate portfolio by empirical Sharpe
  ratio or empirical log growth, and among the best-scoring candidates
  plays the one closest to the portfolio played two periods earlier.
* Bayesian oracle: the M-V optimum for the true conditional law of the next
  return, supplied by the market.

Every class exposes ``next_portfolio()`` and ``observe(x)``; call them
alternately, once per period. ``run_stepwise`` drives any of them over a
path and is the reference the fused loops in :mod:`mvonline.experiment` are
tested against.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import (
    M_BOUND,
    MomentAccumulator,
    Moments,
    as_portfolio,
    as_return_vector,
    check_alpha,
    uniform_portfolio,
)
from .errors import ConfigurationError, InvalidReturnError
from .markets import MarkovChainSpec, conditional_moments, stationary_moments
from .solver import DEFAULT_OPTIONS, SolveOptions, raise_for_status, solve_mv


class ObjectiveKind(enum.Enum):
    SHARPE = "sharpe"
    LOG_GROWTH = "log_growth"

    @classmethod
    def parse(cls, value) -> "ObjectiveKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            raise ConfigurationError(f"unknown objective {value!r}") from None


def default_warmup(m: int) -> int:
    return 2 * m


def _check_h(h: int) -> int:
    h = int(h)
    if h < 1:
        raise ConfigurationError(f"warm-up length must be >= 1, got {h}")
    return h


# ----------------------------------------------------------- constant alpha

@dataclass
class ConstantAlphaState:
    alpha: float
    h: int
    acc: MomentAccumulator
    last_portfolio: np.ndarray
    opts: SolveOptions = DEFAULT_OPTIONS
    solved: bool = False
    _cache: tuple | None = field(default=None, repr=False)

    @classmethod
    def create(cls, m: int, alpha: float, h: int | None = None,
               acc: MomentAccumulator | None = None, m_bound: float = M_BOUND,
               opts: SolveOptions = DEFAULT_OPTIONS) -> "ConstantAlphaState":
        if m < 2:
            raise ConfigurationError("need at least two assets")
        return cls(alpha=check_alpha(alpha), h=_check_h(default_warmup(m) if h is None else h),
                   acc=MomentAccumulator(m, m_bound) if acc is None else acc,
                   last_portfolio=uniform_portfolio(m), opts=opts)

    def next_portfolio(self) -> np.ndarray:
        return constant_alpha_next(self)

    def observe(self, x) -> "ConstantAlphaState":
        return observe(self, x)


def constant_alpha_next(state: ConstantAlphaState) -> np.ndarray:
    """Portfolio for the coming period given everything observed so far."""
    acc = state.acc
    if acc.n < state.h:
        return uniform_portfolio(acc.m)
    if state._cache is not None and state._cache[0] == acc.n:
        return state._cache[1]
    mom = acc.moments()
    b, r, iters, status, lo = _kernels.solve_full(
        mom.mu, mom.sigma, state.alpha, state.last_portfolio, state.solved,
        state.opts.kkt_tolerance, state.opts.max_iterations)
    raise_for_status(status, b, r, iters, lo)
    state.last_portfolio = b
    state.solved = True
    state._cache = (acc.n, b)
    return b


def observe(state: ConstantAlphaState, x) -> ConstantAlphaState:
    state.acc.update(x)
    return state


# ----------------------------------------------------------- adaptive alpha

@dataclass
class AdaptiveAlphaState:
    candidate_alphas: tuple
    objective: ObjectiveKind
    h: int
    acc: MomentAccumulator
    subroutines: list
    selected_history: deque = field(default_factory=lambda: deque(maxlen=2))
    selected_alpha: float | None = None
    _pending: tuple | None = field(default=None, repr=False)

    @classmethod
    def create(cls, m: int, alphas, objective="sharpe", h: int | None = None,
               m_bound: float = M_BOUND,
               opts: SolveOptions = DEFAULT_OPTIONS) -> "AdaptiveAlphaState":
        alphas = tuple(check_alpha(a) for a in alphas)
        if not alphas:
            raise ConfigurationError("candidate alpha set is empty")
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ConfigurationError("candidate alphas must be strictly increasing")
        if m < 2:
            raise ConfigurationError("need at least two assets")
        h = _check_h(default_warmup(m) if h is None else h)
        acc = MomentAccumulator(m, m_bound)
        subs = [ConstantAlphaState.create(m, a, h, acc=acc, opts=opts) for a in alphas]
        return cls(alphas, ObjectiveKind.parse(objective), h, acc, subs)

    def next_portfolio(self) -> np.ndarray:
        return adaptive_next(self)[0]

    def observe(self, x) -> "AdaptiveAlphaState":
        if self._pending is None or self._pending[0] != self.acc.n:
            adaptive_next(self)
        self.selected_history.append(self._pending[1])
        self.acc.update(x)
        return self


def _score(state: AdaptiveAlphaState, b: np.ndarray, mom: Moments) -> float:
    if state.objective is ObjectiveKind.SHARPE:
        return _kernels.sharpe_score(b, mom.mu, mom.sigma)
    return state.acc.mean_log_return(b)


def adaptive_next(state: AdaptiveAlphaState):
    """Returns (portfolio, selected alpha); alpha is None during warm-up."""
    acc = state.acc
    if state._pending is not None and state._pending[0] == acc.n:
        return state._pending[1], state._pending[2]
    m = acc.m
    if acc.n < state.h:
        b, alpha = uniform_portfolio(m), None
    else:
        cands = np.array([constant_alpha_next(s) for s in state.subroutines])
        mom = acc.moments()
        scores = np.array([_score(state, c, mom) for c in cands])
        hist = state.selected_history
        anchor = hist[0] if len(hist) == 2 else uniform_portfolio(m)
        p = int(_kernels.select_candidate(cands, scores, anchor))
        b, alpha = cands[p], state.candidate_alphas[p]
    state._pending = (acc.n, b, alpha)
    state.selected_alpha = alpha
    return b, alpha


# ----------------------------------------------------------------- oracle

def bayesian_next(oracle_moments: Moments, alpha: float,
                  opts: SolveOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """M-V optimum for the true conditional law of the next return."""
    return solve_mv(alpha, oracle_moments, opts).portfolio


class IidOracle:
    """Conditional law of an i.i.d. market: always the marginal law."""

    def __init__(self, moments: Moments):
        self._moments = moments

    def current(self):
        return 0, self._moments

    def observe(self, x):
        pass


class MarkovOracle:
    """Conditional law of a Markov market, tracked from observed returns.

    Before any observation the next return follows the stationary law; after
    observing the return of state s it follows transition row s. States are
    identified by their return vectors, so these must be distinct; otherwise
    feed the hidden state through ``observe_state``.
    """

    def __init__(self, spec: MarkovChainSpec):
        self.spec = spec
        self.state: int | None = None
        self._distinct = np.unique(spec.state_returns, axis=0).shape[0] == spec.K

    def current(self):
        if self.state is None:
            return -1, stationary_moments(self.spec)
        return self.state, conditional_moments(self.spec, self.state)

    def observe(self, x):
        if not self._distinct:
            raise ConfigurationError("states share return vectors; use observe_state")
        s = self.spec.state_of(x)
        if s < 0:
            raise InvalidReturnError(f"{x} is not a return of this chain")
        self.state = s

    def observe_state(self, s: int):
        self.state = int(s)


class BayesianStrategy:
    """Plays the M-V optimum of the oracle's conditional law after warm-up."""

    def __init__(self, alpha: float, oracle, m: int, h: int | None = None,
                 opts: SolveOptions = DEFAULT_OPTIONS):
        self.alpha = check_alpha(alpha)
        self.oracle = oracle
        self.m = m
        self.h = _check_h(default_warmup(m) if h is None else h)
        self.opts = opts
        self.n_seen = 0
        self._solutions: dict = {}

    def portfolio_for(self, key, moments: Moments) -> np.ndarray:
        b = self._solutions.get(key)
        if b is None:
            b = bayesian_next(moments, self.alpha, self.opts)
            self._solutions[key] = b
        return b

    def next_portfolio(self) -> np.ndarray:
        if self.n_seen < self.h:
            return uniform_portfolio(self.m)
        return self.portfolio_for(*self.oracle.current())

    def observe(self, x) -> "BayesianStrategy":
        self.oracle.observe(x)
        self.n_seen += 1
        return self


class FixedStrategy:
    """Plays the same portfolio every period (a benchmark, no warm-up)."""

    def __init__(self, portfolio):
        self.portfolio = as_portfolio(portfolio, tol=1e-9)
        self.m = self.portfolio.size

    def next_portfolio(self) -> np.ndarray:
        return self.portfolio

    def observe(self, x) -> "FixedStrategy":
        as_return_vector(x, np.inf)
        return self


def run_stepwise(strategy, path) -> tuple[np.ndarray, list]:
    """Drive ``strategy`` over ``path``; returns (portfolios, selected alphas)."""
    path = np.asarray(path, dtype=np.float64)
    out = np.empty_like(path)
    alphas = []
    for t, x in enumerate(path):
        if isinstance(strategy, AdaptiveAlphaState):
            b, a = adaptive_next(strategy)
            alphas.append(a)
        else:
            b = strategy.next_portfolio()
        out[t] = b
        strategy.observe(x)
    return out, alphas
