"""Synthetic markets with known ground truth, plus CSV ingestion.

Two synthetic families are provided:

* i.i.d. markets, either a finite discrete law or a truncated multivariate
  lognormal;
* stationary finite-state Markov chains whose transition matrix satisfies
  detailed balance. Each state emits a fixed return vector, so the law of
  the next return given the past is a transition row and can be enumerated.

Every sampler consumes a ``numpy.random.Generator`` in a documented order so
that a path is a pure function of (spec, seed).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import M_BOUND, REDUNDANCY_TOL, Moments, as_return_vector
from .errors import (
    ConfigurationError,
    DataError,
    GenerationError,
    InvalidReturnError,
    InvariantViolationError,
    MisconfiguredBoundsError,
)

DISCRETE = "discrete"
TRUNCATED_LOGNORMAL = "truncated_lognormal"

MAX_REJECTIONS = 1000
DETAILED_BALANCE_TOL = 1e-12


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return V * np.sqrt(np.clip(w, 0.0, None))


# ---------------------------------------------------------------- i.i.d.

@dataclass(frozen=True)
class IidSpec:
    """An i.i.d. return law.

    Use :meth:`discrete` or :meth:`truncated_lognormal` to build one. For the
    lognormal family each draw is exp(mu_log + L z) with L L^T = sigma_log,
    redrawn while any entry falls outside ``bounds`` or the norm exceeds
    ``m_bound``. Construction fails if a union bound on the rejected mass
    exceeds ``max_rejection_mass``.
    """

    kind: str
    m: int
    points: np.ndarray | None = None
    probs: np.ndarray | None = None
    mu_log: np.ndarray | None = None
    sigma_log: np.ndarray | None = None
    bounds: tuple[float, float] = (1e-3, M_BOUND)
    m_bound: float = M_BOUND
    max_rejection_mass: float = 1e-6

    @classmethod
    def discrete(cls, points, probs=None, m_bound: float = M_BOUND) -> "IidSpec":
        P = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if probs is None:
            probs = np.full(P.shape[0], 1.0 / P.shape[0])
        return cls(DISCRETE, P.shape[1], points=P, probs=np.asarray(probs, dtype=np.float64),
                   m_bound=m_bound)

    @classmethod
    def truncated_lognormal(cls, mu_log, sigma_log, bounds=(1e-3, M_BOUND),
                            m_bound: float = M_BOUND,
                            max_rejection_mass: float = 1e-6) -> "IidSpec":
        mu = np.asarray(mu_log, dtype=np.float64)
        return cls(TRUNCATED_LOGNORMAL, mu.size, mu_log=mu,
                   sigma_log=np.asarray(sigma_log, dtype=np.float64),
                   bounds=(float(bounds[0]), float(bounds[1])), m_bound=m_bound,
                   max_rejection_mass=max_rejection_mass)

    def __post_init__(self):
        if self.kind == DISCRETE:
            P, p = self.points, self.probs
            if P.ndim != 2 or P.shape[0] == 0 or p.shape != (P.shape[0],):
                raise ConfigurationError("discrete law needs k points and k probabilities")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ConfigurationError("probabilities must lie on the simplex")
            for row in P:
                as_return_vector(row, self.m_bound)
        elif self.kind == TRUNCATED_LOGNORMAL:
            mu, S = self.mu_log, self.sigma_log
            if mu.ndim != 1 or S.shape != (mu.size, mu.size):
                raise ConfigurationError("mu_log must be (m,) and sigma_log (m, m)")
            if not np.all(np.isfinite(S)) or np.abs(S - S.T).max() > 1e-12 * max(1.0, np.abs(S).max()):
                raise ConfigurationError("sigma_log must be finite and symmetric")
            if np.linalg.eigvalsh(S)[0] < -1e-12:
                raise ConfigurationError("sigma_log must be positive semidefinite")
            lo, hi = self.bounds
            if not (0.0 < lo < hi <= self.m_bound):
                raise ConfigurationError(f"bounds must satisfy 0 < lower < upper <= {self.m_bound}")
            mass = self.rejection_mass()
            if mass > self.max_rejection_mass:
                raise MisconfiguredBoundsError(
                    f"rejection mass bound {mass:.3g} exceeds {self.max_rejection_mass:.3g}")
        else:
            raise ConfigurationError(f"unknown i.i.d. law {self.kind!r}")

    def rejection_mass(self) -> float:
        """Union bound on the probability that one lognormal draw is rejected."""
        if self.kind != TRUNCATED_LOGNORMAL:
            return 0.0
        lo, hi = self.bounds
        # ||y|| > m_bound forces some entry above m_bound / sqrt(m).
        top = min(hi, self.m_bound / math.sqrt(self.m))
        total = 0.0
        for j in range(self.m):
            s = math.sqrt(max(self.sigma_log[j, j], 0.0))
            mu = self.mu_log[j]
            if s == 0.0:
                total += float(not (lo <= math.exp(mu) <= top))
                continue
            total += _normal_cdf((math.log(lo) - mu) / s)
            total += 1.0 - _normal_cdf((math.log(top) - mu) / s)
        return total

    def moments(self) -> Moments:
        """Exact moments (discrete) or untruncated lognormal moments."""
        if self.kind == DISCRETE:
            return discrete_moments(self.points, self.probs)
        mean = np.exp(self.mu_log + 0.5 * np.diag(self.sigma_log))
        cov = np.outer(mean, mean) * np.expm1(self.sigma_log)
        return Moments(mean, 0.5 * (cov + cov.T))

    def law(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(atoms, weights) of a discrete law, None for continuous ones."""
        if self.kind == DISCRETE:
            return self.points, self.probs
        return None


def discrete_moments(points, probs) -> Moments:
    """Mean and covariance of a finite law by direct enumeration."""
    P = np.asarray(points, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    mu = p @ P
    D = P - mu
    sigma = (D * p[:, None]).T @ D
    return Moments(mu, 0.5 * (sigma + sigma.T))


def discrete_expected_log(points, probs, b) -> float:
    """E log <b, X> under a finite law."""
    r = np.asarray(points) @ np.asarray(b)
    if np.any(r <= 0):
        return -math.inf
    return float(np.asarray(probs) @ np.log(r))


def iid_path(spec: IidSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """n consecutive draws; identical to n calls of :func:`iid_sample`.

    Discrete laws consume one ``rng.random()`` per draw (inverse CDF).
    Lognormal laws consume m standard normals per candidate row and discard
    rejected rows. A batch never holds more rows than are still missing, so
    no normals are drawn beyond those a row-by-row sampler would use.
    """
    if spec.kind == DISCRETE:
        cdf = np.cumsum(spec.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        return spec.points[np.minimum(idx, cdf.size - 1)]
    L = _psd_sqrt(spec.sigma_log)
    lo, hi = spec.bounds
    out = np.empty((n, spec.m))
    filled = 0
    run = 0
    while filled < n:
        need = n - filled
        z = rng.standard_normal((need, spec.m))
        # Row-wise reduction keeps each draw independent of the batch size.
        y = np.exp(spec.mu_log + (z[:, None, :] * L[None, :, :]).sum(axis=2))
        ok = np.all((y >= lo) & (y <= hi), axis=1) & (np.sqrt(np.einsum("ij,ij->i", y, y)) <= spec.m_bound)
        for i in range(need):
            if ok[i]:
                out[filled] = y[i]
                filled += 1
                run = 0
            else:
                run += 1
                if run >= MAX_REJECTIONS:
                    raise MisconfiguredBoundsError(
                        f"{MAX_REJECTIONS} consecutive draws fell outside the bounds")
    return out


def iid_sample(spec: IidSpec, rng: np.random.Generator) -> np.ndarray:
    return iid_path(spec, rng, 1)[0]


# ---------------------------------------------------------------- Markov

@dataclass(frozen=True)
class MarkovChainSpec:
    """Finite-state chain that emits ``state_returns[s]`` on entering state s.

    The transition matrix must be strictly positive and reversible with
    respect to ``stationary`` (computed when omitted).
    """

    state_returns: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray | None = None
    m_bound: float = M_BOUND
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.state_returns, dtype=np.float64))
        T = np.atleast_2d(np.asarray(self.transition, dtype=np.float64))
        K = X.shape[0]
        if T.shape != (K, K):
            raise InvariantViolationError(f"transition must be {K}x{K}, got {T.shape}")
        if not np.all(T > 0.0):
            raise InvariantViolationError("transition entries must be strictly positive")
        if np.abs(T.sum(axis=1) - 1.0).max() > 1e-12:
            raise InvariantViolationError("transition rows must sum to 1")
        for row in X:
            as_return_vector(row, self.m_bound)
        if self.stationary is None:
            pi = _stationary_of(T)
        else:
            pi = np.asarray(self.stationary, dtype=np.float64)
            if pi.shape != (K,) or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
                raise InvariantViolationError("stationary law must be a simplex vector")
        flow = pi[:, None] * T
        if np.abs(flow - flow.T).max() > DETAILED_BALANCE_TOL:
            raise InvariantViolationError("transition violates detailed balance")
        cdf = np.cumsum(T, axis=1)
        cdf[:, -1] = 1.0
        object.__setattr__(self, "state_returns", X)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "stationary", pi)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def K(self) -> int:
        return self.state_returns.shape[0]

    @property
    def m(self) -> int:
        return self.state_returns.shape[1]

    def state_of(self, x) -> int:
        """Index of the state that emits ``x``, or -1 if none does."""
        hits = np.flatnonzero(np.all(self.state_returns == np.asarray(x), axis=1))
        return int(hits[0]) if hits.size else -1

    def conditionally_nonredundant(self, tol: float = REDUNDANCY_TOL) -> bool:
        """True if every transition row's covariance has min eigenvalue > tol."""
        return all(np.linalg.eigvalsh(conditional_moments(self, s).sigma)[0] > tol
                   for s in range(self.K))

    def law(self) -> tuple[np.ndarray, np.ndarray]:
        return self.state_returns, self.stationary


def _stationary_of(T: np.ndarray) -> np.ndarray:
    K = T.shape[0]
    A = np.vstack([T.T - np.eye(K), np.ones(K)])
    rhs = np.zeros(K + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def conditional_moments(spec: MarkovChainSpec, state: int) -> Moments:
    """Moments of the next return given the chain is in ``state``."""
    if not 0 <= state < spec.K:
        raise InvariantViolationError(f"state {state} out of range 0..{spec.K - 1}")
    return discrete_moments(spec.state_returns, spec.transition[state])


def stationary_moments(spec: MarkovChainSpec) -> Moments:
    """Moments of the stationary law, the limit of the empirical moments."""
    return discrete_moments(spec.state_returns, spec.stationary)


def markov_step(spec: MarkovChainSpec, state: int, rng: np.random.Generator):
    """Draw the next state from row ``state``; returns (return vector, new state)."""
    if not 0 <= state < spec.K:
        raise InvariantViolationError(f"state {state} out of range 0..{spec.K - 1}")
    nxt = min(int(np.searchsorted(spec._cdf[state], rng.random(), side="right")), spec.K - 1)
    return spec.state_returns[nxt], nxt


@njit(cache=True)
def _walk(cdf, s0, u):
    n = u.shape[0]
    K = cdf.shape[0]
    states = np.empty(n, dtype=np.int64)
    s = s0
    for t in range(n):
        row = cdf[s]
        nxt = K - 1
        for j in range(K):
            if u[t] < row[j]:
                nxt = j
                break
        s = nxt
        states[t] = s
    return states


def markov_path(spec: MarkovChainSpec, rng: np.random.Generator, n: int,
                initial_state: int | None = None):
    """Returns (path, states) for n steps.

    When ``initial_state`` is None the unobserved state X_0 is drawn from the
    stationary law with one ``rng.random()``; each step then consumes one
    more, exactly as repeated :func:`markov_step` calls would.
    """
    if initial_state is None:
        pcdf = np.cumsum(spec.stationary)
        pcdf[-1] = 1.0
        initial_state = min(int(np.searchsorted(pcdf, rng.random(), side="right")), spec.K - 1)
    elif not 0 <= initial_state < spec.K:
        raise InvariantViolationError(f"state {initial_state} out of range")
    states = _walk(spec._cdf, int(initial_state), rng.random(n))
    return spec.state_returns[states], states


def _symmetric_sinkhorn(A: np.ndarray, iters: int = 10_000) -> np.ndarray:
    d = np.ones(A.shape[0])
    for _ in range(iters):
        d_new = np.sqrt(d / (A @ d))
        if np.abs(d_new - d).max() < 1e-16:
            d = d_new
            break
        d = d_new
    T = d[:, None] * A * d[None, :]
    return 0.5 * (T + T.T)


def make_reversible_chain(K: int, m: int, seed, factor_vol: float = 0.55,
                          m_bound: float = M_BOUND, max_retries: int = 100) -> MarkovChainSpec:
    """Random reversible chain for experiments.

    The transition matrix is the symmetric doubly-stochastic scaling of
    0.05 + U + U^T (U uniform), so the stationary law is uniform and
    detailed balance holds exactly. State s emits x_s = f_s * e_s with a
    common lognormal factor f_s (log-volatility ``factor_vol``) and
    asset-specific lognormal terms whose drift and volatility increase with
    the asset index.
    """
    if K < m + 1:
        raise ConfigurationError(f"need K >= m + 1, got K={K}, m={m}")
    rng = np.random.default_rng(seed)
    drift = np.linspace(0.0, 0.1, m)
    idio = np.linspace(0.05, 0.25, m)
    for _ in range(max_retries):
        U = rng.uniform(0.0, 1.0, (K, K))
        T = _symmetric_sinkhorn(0.05 + U + U.T)
        T /= T.sum(axis=1, keepdims=True)
        T = 0.5 * (T + T.T)
        f = np.exp(factor_vol * rng.standard_normal(K))
        e = np.exp(drift + idio * rng.standard_normal((K, m)))
        X = f[:, None] * e
        if np.sqrt((X * X).sum(axis=1)).max() > m_bound:
            continue
        try:
            spec = MarkovChainSpec(X, T, np.full(K, 1.0 / K), m_bound=m_bound)
        except (InvariantViolationError, InvalidReturnError):
            continue
        if spec.conditionally_nonredundant():
            return spec
    raise GenerationError(f"no valid chain after {max_retries} attempts (K={K}, m={m})")


# ------------------------------------------------------------------- CSV

PRICES = "prices"
RETURNS = "returns"


@dataclass(frozen=True)
class CsvSource:
    """A CSV file of prices or gross returns with a header of asset names."""

    path: str
    kind: str = RETURNS
    asset_names: tuple[str, ...] | None = None
    on_bound_violation: str = "reject"
    m_bound: float = M_BOUND

    def __post_init__(self):
        if self.kind not in (PRICES, RETURNS):
            raise ConfigurationError(f"kind must be 'prices' or 'returns', got {self.kind!r}")
        if self.on_bound_violation not in ("reject", "clamp"):
            raise ConfigurationError("on_bound_violation must be 'reject' or 'clamp'")


def _read_rows(src: CsvSource):
    with open(src.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if src.asset_names is not None and tuple(header) != tuple(src.asset_names):
            raise DataError(f"header {header} does not match {list(src.asset_names)}", line=1)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", line=line)
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"cannot parse {cell!r}", line=line, column=col) from None
                if not math.isfinite(v) or v <= 0.0:
                    raise DataError(f"value {cell!r} must be finite and positive",
                                    line=line, column=col)
                vals.append(v)
            rows.append((line, vals))
    return header, rows


def load_csv(src: CsvSource) -> np.ndarray:
    """Return the (n, m) array of gross returns described by ``src``.

    Price files yield ratios of consecutive rows. A return vector whose norm
    exceeds ``m_bound`` triggers a warning and is then either rejected
    (DataError) or rescaled onto the bound, per ``on_bound_violation``.
    """
    header, rows = _read_rows(src)
    if src.kind == PRICES:
        if len(rows) < 2:
            raise DataError("a price file needs at least two rows")
        P = np.array([v for _, v in rows])
        X = P[1:] / P[:-1]
        lines = [ln for ln, _ in rows[1:]]
    else:
        X = np.array([v for _, v in rows]).reshape(len(rows), len(header))
        lines = [ln for ln, _ in rows]
    norms = np.sqrt((X * X).sum(axis=1)) if X.size else np.zeros(0)
    for i in np.flatnonzero(norms > src.m_bound):
        msg = f"return norm {norms[i]:.6g} exceeds bound {src.m_bound}"
        warnings.warn(f"line {lines[i]}: {msg}", RuntimeWarning, stacklevel=2)
        if src.on_bound_violation == "reject":
            raise DataError(msg, line=lines[i])
        X[i] *= src.m_bound / norms[i]
    return X


def write_csv(path, rows, asset_names) -> None:
    """Write gross returns with 17 significant digits (exact round trip)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != len(asset_names):
        raise ValueError("row width does not match the header")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(asset_names)
        for r in rows:
            w.writerow([format(v, ".17g") for v in r])
