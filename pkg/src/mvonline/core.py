"""Domain types and the streaming empirical-moment accumulator.

Return vectors and portfolios are plain float64 numpy arrays; the helpers
below validate them at module boundaries. The accumulator represents the
empirical distribution of everything observed so far through its mean,
centered scatter matrix and the raw history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    EmptyAccumulatorError,
    InvalidPortfolioError,
    InvalidReturnError,
    InvariantViolationError,
)

M_BOUND = 10.0
REDUNDANCY_TOL = 1e-8
SIMPLEX_TOL = 1e-12
SYMMETRY_TOL = 1e-9

def as_return_vector(x, m_bound: float = M_BOUND) -> np.ndarray:
    """Validate one period of gross returns and return it as float64."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidReturnError(f"return vector must be 1-d and non-empty, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidReturnError(f"non-finite return in {v}")
    if np.any(v <= 0.0):
        raise InvalidReturnError(f"returns must be strictly positive, got {v}")
    norm = float(np.sqrt(v @ v))
    if norm > m_bound:
        raise InvalidReturnError(f"return norm {norm:.6g} exceeds bound {m_bound}")
    return v


def as_portfolio(w, tol: float = SIMPLEX_TOL) -> np.ndarray:
    b = np.asarray(w, dtype=np.float64)
    if b.ndim != 1 or b.size == 0:
        raise InvalidPortfolioError(f"portfolio must be 1-d and non-empty, got shape {b.shape}")
    if np.any(b < 0.0) or not np.all(np.isfinite(b)):
        raise InvalidPortfolioError(f"weights must be finite and non-negative, got {b}")
    if abs(b.sum() - 1.0) > tol:
        raise InvalidPortfolioError(f"weights sum to {b.sum()!r}, expected 1")
    return b


def uniform_portfolio(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def check_alpha(alpha) -> float:
    a = float(alpha)
    if not (a >= 0.0) or not np.isfinite(a):
        raise InvariantViolationError(f"risk aversion must be finite and >= 0, got {alpha!r}")
    return a


@dataclass(frozen=True)
class Moments:
    """Mean vector and covariance matrix of a return distribution."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.shape != (mu.size, mu.size):
            raise InvariantViolationError(
                f"shape mismatch: mu {mu.shape}, sigma {sigma.shape}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def m(self) -> int:
        return self.mu.size

    def portfolio_mean(self, b) -> float:
        return float(np.asarray(b) @ self.mu)

    def portfolio_variance(self, b) -> float:
        b = np.asarray(b)
        return float(b @ self.sigma @ b)


class MomentAccumulator:
    """Streaming count, mean and centered scatter of observed return vectors.

    ``update`` mutates in place (Welford rank-one step). The full ordered
    history is retained, together with a table of distinct observations and
    their counts, so that averages of ``log <b, x_i>`` over the history cost
    O(#distinct) instead of O(n) on discrete markets. On continuous markets
    every observation is its own atom and the cost is O(n).
    """

    __slots__ = ("m", "n", "mean", "scatter", "m_bound", "_buf", "_atom_index",
                 "_atoms", "_counts", "_n_atoms", "_moments")

    def __init__(self, m: int, m_bound: float = M_BOUND):
        if m < 1:
            raise InvariantViolationError("need at least one asset")
        self.m = m
        self.n = 0
        self.mean = np.zeros(m)
        self.scatter = np.zeros((m, m))
        self.m_bound = m_bound
        self._buf = np.empty((64, m))
        self._atom_index: dict = {}
        self._atoms = np.empty((16, m))
        self._counts = np.zeros(16)
        self._n_atoms = 0
        self._moments = None

    @property
    def history(self) -> np.ndarray:
        """Read-only (n, m) view of every observation in arrival order."""
        view = self._buf[: self.n]
        view.flags.writeable = False
        return view

    def update(self, x, validate: bool = True) -> "MomentAccumulator":
        if validate:
            x = as_return_vector(x, self.m_bound)
            if x.size != self.m:
                raise InvalidReturnError(f"expected {self.m} assets, got {x.size}")
        n = self.n
        if n == self._buf.shape[0]:
            grown = np.empty((2 * n, self.m))
            grown[:n] = self._buf
            self._buf = grown
        self._buf[n] = x
        self.n = n + 1
        _kernels.welford_update(self.mean, self.scatter, x, float(self.n))
        self._moments = None
        self._add_atom(x)
        return self

    def _add_atom(self, x):
        key = x.tobytes()
        i = self._atom_index.get(key)
        if i is None:
            i = self._n_atoms
            if i == self._atoms.shape[0]:
                self._atoms = np.concatenate([self._atoms, np.empty_like(self._atoms)])
                self._counts = np.concatenate([self._counts, np.zeros_like(self._counts)])
            self._atoms[i] = x
            self._atom_index[key] = i
            self._n_atoms += 1
        self._counts[i] += 1.0

    def moments(self) -> Moments:
        if self.n == 0:
            raise EmptyAccumulatorError("no observations accumulated yet")
        if self._moments is None:
            self._moments = Moments(self.mean.copy(), self.scatter / self.n)
        return self._moments

    def mean_log_return(self, b) -> float:
        """Average of log <b, x_i> over the history (the empirical growth rate of b)."""
        if self.n == 0:
            raise EmptyAccumulatorError("no observations accumulated yet")
        b = np.asarray(b, dtype=np.float64)
        k = self._n_atoms
        return float(_kernels.mean_log_return(self._atoms[:k], self._counts[:k], b))

    def copy(self) -> "MomentAccumulator":
        other = MomentAccumulator(self.m, self.m_bound)
        other.n = self.n
        other.mean = self.mean.copy()
        other.scatter = self.scatter.copy()
        other._buf = self._buf.copy()
        other._atom_index = dict(self._atom_index)
        other._atoms = self._atoms.copy()
        other._counts = self._counts.copy()
        other._n_atoms = self._n_atoms
        other._moments = self._moments
        return other

    def __repr__(self):
        return f"MomentAccumulator(m={self.m}, n={self.n})"


def accumulate(acc: MomentAccumulator, x) -> MomentAccumulator:
    """Fold one observation into ``acc`` (in place) and return it."""
    return acc.update(x)


def moments(acc: MomentAccumulator) -> Moments:
    """Mean and population covariance (scatter / n) of the accumulated history."""
    return acc.moments()


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of a covariance; accepts Moments or a bare matrix."""
    sigma = m.sigma if isinstance(m, Moments) else np.asarray(m, dtype=np.float64)
    asym = np.abs(sigma - sigma.T).max() if sigma.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, np.abs(sigma).max()):
        raise InvariantViolationError(f"covariance is not symmetric (max asymmetry {asym:.3g})")
    return float(np.linalg.eigvalsh(sigma)[0])


def has_redundant_assets(m, tol: float = REDUNDANCY_TOL) -> bool:
    return min_eigenvalue(m) <= tol
