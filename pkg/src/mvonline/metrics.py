"""Running performance functionals of a strategy trace.

For per-period portfolio returns r_i = <b_i, x_i> the tracker reproduces

    M_n = mean(r),  V_n = mean((r - M_n)^2),  Sh_n = M_n / sqrt(V_n),
    W_n = mean(log r),  S_n = prod(r) = exp(n W_n)

from O(1) state. Sums are kept relative to the first return (a shift that
removes the cancellation in sum(r^2)/n - M_n^2) and are compensated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import as_portfolio, as_return_vector, check_alpha
from .errors import BankruptcyError, InvalidReturnError

SHARPE_OK = "ok"
SHARPE_INFINITE = "infinite"
SHARPE_UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class MetricsReport:
    n: int
    M_n: float
    V_n: float
    Sh_n: float
    W_n: float
    S_n: float
    utility: float
    alpha: float
    sharpe_status: str

    def as_dict(self) -> dict:
        return {
            "n": self.n, "M_n": self.M_n, "V_n": self.V_n, "Sh_n": self.Sh_n,
            "sharpe_status": self.sharpe_status, "W_n": self.W_n, "S_n": self.S_n,
            "utility": self.utility, "alpha": self.alpha,
        }


class MetricsTracker:
    """O(1) running sums over a stream of portfolio returns."""

    __slots__ = ("_state",)

    def __init__(self):
        self._state = np.zeros(_kernels.METRICS_STATE)

    @classmethod
    def from_state(cls, state) -> "MetricsTracker":
        t = cls()
        t._state = np.array(state, dtype=np.float64)
        return t

    @property
    def n(self) -> int:
        return int(self._state[0])

    @property
    def sum_r(self) -> float:
        n, k = self._state[0], self._state[1]
        return n * k + self._s1

    @property
    def sum_r2(self) -> float:
        n, k = self._state[0], self._state[1]
        return n * k * k + 2.0 * k * self._s1 + self._s2

    @property
    def sum_log(self) -> float:
        return self._state[6] + self._state[7]

    @property
    def _s1(self) -> float:
        return self._state[2] + self._state[3]

    @property
    def _s2(self) -> float:
        return self._state[4] + self._state[5]

    def record(self, b, x) -> "MetricsTracker":
        """Fold in the return of portfolio ``b`` on return vector ``x`` (in place)."""
        b = as_portfolio(b, tol=1e-9)
        x = as_return_vector(x, m_bound=np.inf)
        if b.size != x.size:
            raise InvalidReturnError(f"portfolio has {b.size} assets, return has {x.size}")
        return self.record_return(float(b @ x))

    def record_return(self, r: float) -> "MetricsTracker":
        if not _kernels.metrics_record(self._state, float(r)):
            raise BankruptcyError(f"non-positive portfolio return {r!r} at step {self.n + 1}")
        return self

    def report(self, alpha: float = 0.0) -> MetricsReport:
        alpha = check_alpha(alpha)
        n = self.n
        if n == 0:
            raise ValueError("no returns recorded")
        s1, s2 = self._s1 / n, self._s2 / n
        M = self._state[1] + s1
        V = max(s2 - s1 * s1, 0.0)
        if n < 2:
            sh, status = math.nan, SHARPE_UNAVAILABLE
        elif V == 0.0:
            sh, status = math.copysign(math.inf, M), SHARPE_INFINITE
        else:
            sh, status = M / math.sqrt(V), SHARPE_OK
        slog = self.sum_log
        S = math.exp(slog) if slog < 709.0 else math.inf
        return MetricsReport(
            n=n, M_n=M, V_n=V, Sh_n=sh, W_n=slog / n, S_n=S,
            utility=M - alpha * V, alpha=alpha, sharpe_status=status)

    def copy(self) -> "MetricsTracker":
        return MetricsTracker.from_state(self._state)

    def __repr__(self):
        return f"MetricsTracker(n={self.n})"


def record(t: MetricsTracker, b, x) -> MetricsTracker:
    return t.record(b, x)


def report(t: MetricsTracker, alpha: float = 0.0) -> MetricsReport:
    return t.report(alpha)


def metrics_of_returns(returns, alpha: float = 0.0) -> MetricsReport:
    """Report for a whole array of portfolio returns."""
    t = MetricsTracker()
    for r in np.asarray(returns, dtype=np.float64):
        t.record_return(r)
    return t.report(alpha)
