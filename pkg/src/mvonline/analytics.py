"""Expected log growth of Gaussian portfolio returns, and frontier sweeps.

For a portfolio return R ~ N(mu_b, sigma_b^2), expanding log R around mu_b
and taking expectations term by term (odd central moments vanish, the even
ones are (2i-1)!! sigma_b^(2i)) gives

    E log R  ~  log mu_b - sum_{i>=1} (2i-1)!! / (2i) * q^(2i),   q = sigma_b / mu_b.

The series is asymptotic rather than convergent: for any q > 0 its terms
eventually grow. ``normal_log_series`` therefore stops either when the next
term drops below ``tol`` or at the smallest term, whichever comes first.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .core import Moments, check_alpha
from .errors import SeriesDivergenceError
from .markets import discrete_moments
from .solver import solve_mv

SERIES_RATIO_CAP = 0.5
GH_NODES = 80


def normal_log_series(mu_b: float, sigma_b: float, tol: float = 1e-12,
                      return_terms: bool = False):
    """Series value of E log R for R ~ N(mu_b, sigma_b^2).

    With ``return_terms`` the number of summed terms is returned as well.
    Raises SeriesDivergenceError when sigma_b / mu_b >= 0.5.
    """
    if not (mu_b > 0.0) or not math.isfinite(mu_b):
        raise ValueError(f"mu_b must be positive and finite, got {mu_b}")
    if not (sigma_b >= 0.0) or not math.isfinite(sigma_b):
        raise ValueError(f"sigma_b must be non-negative and finite, got {sigma_b}")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    q2 = (sigma_b / mu_b) ** 2
    if q2 >= SERIES_RATIO_CAP ** 2:
        raise SeriesDivergenceError(
            f"sigma_b / mu_b = {math.sqrt(q2):.4g} is outside the series regime (< {SERIES_RATIO_CAP})")
    total = 0.0
    n_terms = 0
    t = 0.5 * q2  # i = 1 term
    i = 1
    while t >= tol:
        total += t
        n_terms += 1
        nxt = t * (2 * i + 1) * i / (i + 1) * q2
        if nxt >= t:
            break
        t = nxt
        i += 1
    value = math.log(mu_b) - total
    return (value, n_terms) if return_terms else value


def gauss_hermite(n: int = GH_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrals against exp(-x^2)."""
    return hermgauss(n)


def gauss_hermite_expected_log(mu_b: float, sigma_b: float, n: int = GH_NODES) -> float:
    """Quadrature value of E log|R| for R ~ N(mu_b, sigma_b^2).

    The absolute value keeps the integrand real at the far nodes, where
    mu_b + sigma_b * sqrt(2) * x can turn negative; the Gaussian mass there
    is negligible for the ratios the series is compared on.
    """
    x, w = gauss_hermite(n)
    vals = np.log(np.abs(mu_b + sigma_b * math.sqrt(2.0) * x))
    return float(w @ vals / math.sqrt(math.pi))


@dataclass(frozen=True)
class FrontierPoint:
    alpha: float
    portfolio: np.ndarray
    mean: float
    variance: float
    sharpe: float
    expected_log: float
    log_method: str


def frontier_sweep(m: Moments, alphas, history=None, tol: float = 1e-12) -> list[FrontierPoint]:
    """Solve the M-V problem along ``alphas`` and evaluate each optimum.

    ``expected_log`` uses the Gaussian series when sigma_b / mu_b < 0.5,
    otherwise the sample average of log <b, x> over ``history`` (nan if no
    history is given).
    """
    alphas = [check_alpha(a) for a in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly increasing")
    hist = None if history is None else np.asarray(history, dtype=np.float64)
    points = []
    warm = None
    for a in alphas:
        b = solve_mv(a, m, warm_start=warm).portfolio
        warm = b
        mean = m.portfolio_mean(b)
        var = max(m.portfolio_variance(b), 0.0)
        sd = math.sqrt(var)
        sharpe = mean / sd if sd > 0 else math.inf
        if mean > 0 and sd < SERIES_RATIO_CAP * mean:
            el, how = normal_log_series(mean, sd, tol), "series"
        elif hist is not None:
            el, how = float(np.mean(np.log(hist @ b))), "sample"
        else:
            el, how = math.nan, "none"
        points.append(FrontierPoint(a, b, mean, var, sharpe, el, how))
    return points


def max_sharpe_portfolio(m: Moments) -> tuple[np.ndarray, float]:
    """Simplex portfolio with the largest <b, mu> / sqrt(<b, Sigma b>).

    The optimum solves Sigma_SS y = mu_S on its support S with y > 0, so
    all supports are enumerated (m <= 12). Needs a positive mean vector.
    """
    mu, S = m.mu, m.sigma
    if m.m > 12:
        raise ValueError("support enumeration limited to m <= 12")
    if np.any(mu <= 0):
        raise ValueError("max-Sharpe search assumes positive means")
    best, best_b = -math.inf, None
    for k in range(1, m.m + 1):
        for supp in itertools.combinations(range(m.m), k):
            idx = list(supp)
            try:
                y = np.linalg.solve(S[np.ix_(idx, idx)], mu[idx])
            except np.linalg.LinAlgError:
                continue
            if np.any(y <= 0):
                continue
            b = np.zeros(m.m)
            b[idx] = y / y.sum()
            var = m.portfolio_variance(b)
            if var <= 0:
                continue
            sh = m.portfolio_mean(b) / math.sqrt(var)
            if sh > best:
                best, best_b = sh, b
    if best_b is None:
        raise ValueError("no positive-variance tangency portfolio found")
    return best_b, best


def sharpe_optimal_alpha(m: Moments) -> float:
    """Risk aversion whose M-V optimum is the max-Sharpe portfolio.

    On the optimum's support mu = (mean / variance) Sigma b, which is the
    M-V first-order condition with 2 alpha = mean / variance.
    """
    b, _ = max_sharpe_portfolio(m)
    return m.portfolio_mean(b) / (2.0 * m.portfolio_variance(b))


def growth_optimal_alpha(atoms, weights, lo: float = 0.0, hi: float = 8.0,
                         grid: int = 401, refine_tol: float = 1e-10) -> tuple[float, float]:
    """alpha in [lo, hi] maximizing E log <b_alpha, X> under a finite law.

    Dense grid, then golden-section refinement around the best grid point.
    Returns (alpha, expected log).
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    mom = discrete_moments(atoms, weights)

    def f(a):
        b = solve_mv(a, mom).portfolio
        return float(weights @ np.log(atoms @ b))

    xs = np.linspace(lo, hi, grid)
    vals = [f(a) for a in xs]
    k = int(np.argmax(vals))
    a, c = xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)]
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = c - g * (c - a), a + g * (c - a)
    f1, f2 = f(x1), f(x2)
    while c - a > refine_tol:
        if f1 >= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - g * (c - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (c - a)
            f2 = f(x2)
    best_a, best_f = xs[k], vals[k]
    mid = 0.5 * (a + c)
    fm = f(mid)
    if fm > best_f:
        best_a, best_f = mid, fm
    return float(best_a), float(best_f)

