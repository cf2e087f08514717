"""Mean-variance optimization over the no-short simplex.

``solve_mv`` returns one element of the optimizer set

    argmax_{b in simplex}  <b, mu> - alpha <b, Sigma b>

certified by a KKT residual. When the optimizer set is not a singleton the
minimum-Euclidean-norm element is returned, so results are reproducible.
``brute_force_mv`` is an independent lattice search used as a test oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import Moments, check_alpha
from .errors import ConvergenceError, InvalidMomentsError, ResourceLimitError

PSD_TOL = _kernels.PSD_TOL
# Faces are enumerated exhaustively when projected gradient stalls, and the
# min-norm tie-break enumerates supports; both are exponential in m.
ENUMERATION_LIMIT = _kernels.ENUM_LIMIT
_BRUTE_FORCE_MAX_POINTS = 2_000_000


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 100_000
    kkt_tolerance: float = 1e-9
    tie_break: str = "min-norm"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be > 0")
        if self.tie_break != "min-norm":
            raise ValueError(f"unknown tie_break rule {self.tie_break!r}")


DEFAULT_OPTIONS = SolveOptions()


@dataclass(frozen=True)
class SolveResult:
    portfolio: np.ndarray
    utility: float
    kkt_residual: float
    iterations: int


def mv_utility(alpha: float, b, mu, sigma) -> float:
    """<b, mu> - alpha <b, Sigma b>."""
    b = np.asarray(b, dtype=np.float64)
    return float(b @ mu - alpha * (b @ sigma @ b))


def kkt_residual(b, alpha: float, m: Moments) -> float:
    """Largest complementary-slackness / stationarity violation of ``b``.

    With g = mu - 2 alpha Sigma b and lam = max_j g_j this is
    max_j b_j (lam - g_j); it is zero exactly at optimizers, and the
    duality gap is at most m times this value.
    """
    b = np.asarray(b, dtype=np.float64)
    return float(_kernels.kkt_residual(b, m.mu, m.sigma, float(alpha)))


def project_simplex(y) -> np.ndarray:
    return _kernels.project_simplex(np.asarray(y, dtype=np.float64))


def raise_for_status(status: int, b, r: float, iters: int, lo: float):
    """Translate a kernel status code into the matching exception."""
    if status == _kernels.CERTIFIED:
        return
    if status == _kernels.NONFINITE:
        raise InvalidMomentsError("moments contain non-finite values")
    if status == _kernels.ASYMMETRIC:
        raise InvalidMomentsError("covariance is not symmetric")
    if status == _kernels.NOT_PSD:
        raise InvalidMomentsError(f"covariance is not PSD (min eigenvalue {lo:.3g})")
    raise ConvergenceError(
        f"no KKT certificate after {iters} iterations (residual {r:.3g})",
        portfolio=np.asarray(b), residual=float(r), iterations=int(iters))


def solve_mv(alpha, m: Moments, opts: SolveOptions = DEFAULT_OPTIONS,
             warm_start=None) -> SolveResult:
    """Maximize the M-V utility over the simplex.

    Projected-gradient ascent (step 1 / (2 alpha lambda_max + 1)) whose
    iterates are periodically polished by an exact KKT solve on their
    support. ``warm_start`` (a previous solution) lets the solver try that
    solution's support first, which is the common case in sequential use
    where the moments move only slightly between calls.
    """
    alpha = check_alpha(alpha)
    mu, sigma = m.mu, m.sigma
    if warm_start is None:
        b0, use_warm = np.full(mu.size, 1.0 / mu.size), False
    else:
        b0, use_warm = np.asarray(warm_start, dtype=np.float64), True
    b, r, iters, status, lo = _kernels.solve_full(
        mu, sigma, alpha, b0, use_warm, opts.kkt_tolerance, opts.max_iterations)
    raise_for_status(status, b, r, iters, lo)
    return SolveResult(b, float(_kernels.utility(b, mu, sigma, alpha)), float(r), int(iters))


def _simplex_lattice(m: int, steps: int) -> np.ndarray:
    # Stars and bars: choose m-1 bar positions among steps + m - 1 slots.
    bars = np.array(list(itertools.combinations(range(steps + m - 1), m - 1)), dtype=np.int64)
    if bars.size == 0:
        return np.full((1, m), float(steps))
    edges = np.hstack([np.full((bars.shape[0], 1), -1), bars,
                       np.full((bars.shape[0], 1), steps + m - 1)])
    return (np.diff(edges, axis=1) - 1).astype(np.float64)


def brute_force_mv(alpha, m: Moments, grid_step: float = 0.01) -> SolveResult:
    """Exhaustive search over the lattice {b : b_j = k * grid_step} of the simplex."""
    alpha = check_alpha(alpha)
    steps = round(1.0 / grid_step)
    if steps < 1 or abs(steps * grid_step - 1.0) > 1e-9:
        raise ValueError(f"grid_step {grid_step} does not divide 1 evenly")
    n_assets = m.m
    n_points = math.comb(steps + n_assets - 1, n_assets - 1)
    if n_assets > 4 or n_points > _BRUTE_FORCE_MAX_POINTS:
        raise ResourceLimitError(
            f"lattice with m={n_assets}, step={grid_step} has {n_points} points")
    B = _simplex_lattice(n_assets, steps) / steps
    vals = B @ m.mu - alpha * np.einsum("ij,jk,ik->i", B, m.sigma, B)
    i = int(np.argmax(vals))
    b = B[i]
    return SolveResult(b, float(vals[i]), kkt_residual(b, alpha, m), int(n_points))
