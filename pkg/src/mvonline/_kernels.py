"""Numba kernels for the per-step hot path.

Everything here works on plain float64 arrays and is wrapped by the public
modules, which own validation and error reporting. The step-wise strategy
classes and the fused run loops at the bottom call the same helpers, so both
paths produce bit-identical portfolios.
"""

import numpy as np
from numba import njit

# Status codes returned by solve_full and the run loops.
CERTIFIED = 0
NOT_CONVERGED = 1
NONFINITE = 2
ASYMMETRIC = 3
NOT_PSD = 4
BANKRUPT = 5

PSD_TOL = 1e-8
ASYM_TOL = 1e-9
TIE_TOL = 1e-12
ENUM_LIMIT = 12
ENUM_AFTER = 200

_NEG_TOL = 1e-12
_PIVOT_TOL = 1e-13

OBJ_SHARPE = 0
OBJ_LOG = 1


# ---------------------------------------------------------------- moments

@njit(cache=True)
def welford_update(mean, scatter, x, n_new):
    """Rank-one update of mean and centered scatter, in place.

    Uses scatter += (n-1)/n * d d^T with d = x - old_mean, which is exactly
    symmetric in floating point.
    """
    m = mean.shape[0]
    d = np.empty(m)
    for i in range(m):
        d[i] = x[i] - mean[i]
    inv = 1.0 / n_new
    for i in range(m):
        mean[i] += d[i] * inv
    c = (n_new - 1.0) * inv
    for i in range(m):
        di = c * d[i]
        for j in range(i, m):
            v = di * d[j]
            scatter[i, j] += v
            if j != i:
                scatter[j, i] += v


@njit(cache=True)
def inspect_moments(mu, sigma):
    """Return (all_finite, max_asymmetry, scale, min_eig, max_eig)."""
    m = mu.shape[0]
    scale = 1.0
    asym = 0.0
    for i in range(m):
        if not np.isfinite(mu[i]):
            return False, 0.0, 1.0, 0.0, 0.0
        for j in range(m):
            v = sigma[i, j]
            if not np.isfinite(v):
                return False, 0.0, 1.0, 0.0, 0.0
            if abs(v) > scale:
                scale = abs(v)
            d = abs(v - sigma[j, i])
            if d > asym:
                asym = d
    w = np.linalg.eigvalsh(sigma)
    return True, asym, scale, w[0], w[-1]


@njit(cache=True)
def mean_log_return(atoms, counts, b):
    """Count-weighted mean of log <b, atom>; -inf if any return is <= 0."""
    total = 0.0
    weight = 0.0
    for i in range(atoms.shape[0]):
        r = 0.0
        for j in range(atoms.shape[1]):
            r += atoms[i, j] * b[j]
        if r <= 0.0:
            return -np.inf
        total += counts[i] * np.log(r)
        weight += counts[i]
    return total / weight


@njit(cache=True)
def sharpe_score(b, mu, sigma):
    """<b, mu> / sqrt(<b, Sigma b>), +inf (or nan at zero mean) when riskless."""
    m = b.shape[0]
    mean = 0.0
    var = 0.0
    for i in range(m):
        mean += b[i] * mu[i]
        s = 0.0
        for j in range(m):
            s += sigma[i, j] * b[j]
        var += b[i] * s
    if var <= 0.0:
        if mean > 0.0:
            return np.inf
        if mean < 0.0:
            return -np.inf
        return np.nan
    return mean / np.sqrt(var)


# ----------------------------------------------------------------- solver

@njit(cache=True)
def project_simplex(y):
    """Euclidean projection onto {b >= 0, sum b = 1} (sort-based)."""
    m = y.shape[0]
    u = np.sort(y)[::-1]
    css = 0.0
    theta = 0.0
    for k in range(m):
        css += u[k]
        t = (css - 1.0) / (k + 1)
        if u[k] - t > 0.0:
            theta = t
    out = np.empty(m)
    for j in range(m):
        v = y[j] - theta
        out[j] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def kkt_residual(b, mu, sigma, alpha):
    m = b.shape[0]
    g = mu - 2.0 * alpha * (sigma @ b)
    lam = g.max()
    r = 0.0
    for j in range(m):
        v = b[j] * (lam - g[j])
        if g[j] > lam:
            v += g[j] - lam
        if v > r:
            r = v
    return r


@njit(cache=True)
def utility(b, mu, sigma, alpha):
    return b @ mu - alpha * (b @ (sigma @ b))


@njit(cache=True)
def _gauss_solve(A, rhs):
    """Gaussian elimination with partial pivoting; (x, ok=False) if singular."""
    n = A.shape[0]
    M = A.copy()
    x = rhs.copy()
    scale = 0.0
    for i in range(n):
        for j in range(n):
            if abs(M[i, j]) > scale:
                scale = abs(M[i, j])
    for c in range(n):
        p = c
        for r in range(c + 1, n):
            if abs(M[r, c]) > abs(M[p, c]):
                p = r
        if abs(M[p, c]) <= _PIVOT_TOL * scale:
            return x, False
        if p != c:
            for j in range(n):
                t = M[c, j]
                M[c, j] = M[p, j]
                M[p, j] = t
            t = x[c]
            x[c] = x[p]
            x[p] = t
        for r in range(c + 1, n):
            f = M[r, c] / M[c, c]
            if f != 0.0:
                for j in range(c, n):
                    M[r, j] -= f * M[c, j]
                x[r] -= f * x[c]
    for c in range(n - 1, -1, -1):
        s = x[c]
        for j in range(c + 1, n):
            s -= M[c, j] * x[j]
        x[c] = s / M[c, c]
    return x, True


@njit(cache=True)
def support_solve(mu, sigma, alpha, mask):
    """Maximize the M-V objective on the face {b_j = 0 for j outside mask}.

    Solves the equality-constrained KKT system
        [2 alpha S_ss  1] [b  ]   [mu_s]
        [1^T           0] [lam] = [1   ]
    and returns (b, ok). ok is False when the solution leaves the simplex
    or the system is inconsistent.
    """
    m = mu.shape[0]
    k = 0
    for j in range(m):
        if mask[j]:
            k += 1
    idx = np.empty(k, dtype=np.int64)
    p = 0
    for j in range(m):
        if mask[j]:
            idx[p] = j
            p += 1
    K = np.zeros((k + 1, k + 1))
    rhs = np.zeros(k + 1)
    for a in range(k):
        for c in range(k):
            K[a, c] = 2.0 * alpha * sigma[idx[a], idx[c]]
        K[a, k] = 1.0
        K[k, a] = 1.0
        rhs[a] = mu[idx[a]]
    rhs[k] = 1.0
    b = np.zeros(m)
    sol, solved = _gauss_solve(K, rhs)
    if not solved:
        sol = np.linalg.lstsq(K, rhs)[0]
        resid = K @ sol - rhs
        scale = 1.0 + np.abs(rhs).max()
        if np.abs(resid).max() > 1e-10 * scale:
            return b, False
    for a in range(k):
        v = sol[a]
        if not np.isfinite(v) or v < -_NEG_TOL:
            return b, False
        b[idx[a]] = v if v > 0.0 else 0.0
    s = b.sum()
    if s <= 0.0:
        return b, False
    return b / s, True


@njit(cache=True)
def _enumerate_supports(mu, sigma, alpha, tol):
    m = mu.shape[0]
    best = np.zeros(m)
    best_u = -np.inf
    best_r = np.inf
    found = False
    mask = np.zeros(m, dtype=np.bool_)
    for code in range(1, 1 << m):
        for j in range(m):
            mask[j] = (code >> j) & 1 == 1
        b, ok = support_solve(mu, sigma, alpha, mask)
        if not ok:
            continue
        r = kkt_residual(b, mu, sigma, alpha)
        if r <= tol:
            u = utility(b, mu, sigma, alpha)
            if u > best_u:
                best_u = u
                best = b
                best_r = r
                found = True
    return best, best_r, found


@njit(cache=True)
def mv_solve(mu, sigma, alpha, lam_max, b0, use_warm, tol, max_iter,
             enum_after, enum_limit):
    """Projected-gradient ascent with active-set polishing.

    Returns (b, residual, iterations, status). The gradient step is
    1 / (2 alpha lam_max + 1). Every few iterations the support of the
    iterate is polished by an exact KKT solve on that face; small problems
    that are still uncertified after ``enum_after`` iterations fall back to
    enumerating all faces.
    """
    m = mu.shape[0]
    if use_warm:
        bw, ok = support_solve(mu, sigma, alpha, b0 > 0.0)
        if ok:
            r = kkt_residual(bw, mu, sigma, alpha)
            if r <= tol:
                return bw, r, 0, CERTIFIED
    step = 1.0 / (2.0 * alpha * lam_max + 1.0)
    b = project_simplex(b0)
    best = b.copy()
    best_r = kkt_residual(b, mu, sigma, alpha)
    if best_r <= tol:
        return best, best_r, 0, CERTIFIED
    last_mask = np.zeros(m, dtype=np.bool_)
    have_last = False
    for it in range(1, max_iter + 1):
        g = mu - 2.0 * alpha * (sigma @ b)
        b = project_simplex(b + step * g)
        if it % 10 == 1:
            mask = b > 0.0
            same = have_last
            if have_last:
                for j in range(m):
                    if mask[j] != last_mask[j]:
                        same = False
                        break
            if not same:
                bp, ok = support_solve(mu, sigma, alpha, mask)
                if ok:
                    rp = kkt_residual(bp, mu, sigma, alpha)
                    if rp <= tol:
                        return bp, rp, it, CERTIFIED
                last_mask = mask
                have_last = True
            r = kkt_residual(b, mu, sigma, alpha)
            if r < best_r:
                best_r = r
                best = b.copy()
            if r <= tol:
                return b, r, it, CERTIFIED
        if it == enum_after and m <= enum_limit:
            be, re, found = _enumerate_supports(mu, sigma, alpha, tol)
            if found:
                return be, re, it, CERTIFIED
    return best, best_r, max_iter, NOT_CONVERGED


@njit(cache=True)
def linear_solution(mu):
    """Uniform over the max-mean assets: the min-norm point of that face."""
    m = mu.shape[0]
    top = mu.max()
    thr = top - TIE_TOL * max(1.0, abs(top))
    b = np.zeros(m)
    k = 0
    for j in range(m):
        if mu[j] >= thr:
            b[j] = 1.0
            k += 1
    return b / k


@njit(cache=True)
def min_norm_optimal(b_star, alpha, mu, sigma, tol, enum_limit):
    """Minimum-norm element of the optimizer set containing ``b_star``.

    On the optimal face Sigma b and <mu, b> are constant, so the set is
    {b in simplex : A b = A b_star} with A = [1; mu; Sigma]. Its min-norm
    point is a least-norm solution restricted to some support, found by
    scanning all supports.
    """
    m = mu.shape[0]
    if m > enum_limit:
        return b_star
    scale = max(1.0, np.abs(sigma).max())
    A = np.empty((m + 2, m))
    for j in range(m):
        A[0, j] = 1.0
        A[1, j] = mu[j]
        for i in range(m):
            A[2 + i, j] = sigma[i, j] / scale
    c = A @ b_star
    cscale = 1.0 + np.abs(c).max()
    best = b_star
    best_norm = b_star @ b_star
    for code in range(1, 1 << m):
        k = 0
        for j in range(m):
            if (code >> j) & 1 == 1:
                k += 1
        idx = np.empty(k, dtype=np.int64)
        p = 0
        for j in range(m):
            if (code >> j) & 1 == 1:
                idx[p] = j
                p += 1
        A_S = np.empty((m + 2, k))
        for a in range(k):
            A_S[:, a] = A[:, idx[a]]
        x = np.linalg.lstsq(A_S, c)[0]
        if np.abs(A_S @ x - c).max() > 1e-10 * cscale:
            continue
        if x.min() < -_NEG_TOL:
            continue
        cand = np.zeros(m)
        for a in range(k):
            cand[idx[a]] = x[a] if x[a] > 0.0 else 0.0
        s = cand.sum()
        if s <= 0.0:
            continue
        cand = cand / s
        nrm = cand @ cand
        if nrm < best_norm - 1e-15:
            best = cand
            best_norm = nrm
    if kkt_residual(best, mu, sigma, alpha) > tol:
        return b_star
    return best


@njit(cache=True)
def solve_full(mu, sigma, alpha, b0, use_warm, tol, max_iter):
    """Checked M-V solve. Returns (b, residual, iterations, status, min_eig)."""
    m = mu.shape[0]
    finite, asym, scale, lo, hi = inspect_moments(mu, sigma)
    if not finite:
        return np.full(m, 1.0 / m), np.inf, 0, NONFINITE, lo
    if asym > ASYM_TOL * scale:
        return np.full(m, 1.0 / m), np.inf, 0, ASYMMETRIC, lo
    if lo < -PSD_TOL:
        return np.full(m, 1.0 / m), np.inf, 0, NOT_PSD, lo
    if alpha == 0.0 or hi <= 0.0:
        b = linear_solution(mu)
        return b, kkt_residual(b, mu, sigma, alpha), 0, CERTIFIED, lo
    b, r, iters, status = mv_solve(mu, sigma, alpha, max(hi, 0.0), b0, use_warm,
                                   tol, max_iter, ENUM_AFTER, ENUM_LIMIT)
    if status != CERTIFIED:
        return b, r, iters, status, lo
    if lo <= 1e-12 * max(1.0, hi):
        b = min_norm_optimal(b, alpha, mu, sigma, tol, ENUM_LIMIT)
        r = kkt_residual(b, mu, sigma, alpha)
    return b, r, iters, CERTIFIED, lo


# ---------------------------------------------------------------- metrics

# Tracker state layout: n, shift, s1, c1, s2, c2, slog, clog. Sums are of the
# shifted return r - shift (shift = first return) with Neumaier compensation.
METRICS_STATE = 8


@njit(cache=True)
def _neumaier(state, i, v):
    s = state[i]
    t = s + v
    if abs(s) >= abs(v):
        state[i + 1] += (s - t) + v
    else:
        state[i + 1] += (v - t) + s
    state[i] = t


@njit(cache=True)
def metrics_record(state, r):
    """Fold one portfolio return into ``state``; False if r is not positive."""
    if not (r > 0.0) or not np.isfinite(r):
        return False
    state[0] += 1.0
    if state[0] == 1.0:
        state[1] = r
    d = r - state[1]
    _neumaier(state, 2, d)
    _neumaier(state, 4, d * d)
    _neumaier(state, 6, np.log(r))
    return True


# ------------------------------------------------------------- selection

@njit(cache=True)
def select_candidate(cands, scores, anchor):
    """Index of the arg-max-set member closest to ``anchor``.

    The arg-max set keeps every score within a relative 1e-12 band of the
    best; among equally close members the earliest (smallest alpha) wins.
    """
    k = scores.shape[0]
    best = -np.inf
    for i in range(k):
        if scores[i] > best:
            best = scores[i]
    if best == np.inf:
        thr = np.inf
    elif best == -np.inf:
        thr = -np.inf
    else:
        thr = best - TIE_TOL * abs(best)
    pick = -1
    pick_d = np.inf
    for i in range(k):
        if not (scores[i] >= thr):
            continue
        d = 0.0
        for j in range(cands.shape[1]):
            e = cands[i, j] - anchor[j]
            d += e * e
        if pick < 0 or d < pick_d:
            pick = i
            pick_d = d
    if pick < 0:
        pick = 0
    return pick


# -------------------------------------------------------------- run loops

@njit(cache=True)
def run_constant(path, alpha, h, tol, max_iter):
    """Constant-alpha strategy over a whole return path.

    Returns (portfolios, steps_done, status). Row n-1 of ``portfolios`` is
    the portfolio played at step n, computed from path[:n-1].
    """
    N, m = path.shape
    out = np.empty((N, m))
    mean = np.zeros(m)
    scatter = np.zeros((m, m))
    last = np.full(m, 1.0 / m)
    solved = False
    for t in range(N):
        if t < h:
            out[t] = 1.0 / m
        else:
            sigma = scatter / t
            b, r, it, status, lo = solve_full(mean.copy(), sigma, alpha, last,
                                              solved, tol, max_iter)
            if status != CERTIFIED:
                return out, t, status
            out[t] = b
            last = b
            solved = True
        welford_update(mean, scatter, path[t], float(t + 1))
    return out, N, CERTIFIED


@njit(cache=True)
def run_adaptive(path, atoms, atom_ids, alphas, h, objective, tol, max_iter):
    """Adaptive-alpha strategy over a whole path.

    ``atoms`` holds the distinct rows of ``path`` in order of first
    appearance and ``atom_ids`` maps each step to its row. Returns
    (portfolios, selected_index, steps_done, status); the selected index is
    -1 during warm-up.
    """
    N, m = path.shape
    k = alphas.shape[0]
    out = np.empty((N, m))
    sel = np.full(N, -1, dtype=np.int64)
    mean = np.zeros(m)
    scatter = np.zeros((m, m))
    counts = np.zeros(atoms.shape[0])
    seen = 0
    last = np.empty((k, m))
    for i in range(k):
        last[i] = 1.0 / m
    solved = False
    cands = np.empty((k, m))
    scores = np.empty(k)
    for t in range(N):
        if t < h:
            out[t] = 1.0 / m
        else:
            mu = mean.copy()
            sigma = scatter / t
            for i in range(k):
                b, r, it, status, lo = solve_full(mu, sigma, alphas[i], last[i],
                                                  solved, tol, max_iter)
                if status != CERTIFIED:
                    return out, sel, t, status
                cands[i] = b
                last[i] = b
                if objective == OBJ_SHARPE:
                    scores[i] = sharpe_score(b, mu, sigma)
                else:
                    scores[i] = mean_log_return(atoms[:seen], counts[:seen], b)
            solved = True
            if t >= 2:
                anchor = out[t - 2]
            else:
                anchor = np.full(m, 1.0 / m)
            p = select_candidate(cands, scores, anchor)
            out[t] = cands[p]
            sel[t] = p
        welford_update(mean, scatter, path[t], float(t + 1))
        a = atom_ids[t]
        if a >= seen:
            seen = a + 1
        counts[a] += 1.0
    return out, sel, N, CERTIFIED


@njit(cache=True)
def fold_metrics(returns, report_steps):
    """Run metrics_record over ``returns`` and snapshot the state.

    Returns (snapshots, steps_done); snapshot i is the state after step
    report_steps[i]. steps_done < len(returns) signals a non-positive return.
    """
    n_rep = report_steps.shape[0]
    snaps = np.zeros((n_rep, METRICS_STATE))
    state = np.zeros(METRICS_STATE)
    j = 0
    for t in range(returns.shape[0]):
        if not metrics_record(state, returns[t]):
            return snaps, t
        while j < n_rep and report_steps[j] == t + 1:
            snaps[j] = state
            j += 1
    return snaps, returns.shape[0]


@njit(cache=True)
def portfolio_returns(portfolios, path):
    N, m = path.shape
    r = np.empty(N)
    for t in range(N):
        s = 0.0
        for j in range(m):
            s += portfolios[t, j] * path[t, j]
        r[t] = s
    return r
