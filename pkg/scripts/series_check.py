"""Gaussian expected-log series versus 80-node Gauss-Hermite and adaptive
quadrature, over the ratio q = sigma_b / mu_b.

    python scripts/series_check.py
"""

import math

import numpy as np
from scipy import integrate

from mvonline.analytics import gauss_hermite_expected_log, normal_log_series


def quad(mu, s):
    f = lambda z: math.log(abs(mu + s * z)) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    z0 = -mu / s
    if z0 <= -40:
        return integrate.quad(f, -40, 40, limit=400, epsabs=1e-15)[0]
    return sum(integrate.quad(f, lo, hi, limit=400, epsabs=1e-15)[0]
               for lo, hi in ((-40, z0), (z0, 40)))


def main():
    print(f"{'q':>6} {'terms':>5} {'series-GH':>11} {'series-quad':>12} {'GH-quad':>11}")
    for q in np.round(np.arange(0.02, 0.31, 0.02), 2):
        v, n = normal_log_series(1.0, q, 1e-12, return_terms=True)
        gh, qd = gauss_hermite_expected_log(1.0, q), quad(1.0, q)
        print(f"{q:6.2f} {n:5d} {v - gh:+11.2e} {v - qd:+12.2e} {gh - qd:+11.2e}")


if __name__ == "__main__":
    main()
