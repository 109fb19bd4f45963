"""Frailty building blocks shared by the exact samplers.

All helpers draw from a caller-owned :class:`numpy.random.Generator` in a fixed
order, so a sampler is deterministic given its seed.
"""
from typing import Callable

import numpy as np

BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200


def log_positive_stable(rng: np.random.Generator, n: int, s: float) -> np.ndarray:
    """Logarithm of positive ``s``-stable draws with Laplace transform exp(-u^s).

    Kanter's representation: with U uniform on (0, pi) and E unit exponential,

        S = sin(sU) / sin(U)^(1/s) * (sin((1 - s)U) / E)^((1 - s) / s).

    Computed on the log scale, since S is extremely heavy tailed for small s.
    """
    u = np.pi * (1.0 - rng.random(n))  # (0, pi]
    e = rng.exponential(size=n)

    if s == 1.0:
        return np.zeros(n)

    with np.errstate(divide='ignore'):
        log_s = (np.log(np.sin(s * u)) - np.log(np.sin(u)) / s
                 + (1.0 - s) / s * (np.log(np.sin((1.0 - s) * u)) - np.log(e)))

    return log_s


def logistic_min_stable(rng: np.random.Generator, n: int, s: float) -> np.ndarray:
    """Log of a bivariate min-stable exponential pair with logistic dependence.

    Returns log(xi) where P(xi_1 > a, xi_2 > b) = exp(-(a^(1/s) + b^(1/s))^s):
    xi_j = (E_j / S)^s with S positive s-stable and E_j unit exponentials.
    """
    log_s = log_positive_stable(rng, n, s)
    log_e = np.log(rng.exponential(size=(n, 2)))

    return s * (log_e - log_s[:, None])


def conditional_inversion(rng: np.random.Generator, n: int,
                          generator: Callable[[np.ndarray, np.ndarray], np.ndarray],
                          partial_1: Callable[[np.ndarray, np.ndarray], np.ndarray]
                          ) -> np.ndarray:
    """Min-stable exponential pair drawn from an extreme-value copula.

    The copula is C(z1, z2) = exp(-l(-log z1, -log z2)) for a stable tail
    dependence function ``generator`` whose first partial derivative is
    ``partial_1``. Z1 is uniform and Z2 solves dC/dz1(Z1, Z2) = Q for an
    independent uniform Q, by vectorized bisection.

    :return: Array (n, 2) of xi_j = -log Z_j.
    """
    z1 = 1.0 - rng.random(n)  # (0, 1]
    q = rng.random(n)
    a = -np.log(z1)

    def conditional(z2):
        b = -np.log(z2)
        return np.exp(-generator(a, b)) * partial_1(a, b) / z1

    lo = np.zeros(n)
    hi = np.ones(n)

    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        below = conditional(mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)

        if np.max(hi - lo) < BISECT_TOL:
            break

    z2 = 0.5 * (lo + hi)

    return np.column_stack((a, -np.log(z2)))
