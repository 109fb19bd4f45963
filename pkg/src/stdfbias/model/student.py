"""Univariate Student-t distribution function.

Evaluated through the regularized incomplete beta function,

    P(T > |t|) = I_{nu / (nu + t^2)}(nu / 2, 1 / 2) / 2,

which keeps the reflection F(-t) = 1 - F(t) exact.
"""
import numpy as np
from scipy.special import betainc

from stdfbias.errors import DomainError


def student_cdf(t, nu):
    """Student-t c.d.f. with ``nu`` degrees of freedom.

    :param t: Evaluation point(s), any real (infinities allowed).
    :param nu: Degrees of freedom, ``nu > 0``.
    :return: A float for scalar input, an array otherwise.
    """
    if not nu > 0:
        raise DomainError(f'Student degrees of freedom must be positive, got {nu}')

    t = np.asarray(t, dtype=float)

    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        tail = 0.5 * betainc(0.5 * nu, 0.5, nu / (nu + t * t))

    cdf = np.where(t > 0, 1.0 - tail, tail)

    return float(cdf) if cdf.ndim == 0 else cdf
