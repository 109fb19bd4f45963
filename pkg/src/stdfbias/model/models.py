"""
stdfbias

This file is part of stdfbias, a library for bias-corrected nonparametric
estimation of stable tail dependence functions.

Reference bivariate models. Each model knows its stable tail dependence
function L (s.t.d.f.), its Pickands dependence function A(t) = L(1 - t, t), the
partial derivatives of L where they have a closed form, the second-order
function M for the models with rho = -1, its joint and marginal c.d.f.s and an
exact sampler (see ``draw``; seeding lives in :mod:`stdfbias.model.sampler`).

MIT License
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, Dict, Type

import numpy as np
from scipy import stats
from scipy.special import ndtr

from stdfbias.errors import DomainError, ModelParameterError, UnsupportedOperationError
from stdfbias.model.frailty import (conditional_inversion, log_positive_stable,
                                    logistic_min_stable)
from stdfbias.model.student import student_cdf

NUMERIC_M_MIN_T = 10.0


def _as_point(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)

    if x.shape[-1:] != (2,):
        raise DomainError(f'Reference models are bivariate, got a point of shape {x.shape}')
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError(f'Points must have finite nonnegative coordinates, got {x}')

    return x


def _scalar(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def logistic_stdf(x, y, s):
    """Symmetric logistic s.t.d.f. (x^(1/s) + y^(1/s))^s, scaled by max(x, y)."""
    m = np.maximum(x, y)

    with np.errstate(divide='ignore', invalid='ignore'):
        inner = (x / m) ** (1.0 / s) + (y / m) ** (1.0 / s)
        value = m * inner ** s

    return np.where(m > 0, value, 0.0)


def logistic_partial_1(x, y, s):
    value = logistic_stdf(x, y, s)

    with np.errstate(divide='ignore', invalid='ignore'):
        return (x / value) ** (1.0 / s - 1.0)


def mixed_stdf(x, y):
    """Mixed s.t.d.f. (x^2 + y^2 + xy) / (x + y)."""
    total = x + y

    with np.errstate(divide='ignore', invalid='ignore'):
        value = total - x * y / total

    return np.where(total > 0, value, 0.0)


def mixed_partial_1(x, y):
    with np.errstate(divide='ignore', invalid='ignore'):
        return (x * x + 2.0 * x * y) / (x + y) ** 2


@dataclass(frozen=True)
class TailModel(ABC):
    """A bivariate reference distribution with closed-form tail dependence."""
    tag: ClassVar[str] = ''

    @abstractmethod
    def _stdf(self, x, y):
        ...

    def _partial_1(self, x, y):
        raise UnsupportedOperationError(f'{self} has no closed-form partial derivative')

    def _partial_2(self, x, y):
        # every reference model is exchangeable
        return self._partial_1(y, x)

    def true_stdf(self, x):
        """L(x) at a point of R_+^2 (or an array of points, last axis of size 2)."""
        x = _as_point(x)
        return _scalar(self._stdf(x[..., 0], x[..., 1]))

    def true_pickands(self, t):
        """A(t) = L(1 - t, t) for t in [0, 1]."""
        t = np.asarray(t, dtype=float)

        if np.any(~(t >= 0) | ~(t <= 1)):
            raise DomainError(f'Pickands argument must lie in [0, 1], got {t}')

        return _scalar(self._stdf(1.0 - t, t))

    def true_partial_stdf(self, j: int, x):
        """First partial derivative of L with respect to coordinate ``j`` (0 or 1)."""
        x = _as_point(x)

        if j not in (0, 1):
            raise DomainError(f'Coordinate index must be 0 or 1, got {j}')
        if np.any(x[..., j] <= 0):
            raise DomainError('Partial derivatives need a positive coordinate')

        partial = self._partial_1 if j == 0 else self._partial_2

        return _scalar(partial(x[..., 0], x[..., 1]))

    def true_second_order_M(self, x):
        raise UnsupportedOperationError(f'{self} has no closed-form second-order function')

    def numeric_M_limit(self, x, t: float):
        raise UnsupportedOperationError(f'{self} has no closed-form joint c.d.f. on the '
                                        'second-order scale')

    @abstractmethod
    def cdf(self, x, y):
        """Joint c.d.f. P(X <= x, Y <= y)."""

    @abstractmethod
    def marginal_cdf(self, x):
        """Common marginal c.d.f."""

    @abstractmethod
    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. draws as an (n, 2) array."""


@dataclass(frozen=True)
class BPII(TailModel):
    """Bivariate Pareto of type II, survival (1 + x + y)^-(beta - 2)."""
    beta: float
    tag: ClassVar[str] = 'bpii'

    def __post_init__(self):
        if not self.beta > 2:
            raise ModelParameterError(f'BPII needs beta > 2, got {self.beta}')

    @property
    def p(self) -> float:
        return 1.0 / (self.beta - 2.0)

    def _negative_logistic(self, x, y):
        # (x^-p + y^-p)^(-1/p), vanishing on the axes
        m = np.minimum(x, y)

        with np.errstate(divide='ignore', invalid='ignore'):
            inner = (x / m) ** (-self.p) + (y / m) ** (-self.p)
            value = m * inner ** (-1.0 / self.p)

        return np.where(m > 0, value, 0.0)

    def _stdf(self, x, y):
        return x + y - self._negative_logistic(x, y)

    def _partial_1(self, x, y):
        with np.errstate(divide='ignore', invalid='ignore'):
            return 1.0 - (self._negative_logistic(x, y) / x) ** (1.0 + self.p)

    def cdf(self, x, y):
        q = self.beta - 2.0
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        y = np.maximum(np.asarray(y, dtype=float), 0.0)

        return _scalar(1.0 - (1.0 + x) ** -q - (1.0 + y) ** -q + (1.0 + x + y) ** -q)

    def marginal_cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _scalar(1.0 - (1.0 + x) ** -(self.beta - 2.0))

    def draw(self, rng, n):
        w = rng.gamma(self.beta - 2.0, 1.0, size=n)
        e = rng.exponential(size=(n, 2))

        return e / w[:, None]


@dataclass(frozen=True)
class StudentDep(TailModel):
    """Bivariate Student-t with ``nu`` degrees of freedom and correlation ``theta``."""
    nu: float
    theta: float = 0.0
    tag: ClassVar[str] = 'student'

    def __post_init__(self):
        if not self.nu > 0:
            raise ModelParameterError(f'Student needs nu > 0, got {self.nu}')
        if not -1 < self.theta < 1:
            raise ModelParameterError(f'Student needs theta in (-1, 1), got {self.theta}')

    def _z(self, ratio):
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            return ((ratio ** (1.0 / self.nu) - self.theta) / np.sqrt(1.0 - self.theta ** 2)
                    * np.sqrt(self.nu + 1.0))

    def _partial_1(self, x, y):
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = np.where(y > 0, x / np.where(y > 0, y, 1.0), np.inf)

        return student_cdf(self._z(ratio), self.nu + 1.0)

    def _stdf(self, x, y):
        value = x * self._partial_1(x, y) + y * self._partial_1(y, x)
        return np.where((x > 0) & (y > 0), value, x + y)

    def _correlation(self):
        return np.array([[1.0, self.theta], [self.theta, 1.0]])

    def cdf(self, x, y):
        points = np.column_stack((np.ravel(x), np.ravel(y)))
        dist = stats.multivariate_t(loc=np.zeros(2), shape=self._correlation(), df=self.nu,
                                    seed=0)

        return _scalar(np.reshape(dist.cdf(points), np.shape(x)))

    def marginal_cdf(self, x):
        return student_cdf(x, self.nu)

    def draw(self, rng, n):
        chol = np.linalg.cholesky(self._correlation())
        z = rng.standard_normal((n, 2)) @ chol.T
        chi2 = rng.chisquare(self.nu, size=n)

        return z / np.sqrt(chi2 / self.nu)[:, None]


def cauchy() -> StudentDep:
    """Whole-plane bivariate Cauchy, the Student model with one degree of freedom."""
    return StudentDep(nu=1.0, theta=0.0)


@dataclass(frozen=True)
class Gaussian(TailModel):
    """Bivariate standard normal with correlation ``tau``; asymptotically independent."""
    tau: float
    tag: ClassVar[str] = 'gaussian'

    def __post_init__(self):
        if not -1 < self.tau < 1:
            raise ModelParameterError(f'Gaussian needs tau in (-1, 1), got {self.tau}')

    def _stdf(self, x, y):
        return x + y

    def _partial_1(self, x, y):
        return np.ones_like(x)

    def _correlation(self):
        return np.array([[1.0, self.tau], [self.tau, 1.0]])

    def cdf(self, x, y):
        points = np.column_stack((np.ravel(x), np.ravel(y)))
        dist = stats.multivariate_normal(mean=np.zeros(2), cov=self._correlation())

        return _scalar(np.reshape(dist.cdf(points), np.shape(x)))

    def marginal_cdf(self, x):
        return _scalar(ndtr(np.asarray(x, dtype=float)))

    def draw(self, rng, n):
        chol = np.linalg.cholesky(self._correlation())
        return rng.standard_normal((n, 2)) @ chol.T


@dataclass(frozen=True)
class SymLogistic(TailModel):
    """Bivariate extreme-value law with Gumbel margins and symmetric logistic L."""
    s: float
    tag: ClassVar[str] = 'logistic'

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ModelParameterError(f'Symmetric logistic needs s in (0, 1], got {self.s}')

    def _stdf(self, x, y):
        return logistic_stdf(x, y, self.s)

    def _partial_1(self, x, y):
        return logistic_partial_1(x, y, self.s)

    def true_second_order_M(self, x):
        x = _as_point(x)
        u, v = x[..., 0], x[..., 1]
        value = self._stdf(u, v)
        power = 1.0 + 1.0 / self.s

        with np.errstate(divide='ignore', invalid='ignore'):
            m = 0.5 * value ** 2 * ((u / value) ** power + (v / value) ** power - 1.0)

        return _scalar(np.where(value > 0, m, 0.0))

    def numeric_M_limit(self, x, t):
        x = _as_point(x)
        _check_t(t)
        # exp(-F_j^{-1}(1 - x_j / t)) for Gumbel margins
        w = -np.log1p(-x / t)
        tail = -np.expm1(-self._stdf(w[..., 0], w[..., 1]))

        return _scalar(t * (t * tail - self._stdf(x[..., 0], x[..., 1])))

    def cdf(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)

        return _scalar(np.exp(-logistic_stdf(np.exp(-x), np.exp(-y), self.s)))

    def marginal_cdf(self, x):
        return _scalar(np.exp(-np.exp(-np.asarray(x, dtype=float))))

    def draw(self, rng, n):
        if self.s == 1.0:
            return -np.log(rng.exponential(size=(n, 2)))

        return -logistic_min_stable(rng, n, self.s)


@dataclass(frozen=True)
class Archimax(TailModel):
    """Archimax copula F(u, v) = 1 / (1 + l(1/u - 1, 1/v - 1)), uniform margins.

    Built from the Clayton generator with index 1 and a generator s.t.d.f. l,
    which is also the s.t.d.f. of the copula.
    """

    @abstractmethod
    def _min_stable_pair(self, rng, n):
        """(n, 2) draws xi with P(xi_1 > a, xi_2 > b) = exp(-l(a, b))."""

    def true_second_order_M(self, x):
        x = _as_point(x)
        u, v = x[..., 0], x[..., 1]
        value = self._stdf(u, v)

        return _scalar(u * u * self._partial_1(u, v) + v * v * self._partial_2(u, v)
                       - value ** 2)

    def numeric_M_limit(self, x, t):
        x = _as_point(x)
        _check_t(t)
        # Clayton generator at the uniform quantile 1 - x / t
        phi = x / (t - x)
        generator = self._stdf(phi[..., 0], phi[..., 1])
        tail = generator / (1.0 + generator)

        return _scalar(t * (t * tail - self._stdf(x[..., 0], x[..., 1])))

    def cdf(self, x, y):
        u = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        v = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)

        with np.errstate(divide='ignore', invalid='ignore'):
            value = 1.0 / (1.0 + self._stdf(1.0 / u - 1.0, 1.0 / v - 1.0))

        return _scalar(np.where((u > 0) & (v > 0), value, 0.0))

    def marginal_cdf(self, x):
        return _scalar(np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def draw(self, rng, n):
        w = rng.exponential(size=n)
        xi = self._min_stable_pair(rng, n)

        return w[:, None] / (w[:, None] + xi)


@dataclass(frozen=True)
class ArchimaxLogistic(Archimax):
    """Archimax copula with the symmetric logistic generator."""
    s: float
    tag: ClassVar[str] = 'archimax-logistic'

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ModelParameterError(f'Logistic generator needs s in (0, 1], got {self.s}')

    def _stdf(self, x, y):
        return logistic_stdf(x, y, self.s)

    def _partial_1(self, x, y):
        return logistic_partial_1(x, y, self.s)

    def _min_stable_pair(self, rng, n):
        if self.s == 1.0:
            return rng.exponential(size=(n, 2))

        return np.exp(logistic_min_stable(rng, n, self.s))


@dataclass(frozen=True)
class ArchimaxMixed(Archimax):
    """Archimax copula with the mixed generator (x^2 + y^2 + xy) / (x + y)."""
    tag: ClassVar[str] = 'archimax-mixed'

    def _stdf(self, x, y):
        return mixed_stdf(x, y)

    def _partial_1(self, x, y):
        return mixed_partial_1(x, y)

    def _min_stable_pair(self, rng, n):
        return conditional_inversion(rng, n, mixed_stdf, mixed_partial_1)


def _check_t(t):
    if not t >= NUMERIC_M_MIN_T:
        raise DomainError(f'The second-order quotient needs t >= {NUMERIC_M_MIN_T:g}, got {t}')


MODELS: Dict[str, Type[TailModel]] = {
    model.tag: model
    for model in (BPII, StudentDep, Gaussian, SymLogistic, ArchimaxLogistic, ArchimaxMixed)
}


def build_model(tag: str, **params) -> TailModel:
    """Builds a reference model from its tag and keyword parameters.

    Unused keyword parameters set to ``None`` are ignored, which lets command
    line flags be forwarded wholesale.
    """
    params = {key: value for key, value in params.items() if value is not None}

    if tag == 'cauchy':
        return cauchy()
    if tag not in MODELS:
        raise ModelParameterError(
            f"Unknown model '{tag}', expected one of {sorted([*MODELS, 'cauchy'])}")

    try:
        return MODELS[tag](**params)
    except TypeError as error:
        raise ModelParameterError(f"Bad parameters for model '{tag}': {error}") from error
