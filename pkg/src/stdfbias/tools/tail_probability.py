"""
stdfbias

This file is part of stdfbias, a library for bias-corrected nonparametric
estimation of stable tail dependence functions.

Failure probabilities P(X_1 > z_1 or ... or X_d > z_d) far in the joint tail,
extrapolated through the homogeneity of L:

    P ~ (p_1 + ... + p_d) L(p / (p_1 + ... + p_d)),  p_j = 1 - F_j(z_j).

The marginal probabilities p_j are either known or estimated by peaks over
threshold, fitting a generalized Pareto law to the excesses above the
(n - k)-th order statistic by probability weighted moments, or by maximum
likelihood started from the moment fit.

MIT License
"""
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import stats

from stdfbias.errors import DomainError, FitError
from stdfbias.model.models import TailModel
from stdfbias.model.sampler import Sample
from stdfbias.tools.estimators import as_estimator, delta

GAMMA_ZERO_TOL = 1e-8

Evaluator = Callable[[np.ndarray], float]


class GpdFit(NamedTuple):
    """Generalized Pareto fit of the m excesses above ``u`` out of ``n`` observations."""
    u: float
    sigma: float
    gamma: float
    m: int
    n: int

    @property
    def exceedance_fraction(self) -> float:
        return self.m / self.n

    @property
    def support_bound(self) -> float:
        return self.u - self.sigma / self.gamma if self.gamma < 0 else np.inf

    def to_record(self):
        return {'u': self.u, 'sigma': self.sigma, 'gamma': self.gamma, 'm': self.m}


@dataclass(frozen=True)
class FailureQuery:
    """Extreme levels ``z`` with either known marginal probabilities or a POT level."""
    z: Tuple[float, ...]
    p: Optional[Tuple[float, ...]] = None
    k_margin: Optional[int] = None
    fit: str = 'pwm'

    def __post_init__(self):
        if self.fit not in GPD_FITS:
            raise DomainError(f"Unknown GPD fit '{self.fit}', expected one of "
                              f"{sorted(GPD_FITS)}")
        if (self.p is None) == (self.k_margin is None):
            raise DomainError('A failure query needs exactly one of p or k_margin')
        if self.p is not None:
            if len(self.p) != len(self.z):
                raise DomainError(f'{len(self.p)} probabilities for {len(self.z)} levels')
            if not all(0 < p < 1 for p in self.p):
                raise DomainError(f'Marginal probabilities must lie in (0, 1), got {self.p}')
        if self.k_margin is not None and self.k_margin < 2:
            raise DomainError(f'k_margin must be at least 2, got {self.k_margin}')

    @property
    def mode(self) -> str:
        return 'known' if self.p is not None else 'pot'


def _simplex(p) -> Tuple[float, np.ndarray]:
    p = np.asarray(p, dtype=float)

    if p.ndim != 1 or len(p) < 2:
        raise DomainError(f'Expected at least 2 marginal probabilities, got {p}')
    if np.any(~(p > 0)):
        raise DomainError(f'Marginal probabilities must be positive, got {p}')

    total = float(np.sum(p))

    if not total < 1:
        raise DomainError(f'Marginal probabilities must sum below 1, got {total}')

    return total, p / total


def failure_prob_known_margins(p, L_estimate: Evaluator) -> float:
    """(sum p) L(p / sum p)."""
    total, direction = _simplex(p)
    return total * L_estimate(direction)


def failure_prob_second_order(p, L_agg: Evaluator, delta_estimate: Evaluator, k: int, n: int,
                              rho_hat: float) -> float:
    """First-order estimate plus (k/n)^rho (sum p)^(1 - rho) Delta(p / sum p).

    ``delta_estimate`` is Delta_{k,b} with b = 2^(-1/rho), see :func:`second_order_delta`.
    """
    if not rho_hat < 0:
        raise DomainError(f'The second-order correction needs rho < 0, got {rho_hat}')

    total, direction = _simplex(p)
    correction = (k / n) ** rho_hat * total ** (1.0 - rho_hat) * delta_estimate(direction)

    return total * L_agg(direction) + correction


def second_order_delta(source, k: int, rho_hat: float) -> Evaluator:
    if not rho_hat < 0:
        raise DomainError(f'The second-order correction needs rho < 0, got {rho_hat}')

    estimator = as_estimator(source)
    scale = 2.0 ** (-1.0 / rho_hat)

    return lambda x: delta(estimator, k, scale, x)


def gpd_fit_pwm(excesses, u: float = 0.0, n: Optional[int] = None) -> GpdFit:
    """Probability weighted moment fit of a generalized Pareto law to positive excesses.

    With b0 the mean excess and b1 the mean of (1 - (i - 1/2)/m) e_(i) over the
    ascending excesses, gamma = 2 - b0 / (b0 - 2 b1) and sigma = 2 b0 b1 / (b0 - 2 b1).

    :param excesses: At least 2 positive excesses.
    :param u: Threshold the excesses were taken over.
    :param n: Total number of observations, ``m`` when omitted.
    :raises FitError: Degenerate excesses, or a negative shape whose support ends
        before the largest excess.
    """
    excesses = np.sort(np.asarray(excesses, dtype=float))
    m = len(excesses)

    if m < 2:
        raise FitError(f'A GPD fit needs at least 2 excesses, got {m}')
    if not np.all(np.isfinite(excesses)) or np.any(excesses <= 0):
        raise FitError('GPD excesses must be finite and positive')

    b0 = np.mean(excesses)
    b1 = np.mean((1.0 - (np.arange(1, m + 1) - 0.5) / m) * excesses)
    spread = b0 - 2.0 * b1

    if not spread > 0:
        raise FitError(f'Degenerate excesses (b0 - 2 b1 = {spread:.3g})')

    gamma = float(2.0 - b0 / spread)
    sigma = float(2.0 * b0 * b1 / spread)
    fit = GpdFit(u=float(u), sigma=sigma, gamma=gamma, m=m, n=m if n is None else n)

    if gamma < 0 and not -sigma / gamma > excesses[-1]:
        raise FitError(f'Fitted support ends at {fit.support_bound:.6g}, below the largest '
                       f'observation {u + excesses[-1]:.6g}')

    return fit


def gpd_fit_mle(excesses, u: float = 0.0, n: Optional[int] = None) -> GpdFit:
    """Maximum likelihood fit of a generalized Pareto law, started from the PWM fit.

    The moment fit needs gamma < 1/2 to be consistent, the likelihood fit also covers
    heavier tails.

    :raises FitError: As :func:`gpd_fit_pwm`, or when the optimizer ends outside the
        admissible parameters.
    """
    start = gpd_fit_pwm(excesses, u=u, n=n)
    excesses = np.sort(np.asarray(excesses, dtype=float))

    with np.errstate(all='ignore'):
        gamma, _, sigma = stats.genpareto.fit(excesses, start.gamma, floc=0, scale=start.sigma)

    if not (np.isfinite(gamma) and np.isfinite(sigma) and sigma > 0):
        raise FitError(f'GPD likelihood fit failed (gamma = {gamma}, sigma = {sigma})')

    fit = start._replace(sigma=float(sigma), gamma=float(gamma))

    if fit.gamma < 0 and not -fit.sigma / fit.gamma > excesses[-1]:
        raise FitError(f'Fitted support ends at {fit.support_bound:.6g}, below the largest '
                       f'observation {u + excesses[-1]:.6g}')

    return fit


GPD_FITS = {'pwm': gpd_fit_pwm, 'mle': gpd_fit_mle}


def gpd_fit(excesses, u: float = 0.0, n: Optional[int] = None, method: str = 'pwm') -> GpdFit:
    try:
        fitter = GPD_FITS[method]
    except KeyError:
        raise DomainError(f"Unknown GPD fit '{method}', expected one of {sorted(GPD_FITS)}") \
            from None

    return fitter(excesses, u=u, n=n)


def pot_tail_prob(fit: GpdFit, n: int, z: float) -> float:
    """(m/n) (1 + gamma (z - u) / sigma)^(-1/gamma); 0 beyond a finite support."""
    if z < fit.u:
        raise DomainError(f'Level {z} lies below the threshold {fit.u}')

    fraction = fit.m / n
    excess = (z - fit.u) / fit.sigma

    if abs(fit.gamma) < GAMMA_ZERO_TOL:
        return fraction * float(np.exp(-excess))

    base = 1.0 + fit.gamma * excess

    if base <= 0:
        return 0.0

    return fraction * float(base ** (-1.0 / fit.gamma))


def pot_threshold(values, k_margin: int) -> float:
    """The (n - k_margin)-th smallest value."""
    values = np.sort(np.asarray(values, dtype=float))
    return float(values[len(values) - k_margin - 1])


def pot_margin_probs(sample: Sample, k_margin: int, z,
                     fit: str = 'pwm') -> Tuple[List[GpdFit], np.ndarray]:
    """GPD fits of every margin and the estimated p_j = P(X_j > z_j).

    :param fit: ``pwm`` (probability weighted moments) or ``mle`` (maximum likelihood).
    """
    z = np.asarray(z, dtype=float)

    if z.shape != (sample.d,):
        raise DomainError(f'Expected {sample.d} levels, got {z}')
    if not 2 <= k_margin <= sample.n - 1:
        raise DomainError(f'k_margin must lie in 2..{sample.n - 1}, got {k_margin}')

    fits = []

    for j in range(sample.d):
        column = sample.values[:, j]
        u = pot_threshold(column, k_margin)
        margin_fit = gpd_fit(column[column > u] - u, u=u, n=sample.n, method=fit)

        logger.debug('Margin {j}: u = {u:.6g}, sigma = {sigma:.6g}, gamma = {gamma:.4f}, '
                     'm = {m}', j=j + 1, **margin_fit._asdict())
        fits.append(margin_fit)

    probs = np.array([pot_tail_prob(margin_fit, sample.n, level)
                      for margin_fit, level in zip(fits, z)])

    return fits, probs


def failure_prob_pot(sample: Sample, k_margin: int, z, L_estimate: Evaluator,
                     fit: str = 'pwm') -> float:
    _, probs = pot_margin_probs(sample, k_margin, z, fit=fit)
    return failure_prob_known_margins(probs, L_estimate)


def estimate_failure_prob(sample: Sample, query: FailureQuery, L_estimate: Evaluator) -> float:
    if query.mode == 'known':
        return failure_prob_known_margins(query.p, L_estimate)

    return failure_prob_pot(sample, query.k_margin, query.z, L_estimate, fit=query.fit)


def exact_failure_prob(model: TailModel, z: Sequence[float]) -> float:
    """1 - F(z_1, z_2) under a reference model."""
    return 1.0 - float(model.cdf(z[0], z[1]))


def exact_margin_probs(model: TailModel, z: Sequence[float]) -> np.ndarray:
    return np.array([1.0 - float(model.marginal_cdf(level)) for level in z])
