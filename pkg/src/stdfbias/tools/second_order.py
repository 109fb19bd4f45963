"""Second-order parameter rho and the normalized second-order function M.

With Delta_{k,a} the bias proxy of :mod:`stdfbias.tools.estimators`, the ratio
Delta(r x) / Delta(x) behaves like r^(1 - rho), which gives

    rho_hat = min(0, 1 - log|Delta(r x) / Delta(x)| / log r),

floored at ``rho_floor``. Ratios Delta(x) / Delta(1/2, ..., 1/2) estimate
M(x) / M(1/2, ..., 1/2).
"""
import math
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from loguru import logger

from stdfbias.errors import DegenerateError, DomainError
from stdfbias.tools.estimators import EstimatorConfig, as_estimator, as_point, delta, ring_scale
from stdfbias.tools.utils import (A_DEFAULT, DEGENERATE_TOL, R_DEFAULT, RHO_CEILING,
                                  RHO_FALLBACK, RHO_FLOOR_DEFAULT, half_point)

RHO_GRID = (0.3, 0.4, 0.5, 0.6, 0.7)


class SecondOrderEstimate(NamedTuple):
    rho_hat: float
    eval_point: Tuple[float, ...]
    k_rho: int
    a: float
    r: float
    capped: bool
    degenerate: bool = False

    def to_record(self) -> Dict[str, object]:
        """Flat record ``rho_hat, k_rho, a, r, x1..xd, capped``."""
        record = {'rho_hat': self.rho_hat, 'k_rho': self.k_rho, 'a': self.a, 'r': self.r}
        record.update({f'x{j + 1}': value for j, value in enumerate(self.eval_point)})
        record['capped'] = self.capped

        return record


def rho_from_ratio(ratio: float, r: float,
                   rho_floor: float = RHO_FLOOR_DEFAULT) -> Tuple[float, bool]:
    """Capped value of 1 - log|ratio| / log r and whether a cap was applied."""
    with np.errstate(divide='ignore'):
        raw = 1.0 - np.log(np.abs(ratio)) / math.log(r)

    if raw > 0:
        return 0.0, True
    if not raw >= rho_floor:
        return float(rho_floor), True

    return float(raw), False


def rho_hat(source, k_rho: int, a: float = A_DEFAULT, r: float = R_DEFAULT, x=None,
            rho_floor: float = RHO_FLOOR_DEFAULT) -> SecondOrderEstimate:
    """Estimates rho from the deltas at level ``k_rho`` evaluated at ``x`` and ``r x``.

    ``x`` defaults to (1/2, ..., 1/2). A vanishing Delta(x) returns rho = -1,
    flagged as capped and degenerate.
    """
    if not 0 < r < 1:
        raise DomainError(f'r must lie in (0, 1), got {r}')

    estimator = as_estimator(source)
    x = half_point(estimator.d) if x is None else as_point(x, estimator.d)

    if np.any(x <= 0):
        raise DomainError(f'rho is estimated away from the axes, got x = {x}')

    delta_x = delta(estimator, k_rho, a, x)
    point = tuple(float(value) for value in x)

    if abs(delta_x) < DEGENERATE_TOL:
        logger.warning('Delta vanishes at x = {x} (k_rho = {k_rho}), using rho = {rho}',
                       x=point, k_rho=k_rho, rho=RHO_FALLBACK)
        return SecondOrderEstimate(RHO_FALLBACK, point, k_rho, a, r, True, True)

    ratio = delta(estimator, k_rho, a, r * x) / delta_x
    rho, capped = rho_from_ratio(ratio, r, rho_floor)

    return SecondOrderEstimate(rho, point, k_rho, a, r, capped)


def rho_hat_grid(source, k_rho: int, a: float = A_DEFAULT, r: float = R_DEFAULT,
                 points: Sequence = (), rho_floor: float = RHO_FLOOR_DEFAULT) -> float:
    """Median of rho_hat over ``points``, skipping degenerate evaluations."""
    estimates = [rho_hat(source, k_rho, a, r, point, rho_floor) for point in points]
    values = [estimate.rho_hat for estimate in estimates if not estimate.degenerate]

    if not values:
        logger.warning('rho_hat is degenerate on all {count} points, using rho = {rho}',
                       count=len(estimates), rho=RHO_FALLBACK)
        return RHO_FALLBACK

    return float(np.median(values))


def rho_points(d: int) -> List[np.ndarray]:
    """Points of the default rho grid: (1 - t, t) for t in RHO_GRID, the half point if d > 2."""
    if d != 2:
        return [half_point(d)]

    return [np.array([1.0 - t, t]) for t in RHO_GRID]


def resolve_rho(source, config: EstimatorConfig) -> float:
    """The rho used by the ring estimator.

    The override if set, else rho_hat at ``config.rho_point``, else the median of
    rho_hat over :func:`rho_points`. A value above ``RHO_CEILING`` (in particular
    a rho_hat capped at 0) is replaced by -1: the ring scale b blows up as rho
    tends to 0 and leaves no k with [k b x_j] <= n.
    """
    estimator = as_estimator(source)
    config = config.resolve(estimator.n)

    if config.rho_override is not None:
        return config.rho_override

    if config.rho_point is not None:
        rho = rho_hat(estimator, config.k_rho, config.a, config.r, config.rho_point,
                      config.rho_floor).rho_hat
    else:
        rho = rho_hat_grid(estimator, config.k_rho, config.a, config.r,
                           rho_points(estimator.d), config.rho_floor)

    if rho > RHO_CEILING:
        logger.warning('rho_hat = {rho} at k_rho = {k_rho} is above {ceiling}, '
                       'falling back to {fallback}', rho=rho, k_rho=config.k_rho,
                       ceiling=RHO_CEILING, fallback=RHO_FALLBACK)
        return RHO_FALLBACK

    logger.debug('Resolved rho = {rho}', rho=rho)

    return rho


def m_ratio_curve(source, k: int, a: float, points) -> np.ndarray:
    """Delta_{k,a}(x) / Delta_{k,a}(1/2, ..., 1/2) for each point x."""
    estimator = as_estimator(source)
    reference = delta(estimator, k, a, half_point(estimator.d))

    if abs(reference) < DEGENERATE_TOL:
        raise DegenerateError(f'Delta vanishes at the half point for k = {k}, a = {a}')

    return np.array([delta(estimator, k, a, point) / reference for point in points])


def variance_factor_ring(a: float, rho: float) -> float:
    """(1 - b^-1/2 + a^-1/2)^2, the variance inflation of the ring estimator."""
    if not 0 < a <= 1:
        raise DomainError(f'a must lie in (0, 1], got {a}')

    b = ring_scale(a, rho)

    return (1.0 - b ** -0.5 + a ** -0.5) ** 2


def variance_factor_tilde(a: float, rho: float) -> float:
    """(a^-rho - 1)^-2 (a^-rho - a^-1/2)^2, the variance inflation of the tilde estimator."""
    if not 0 < a < 1:
        raise DomainError(f'a must lie in (0, 1), got {a}')
    if not rho < 0:
        raise DomainError(f'rho must be negative, got {rho}')

    power = a ** -rho

    return (power - a ** -0.5) ** 2 / (power - 1.0) ** 2


def m_ratio_truth(model, points) -> np.ndarray:
    """M(x) / M(1/2, 1/2) of a reference model at each point."""
    reference = model.true_second_order_M(half_point(2))
    return np.array([model.true_second_order_M(point) / reference for point in points])
