"""
stdfbias

This file is part of stdfbias, a library for bias-corrected nonparametric
estimation of stable tail dependence functions.

Rank-based estimators of the stable tail dependence function L:

- the empirical estimator L_k(x) = (1/k) #{i : some rank_i^(j) >= n - [k x_j] + 1},
- its scaled version L_{k,a}(x) = L_k(a x) / a and the bias proxy
  Delta_{k,a}(x) = L_{k,a}(x) - L_k(x),
- the ring estimator L_{k,a}(x) - Delta_{k,b}(x) with b = (a^-rho + 1)^(-1/rho),
- the tilde estimator, which eliminates the bias with deltas taken at a larger
  level k_rho and needs no estimate of rho,
- their aggregates over k = 1..kappa (median or mean), clamped to the bounds
  max_j x_j <= L(x) <= sum_j x_j, and Pickands curves A(t) = L(1 - t, t).

Every estimator accepts a :class:`~stdfbias.tools.dataset.RankMatrix`, a
:class:`~stdfbias.model.sampler.Sample` or any object implementing
:class:`StdfSource`.

MIT License
"""
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Protocol, Tuple, runtime_checkable

import numpy as np
from loguru import logger
from scipy.optimize import isotonic_regression

from stdfbias.errors import AggregationError, DomainError
from stdfbias.model.sampler import Sample
from stdfbias.tools.dataset import RankMatrix, ranks
from stdfbias.tools.utils import (A_DEFAULT, DEGENERATE_TOL, GRID_DEFAULT, K_RHO_FRACTION,
                                  R_DEFAULT, RHO_FLOOR_DEFAULT)

ESTIMATORS = ('empirical', 'ring_agg', 'tilde_agg', 'ring_agg_convex')
AGGREGATIONS = ('median', 'mean')


class EstimatorConfig(NamedTuple):
    """Tuning knobs of the estimators.

    ``k_rho`` and ``kappa`` depend on the sample size; leave them unset and call
    :meth:`resolve` to get ceil(0.99 n) and n - 1.
    """
    k: Optional[int] = None
    a: float = A_DEFAULT
    r: float = R_DEFAULT
    k_rho: Optional[int] = None
    kappa: Optional[int] = None
    rho_override: Optional[float] = None
    clamp: bool = True
    rho_floor: float = RHO_FLOOR_DEFAULT
    aggregation: str = 'median'
    rho_point: Optional[Tuple[float, ...]] = None

    def resolve(self, n: int) -> 'EstimatorConfig':
        """Fills the sample-size dependent defaults and validates every knob against ``n``."""
        if n < 2:
            raise DomainError(f'Estimation needs n >= 2 observations, got {n}')

        k_rho = self.k_rho if self.k_rho is not None else min(
            math.ceil(K_RHO_FRACTION * n), n - 1)
        kappa = self.kappa if self.kappa is not None else n - 1
        config = self._replace(k_rho=k_rho, kappa=kappa)

        for name in ('k', 'k_rho', 'kappa'):
            value = getattr(config, name)

            if value is not None and not 1 <= value <= n - 1:
                raise DomainError(f'{name} must lie in 1..{n - 1}, got {value}')

        for name in ('a', 'r'):
            if not 0 < getattr(config, name) < 1:
                raise DomainError(f'{name} must lie in (0, 1), got {getattr(config, name)}')

        if config.rho_override is not None and not config.rho_override <= 0:
            raise DomainError(f'rho override must be <= 0, got {config.rho_override}')
        if not config.rho_floor < 0:
            raise DomainError(f'rho floor must be negative, got {config.rho_floor}')
        if config.aggregation not in AGGREGATIONS:
            raise DomainError(f"Unknown aggregation '{config.aggregation}', "
                              f'expected one of {AGGREGATIONS}')

        return config


@runtime_checkable
class StdfSource(Protocol):
    """Anything that evaluates L_k(x) for one k or a whole path of k."""
    n: int
    d: int

    def __call__(self, k: int, x: np.ndarray) -> float:
        ...

    def path(self, x: np.ndarray, ks: np.ndarray) -> np.ndarray:
        ...


class EmpiricalStdf:
    """The empirical s.t.d.f. of a rank matrix."""

    def __init__(self, rank_matrix: RankMatrix):
        self.rank_matrix = rank_matrix
        self.n = rank_matrix.n
        self.d = rank_matrix.d

    def __repr__(self) -> str:
        return f'EmpiricalStdf(n={self.n}, d={self.d})'

    def _check_k(self, k):
        k = np.asarray(k)

        if np.any(k != np.floor(k)) or np.any(k < 1) or np.any(k > self.n - 1):
            raise DomainError(f'k must be an integer in 1..{self.n - 1}, got {k}')

    def __call__(self, k: int, x) -> float:
        x = as_point(x, self.d)
        self._check_k(k)
        levels = np.floor(k * x)

        if np.any(levels > self.n):
            raise DomainError(f'k * x_j must not exceed n = {self.n}, got k = {k}, x = {x}')

        # [k x_j] = 0 gives the threshold n + 1, which no rank reaches
        exceed = self.rank_matrix.ranks >= self.n - levels + 1

        return float(np.count_nonzero(np.any(exceed, axis=1))) / k

    def path(self, x, ks) -> np.ndarray:
        """L_k(x) for every k in ``ks``; NaN where some [k x_j] exceeds n."""
        x = as_point(x, self.d)
        ks = np.asarray(ks, dtype=np.int64)
        self._check_k(ks)

        order = np.argsort(ks, kind='stable')
        sorted_ks = ks[order]
        levels = np.floor(sorted_ks[:, None] * x[None, :])

        # row i first qualifies at the smallest k with [k x_j] >= n - rank_ij + 1
        needed = self.n - self.rank_matrix.ranks + 1
        first = np.min(np.stack([np.searchsorted(levels[:, j], needed[:, j], side='left')
                                 for j in range(self.d)], axis=1), axis=1)
        counts = np.cumsum(np.bincount(first, minlength=len(ks) + 1))[:len(ks)]

        values = np.empty(len(ks))
        values[order] = counts / sorted_ks
        values[order[np.any(levels > self.n, axis=1)]] = np.nan

        return values


def as_point(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)

    if x.shape != (d,):
        raise DomainError(f'Expected a point of dimension {d}, got shape {x.shape}')
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError(f'Points must have finite nonnegative coordinates, got {x}')

    return x


def as_estimator(source) -> StdfSource:
    if isinstance(source, RankMatrix):
        return EmpiricalStdf(source)
    if isinstance(source, Sample):
        return EmpiricalStdf(ranks(source))
    if isinstance(source, StdfSource):
        return source

    raise TypeError(f'Cannot estimate a s.t.d.f. from {type(source).__name__}')


def empirical_stdf(source, k: int, x) -> float:
    return as_estimator(source)(k, x)


def scaled_stdf(source, k: int, a: float, x) -> float:
    """L_{k,a}(x) = L_k(a x) / a; any ``a > 0`` keeping [k a x_j] <= n."""
    if not a > 0:
        raise DomainError(f'Scale must be positive, got {a}')

    estimator = as_estimator(source)

    return estimator(k, a * as_point(x, estimator.d)) / a


def delta(source, k: int, a: float, x) -> float:
    """Delta_{k,a}(x) = L_{k,a}(x) - L_k(x)."""
    estimator = as_estimator(source)
    return scaled_stdf(estimator, k, a, x) - estimator(k, x)


def ring_scale(a: float, rho: float) -> float:
    """b = (a^-rho + 1)^(-1/rho), the scale cancelling the bias left by L_{k,a}."""
    if not rho < 0:
        raise DomainError(f'The ring estimator needs rho < 0, got {rho}')

    return (a ** -rho + 1.0) ** (-1.0 / rho)


def corrected_stdf_ring(source, k: int, a: float, rho: float, x) -> float:
    b = ring_scale(a, rho)
    estimator = as_estimator(source)

    return scaled_stdf(estimator, k, a, x) - delta(estimator, k, b, x)


class TildeValue(NamedTuple):
    value: float
    degenerate: bool


def _tilde_weights(estimator, k_rho, a, x):
    if not 0 < a < 1:
        raise DomainError(f'The tilde estimator needs a in (0, 1), got {a}')

    delta_x = delta(estimator, k_rho, a, x)
    delta_ax = delta(estimator, k_rho, a, a * x)

    return delta_x, delta_ax, delta_ax - a * delta_x


def corrected_stdf_tilde(source, k: int, k_rho: int, a: float, x) -> TildeValue:
    """Bias-free combination of L_k(x) and L_k(a x) weighted by deltas at level ``k_rho``.

    Falls back to L_k(x), flagged as degenerate, when the denominator vanishes.
    """
    estimator = as_estimator(source)
    x = as_point(x, estimator.d)
    delta_x, delta_ax, denominator = _tilde_weights(estimator, k_rho, a, x)
    base = estimator(k, x)

    if abs(denominator) < DEGENERATE_TOL:
        return TildeValue(base, True)

    value = (base * delta_ax - estimator(k, a * x) * delta_x) / denominator

    return TildeValue(value, False)


def ring_path(source, ks, a: float, rho: float, x) -> np.ndarray:
    estimator = as_estimator(source)
    x = as_point(x, estimator.d)
    b = ring_scale(a, rho)

    return (estimator.path(a * x, ks) / a - estimator.path(b * x, ks) / b
            + estimator.path(x, ks))


def tilde_path(source, ks, k_rho: int, a: float, x) -> TildeValue:
    """Tilde estimates for every k in ``ks``; the degenerate flag is shared by the whole path."""
    estimator = as_estimator(source)
    x = as_point(x, estimator.d)
    delta_x, delta_ax, denominator = _tilde_weights(estimator, k_rho, a, x)
    base = estimator.path(x, ks)

    if abs(denominator) < DEGENERATE_TOL:
        logger.warning('Degenerate tilde denominator at x = {x} (k_rho = {k_rho}), '
                       'keeping the empirical values', x=x, k_rho=k_rho)
        return TildeValue(base, True)

    value = (base * delta_ax - estimator.path(a * x, ks) * delta_x) / denominator

    return TildeValue(value, False)


def aggregate(values, excluded=None, how: str = 'median') -> float:
    """Median (even counts averaged) or mean of the non-excluded, non-NaN values."""
    values = np.asarray(values, dtype=float)
    keep = ~np.isnan(values)

    if excluded is not None:
        keep &= ~np.asarray(excluded, dtype=bool)
    if not np.any(keep):
        raise AggregationError(f'All {len(values)} values were excluded from aggregation')
    if np.count_nonzero(keep) < len(values):
        logger.debug('Aggregating {kept} of {total} values', kept=np.count_nonzero(keep),
                     total=len(values))

    if how == 'median':
        return float(np.median(values[keep]))
    if how == 'mean':
        return float(np.mean(values[keep]))

    raise DomainError(f"Unknown aggregation '{how}', expected one of {AGGREGATIONS}")


def aggregate_median(values, excluded=None) -> float:
    return aggregate(values, excluded, how='median')


def clamp_stdf(x, value):
    """Projects ``value`` onto [max_j x_j, sum_j x_j]; NaN stays NaN."""
    x = np.asarray(x, dtype=float)
    return np.minimum(np.sum(x), np.maximum(value, np.max(x)))


def clamp_pickands(t, value):
    if np.any((np.asarray(t) < 0) | (np.asarray(t) > 1)):
        raise DomainError(f'Pickands argument must lie in [0, 1], got {t}')

    return np.minimum(1.0, np.maximum(value, np.maximum(t, 1.0 - np.asarray(t))))


def _aggregated(estimator, config, estimator_tag, x, rho):
    # evaluated on the simplex and extended by homogeneity; the deltas at level k_rho
    # need k_rho x_j <= n
    total = float(np.sum(x))

    if total == 0:
        return 0.0

    x = x / total
    ks = np.arange(1, config.kappa + 1)

    if estimator_tag == 'ring_agg':
        values = ring_path(estimator, ks, config.a, rho, x)
    else:
        # a degenerate path carries the L_k fallback values
        values = tilde_path(estimator, ks, config.k_rho, config.a, x).value

    if config.clamp:
        values = clamp_stdf(x, values)

    return total * aggregate(values, how=config.aggregation)


def stdf_estimate(source, config: EstimatorConfig, estimator: str, x,
                  rho: Optional[float] = None, grid: int = GRID_DEFAULT) -> float:
    """The selected estimator of L at ``x``.

    Aggregated estimators are computed at x / sum(x) and scaled back by sum(x).

    :param source: Ranks, a sample or a :class:`StdfSource`.
    :param config: Tuning; sample-size defaults are resolved here.
    :param estimator: One of ``empirical`` (needs ``config.k``), ``ring_agg``,
        ``tilde_agg`` or ``ring_agg_convex`` (bivariate only).
    :param rho: Second-order parameter of the ring estimator, resolved from
        ``config`` when omitted.
    :param grid: Grid size of the convexified Pickands curve.
    """
    return stdf_evaluator(source, config, estimator, rho=rho, grid=grid)(x)


def stdf_evaluator(source, config: EstimatorConfig, estimator: str,
                   rho: Optional[float] = None,
                   grid: int = GRID_DEFAULT) -> Callable[[np.ndarray], float]:
    """Point evaluator of the selected estimator with rho and convex hull computed once."""
    if estimator not in ESTIMATORS:
        raise DomainError(f"Unknown estimator '{estimator}', expected one of {ESTIMATORS}")

    source = as_estimator(source)
    config = config.resolve(source.n)

    if estimator == 'empirical' and config.k is None:
        raise DomainError('The empirical estimator needs k')
    if estimator in ('ring_agg', 'ring_agg_convex') and rho is None:
        from stdfbias.tools.second_order import resolve_rho
        rho = resolve_rho(source, config)

    if estimator == 'ring_agg_convex':
        curve = pickands_curve(source, config._replace(clamp=True), 'ring_agg', grid, rho=rho)
        return curve_evaluator(convexify_pickands(curve))

    def evaluate(x) -> float:
        x = as_point(x, source.d)

        if estimator == 'empirical':
            value = source(config.k, x)
        else:
            value = _aggregated(source, config, estimator, x, rho)

        return float(clamp_stdf(x, value)) if config.clamp else value

    return evaluate


@dataclass(frozen=True, eq=False)
class PickandsCurve:
    """Values of A(t) = L(1 - t, t) at t = 0, 1/T, ..., 1."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)

        if values.ndim != 1 or len(values) < 2:
            raise DomainError(f'A Pickands curve needs at least 2 nodes, got {values.shape}')
        if not np.all(np.isfinite(values)):
            raise DomainError('Pickands curve values must be finite')

        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def __eq__(self, other):
        if not isinstance(other, PickandsCurve):
            return NotImplemented

        return np.array_equal(self.values, other.values)

    @property
    def grid_size(self) -> int:
        return len(self.values) - 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.grid_size + 1) / self.grid_size

    @classmethod
    def from_function(cls, pickands: Callable[[float], float], grid: int) -> 'PickandsCurve':
        t = np.arange(grid + 1) / grid
        return cls(np.array([pickands(node) for node in t]))


def pickands_curve(source, config: EstimatorConfig, estimator: str,
                   grid: int = GRID_DEFAULT, rho: Optional[float] = None) -> PickandsCurve:
    """The selected estimator of A on the grid t = 0/T, ..., T/T (bivariate sources)."""
    if grid < 1:
        raise DomainError(f'Grid size must be positive, got {grid}')

    source = as_estimator(source)

    if source.d != 2:
        raise DomainError(f'Pickands curves are bivariate, got d = {source.d}')

    if estimator == 'ring_agg_convex':
        curve = pickands_curve(source, config._replace(clamp=True), 'ring_agg', grid, rho=rho)
        return convexify_pickands(curve)

    evaluate = stdf_evaluator(source, config, estimator, rho=rho, grid=grid)

    def node(t):
        # the bounds coincide at the endpoints
        if config.clamp and t in (0.0, 1.0):
            return 1.0

        return evaluate(np.array([1.0 - t, t]))

    curve = PickandsCurve.from_function(node, grid)

    logger.debug('Estimated {estimator} Pickands curve on {nodes} nodes', estimator=estimator,
                 nodes=grid + 1)

    return curve


def convexify_pickands(curve: PickandsCurve) -> PickandsCurve:
    """Greatest convex minorant of the curve's nodes, endpoints pinned to 1.

    The minorant's slopes are the isotonic regression of the chord slopes,
    weighted by the node spacing.
    """
    values = np.array(curve.values)
    values[0] = values[-1] = 1.0
    spacing = np.diff(curve.t)
    slopes = isotonic_regression(np.diff(values) / spacing, weights=spacing,
                                 increasing=True).x
    hull = values[0] + np.concatenate(([0.0], np.cumsum(slopes * spacing)))
    hull = np.minimum(hull, values)
    hull[0] = hull[-1] = 1.0

    return PickandsCurve(hull)


def curve_evaluator(curve: PickandsCurve) -> Callable[[np.ndarray], float]:
    """Homogeneous extension L(x) = (x_1 + x_2) A(x_2 / (x_1 + x_2)), A interpolated linearly."""
    t = curve.t
    values = curve.values

    def evaluate(x) -> float:
        x = as_point(x, 2)
        total = x[0] + x[1]

        if total == 0:
            return 0.0

        return float(total * np.interp(x[1] / total, t, values))

    return evaluate
