"""
stdfbias

This file is part of stdfbias, a library for bias-corrected nonparametric
estimation of stable tail dependence functions.

Monte Carlo harness. A replicate draws a sample from a reference model with a
seed derived from (base_seed, replicate), runs the requested estimators and
scores them against the model's analytic truth. Replicates run serially or as
Ray tasks; either way the result table is sorted by replicate and does not
depend on scheduling.

MIT License
"""
import math
from asyncio import Event
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import ray
from loguru import logger
from ray.actor import ActorHandle
from tqdm import tqdm

from stdfbias.errors import (DataError, DomainError, ModelParameterError, StdfError,
                             UnsupportedOperationError)
from stdfbias.model.models import TailModel, build_model
from stdfbias.model.sampler import sample
from stdfbias.tools.dataset import ranks
from stdfbias.tools.estimators import (ESTIMATORS, EmpiricalStdf, EstimatorConfig,
                                       PickandsCurve, pickands_curve, stdf_evaluator)
from stdfbias.tools.second_order import m_ratio_curve, m_ratio_truth, resolve_rho, rho_hat
from stdfbias.tools.utils import (A_DEFAULT, GRID_DEFAULT, R_DEFAULT, RHO_FLOOR_DEFAULT,
                                  auto_garbage_collect, parse_floats, parse_ints, stream_seed)

RING_ESTIMATORS = ('ring_agg', 'ring_agg_convex')
METRICS = ('point', 'l1_curve', 'l1_qcurve', 'rho_hat', 'l1_mcurve')
M_CURVE_OFFSET = 10
RESULT_COLUMNS = ['replicate', 'estimator', 'metric', 'value']
SUMMARY_COLUMNS = ['estimator', 'metric', 'min', 'q1', 'median', 'q3', 'max', 'mean']


class ABiasMse(NamedTuple):
    abias: float
    mse: float


def abias_mse(estimates, truth: float) -> ABiasMse:
    """Mean absolute and mean squared deviation of ``estimates`` from ``truth``."""
    estimates = np.asarray(estimates, dtype=float)

    if estimates.size == 0:
        raise DomainError('Cannot score an empty set of estimates')

    errors = estimates - truth

    return ABiasMse(float(np.mean(np.abs(errors))), float(np.mean(errors ** 2)))


def l1_error_curve(estimate: PickandsCurve, truth: PickandsCurve) -> float:
    """(1 / (T + 1)) sum_{t=1..T} |estimate - truth| at t / T; the node t = 0 is left out."""
    if estimate.grid_size != truth.grid_size:
        raise DomainError(f'Grid mismatch: {estimate.grid_size} != {truth.grid_size}')

    gaps = np.abs(estimate.values[1:] - truth.values[1:])

    return float(np.sum(gaps) / (estimate.grid_size + 1))


@dataclass(frozen=True, eq=False)
class QCurve:
    """Radii b(theta) = 1 / L(cos theta, sin theta) at theta = pi t / (2T), t = 0..T."""
    radii: np.ndarray

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)

        if radii.ndim != 1 or len(radii) < 2:
            raise DomainError(f'A Q-curve needs at least 2 nodes, got {radii.shape}')
        if not np.all(radii > 0):
            raise DomainError('Q-curve radii must be positive')

        radii.setflags(write=False)
        object.__setattr__(self, 'radii', radii)

    def __eq__(self, other):
        if not isinstance(other, QCurve):
            return NotImplemented

        return np.array_equal(self.radii, other.radii)

    @property
    def grid_size(self) -> int:
        return len(self.radii) - 1

    @property
    def theta(self) -> np.ndarray:
        return np.pi * np.arange(self.grid_size + 1) / (2 * self.grid_size)


def qcurve(L_estimate: Callable[[np.ndarray], float], grid: int = GRID_DEFAULT) -> QCurve:
    if grid < 1:
        raise DomainError(f'Grid size must be positive, got {grid}')

    theta = np.pi * np.arange(grid + 1) / (2 * grid)
    values = np.array([L_estimate(np.array([math.cos(angle), math.sin(angle)]))
                       for angle in theta])

    if np.any(~(values > 0)):
        raise DomainError(f'L must be positive on the quarter circle, got {values}')

    return QCurve(1.0 / values)


def l1_error_qcurve(estimate: QCurve, truth: QCurve) -> float:
    """(pi / (2 (T + 1))) sum_t |estimate - truth| (cos theta_t + sin theta_t)."""
    if estimate.grid_size != truth.grid_size:
        raise DomainError(f'Grid mismatch: {estimate.grid_size} != {truth.grid_size}')

    theta = truth.theta
    weights = np.cos(theta) + np.sin(theta)
    gaps = np.abs(estimate.radii - truth.radii)

    return float(np.pi / (2 * (truth.grid_size + 1)) * np.sum(gaps * weights))


def empirical_label(k: int) -> str:
    return f'empirical[k={k}]'


@dataclass(frozen=True)
class ExperimentSpec:
    model: TailModel
    n: int
    replicates: int
    grid: int = GRID_DEFAULT
    estimators: Tuple[str, ...] = ('ring_agg', 'tilde_agg')
    config: EstimatorConfig = EstimatorConfig()
    base_seed: int = 0
    metrics: Tuple[str, ...] = ('point', 'l1_curve')
    point: Tuple[float, float] = (0.5, 0.5)
    k_values: Tuple[int, ...] = ()
    workers: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.replicates < 1:
            raise DomainError(f'An experiment needs at least 1 replicate, got {self.replicates}')
        if self.grid < 1:
            raise DomainError(f'Grid size must be positive, got {self.grid}')
        if self.n < 2:
            raise DomainError(f'Sample size must be at least 2, got {self.n}')

        unknown = set(self.estimators) - set(ESTIMATORS)

        if unknown:
            raise DomainError(f'Unknown estimators {sorted(unknown)}, expected {ESTIMATORS}')

        unknown = set(self.metrics) - set(METRICS)

        if unknown:
            raise DomainError(f'Unknown metrics {sorted(unknown)}, expected {METRICS}')
        if 'empirical' in self.estimators and not self.empirical_ks:
            raise DomainError('The empirical estimator needs k_values or config.k')
        if any(not 1 <= k <= self.n - 1 for k in self.k_values):
            raise DomainError(f'k_values must lie in 1..{self.n - 1}, got {self.k_values}')
        if 'l1_mcurve' in self.metrics:
            if self.n <= M_CURVE_OFFSET:
                raise DomainError(f'l1_mcurve needs n > {M_CURVE_OFFSET}, got {self.n}')

            try:
                self.model.true_second_order_M((0.5, 0.5))
            except UnsupportedOperationError as error:
                raise DomainError(f'l1_mcurve needs a model with closed-form M: {error}') \
                    from error

        # fails early on k, a, r, ... out of range
        self.config.resolve(self.n)

    @property
    def empirical_ks(self) -> Tuple[int, ...]:
        if self.k_values:
            return tuple(self.k_values)

        return (self.config.k,) if self.config.k is not None else ()

    def describe(self) -> Dict[str, object]:
        return {'model': repr(self.model), 'n': self.n, 'replicates': self.replicates,
                'grid': self.grid, 'estimators': ','.join(self.estimators),
                'metrics': ','.join(self.metrics), 'base_seed': self.base_seed,
                'point': self.point, 'k_values': self.empirical_ks,
                **{f'config.{key}': value for key, value in self.config._asdict().items()}}


@dataclass(frozen=True)
class ExperimentResult:
    """Long table ``replicate, estimator, metric, value``, one row per score.

    An estimator that fails on a replicate contributes a single ``error`` row for that replicate
    and the other estimators are scored as usual.
    """
    spec: ExperimentSpec
    rows: pd.DataFrame

    @property
    def provenance(self) -> Dict[str, object]:
        return self.spec.describe()

    def failed_replicates(self) -> List[int]:
        """Replicates with at least one ``error`` row."""
        return sorted(self.rows.loc[self.rows['metric'] == 'error', 'replicate'].unique())

    def summary(self) -> pd.DataFrame:
        """Boxplot statistics and mean of every (estimator, metric) pair."""
        scores = self.rows[self.rows['metric'] != 'error'].dropna(subset=['value'])
        grouped = scores.groupby(['estimator', 'metric'], sort=False)['value']
        summary = pd.DataFrame({
            'min': grouped.min(),
            'q1': grouped.quantile(0.25),
            'median': grouped.median(),
            'q3': grouped.quantile(0.75),
            'max': grouped.max(),
            'mean': grouped.mean(),
        }).reset_index()

        return summary[SUMMARY_COLUMNS]


def abias_mse_table(result: ExperimentResult) -> pd.DataFrame:
    """ABias and MSE of every estimator's ``point`` estimates, indexed by estimator."""
    truth = result.spec.model.true_stdf(result.spec.point)
    points = result.rows[result.rows['metric'] == 'point'].dropna(subset=['value'])
    records = {estimator: abias_mse(group['value'], truth)._asdict()
               for estimator, group in points.groupby('estimator', sort=False)}

    return pd.DataFrame.from_dict(records, orient='index', columns=['abias', 'mse'])


def best_fixed_k(scores: pd.DataFrame, column: str) -> Tuple[str, float]:
    """Fixed-k empirical estimator with the smallest ``column``, chosen with hindsight."""
    if 'estimator' in scores.columns:
        scores = scores.set_index('estimator')

    empirical = scores[scores.index.str.startswith('empirical[')]

    if empirical.empty:
        raise DomainError('No fixed-k empirical estimator among the scores')

    label = empirical[column].idxmin()

    return label, float(empirical.loc[label, column])


def _estimator_labels(spec: ExperimentSpec) -> Dict[str, Tuple[EstimatorConfig, str]]:
    labels = {}

    for tag in spec.estimators:
        if tag == 'empirical':
            for k in spec.empirical_ks:
                labels[empirical_label(k)] = (spec.config._replace(k=k), tag)
        else:
            labels[tag] = (spec.config, tag)

    return labels


def run_replicate(spec: ExperimentSpec, replicate: int) -> List[Dict[str, object]]:
    """Scores of one replicate; a failure outside the estimators yields a single ``error`` row."""
    try:
        return _score_replicate(spec, replicate)
    except Exception as error:
        logger.error('Replicate {replicate} failed: {error}', replicate=replicate, error=error)
        return [{'replicate': replicate, 'estimator': '*', 'metric': 'error', 'value': np.nan}]


def _estimator_scores(spec: ExperimentSpec, estimator: EmpiricalStdf, config: EstimatorConfig,
                      tag: str, rho: Optional[float]) -> Iterator[Tuple[str, float]]:
    evaluate = stdf_evaluator(estimator, config, tag, rho=rho, grid=spec.grid)

    if 'point' in spec.metrics:
        yield 'point', evaluate(np.asarray(spec.point, dtype=float))
    if 'l1_curve' in spec.metrics:
        curve = pickands_curve(estimator, config, tag, spec.grid, rho=rho)
        yield 'l1_curve', l1_error_curve(curve, truth_curve(spec.model, spec.grid))
    if 'l1_qcurve' in spec.metrics:
        yield 'l1_qcurve', l1_error_qcurve(qcurve(evaluate, spec.grid),
                                           qcurve(spec.model.true_stdf, spec.grid))


def _m_ratio_scores(spec: ExperimentSpec, estimator: EmpiricalStdf,
                    config: EstimatorConfig) -> Iterator[Tuple[str, float]]:
    t = np.arange(1, spec.grid + 1) / spec.grid
    points = np.column_stack((1.0 - t, t))
    estimated = m_ratio_curve(estimator, spec.n - M_CURVE_OFFSET, config.a, points)
    gaps = np.abs(estimated - m_ratio_truth(spec.model, points))

    yield 'l1_mcurve', np.sum(gaps) / (spec.grid + 1)


def _score_replicate(spec: ExperimentSpec, replicate: int) -> List[Dict[str, object]]:
    draws = sample(spec.model, spec.n, stream_seed(spec.base_seed, replicate))
    estimator = EmpiricalStdf(ranks(draws))
    config = spec.config.resolve(spec.n)
    rows = []
    rho = {}

    def ring_rho():
        if 'value' not in rho:
            rho['value'] = resolve_rho(estimator, config)

        return rho['value']

    def score(label, scores):
        # all metrics of a label, or a single error row
        try:
            scored = list(scores())
        except StdfError as error:
            logger.warning('Replicate {replicate}: {label} failed: {error}', replicate=replicate,
                           label=label, error=error)
            scored = [('error', np.nan)]

        rows.extend({'replicate': replicate, 'estimator': label, 'metric': metric,
                     'value': float(value)} for metric, value in scored)

    if 'rho_hat' in spec.metrics:
        score('rho', lambda: [('rho_hat', rho_hat(estimator, config.k_rho, config.a, config.r,
                                                  config.rho_point, config.rho_floor).rho_hat)])

    for label, (label_config, tag) in _estimator_labels(spec).items():
        def scores(label_config=label_config, tag=tag):
            label_rho = ring_rho() if tag in RING_ESTIMATORS else None
            return _estimator_scores(spec, estimator, label_config, tag, label_rho)

        score(label, scores)

    if 'l1_mcurve' in spec.metrics:
        score('m_ratio', lambda: _m_ratio_scores(spec, estimator, config))

    return rows


def truth_curve(model: TailModel, grid: int) -> PickandsCurve:
    return PickandsCurve.from_function(model.true_pickands, grid)


# Ray progress reporting


@ray.remote
class ProgressBarActor:
    counter: int
    delta: int
    event: Event

    def __init__(self) -> None:
        self.counter = 0
        self.delta = 0
        self.event = Event()

    def update(self, num_items_completed: int) -> None:
        """Adds the number of replicates that were just completed."""
        self.counter += num_items_completed
        self.delta += num_items_completed
        self.event.set()

    async def wait_for_update(self) -> Tuple[int, int]:
        """Blocking call.

        Waits until somebody calls `update`, then returns the number of updates
        since the last call and the total number of completed replicates.
        """
        await self.event.wait()
        self.event.clear()
        saved_delta = self.delta
        self.delta = 0
        return saved_delta, self.counter


class ProgressBar:
    progress_actor: ActorHandle
    total: int
    description: str

    def __init__(self, total: int, description: str = ''):
        self.progress_actor = ProgressBarActor.remote()  # type: ignore
        self.total = total
        self.description = description

    @property
    def actor(self) -> ActorHandle:
        return self.progress_actor

    def print_until_done(self) -> None:
        """Blocking call; feeds the actor's updates into a tqdm bar until every task is done."""
        pbar = tqdm(desc=self.description, total=self.total)
        while True:
            delta, counter = ray.get(self.actor.wait_for_update.remote())
            pbar.update(delta)
            if counter >= self.total:
                pbar.close()
                return


def replicate_rows(spec: ExperimentSpec, replicate: int, pba: Optional[ActorHandle] = None):
    rows = run_replicate(spec, replicate)

    if pba is not None:
        pba.update.remote(1)

    return rows


remote_replicate_rows = ray.remote(replicate_rows)


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> ExperimentResult:
    """Runs every replicate of ``spec``.

    :param workers: Ray CPUs; 0 runs serially in-process. Defaults to ``spec.workers``.
    """
    workers = spec.workers if workers is None else workers
    replicates = range(spec.replicates)

    logger.info('Running {N} replicates of {model} with n = {n} ({mode})', N=spec.replicates,
                model=spec.model, n=spec.n, mode=f'{workers} workers' if workers else 'serial')

    if workers:
        started = not ray.is_initialized()

        if started:
            ray.init(num_cpus=workers)

        pb = ProgressBar(spec.replicates, 'Replicates')
        spec_ref = ray.put(spec)
        refs = [remote_replicate_rows.remote(spec_ref, i, pb.actor) for i in replicates]
        pb.print_until_done()
        batches = ray.get(refs)

        if started:
            ray.shutdown()
    else:
        batches = []

        for i in tqdm(replicates, desc='Replicates'):
            batches.append(replicate_rows(spec, i))
            auto_garbage_collect()

    rows = pd.DataFrame([row for batch in batches for row in batch], columns=RESULT_COLUMNS)
    rows = rows.sort_values('replicate', kind='stable').reset_index(drop=True)
    result = ExperimentResult(spec, rows)

    failed = result.failed_replicates()

    if failed:
        logger.warning('{count} replicates failed: {failed}', count=len(failed), failed=failed)

    logger.info('Experiment done: {rows} scores', rows=len(rows))

    return result


# flat key=value spec files

MODEL_KEYS = ('beta', 'nu', 'theta', 'tau', 's')
CONFIG_KEYS = ('k', 'a', 'r', 'k_rho', 'kappa', 'rho', 'clamp', 'rho_floor', 'aggregation',
               'rho_point')
SPEC_KEYS = ('n', 'N', 'replicates', 'grid', 'T', 'base_seed', 'seed', 'workers', 'estimators',
             'metrics', 'point', 'k_values')


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()

    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False

    raise ValueError(f"not a boolean: '{text}'")


def _parse_tags(text: str) -> Tuple[str, ...]:
    return tuple(tag.strip().replace('-', '_') for tag in text.split(',') if tag.strip())


def parse_experiment_spec(lines: Sequence[str], source: str = '<spec>') -> ExperimentSpec:
    """Builds an :class:`ExperimentSpec` from ``key=value`` lines (``#`` starts a comment)."""
    pairs = {}

    for number, line in enumerate(lines, start=1):
        line = line.split('#', 1)[0].strip()

        if not line:
            continue
        if '=' not in line:
            raise DataError(f"{source}, line {number}: expected key=value, got '{line}'")

        key, value = (part.strip() for part in line.split('=', 1))

        if key not in ('model', *MODEL_KEYS, *CONFIG_KEYS, *SPEC_KEYS):
            raise DataError(f"{source}, line {number}: unknown key '{key}'")

        pairs[key] = (number, value)

    def get(key, parse, default=None):
        if key not in pairs:
            return default

        number, value = pairs[key]

        try:
            return parse(value)
        except Exception as error:
            raise DataError(f"{source}, line {number}: bad value for '{key}': {error}") \
                from error

    if 'model' not in pairs:
        raise DataError(f"{source}: missing key 'model'")

    params = {key: get(key, float) for key in MODEL_KEYS}

    try:
        model = build_model(pairs['model'][1], **params)
    except ModelParameterError as error:
        number = pairs['model'][0]
        raise DataError(f'{source}, line {number}: {error}') from error

    config = EstimatorConfig(
        k=get('k', int), a=get('a', float, A_DEFAULT),
        r=get('r', float, R_DEFAULT), k_rho=get('k_rho', int),
        kappa=get('kappa', int), rho_override=get('rho', float),
        clamp=get('clamp', _parse_bool, True),
        rho_floor=get('rho_floor', float, RHO_FLOOR_DEFAULT),
        aggregation=get('aggregation', str, 'median'),
        rho_point=get('rho_point', lambda text: tuple(parse_floats(text))))

    if 'n' not in pairs:
        raise DataError(f"{source}: missing key 'n'")

    try:
        return ExperimentSpec(
            model=model,
            n=get('n', int),
            replicates=get('N', int, get('replicates', int, 1)),
            grid=get('T', int, get('grid', int, GRID_DEFAULT)),
            estimators=get('estimators', _parse_tags, ExperimentSpec.estimators),
            config=config,
            base_seed=get('base_seed', int, get('seed', int, 0)),
            metrics=get('metrics', _parse_tags, ExperimentSpec.metrics),
            point=get('point', lambda text: tuple(parse_floats(text)), (0.5, 0.5)),
            k_values=get('k_values', lambda text: tuple(parse_ints(text)), ()),
            workers=get('workers', int, 0))
    except DomainError as error:
        raise DataError(f'{source}: {error}') from error


def load_experiment_spec(path) -> ExperimentSpec:
    path = Path(path)

    try:
        text = path.read_text()
    except OSError as error:
        raise DataError(f'Cannot read experiment spec {path}: {error}') from error

    spec = parse_experiment_spec(text.splitlines(), source=str(path))

    logger.info('Loaded experiment spec {path}: {spec}', path=path, spec=spec.describe())

    return spec
