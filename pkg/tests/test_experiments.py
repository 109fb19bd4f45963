import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

import stdfbias.tools.experiments as experiments
from stdfbias.errors import AggregationError, DataError, DomainError
from stdfbias.model.models import BPII, StudentDep, SymLogistic
from stdfbias.model.sampler import sample
from stdfbias.tools.estimators import EstimatorConfig, PickandsCurve, stdf_estimate
from stdfbias.tools.experiments import (METRICS, SUMMARY_COLUMNS, ExperimentSpec, QCurve,
                                        abias_mse, abias_mse_table, best_fixed_k,
                                        l1_error_curve, l1_error_qcurve, load_experiment_spec,
                                        parse_experiment_spec, qcurve, run_experiment)
from stdfbias.tools.utils import stream_seed, write_csv


@pytest.fixture(scope='module')
def small_spec():
    return ExperimentSpec(model=BPII(3.0), n=200, replicates=3, grid=5,
                          estimators=('ring_agg', 'empirical'), k_values=(10, 20),
                          metrics=('point', 'l1_curve', 'l1_qcurve', 'rho_hat'), base_seed=11)


@pytest.fixture(scope='module')
def small_result(small_spec):
    return run_experiment(small_spec, workers=0)


# -----------------------------------------------------------------------------
# scores
# -----------------------------------------------------------------------------

def test_abias_mse_examples():
    assert abias_mse([0.5, 0.7], 0.6) == pytest.approx((0.1, 0.01))
    assert abias_mse([0.6, 0.6], 0.6) == (0.0, 0.0)

    with pytest.raises(DomainError):
        abias_mse([], 0.6)


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(-10, 10), min_size=1, max_size=20), truth=st.floats(-10, 10))
def test_mse_dominates_squared_abias(values, truth):
    abias, mse = abias_mse(values, truth)
    assert mse >= abias ** 2 - 1e-9


def test_l1_curve_examples():
    truth = PickandsCurve(BPII(3.0).true_pickands(np.linspace(0, 1, 31)))
    shifted = PickandsCurve(truth.values + 0.01)
    first_node = PickandsCurve(np.concatenate(([truth.values[0] + 0.5], truth.values[1:])))

    assert l1_error_curve(truth, truth) == 0.0
    assert l1_error_curve(shifted, truth) == pytest.approx(30 / 31 * 0.01)
    assert l1_error_curve(first_node, truth) == 0.0

    with pytest.raises(DomainError):
        l1_error_curve(PickandsCurve(np.ones(5)), truth)


def test_l1_curve_triangle_inequality():
    rng = np.random.default_rng(1)
    a, b, c = (PickandsCurve(rng.uniform(0.5, 1.0, 11)) for _ in range(3))

    assert l1_error_curve(a, c) <= l1_error_curve(a, b) + l1_error_curve(b, c) + 1e-15


def test_qcurve_examples():
    assert qcurve(lambda x: x[0] + x[1], 2).radii[1] == pytest.approx(1 / math.sqrt(2))
    assert np.allclose(qcurve(SymLogistic(0.5).true_stdf, 30).radii, 1.0)

    comonotone = qcurve(lambda x: max(x), 30)
    assert np.allclose(comonotone.radii,
                       1 / np.maximum(np.cos(comonotone.theta), np.sin(comonotone.theta)))


def test_qcurve_needs_positive_values():
    with pytest.raises(DomainError):
        qcurve(lambda x: 0.0, 4)
    with pytest.raises(DomainError):
        qcurve(lambda x: 1.0, 0)


def test_qcurve_equality():
    assert QCurve(np.ones(3)) == QCurve(np.ones(3))
    assert QCurve(np.ones(3)) != QCurve(np.full(3, 1.1))
    assert QCurve(np.ones(3)) != QCurve(np.ones(4))


def test_l1_qcurve_examples():
    truth = QCurve(np.ones(2))

    assert l1_error_qcurve(truth, truth) == 0.0
    assert l1_error_qcurve(QCurve(np.full(2, 1.1)), truth) == pytest.approx(math.pi / 2 * 0.1)

    truth = QCurve(np.ones(31))
    first_node = QCurve(np.concatenate(([1.2], np.ones(30))))

    assert l1_error_qcurve(first_node, truth) == pytest.approx(math.pi / 62 * 0.2)


def test_qcurve_of_a_clamped_estimate_respects_bounds():
    draws = sample(StudentDep(2.0), 500, 3)
    curve = qcurve(lambda x: stdf_estimate(draws, EstimatorConfig(), 'ring_agg', x, rho=-1.0),
                   10)
    cos, sin = np.cos(curve.theta), np.sin(curve.theta)

    assert np.all(curve.radii >= 1 / (cos + sin) - 1e-12)
    assert np.all(curve.radii <= 1 / np.maximum(cos, sin) + 1e-12)


# -----------------------------------------------------------------------------
# specs
# -----------------------------------------------------------------------------

@pytest.mark.parametrize('kwargs', [
    {'replicates': 0},
    {'grid': 0},
    {'n': 1},
    {'estimators': ('hill',)},
    {'metrics': ('l2_curve',)},
    {'estimators': ('empirical',)},
    {'estimators': ('empirical',), 'k_values': (500,)},
    {'metrics': ('l1_mcurve',)},
    {'config': EstimatorConfig(a=2.0)},
])
def test_spec_validation(kwargs):
    params = {'model': BPII(3.0), 'n': 200, 'replicates': 2, **kwargs}

    with pytest.raises(DomainError):
        ExperimentSpec(**params)


def test_spec_parsing():
    spec = parse_experiment_spec([
        '# Student, two degrees of freedom',
        'model = student',
        'nu = 2',
        'n = 500',
        'N = 4  # replicates',
        'T = 10',
        'estimators = ring-agg, tilde-agg, empirical',
        'k_values = 10,50',
        'metrics = point,l1_curve',
        'a = 0.5',
        'clamp = no',
        'seed = 3',
        '',
    ])

    assert spec.model == StudentDep(2.0)
    assert (spec.n, spec.replicates, spec.grid, spec.base_seed) == (500, 4, 10, 3)
    assert spec.estimators == ('ring_agg', 'tilde_agg', 'empirical')
    assert spec.k_values == (10, 50)
    assert spec.metrics == ('point', 'l1_curve')
    assert spec.config.a == 0.5
    assert not spec.config.clamp


@pytest.mark.parametrize('lines, message', [
    (['model = bpii', 'colour = red'], 'line 2'),
    (['model = bpii', 'beta = 3', 'n = ten'], 'line 3'),
    (['model = bpii', 'beta = 3', 'n'], 'line 3'),
    (['beta = 3', 'n = 100'], "missing key 'model'"),
    (['model = bpii', 'beta = 3'], "missing key 'n'"),
    (['model = bpii', 'beta = 1', 'n = 100'], 'line 1'),
    (['model = bpii', 'beta = 3', 'n = 100', 'a = 1.5'], 'a must lie'),
])
def test_spec_parsing_errors(lines, message):
    with pytest.raises(DataError, match=message):
        parse_experiment_spec(lines)


def test_load_spec(tmp_path):
    path = tmp_path / 'bpii.spec'
    path.write_text('model = bpii\nbeta = 3\nn = 100\nN = 2\n')

    assert load_experiment_spec(path).model == BPII(3.0)

    with pytest.raises(DataError):
        load_experiment_spec(tmp_path / 'missing.spec')


# -----------------------------------------------------------------------------
# runs
# -----------------------------------------------------------------------------

def test_result_rows(small_result):
    rows = small_result.rows

    # rho_hat plus three estimators scored on three metrics
    assert len(rows) == 3 * (1 + 3 * 3)
    assert list(rows['replicate'].unique()) == [0, 1, 2]
    assert not small_result.failed_replicates()
    assert set(rows['estimator']) == {'rho', 'ring_agg', 'empirical[k=10]', 'empirical[k=20]'}
    assert rows['value'].notna().all()


def test_point_estimates_respect_bounds(small_result):
    points = small_result.rows[small_result.rows['metric'] == 'point']
    assert points['value'].between(0.5, 1.0).all()


def test_runs_are_reproducible(small_spec, small_result, tmp_path):
    again = run_experiment(small_spec, workers=0)

    pd.testing.assert_frame_equal(small_result.rows, again.rows)

    write_csv(small_result.rows, tmp_path / 'first.csv')
    write_csv(again.rows, tmp_path / 'second.csv')

    assert (tmp_path / 'first.csv').read_bytes() == (tmp_path / 'second.csv').read_bytes()


def test_single_replicate_matches_a_direct_estimate():
    spec = ExperimentSpec(model=StudentDep(2.0), n=300, replicates=1, estimators=('ring_agg',),
                          metrics=('point',), base_seed=7)
    value = run_experiment(spec).rows['value'].iloc[0]
    draws = sample(spec.model, spec.n, stream_seed(7, 0))

    assert value == stdf_estimate(draws, EstimatorConfig(), 'ring_agg', (0.5, 0.5))


def test_failed_replicate_is_recorded(small_spec, monkeypatch):
    score = experiments._score_replicate

    def flaky(spec, replicate):
        if replicate == 1:
            raise DomainError('boom')

        return score(spec, replicate)

    monkeypatch.setattr(experiments, '_score_replicate', flaky)
    result = run_experiment(small_spec, workers=0)

    assert result.failed_replicates() == [1]
    assert len(result.rows) == 2 * 10 + 1
    assert (result.summary()['metric'] != 'error').all()


def test_failing_estimator_keeps_the_others(small_spec, small_result, monkeypatch):
    curve = experiments.pickands_curve

    def fragile(source, config, estimator, grid, rho=None):
        if estimator == 'ring_agg':
            raise AggregationError('All 5 values were excluded from aggregation')

        return curve(source, config, estimator, grid, rho=rho)

    monkeypatch.setattr(experiments, 'pickands_curve', fragile)
    result = run_experiment(small_spec, workers=0)
    rows = result.rows

    # per replicate: rho_hat, one ring_agg error row, two empirical labels on three metrics
    assert len(rows) == 3 * (1 + 1 + 2 * 3)
    assert result.failed_replicates() == [0, 1, 2]

    errors = rows[rows['metric'] == 'error']

    assert set(errors['estimator']) == {'ring_agg'}
    assert errors['value'].isna().all()

    def empirical(frame):
        return frame[frame['estimator'].str.startswith('empirical')].reset_index(drop=True)

    pd.testing.assert_frame_equal(empirical(rows), empirical(small_result.rows))
    assert 'ring_agg' not in set(result.summary()['estimator'])


def test_summary(small_result):
    summary = small_result.summary()
    rows = small_result.rows

    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 10

    ring = summary[(summary['estimator'] == 'ring_agg') & (summary['metric'] == 'point')]
    expected = rows[(rows['estimator'] == 'ring_agg') & (rows['metric'] == 'point')]['value']

    assert ring['median'].iloc[0] == pytest.approx(expected.median())
    assert (summary['min'] <= summary['median']).all()
    assert (summary['median'] <= summary['max']).all()


def test_abias_mse_table_and_best_k(small_result):
    table = abias_mse_table(small_result)

    assert set(table.index) == {'ring_agg', 'empirical[k=10]', 'empirical[k=20]'}
    assert (table['mse'] >= table['abias'] ** 2 - 1e-12).all()

    label, value = best_fixed_k(table, 'abias')

    assert label in ('empirical[k=10]', 'empirical[k=20]')
    assert value == table.loc[['empirical[k=10]', 'empirical[k=20]'], 'abias'].min()

    with pytest.raises(DomainError):
        best_fixed_k(table.loc[['ring_agg']], 'abias')


def test_provenance(small_result):
    provenance = small_result.provenance

    assert provenance['n'] == 200
    assert provenance['k_values'] == (10, 20)
    assert 'config.a' in provenance


def test_m_ratio_metric():
    spec = ExperimentSpec(model=SymLogistic(0.5), n=1000, replicates=2, grid=5,
                          estimators=(), metrics=('l1_mcurve',))
    rows = run_experiment(spec).rows

    assert list(rows['estimator']) == ['m_ratio', 'm_ratio']
    assert (rows['value'] >= 0).all()


def test_all_metrics_are_known():
    assert set(METRICS) == {'point', 'l1_curve', 'l1_qcurve', 'rho_hat', 'l1_mcurve'}


@pytest.mark.slow
def test_parallel_run_matches_serial(small_spec, small_result):
    parallel = run_experiment(small_spec, workers=2)
    pd.testing.assert_frame_equal(small_result.rows, parallel.rows)
