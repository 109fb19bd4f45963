import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stdfbias.errors import AggregationError, DataError, DomainError
from stdfbias.model.models import BPII, StudentDep, SymLogistic
from stdfbias.model.sampler import Sample, sample
from stdfbias.tools.dataset import ranks
from stdfbias.tools.estimators import (EmpiricalStdf, EstimatorConfig, PickandsCurve,
                                       StdfSource, aggregate, aggregate_median, as_estimator,
                                       clamp_pickands, clamp_stdf, convexify_pickands,
                                       corrected_stdf_ring, corrected_stdf_tilde, curve_evaluator,
                                       delta, empirical_stdf, pickands_curve, ring_path,
                                       ring_scale, scaled_stdf, stdf_estimate, stdf_evaluator,
                                       tilde_path)


@pytest.fixture(scope='module')
def bpii_ranks():
    return ranks(sample(BPII(3.0), 1000, 21))


# -----------------------------------------------------------------------------
# empirical estimator
# -----------------------------------------------------------------------------

def test_empirical_examples(three_ranks):
    assert empirical_stdf(three_ranks, 1, (1.0, 1.0)) == 2.0
    assert empirical_stdf(three_ranks, 1, (0.0, 0.0)) == 0.0
    assert empirical_stdf(three_ranks, 1, (1.0, 0.0)) == 1.0


def test_scaled_and_delta_examples(three_ranks):
    assert scaled_stdf(three_ranks, 1, 0.5, (2.0, 2.0)) == 4.0
    assert delta(three_ranks, 1, 0.5, (1.0, 1.0)) == -2.0
    assert delta(three_ranks, 1, 1.0, (1.0, 1.0)) == 0.0


def test_samples_are_ranked_on_the_fly(three_points, three_ranks):
    assert empirical_stdf(three_points, 1, (1.0, 1.0)) == empirical_stdf(three_ranks, 1,
                                                                         (1.0, 1.0))


@pytest.mark.parametrize('k, x', [(0, (0.5, 0.5)), (3, (0.5, 0.5)), (1.5, (0.5, 0.5)),
                                  (2, (2.0, 0.0)), (1, (-0.1, 0.5)), (1, (0.5, 0.5, 0.5))])
def test_empirical_domain(three_ranks, k, x):
    with pytest.raises(DomainError):
        empirical_stdf(three_ranks, k, x)


def test_axis_values(bpii_ranks):
    estimator = EmpiricalStdf(bpii_ranks)

    for k in (10, 37, 500):
        for value in (0.3, 1.0, 1.7):
            assert estimator(k, (value, 0.0)) == np.floor(k * value) / k
            assert estimator(k, (0.0, value)) == np.floor(k * value) / k


def test_rank_invariance():
    values = sample(StudentDep(2.0), 400, 8).values
    transformed = Sample(np.column_stack((np.exp(values[:, 0]), values[:, 1] ** 3)))
    values = Sample(values)
    x = (0.4, 0.9)

    assert empirical_stdf(values, 50, x) == empirical_stdf(transformed, 50, x)


@settings(max_examples=50, deadline=None)
@given(x=st.tuples(st.floats(0, 1), st.floats(0, 1)),
       step=st.tuples(st.floats(0, 0.5), st.floats(0, 0.5)),
       k=st.integers(1, 600))
def test_monotone_in_x(bpii_ranks, x, step, k):
    larger = (x[0] + step[0], x[1] + step[1])
    assert empirical_stdf(bpii_ranks, k, x) <= empirical_stdf(bpii_ranks, k, larger)


@pytest.mark.parametrize('a', [0.5, 0.25])
def test_scaling_identity(bpii_ranks, a):
    x = np.array([0.7, 0.3])

    for k in (10, 100, 999):
        assert a * scaled_stdf(bpii_ranks, k, a, x) == empirical_stdf(bpii_ranks, k, a * x)


def test_path_matches_direct_calls(bpii_ranks):
    estimator = EmpiricalStdf(bpii_ranks)
    ks = np.arange(1, 1000)
    rng = np.random.default_rng(0)

    for x in [*rng.uniform(0, 2, size=(5, 2)), (0.0, 0.0), (1.0, 0.0)]:
        path = estimator.path(x, ks)

        for k, value in zip(ks, path):
            if np.any(np.floor(k * np.asarray(x)) > estimator.n):
                assert np.isnan(value)
            else:
                assert value == estimator(k, x)


def test_path_keeps_the_order_of_ks(bpii_ranks):
    estimator = EmpiricalStdf(bpii_ranks)
    ks = np.array([500, 3, 77, 3])

    assert np.array_equal(estimator.path((0.5, 0.5), ks),
                          [estimator(k, (0.5, 0.5)) for k in ks])


def test_sources():
    with pytest.raises(TypeError):
        as_estimator([[1, 2], [3, 4]])

    assert isinstance(EmpiricalStdf(ranks(np.eye(3))), StdfSource)


def test_consistency_on_a_large_sample():
    estimator = EmpiricalStdf(ranks(sample(SymLogistic(0.5), 100_000, 13)))
    model = SymLogistic(0.5)
    t = np.linspace(0.05, 0.95, 10)
    errors = [abs(estimator(1000, (1 - node, node)) - model.true_pickands(node)) for node in t]

    assert np.mean(errors) < 0.02


# -----------------------------------------------------------------------------
# bias corrections
# -----------------------------------------------------------------------------

def test_ring_scale():
    assert ring_scale(1.0, -1.0) == pytest.approx(2.0)
    assert ring_scale(0.4, -1.0) == pytest.approx(1.4)

    with pytest.raises(DomainError):
        ring_scale(0.4, 0.0)


def test_ring_with_unit_scale(bpii_ranks):
    x = (0.6, 0.4)

    for rho in (-0.5, -1.0, -2.0):
        expected = empirical_stdf(bpii_ranks, 50, x) - delta(bpii_ranks, 50, 2 ** (-1 / rho), x)
        assert corrected_stdf_ring(bpii_ranks, 50, 1.0, rho, x) == expected


@settings(max_examples=100, deadline=None)
@given(x=st.tuples(st.floats(0.01, 1), st.floats(0.01, 1)),
       c=st.one_of(st.floats(-2, -0.1), st.floats(0.1, 2)),
       rho=st.floats(-2, -0.5),
       a=st.floats(0.1, 0.9))
def test_exact_cancellation(functional_stdf, bpii_truth, x, c, rho, a):
    source = functional_stdf(bpii_truth, c=c, rho=rho)
    truth = bpii_truth(x)

    assert corrected_stdf_ring(source, 10, a, rho, x) == pytest.approx(truth, abs=1e-10)

    tilde = corrected_stdf_tilde(source, 10, 990, a, x)

    assert not tilde.degenerate
    assert tilde.value == pytest.approx(truth, abs=1e-9)


def test_tilde_degenerate_falls_back(three_ranks):
    value = corrected_stdf_tilde(three_ranks, 1, 1, 0.5, (0.5, 0.5))
    assert value.degenerate
    assert value.value == 0.0


def test_tilde_needs_a_below_one(three_ranks):
    with pytest.raises(DomainError):
        corrected_stdf_tilde(three_ranks, 1, 1, 1.0, (0.5, 0.5))


def test_paths_match_pointwise(bpii_ranks):
    ks = np.arange(1, 200)
    x = (0.3, 0.7)
    ring = ring_path(bpii_ranks, ks, 0.4, -1.0, x)
    tilde = tilde_path(bpii_ranks, ks, 990, 0.4, x)

    assert np.allclose(ring, [corrected_stdf_ring(bpii_ranks, k, 0.4, -1.0, x) for k in ks],
                       rtol=1e-12, atol=1e-12)
    assert np.allclose(tilde.value,
                       [corrected_stdf_tilde(bpii_ranks, k, 990, 0.4, x).value for k in ks],
                       rtol=1e-9, atol=1e-12)


# -----------------------------------------------------------------------------
# aggregation and clamping
# -----------------------------------------------------------------------------

def test_aggregate_median_examples():
    assert aggregate_median([0.7] * 5) == 0.7
    assert aggregate_median([1, 2, 3, 4]) == 2.5
    assert aggregate_median([0.6, 0.9, 0.7]) == 0.7
    assert aggregate_median([0.6, np.nan, 0.9, 0.7]) == 0.7
    assert aggregate_median([0.1, 5.0, 0.3], excluded=[False, True, False]) == pytest.approx(0.2)


def test_aggregate_mean():
    assert aggregate([1.0, 2.0, 6.0], how='mean') == 3.0

    with pytest.raises(DomainError):
        aggregate([1.0], how='mode')


def test_aggregate_all_excluded():
    with pytest.raises(AggregationError):
        aggregate_median([0.5, 0.6], excluded=[True, True])
    with pytest.raises(AggregationError):
        aggregate_median([np.nan])


def test_clamp_examples():
    assert clamp_pickands(0.3, 1.2) == 1.0
    assert clamp_pickands(0.3, 0.6) == pytest.approx(0.7)
    assert clamp_pickands(0.3, 0.85) == 0.85
    assert clamp_stdf((0.2, 0.5), 0.1) == 0.5
    assert clamp_stdf((0.2, 0.5), 0.9) == pytest.approx(0.7)
    assert np.isnan(clamp_stdf((0.2, 0.5), np.nan))

    with pytest.raises(DomainError):
        clamp_pickands(1.5, 0.9)


# -----------------------------------------------------------------------------
# configuration and selection
# -----------------------------------------------------------------------------

def test_config_defaults():
    config = EstimatorConfig().resolve(1000)

    assert (config.k_rho, config.kappa) == (990, 999)
    assert EstimatorConfig().resolve(100).k_rho == 99


@pytest.mark.parametrize('config', [EstimatorConfig(a=1.0), EstimatorConfig(r=0.0),
                                    EstimatorConfig(k=1000), EstimatorConfig(kappa=0),
                                    EstimatorConfig(rho_override=0.5),
                                    EstimatorConfig(rho_floor=0.0),
                                    EstimatorConfig(aggregation='mode')])
def test_config_validation(config):
    with pytest.raises(DomainError):
        config.resolve(1000)


def test_estimator_selection(bpii_ranks):
    with pytest.raises(DomainError):
        stdf_estimate(bpii_ranks, EstimatorConfig(), 'empirical', (0.5, 0.5))
    with pytest.raises(DomainError):
        stdf_estimate(bpii_ranks, EstimatorConfig(), 'hill', (0.5, 0.5))

    assert stdf_estimate(bpii_ranks, EstimatorConfig(k=100), 'empirical', (0.5, 0.5)) == \
        empirical_stdf(bpii_ranks, 100, (0.5, 0.5))


@pytest.mark.parametrize('estimator', ['ring_agg', 'tilde_agg', 'ring_agg_convex'])
def test_aggregated_estimates_respect_bounds(bpii_ranks, estimator):
    evaluate = stdf_evaluator(bpii_ranks, EstimatorConfig(), estimator, rho=-1.0)

    for x in [(0.5, 0.5), (0.9, 0.1), (1.3, 0.4)]:
        assert max(x) - 1e-12 <= evaluate(x) <= sum(x) + 1e-12


def test_aggregation_on_a_functional_source(functional_stdf, bpii_truth):
    source = functional_stdf(bpii_truth, c=0.5, rho=-1.0)
    x = (0.6, 0.4)

    for estimator in ('ring_agg', 'tilde_agg'):
        value = stdf_estimate(source, EstimatorConfig(clamp=False), estimator, x, rho=-1.0)
        assert value == pytest.approx(bpii_truth(x), abs=1e-10)


def test_aggregated_estimates_are_homogeneous(bpii_ranks):
    x = np.array([0.3, 0.2])

    for estimator in ('ring_agg', 'tilde_agg'):
        evaluate = stdf_evaluator(bpii_ranks, EstimatorConfig(), estimator, rho=-1.0)
        assert evaluate(2 * x) == pytest.approx(2 * evaluate(x), rel=1e-12)


def test_ring_estimate_when_rho_hat_is_near_zero():
    # rho_hat close to 0 on this sample used to leave no admissible k
    estimator = ranks(sample(BPII(3.0), 1000, 16))
    value = stdf_evaluator(estimator, EstimatorConfig(), 'ring_agg')((2 / 3, 1 / 3))

    assert np.isfinite(value)
    assert 2 / 3 - 1e-12 <= value <= 1.0 + 1e-12


def test_tilde_estimate_on_student_samples():
    for seed in range(5):
        estimator = ranks(sample(StudentDep(2.0), 1000, seed))
        value = stdf_estimate(estimator, EstimatorConfig(), 'tilde_agg', (0.5, 0.5))

        assert np.isfinite(value)
        assert 0.5 - 1e-12 <= value <= 1.0 + 1e-12


def test_degenerate_tilde_path_keeps_the_empirical_values(functional_stdf, bpii_truth):
    source = functional_stdf(bpii_truth)
    config = EstimatorConfig(clamp=False)

    assert stdf_estimate(source, config, 'tilde_agg', (0.6, 0.4)) == pytest.approx(
        bpii_truth((0.6, 0.4)), abs=1e-12)

    curve = pickands_curve(source, config, 'tilde_agg', 10)

    assert np.allclose(curve.values, BPII(3.0).true_pickands(curve.t), atol=1e-12)


def test_ring_resolves_rho(functional_stdf, bpii_truth):
    source = functional_stdf(bpii_truth, c=0.5, rho=-1.5)
    value = stdf_estimate(source, EstimatorConfig(clamp=False), 'ring_agg', (0.6, 0.4))

    assert value == pytest.approx(bpii_truth((0.6, 0.4)), abs=1e-9)


# -----------------------------------------------------------------------------
# Pickands curves
# -----------------------------------------------------------------------------

def test_curve_of_a_noise_free_source(functional_stdf, bpii_truth):
    curve = pickands_curve(functional_stdf(bpii_truth), EstimatorConfig(k=1), 'empirical', 30)

    assert curve.grid_size == 30
    assert np.allclose(curve.values, BPII(3.0).true_pickands(curve.t), atol=1e-12)


def test_estimated_curve_respects_bounds(bpii_ranks):
    curve = pickands_curve(bpii_ranks, EstimatorConfig(), 'ring_agg', 30)

    assert len(curve.values) == 31
    assert curve.values[0] == curve.values[-1] == 1.0
    assert np.all(curve.values >= np.maximum(curve.t, 1 - curve.t) - 1e-12)
    assert np.all(curve.values <= 1.0)


def test_curves_are_bivariate():
    with pytest.raises(DomainError):
        pickands_curve(ranks(np.random.default_rng(0).random((50, 3))), EstimatorConfig(),
                       'ring_agg', 10)


def test_curve_validation():
    with pytest.raises(DomainError):
        PickandsCurve(np.array([1.0]))
    with pytest.raises(DomainError):
        PickandsCurve(np.array([1.0, np.nan, 1.0]))


def test_curve_equality():
    curve = PickandsCurve(np.array([1.0, 0.8, 1.0]))

    assert curve == PickandsCurve(np.array([1.0, 0.8, 1.0]))
    assert curve != PickandsCurve(np.array([1.0, 0.9, 1.0]))
    assert curve != PickandsCurve(np.array([1.0, 0.9, 0.9, 1.0]))
    assert curve != 'curve'


def test_convexify_example():
    hull = convexify_pickands(PickandsCurve(np.array([1.0, 0.95, 0.7, 0.95, 1.0])))
    assert np.allclose(hull.values, [1.0, 0.85, 0.7, 0.85, 1.0])


def test_convexify_keeps_convex_curves():
    values = SymLogistic(0.5).true_pickands(np.linspace(0, 1, 11))
    assert np.allclose(convexify_pickands(PickandsCurve(values)).values, values)


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(0.5, 1.0), min_size=1, max_size=30))
def test_convexify_properties(values):
    curve = PickandsCurve(np.array([1.0, *values, 1.0]))
    hull = convexify_pickands(curve).values

    assert np.all(hull <= curve.values + 1e-12)
    assert np.all(np.diff(hull, 2) >= -1e-9)
    assert hull[0] == hull[-1] == 1.0


def test_curve_evaluator_is_homogeneous():
    evaluate = curve_evaluator(PickandsCurve(np.array([1.0, 0.75, 1.0])))

    assert evaluate((0.5, 0.5)) == pytest.approx(0.75)
    assert evaluate((1.0, 1.0)) == pytest.approx(1.5)
    assert evaluate((0.0, 0.0)) == 0.0
    assert evaluate((2.0, 0.0)) == pytest.approx(2.0)


def test_convex_estimator_reads_the_hull(bpii_ranks):
    config = EstimatorConfig()
    hull = pickands_curve(bpii_ranks, config, 'ring_agg_convex', 20, rho=-1.0)
    evaluate = stdf_evaluator(bpii_ranks, config, 'ring_agg_convex', rho=-1.0, grid=20)

    assert evaluate((0.5, 0.5)) == pytest.approx(hull.values[10])


def test_ties_are_ranked_and_non_finite_values_rejected():
    values = Sample(np.array([[0.5, 0.5], [0.5, 0.5], [0.1, 0.9]]))

    assert empirical_stdf(values, 1, (1.0, 1.0)) > 0

    with pytest.raises(DataError):
        empirical_stdf(Sample(np.array([[0.5, np.nan], [0.1, 0.2]])), 1, (1.0, 1.0))
