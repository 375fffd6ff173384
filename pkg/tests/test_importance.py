import math
from dataclasses import replace

import numpy as np
import pytest

from esnfi.basis import fit_pca, reconstruct_values
from esnfi.importance import (
    PC_RMSE,
    SPATIAL_RMSE,
    STPFI,
    STZFI,
    WEIGHTED_SPATIAL_RMSE,
    ImportanceError,
    ImportanceQuery,
    ImportanceSeries,
    MetricSpec,
    average_importance,
    block_times,
    compute_importance,
    evaluate_metric,
    latitude_weights,
    permute_block,
    replicate_rng,
    weighted_error,
    zero_block,
)
from esnfi.reservoir import EsnHyperparams, EsnModel, Reservoir, fit, forecast, forecast_with_adjusted_inputs

from conftest import make_field, small_model
from oracles import rmse_metric_longhand


def full_rerun_importance(model, X, Y, query, metric):
    """Reference: rerun the whole recursion for every adjusted scenario."""
    hp = model.hyperparams
    ff = hp.first_forecast_time
    rows = model.variable_slice(query.variable_index)
    base = forecast(model, X)
    times, vals = [], []
    for s in range(ff, X.shape[1] + 1):
        if s - hp.tau - query.block_size + 1 < 1:
            continue
        b0 = evaluate_metric(metric, Y[:, s - 1], base[:, s - ff])
        R = query.replications if query.method == STPFI else 1
        adj = []
        for r in range(R):
            if query.method == STZFI:
                reps = [(t, rows, np.zeros(rows.stop - rows.start))
                        for t in block_times(s, hp.tau, query.block_size)]
            else:
                g = replicate_rng(query.rng_seed, s, r)
                reps = [(t, rows, g.permutation(X[rows, t - 1]))
                        for t in block_times(s, hp.tau, query.block_size)]
            yadj = forecast_with_adjusted_inputs(model, X, reps)
            adj.append(evaluate_metric(metric, Y[:, s - 1], yadj[:, s - ff]))
        times.append(s)
        vals.append(np.mean(adj) - b0)
    return np.array(times), np.array(vals)


def ignoring_model(model, k):
    """Copy of ``model`` whose U has zero columns for every lag of variable ``k``."""
    U = model.reservoir.U.copy()
    rows = model.variable_slice(k)
    P = model.input_dim
    for lag in range(model.hyperparams.n_lags):
        U[:, lag * P + rows.start: lag * P + rows.stop] = 0.0
    res = Reservoir(model.reservoir.W, U, model.reservoir.lambda_w)
    return replace(model, reservoir=res)


# -- metrics ----------------------------------------------------------------

def test_latitude_weights_examples():
    w = latitude_weights([0.0, 90.0, -90.0, 60.0])
    assert w[0] == 1.0 and w[1] == 0.0 and w[2] == 0.0
    assert w[3] == pytest.approx(math.sqrt(0.5), abs=1e-12)
    with pytest.raises(ImportanceError):
        latitude_weights([91.0])


def test_weighted_error_examples():
    assert weighted_error([3.0, -3.0], [0.0, 0.0], [1.0, 1.0]) == 3.0
    assert weighted_error([1.0, 2.0], [1.0, 2.0], [0.3, 0.7]) == 0.0
    assert weighted_error([2.0, 100.0], [0.0, 0.0], [1.0, 0.0]) == 2.0
    with pytest.raises(ImportanceError):
        weighted_error([1.0], [0.0], [0.0])


def test_pc_rmse_examples():
    spec = MetricSpec(PC_RMSE)
    assert evaluate_metric(spec, np.ones(4), np.ones(4)) == 0.0
    assert evaluate_metric(spec, np.ones(4), np.zeros(4)) == 1.0
    with pytest.raises(ImportanceError):
        evaluate_metric(spec, np.ones(4), np.ones(3))


def test_spatial_rmse_longhand(rng):
    f = make_field(rng.normal(size=(100, 30)))
    d = fit_pca(f, 5)
    yhat = rng.normal(size=5)
    longhand = math.sqrt(sum((z - p) ** 2 for z, p in zip(f.values[:, 4], reconstruct_values(d, yhat)))) / 10
    assert evaluate_metric(MetricSpec(SPATIAL_RMSE, basis=d), f.values[:, 4], yhat) == pytest.approx(longhand, abs=1e-12)


def test_weighted_metric_uses_back_transform(rng):
    f = make_field(rng.normal(size=(6, 10)))
    d = fit_pca(f, 2)
    w = rng.uniform(0.1, 1, 6)
    yhat = rng.normal(size=2)
    got = evaluate_metric(MetricSpec(WEIGHTED_SPATIAL_RMSE, basis=d, weights=w), f.values[:, 0], yhat)
    assert got == pytest.approx(weighted_error(f.values[:, 0], reconstruct_values(d, yhat), w), abs=1e-14)


def test_metric_spec_validation(rng):
    d = fit_pca(make_field(rng.normal(size=(4, 6))), 2)
    with pytest.raises(ImportanceError):
        MetricSpec("mae")
    with pytest.raises(ImportanceError):
        MetricSpec(SPATIAL_RMSE)
    with pytest.raises(ImportanceError):
        MetricSpec(WEIGHTED_SPATIAL_RMSE, basis=d)
    with pytest.raises(ImportanceError):
        MetricSpec(WEIGHTED_SPATIAL_RMSE, basis=d, weights=np.zeros(4))


# -- block adjustments -----------------------------------------------------

def test_permute_singleton_and_constant(rng):
    X = rng.normal(size=(4, 6))
    np.testing.assert_array_equal(permute_block(X, 1, [2, 3], rng, sizes=(1, 1, 2)), X)
    X[2:4, :] = 7.0
    np.testing.assert_array_equal(permute_block(X, 2, [1, 5], rng, sizes=(1, 1, 2)), X)


def test_permute_preserves_multisets(rng):
    X = rng.normal(size=(7, 8))
    out = permute_block(X, 1, [3, 4, 5], rng, sizes=(2, 5))
    for t in range(8):
        np.testing.assert_array_equal(np.sort(out[2:, t]), np.sort(X[2:, t]))
    changed = np.flatnonzero(np.any(out != X, axis=0)) + 1
    assert set(changed) <= {3, 4, 5}
    np.testing.assert_array_equal(out[:2], X[:2])


def test_zero_block_examples(rng):
    X = rng.normal(size=(5, 6))
    out = zero_block(X, 0, [2, 4], sizes=(3, 2))
    diff = out != X
    assert np.array_equal(np.argwhere(diff), np.argwhere(np.isin(np.arange(6), [1, 3])[None, :] & (np.arange(5) < 3)[:, None]))
    assert np.all(out[:3, [1, 3]] == 0)
    X[3:, 2] = 0.0
    np.testing.assert_array_equal(zero_block(X, 1, [3], sizes=(3, 2)), X)
    with pytest.raises(ImportanceError):
        zero_block(X, 2, [1], sizes=(3, 2))
    with pytest.raises(ImportanceError):
        zero_block(X, 0, [7], sizes=(3, 2))


def test_zeroing_everything_with_memoryless_model():
    model, X, _ = small_model(seed=1, nu=0.0)
    Z = X
    for k in range(2):
        Z = zero_block(Z, k, range(1, X.shape[1] + 1), sizes=model.input_sizes)
    assert np.all(forecast(model, Z) == 0.0)


def test_block_times():
    assert block_times(10, 1, 3) == [9, 8, 7]
    assert block_times(5, 2, 1) == [3]


# -- importance ------------------------------------------------------------

@pytest.mark.parametrize("method", [STZFI, STPFI])
@pytest.mark.parametrize("b", [1, 3])
def test_matches_full_rerun(method, b):
    model, X, Y = small_model(seed=2, P=(3, 2), m=2)
    q = ImportanceQuery(0, b, method, replications=3, rng_seed=11)
    spec = MetricSpec(PC_RMSE)
    series = compute_importance(model, X, Y, q, spec)
    times, vals = full_rerun_importance(model, X, Y, q, spec)
    np.testing.assert_array_equal(series.forecast_times, times)
    assert np.max(np.abs(series.values - vals)) < 1e-12


def test_matches_full_rerun_spatial_lead_two(rng):
    f = make_field(rng.normal(size=(9, 40)))
    d = fit_pca(f, 3)
    X = rng.normal(size=(4, 40))
    model = fit(EsnHyperparams(n_h=10, pi_w=0.5, pi_u=0.5, a_w=1, a_u=1, tau=2, tau_star=2, m=1), X,
                d.coefficients, input_sizes=(2, 2))
    spec = MetricSpec(SPATIAL_RMSE, basis=d)
    q = ImportanceQuery(1, 2, STZFI)
    series = compute_importance(model, X, f.values, q, spec)
    times, vals = full_rerun_importance(model, X, f.values, q, spec)
    np.testing.assert_array_equal(series.forecast_times, times)
    assert np.max(np.abs(series.values - vals)) < 1e-12


@pytest.mark.parametrize("method", [STZFI, STPFI])
def test_ignored_variable_has_zero_importance(method):
    model, X, Y = small_model(seed=3)
    m0 = ignoring_model(model, 1)
    s = compute_importance(m0, X, Y, ImportanceQuery(1, 2, method, 4, 5), MetricSpec(PC_RMSE))
    assert np.max(np.abs(s.values)) <= 1e-14


def test_pfi_singleton_is_zero():
    model, X, Y = small_model(seed=4, P=(1, 3))
    s = compute_importance(model, X, Y, ImportanceQuery(0, 3, STPFI, 5), MetricSpec(PC_RMSE))
    assert np.all(s.values == 0.0)


def test_zfi_single_difference_form():
    model, X, Y = small_model(seed=5, m=1)
    spec = MetricSpec(PC_RMSE)
    s = compute_importance(model, X, Y, ImportanceQuery(1, 2, STZFI), spec)
    base = forecast(model, X)
    ff = model.first_forecast_time
    for t, v in zip(s.forecast_times, s.values):
        Z = zero_block(X, 1, [t - 1, t - 2], sizes=model.input_sizes)
        adj = forecast(model, Z)[:, t - ff]
        direct = rmse_metric_longhand(Y[:, t - 1], adj) - rmse_metric_longhand(Y[:, t - 1], base[:, t - ff])
        assert abs(v - direct) < 1e-12


def test_skipped_times_and_signs():
    model, X, Y = small_model(seed=6)
    s = compute_importance(model, X, Y, ImportanceQuery(0, 4, STZFI), MetricSpec(PC_RMSE))
    ff = model.first_forecast_time
    assert s.skipped_times == (3, 4)
    assert s.forecast_times[0] == 5 and s.forecast_times[-1] == X.shape[1]
    assert ff == 3
    assert np.any(s.values < 0) or np.all(np.isfinite(s.values))


def test_block_containment():
    model, X, Y = small_model(seed=7)
    ff = model.first_forecast_time
    X0 = X.copy()
    Ynan = Y.copy()
    Ynan[:, : ff - 1] = np.nan  # never read: no forecast exists there
    s = compute_importance(model, X, Ynan, ImportanceQuery(0, 2, STPFI, 3), MetricSpec(PC_RMSE))
    assert np.all(np.isfinite(s.values))
    np.testing.assert_array_equal(X, X0)
    # a target's importance only depends on its own observed column
    Y2 = Y.copy()
    Y2[:, 20] += 5.0
    a = compute_importance(model, X, Y, ImportanceQuery(0, 2, STZFI), MetricSpec(PC_RMSE))
    b = compute_importance(model, X, Y2, ImportanceQuery(0, 2, STZFI), MetricSpec(PC_RMSE))
    differ = a.forecast_times[a.values != b.values]
    assert list(differ) == [21]


def test_zfi_deterministic_and_pfi_seeded():
    model, X, Y = small_model(seed=8)
    spec = MetricSpec(PC_RMSE)
    q = ImportanceQuery(0, 2, STZFI)
    assert np.array_equal(compute_importance(model, X, Y, q, spec).values,
                          compute_importance(model, X, Y, q, spec).values)
    p1 = compute_importance(model, X, Y, ImportanceQuery(1, 2, STPFI, 5, 1), spec)
    p2 = compute_importance(model, X, Y, ImportanceQuery(1, 2, STPFI, 5, 1), spec)
    p3 = compute_importance(model, X, Y, ImportanceQuery(1, 2, STPFI, 5, 2), spec)
    assert np.array_equal(p1.values, p2.values) and not np.array_equal(p1.values, p3.values)


def test_pfi_variance_shrinks_with_replications():
    model, X, Y = small_model(seed=9, P=(4, 2))
    spec = MetricSpec(PC_RMSE)

    def spread(R):
        vals = [compute_importance(model, X, Y, ImportanceQuery(0, 1, STPFI, R, seed), spec).values
                for seed in range(20)]
        return np.std(vals, axis=0, ddof=1)

    assert np.mean(spread(10)) > np.mean(spread(100))


def test_query_validation():
    model, X, Y = small_model(seed=10)
    with pytest.raises(ImportanceError):
        ImportanceQuery(0, 0)
    with pytest.raises(ImportanceError):
        ImportanceQuery(0, 1, "SHAP")
    with pytest.raises(ImportanceError):
        compute_importance(model, X, Y, ImportanceQuery(5), MetricSpec(PC_RMSE))
    with pytest.raises(ImportanceError):
        compute_importance(model, X, Y, ImportanceQuery(0, tau=2), MetricSpec(PC_RMSE))
    with pytest.raises(ImportanceError):
        compute_importance(model, X, Y, ImportanceQuery(0, block_size=X.shape[1]), MetricSpec(PC_RMSE))


def test_average_examples(rng):
    q = ImportanceQuery(0, 1, STPFI, rng_seed=3)
    t = np.arange(3, 8)
    a = ImportanceSeries(t, rng.normal(size=5), q, rng.normal(size=5))
    assert np.array_equal(average_importance([a]).values, a.values)
    neg = ImportanceSeries(t, -a.values, replace(q, rng_seed=4), a.baseline)
    assert np.all(average_importance([a, neg]).values == 0)
    many = [ImportanceSeries(t, rng.normal(size=5), replace(q, rng_seed=i), rng.normal(size=5)) for i in range(50)]
    longhand = [sum(s.values[j] for s in many) / 50 for j in range(5)]
    assert np.max(np.abs(average_importance(many).values - longhand)) < 1e-12
    with pytest.raises(ImportanceError):
        average_importance([a, ImportanceSeries(t + 1, a.values, q, a.baseline)])
    with pytest.raises(ImportanceError):
        average_importance([a, ImportanceSeries(t, a.values, replace(q, block_size=2), a.baseline)])
    with pytest.raises(ImportanceError):
        average_importance([])
