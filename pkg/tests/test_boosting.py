"""Stump boosting: exhaustive split oracle, loss monotonicity, recursion."""

from __future__ import annotations

import json

import numpy as np
import pytest

from macrobench import (
    BoostError,
    LagFeatureConfig,
    Period,
    boost_from_json,
    boost_to_json,
    fit_lsboost,
    lsboost_forecast,
    make_supervised,
    predict_lsboost,
)

from .conftest import make_series


def oracle_best_stump(X, r):
    """Exhaustive scan over features and midpoint thresholds.

    Returns (sse, feature, threshold, left, right) minimizing the squared
    error of a two-leaf fit to the residuals, ties going to the lowest
    feature index and then the lowest threshold.
    """
    n, p = X.shape
    best = None
    for j in range(p):
        xs = np.unique(X[:, j])
        cuts = (xs[:-1] + xs[1:]) / 2.0
        for c in cuts:
            left = r[X[:, j] <= c]
            right = r[X[:, j] > c]
            sse = float(((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum())
            if best is None or sse < best[0] - 1e-12:
                best = (sse, j, float(c), float(left.mean()), float(right.mean()))
    if best is None:  # no split possible anywhere
        return (float(((r - r.mean()) ** 2).sum()), 0, 0.0, float(r.mean()), float(r.mean()))
    return best


class TestStumpSearch:
    def test_first_stage_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(41)
        for _ in range(60):
            n = int(rng.integers(5, 40))
            p = int(rng.integers(1, 5))
            X = rng.normal(size=(n, p))
            if rng.uniform() < 0.3:
                X[:, rng.integers(0, p)] = rng.choice([0.0, 1.0], size=n)
            y = rng.normal(size=n)
            model = fit_lsboost(X, y, n_stages=1, shrinkage=1.0)
            _, stump = model.stages[0]
            r = y - y.mean()
            sse, j, c, left, right = oracle_best_stump(X, r)
            got_pred = stump.predict(X)
            want_pred = np.where(X[:, j] <= c, left, right)
            got_sse = float(((r - got_pred) ** 2).sum())
            assert got_sse == pytest.approx(sse, rel=1e-10, abs=1e-10)
            np.testing.assert_allclose(got_pred, want_pred, atol=1e-10)

    def test_tie_breaks_to_lowest_feature_index(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        model = fit_lsboost(X, y, n_stages=1, shrinkage=1.0)
        assert model.stages[0][1].feature_index == 0

    def test_constant_features_fall_back_to_mean_stump(self):
        X = np.zeros((6, 2))
        y = np.arange(6.0)
        model = fit_lsboost(X, y, n_stages=3, shrinkage=1.0)
        stump = model.stages[0][1]
        assert stump.left_value == stump.right_value == pytest.approx(0.0, abs=1e-12)
        assert predict_lsboost(model, np.zeros(2)) == pytest.approx(y.mean(), abs=1e-12)


class TestTraining:
    def test_f0_is_target_mean(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            y = rng.normal(size=12)
            model = fit_lsboost(rng.normal(size=(12, 3)), y, n_stages=2)
            assert model.f0 == pytest.approx(y.mean(), abs=1e-12)

    def test_training_mse_non_increasing(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            X = rng.normal(size=(30, 4))
            y = rng.normal(size=30)
            model = fit_lsboost(X, y, n_stages=80, shrinkage=np.random.default_rng(1).uniform(0.05, 1.0))
            mses = np.asarray(model.train_mse)
            assert np.all(np.diff(mses) <= 1e-12)

    def test_separable_fixture_drives_mse_to_zero(self):
        # y determined by two binary features: four distinct leaves reachable
        # by stumps, so shrinkage-1 boosting nails it quickly
        X = np.array([[a, b] for a in (0.0, 1.0) for b in (0.0, 1.0)] * 4)
        y = np.array([3.0 * a - 2.0 * b + 1.0 for a, b in X[:, :2]])
        model = fit_lsboost(X, y, n_stages=60, shrinkage=1.0)
        assert model.train_mse[-1] < 1e-6

    def test_stage_weight_recorded_as_one(self):
        model = fit_lsboost(np.random.default_rng(0).normal(size=(10, 2)), np.arange(10.0), n_stages=5)
        assert all(rho == 1.0 for rho, _ in model.stages)

    def test_parameter_validation(self):
        X = np.zeros((6, 2))
        y = np.zeros(6)
        with pytest.raises(BoostError):
            fit_lsboost(X, y, n_stages=0)
        with pytest.raises(BoostError):
            fit_lsboost(X, y, shrinkage=0.0)
        with pytest.raises(BoostError):
            fit_lsboost(X, y, shrinkage=1.5)
        with pytest.raises(BoostError):
            fit_lsboost(X[:3], y[:3])
        with pytest.raises(BoostError):
            fit_lsboost(np.zeros(6), y)

    def test_matrix_and_row_predictions_agree(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(25, 3))
        y = rng.normal(size=25)
        model = fit_lsboost(X, y, n_stages=30)
        batch = predict_lsboost(model, X)
        rows = np.array([predict_lsboost(model, row) for row in X])
        np.testing.assert_array_equal(batch, rows)


class TestFeatures:
    def test_supervised_matrix_hand_checked(self):
        s = make_series([10.0, 11.0, 12.0, 13.0, 14.0, 15.0], start=Period(2000, 1))
        cfg = LagFeatureConfig(lags=(1, 2), include_seasonal_dummies=True)
        X, y = make_supervised(s, cfg)
        # first target is 2000Q3 (needs 2 lags): lags (11, 10), quarter 3
        np.testing.assert_allclose(X[0], [11.0, 10.0, 0.0, 1.0, 0.0])
        assert y[0] == 12.0
        # last target is 2001Q2: lags (14, 13), quarter 2
        np.testing.assert_allclose(X[-1], [14.0, 13.0, 1.0, 0.0, 0.0])
        assert y[-1] == 15.0
        assert X.shape == (4, 5)

    def test_lag_only_features(self):
        s = make_series(np.arange(8.0))
        X, y = make_supervised(s, LagFeatureConfig(lags=(1,), include_seasonal_dummies=False))
        assert X.shape == (7, 1)
        np.testing.assert_allclose(X[:, 0], np.arange(7.0))

    def test_lag_config_validation(self):
        with pytest.raises(BoostError):
            LagFeatureConfig(lags=(0,))
        with pytest.raises(BoostError):
            LagFeatureConfig(lags=(1, 1))
        with pytest.raises(BoostError):
            LagFeatureConfig(lags=())


class TestForecast:
    def test_recursion_feeds_predictions_forward(self):
        s = make_series(np.arange(30.0) % 7, start=Period(2000, 1))
        cfg = LagFeatureConfig(lags=(1, 2), include_seasonal_dummies=True)
        X, y = make_supervised(s, cfg)
        model = fit_lsboost(X, y, n_stages=40, shrinkage=0.3)
        out = lsboost_forecast(s, cfg, horizon=3, model=model)

        # replay the recursion by hand with predict_lsboost
        vals = list(s.values)
        expect = []
        for h in range(1, 4):
            target = s.end + h
            q = target.quarter
            row = [vals[-1], vals[-2], float(q == 2), float(q == 3), float(q == 4)]
            pred = predict_lsboost(model, np.asarray(row))
            expect.append(pred)
            vals.append(pred)
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_forecast_without_prefit_model(self):
        s = make_series(np.sin(np.arange(40.0)) + 3.0)
        out = lsboost_forecast(s, LagFeatureConfig(), horizon=4)
        assert out.shape == (4,)
        assert np.all(np.isfinite(out))

    def test_bad_horizon(self):
        s = make_series(np.arange(30.0))
        with pytest.raises(BoostError):
            lsboost_forecast(s, LagFeatureConfig(), horizon=0)


class TestSerialization:
    def test_round_trip_is_exact(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(40, 5))
        y = rng.normal(size=40)
        model = fit_lsboost(X, y, n_stages=25, shrinkage=0.2)
        clone = boost_from_json(boost_to_json(model))
        assert clone.f0 == model.f0
        assert clone.shrinkage == model.shrinkage
        assert clone.n_features == model.n_features
        np.testing.assert_array_equal(predict_lsboost(clone, X), predict_lsboost(model, X))
        assert clone.train_mse == model.train_mse

    def test_format_marker_checked(self):
        model = fit_lsboost(np.zeros((6, 1)), np.arange(6.0), n_stages=1)
        doc = json.loads(boost_to_json(model))
        assert doc["format"] == "lsboost-stumps/1"
        doc["format"] = "other/9"
        with pytest.raises(BoostError):
            boost_from_json(json.dumps(doc))
