import math

import numpy as np
import pytest

from lolal.anomaly import (
    VARIANCE_FLOOR,
    NaiveBayesModel,
    anomaly_score,
    anomaly_scores,
    fit_nb,
)


def unit_model(d, label="c"):
    return NaiveBayesModel(
        means={label: np.zeros(d)}, variances={label: np.ones(d)}, counts={label: 10}
    )


class TestFit:
    def test_hand_arithmetic_mean_and_population_variance(self):
        model = fit_nb({"c": np.array([[0.0, 0.0], [2.0, 2.0]])})
        np.testing.assert_array_equal(model.means["c"], [1.0, 1.0])
        np.testing.assert_array_equal(model.variances["c"], [1.0, 1.0])

    def test_single_sample_class_gets_floor_variance(self):
        model = fit_nb({"c": np.array([[3.0, -1.0, 7.0]])})
        np.testing.assert_array_equal(model.variances["c"], [VARIANCE_FLOOR] * 3)

    def test_constant_feature_gets_floor(self):
        X = np.array([[1.0, 5.0], [1.0, 6.0], [1.0, 7.0]])
        model = fit_nb({"c": X})
        assert model.variances["c"][0] == VARIANCE_FLOOR
        assert model.variances["c"][1] > VARIANCE_FLOOR

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 4))
        m1 = fit_nb({"c": X})
        m2 = fit_nb({"c": X[rng.permutation(30)]})
        np.testing.assert_allclose(m1.means["c"], m2.means["c"], atol=1e-12)
        np.testing.assert_allclose(m1.variances["c"], m2.variances["c"], atol=1e-12)

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            fit_nb({})
        with pytest.raises(ValueError):
            fit_nb({"c": np.zeros((0, 3))})


class TestScore:
    @pytest.mark.parametrize("d", [1, 3, 16, 58])
    def test_closed_form_at_class_mean(self, d):
        model = unit_model(d)
        expected = (d / 2) * math.log(2 * math.pi)
        assert abs(anomaly_score(model, np.zeros(d), "c") - expected) < 1e-9

    def test_three_sigma_step_adds_4_5_nats(self):
        model = unit_model(6)
        base = anomaly_score(model, np.zeros(6), "c")
        x = np.zeros(6)
        x[2] = 3.0  # one coordinate moved to mean + 3 sigma
        assert anomaly_score(model, x, "c") - base == pytest.approx(4.5, abs=1e-12)

    def test_mean_is_the_minimum(self):
        model = unit_model(4)
        at_mean = anomaly_score(model, np.zeros(4), "c")
        rng = np.random.default_rng(1)
        for _ in range(50):
            assert anomaly_score(model, rng.normal(size=4), "c") >= at_mean

    def test_additive_over_features(self):
        # oracle: score each feature independently and sum
        rng = np.random.default_rng(2)
        d = 5
        mu = rng.normal(size=d)
        var = rng.uniform(0.5, 2.0, size=d)
        model = NaiveBayesModel(means={"c": mu}, variances={"c": var})
        x = rng.normal(size=d)
        per_feature = [
            anomaly_score(
                NaiveBayesModel(means={"c": mu[j : j + 1]}, variances={"c": var[j : j + 1]}),
                x[j : j + 1],
                "c",
            )
            for j in range(d)
        ]
        assert anomaly_score(model, x, "c") == pytest.approx(sum(per_feature), rel=1e-12)

    def test_monotone_in_coordinate_distance(self):
        model = unit_model(3)
        base = np.array([0.2, -0.1, 0.4])
        scores = []
        for delta in (0.0, 0.5, 1.0, 2.0, 4.0):
            x = base.copy()
            x[1] = delta  # mean is 0, so |x_1 - mu_1| grows
            scores.append(anomaly_score(model, x, "c"))
        assert all(b >= a for a, b in zip(scores, scores[1:]))

    def test_finite_for_extreme_inputs(self):
        model = fit_nb({"c": np.array([[1.0, 1.0]])})  # floored variances
        score = anomaly_score(model, np.array([1e6, -1e6]), "c")
        assert np.isfinite(score)

    def test_unknown_class(self):
        model = unit_model(2)
        with pytest.raises(KeyError):
            anomaly_score(model, np.zeros(2), "other")

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        model = fit_nb({"a": rng.normal(size=(20, 3)), "b": rng.normal(loc=2, size=(15, 3))})
        X = rng.normal(size=(10, 3))
        labels = ["a", "b"] * 5
        batch = anomaly_scores(model, X, labels)
        singles = [anomaly_score(model, X[i], labels[i]) for i in range(10)]
        np.testing.assert_allclose(batch, singles, atol=1e-12)


def test_serialization_round_trip():
    rng = np.random.default_rng(4)
    model = fit_nb({"a": rng.normal(size=(5, 3)), "b": rng.normal(size=(8, 3))})
    clone = NaiveBayesModel.from_dict(model.to_dict())
    x = rng.normal(size=3)
    assert anomaly_score(clone, x, "a") == anomaly_score(model, x, "a")
    assert clone.counts == model.counts
