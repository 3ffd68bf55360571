import numpy as np
import pytest

from tvnoise.datagen import AnalyticPosterior, GaussianMixtureSpec, LabeledDataset, corrupt_labels, sample_mixture
from tvnoise.errors import ConfigError, DimensionError
from tvnoise.evaluate import accuracy
from tvnoise.model import MlpClassifier
from tvnoise.trainer import TrainConfig, accumulate_confusion, anchor_estimate, train
from tvnoise.transition import make_noise

SPEC = GaussianMixtureSpec.default()


def noisy_data(N, seed, T):
    return corrupt_labels(sample_mixture(SPEC, N, seed), T, 100 + seed)


def const_model(probs_logits, d=1):
    z = np.asarray(probs_logits, dtype=np.float64)
    return MlpClassifier("linear", d, z.size, [np.zeros((d, z.size)), z])


class TestConfusion:
    def test_one_hot_model_is_argmax(self):
        m = MlpClassifier("linear", 3, 3, [2000.0 * np.eye(3), np.zeros(3)])
        X = np.eye(3)[[0, 1, 2, 2, 0]]
        C = accumulate_confusion(m, X, [1, 1, 2, 0, 0], seed=3).counts
        expected = np.zeros((3, 3), int)
        for pred, lab in zip([0, 1, 2, 2, 0], [1, 1, 2, 0, 0]):
            expected[pred, lab] += 1
        np.testing.assert_array_equal(C, expected)

    def test_uniform_binomial(self):
        n = 10_000
        C = accumulate_confusion(const_model([0.0, 0.0]), np.zeros((n, 1)), np.zeros(n, int), seed=0).counts
        assert C[0, 1] == 0 and C[1, 1] == 0
        assert abs(C[0, 0] - 5000) <= 3 * np.sqrt(n * 0.25)
        assert C[0, 0] + C[1, 0] == n

    def test_column_sums_are_label_counts(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 4, 777)
        C = accumulate_confusion(const_model(rng.normal(size=4)), np.zeros((777, 1)), y, seed=1).counts
        np.testing.assert_array_equal(C.sum(axis=0), np.bincount(y, minlength=4))

    def test_deterministic(self):
        m, X, y = const_model([0.1, 0.2, 0.3]), np.zeros((500, 1)), np.zeros(500, int)
        a = accumulate_confusion(m, X, y, seed=9).counts
        b = accumulate_confusion(m, X, y, seed=9).counts
        assert np.array_equal(a, b)

    def test_label_mismatch(self):
        with pytest.raises(DimensionError):
            accumulate_confusion(const_model([0.0, 0.0]), np.zeros((3, 1)), [0, 1], seed=0)


class TestConfig:
    def test_defaults(self):
        c = TrainConfig(method="TVD")
        assert c.beta == (0.999, 0.01) and c.gamma == 0.1 and c.batch_size == 512
        assert c.t_init["prior_diag"] == 10.0 and c.t_init["logit_diag"] == 0.5

    def test_json_round_trip(self):
        c = TrainConfig(method="TVG", gamma=0.3, iterations=7, seed=4)
        assert TrainConfig.from_json(c.to_json()) == c

    def test_missing_method(self):
        with pytest.raises(ConfigError, match="method"):
            TrainConfig.from_dict({"iterations": 3})

    @pytest.mark.parametrize("kwargs", [
        {"method": "Nope"}, {"method": "TVD", "gamma": -1}, {"method": "TVD", "beta": (0, 1)},
        {"method": "TVD", "iterations": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_forward_without_matrix(self):
        ds = noisy_data(50, 0, make_noise("pair", 3, rate=0.2))
        with pytest.raises(ConfigError):
            train(TrainConfig(method="Forward", iterations=2), ds)


class TestAnchorEstimate:
    def test_rows_at_argmax(self):
        P = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6], [0.6, 0.3, 0.1]])
        np.testing.assert_array_equal(anchor_estimate(P), P[[0, 1, 2]])

    def test_exact_posteriors_recover_t(self):
        # with near-anchor points in the sample, the exact noisy posterior reads off T
        T = make_noise("pair", 3, rate=0.3)
        X = sample_mixture(SPEC, 5000, 0).features
        est = anchor_estimate(AnalyticPosterior(SPEC, T).forward_batch(X))
        np.testing.assert_allclose(est, T.matrix, atol=1e-3)


class TestTrain:
    @pytest.mark.parametrize("method", ["TVG", "TVD", "CCE", "AnchorTwoStep", "Forward"])
    def test_deterministic_and_record_count(self, method):
        T = make_noise("pair", 3, rate=0.3)
        ds = noisy_data(300, 1, T)
        cfg = TrainConfig(method=method, iterations=25, batch_size=64,
                          fixed_t=T.matrix.tolist() if method == "Forward" else None)
        a, b = train(cfg, ds, t_true=T), train(cfg, ds, t_true=T)
        assert a.records_csv() == b.records_csv()
        assert a.records_csv().count("\n") == 26
        assert a.model.to_json() == b.model.to_json()
        assert a.t_hat.matrix.tobytes() == b.t_hat.matrix.tobytes()

    def test_records_header(self):
        ds = noisy_data(100, 2, np.eye(3))
        rep = train(TrainConfig(method="CCE", iterations=3), ds)
        lines = rep.records_csv().splitlines()
        assert lines[0] == "iter,loss,reg,avg_tv"
        assert lines[1].startswith("1,") and lines[1].endswith(",")

    def test_tvd_trace_grows(self):
        T = make_noise("pair", 3, rate=0.3)
        rep = train(TrainConfig(method="TVD", iterations=30, batch_size=128), noisy_data(500, 3, T))
        assert np.trace(rep.posterior.alpha) > 3 * 10.0

    def test_cce_clean_reaches_bayes(self):
        train_ds = noisy_data(10_000, 4, np.eye(3))
        test_ds = sample_mixture(SPEC, 20_000, 40)
        rep = train(TrainConfig(method="CCE", seed=4), train_ds)
        bayes = accuracy(AnalyticPosterior(SPEC), test_ds)
        assert accuracy(rep.model, test_ds) >= 0.99 * bayes

    def test_dimension_mismatch(self):
        ds = LabeledDataset(np.zeros((5, 2)), noisy_labels=[0, 1, 2, 0, 1])
        with pytest.raises(DimensionError):
            train(TrainConfig(method="CCE", iterations=1), ds, model=const_model([0.0, 0.0]))

    @pytest.mark.slow
    def test_forward_beats_cce_under_symmetric_noise(self):
        T = make_noise("symmetric", 3, rate=0.5)
        acc = {"Forward": [], "CCE": []}
        for s in range(3):
            tr, te = noisy_data(10_000, s, T), sample_mixture(SPEC, 20_000, 50 + s)
            for m in acc:
                cfg = TrainConfig(method=m, seed=s,
                                  fixed_t=T.matrix.tolist() if m == "Forward" else None)
                acc[m].append(accuracy(train(cfg, tr).model, te))
        assert np.median(acc["Forward"]) > np.median(acc["CCE"])

    @pytest.mark.slow
    def test_larger_gamma_spreads_predictions(self):
        T = make_noise("pair", 3, rate=0.4)
        med = {}
        for g in (0.01, 1.0):
            med[g] = np.median([train(TrainConfig(method="TVD", gamma=g, seed=s),
                                      noisy_data(10_000, s, T)).final_reg for s in range(3)])
        assert med[1.0] > med[0.01]
