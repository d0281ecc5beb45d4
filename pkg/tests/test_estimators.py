"""Estimator facade: validation helpers, normalizer, and detector."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from csentry import rng
from csentry.errors import ConfigError, DataError
from csentry.estimators import CscaDetector, WindowNormalizer
from csentry.models import ModelKind, ModelSpec, build
from csentry.traces import (
    Label,
    Window,
    compute_norm_stats,
    normalize,
    windows_to_arrays,
)
from csentry.training import TrainConfig, train
from csentry.validation import check_binary_labels, check_window_array


def separable_data(n_per_class=30, window_len=8, seed=21):
    """Benign near 0, malicious shifted by +3: trivially separable."""
    gen = rng.stream(seed, 9)
    benign = gen.normal(size=(n_per_class, window_len, 3))
    attack = gen.normal(size=(n_per_class, window_len, 3)) + 3.0
    x = np.concatenate([benign, attack])
    y = np.concatenate([np.zeros(n_per_class), np.ones(n_per_class)])
    return x, y


def fast_detector(**overrides):
    params = dict(kind="mlp", epochs=8, batch_size=16, lr=0.01, seed=3)
    params.update(overrides)
    return CscaDetector(**params)


class TestCheckWindowArray:
    def test_3d_passthrough(self):
        x = np.zeros((4, 6, 3))
        out = check_window_array(x)
        assert out.shape == (4, 6, 3)
        assert out.dtype == np.float64

    def test_flat_input_reshaped(self):
        flat = np.arange(2 * 18, dtype=float).reshape(2, 18)
        out = check_window_array(flat)
        assert out.shape == (2, 6, 3)
        assert np.array_equal(out.reshape(2, 18), flat)

    def test_window_sequence(self):
        windows = [
            Window(np.full((5, 3), float(i)), Label.BENIGN) for i in range(3)
        ]
        out = check_window_array(windows)
        assert out.shape == (3, 5, 3)
        assert out[2, 0, 0] == 2.0

    def test_bad_column_count(self):
        with pytest.raises(DataError, match="multiple of 3"):
            check_window_array(np.zeros((2, 7)))

    def test_bad_channel_count(self):
        with pytest.raises(DataError, match=r"\(n, W, 3\)"):
            check_window_array(np.zeros((2, 5, 4)))

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="empty"):
            check_window_array(np.zeros((0, 5, 3)))

    def test_non_finite_rejected(self):
        x = np.zeros((2, 4, 3))
        x[1, 2, 1] = np.inf
        with pytest.raises(DataError, match="non-finite"):
            check_window_array(x)

    def test_ragged_rejected(self):
        with pytest.raises(DataError):
            check_window_array([[1.0, 2.0], [1.0]])

    def test_window_len_pin(self):
        with pytest.raises(DataError, match="expects 8"):
            check_window_array(np.zeros((2, 5, 3)), window_len=8)


class TestCheckBinaryLabels:
    def test_numeric_and_bool(self):
        out = check_binary_labels([0, 1, True, False, 1.0], 5)
        assert np.array_equal(out, [0, 1, 1, 0, 1])
        assert out.dtype == np.float64

    def test_enum_and_string(self):
        out = check_binary_labels(
            [Label.MALICIOUS, Label.BENIGN, "malicious", "benign"], 4
        )
        assert np.array_equal(out, [1, 0, 1, 0])

    def test_wrong_length(self):
        with pytest.raises(DataError, match="3 labels for 2"):
            check_binary_labels([0, 1, 0], 2)

    def test_non_binary_number(self):
        with pytest.raises(DataError, match="not 0 or 1"):
            check_binary_labels([0, 2], 2)

    def test_unknown_string(self):
        with pytest.raises(DataError, match="suspicious"):
            check_binary_labels(["suspicious"], 1)


class TestWindowNormalizer:
    def test_matches_corpus_pipeline_stats(self):
        x, _ = separable_data()
        windows = [Window(v, Label.BENIGN) for v in x]
        stats = compute_norm_stats(windows)
        norm = WindowNormalizer().fit(x)
        assert np.allclose(norm.mean_, stats.mean, rtol=0, atol=0)
        assert np.allclose(norm.std_, stats.std, rtol=0, atol=0)
        normalized, _ = normalize(windows, stats)
        assert np.array_equal(
            norm.transform(x), np.stack([w.values for w in normalized])
        )

    def test_transform_standardizes(self):
        x, _ = separable_data()
        out = WindowNormalizer().fit(x).transform(x)
        flat = out.reshape(-1, 3)
        assert np.allclose(flat.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(flat.std(axis=0), 1.0, atol=1e-12)

    def test_inverse_round_trip(self):
        x, _ = separable_data()
        norm = WindowNormalizer().fit(x)
        assert np.allclose(norm.inverse_transform(norm.transform(x)), x, atol=1e-12)

    def test_zero_variance_channel(self):
        x = np.zeros((4, 5, 3))
        x[:, :, 0] = 7.0
        norm = WindowNormalizer().fit(x)
        assert norm.std_[0] == 1.0
        assert np.all(norm.transform(x)[:, :, 0] == 0.0)

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            WindowNormalizer().transform(np.zeros((1, 4, 3)))

    def test_flat_input_accepted(self):
        x, _ = separable_data()
        flat = x.reshape(len(x), -1)
        assert np.array_equal(
            WindowNormalizer().fit(flat).transform(flat),
            WindowNormalizer().fit(x).transform(x),
        )


class TestCscaDetector:
    def test_learns_separable_data(self):
        x, y = separable_data()
        det = fast_detector().fit(x, y)
        assert det.score(x, y) == 1.0

    def test_predict_proba_contract(self):
        x, y = separable_data()
        det = fast_detector().fit(x, y)
        proba = det.predict_proba(x)
        assert proba.shape == (len(x), 2)
        assert np.allclose(proba.sum(axis=1), 1.0)
        assert np.all((proba >= 0) & (proba <= 1))
        assert np.array_equal(det.predict(x), (proba[:, 1] >= 0.5).astype(int))

    def test_deterministic_across_fits(self):
        x, y = separable_data()
        a = fast_detector().fit(x, y).predict_proba(x)
        b = fast_detector().fit(x, y).predict_proba(x)
        assert np.array_equal(a, b)

    def test_matches_dataset_training_path(self, tmp_path):
        # Fitting on the raw arrays of a dataset's training windows must
        # reproduce the corpus pipeline's training bit for bit.
        from test_persistence import tiny_dataset

        ds = tiny_dataset()
        x, y = windows_to_arrays(ds.train)
        det = CscaDetector(kind="mlp", epochs=4, batch_size=16, lr=0.01, seed=6)
        det.fit(x, y)

        model = build(ModelSpec(ModelKind.MLP, window_len=ds.window_len, seed=6))
        cfg = TrainConfig(epochs=4, batch_size=16, lr=0.01, shuffle_seed=6)
        model, result = train(model, ds, cfg)

        x_test, _ = windows_to_arrays(ds.test)
        assert det.train_result_.val_loss == result.val_loss
        assert np.array_equal(det.predict_proba(x_test)[:, 1], model.forward(x_test))

    def test_kind_accepts_enum_and_string(self):
        x, y = separable_data(n_per_class=10)
        for kind in (ModelKind.MLP, "MLP", "mlp"):
            det = fast_detector(kind=kind, epochs=2).fit(x, y)
            assert det.model_.kind is ModelKind.MLP

    def test_unknown_kind_fails_at_fit(self):
        x, y = separable_data(n_per_class=4)
        det = fast_detector(kind="transformer")
        with pytest.raises(ConfigError, match="transformer"):
            det.fit(x, y)

    def test_bad_threshold_fails_at_fit(self):
        x, y = separable_data(n_per_class=4)
        with pytest.raises(ConfigError, match="threshold"):
            fast_detector(threshold=1.5).fit(x, y)

    def test_threshold_one_predicts_benign(self):
        x, y = separable_data()
        det = fast_detector(threshold=1.0).fit(x, y)
        proba = det.predict_proba(x)[:, 1]
        assert np.array_equal(det.predict(x), (proba >= 1.0).astype(int))
        assert det.predict(x).sum() <= (proba == 1.0).sum()

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            fast_detector().predict(np.zeros((1, 8, 3)))

    def test_window_len_enforced_at_predict(self):
        x, y = separable_data(n_per_class=6)
        det = fast_detector(epochs=2).fit(x, y)
        with pytest.raises(DataError, match="expects 8"):
            det.predict(np.zeros((2, 9, 3)))

    def test_sklearn_clone_preserves_params(self):
        det = fast_detector(hidden=5, lr=0.02)
        cloned = clone(det)
        assert cloned.get_params() == det.get_params()
        assert not hasattr(cloned, "model_")

    def test_label_enum_targets_accepted(self):
        x, y = separable_data(n_per_class=10)
        labels = [Label.MALICIOUS if v else Label.BENIGN for v in y]
        det = fast_detector(epochs=2).fit(x, labels)
        assert set(det.predict(x)) <= {0, 1}

    def test_composes_in_pipeline(self):
        x, y = separable_data()
        pipe = Pipeline(
            [("norm", WindowNormalizer()), ("det", fast_detector())]
        ).fit(x, y)
        assert pipe.score(x, y) == 1.0
