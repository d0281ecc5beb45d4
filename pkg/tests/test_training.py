"""Metric oracles and training-loop behavior."""

import numpy as np
import pytest

from csentry.errors import ConfigError, DataError, DivergenceError
from csentry.metrics import (
    ConfusionMatrix,
    confusion_from_predictions,
    report_from_confusion,
)
from csentry.models import ModelKind, ModelSpec, build
from csentry.nn.losses import bce_loss
from csentry.synth import default_config, gen_scenario_corpus
from csentry.traces import Attack, Scenario, Victim, split_dataset
from csentry.training import TrainConfig, TrainResult, evaluate, train

FR_AES = Scenario(Attack.FLUSH_RELOAD, Victim.AES)


def brute_force_report(probs, labels, threshold=0.5):
    """Independent per-pair recount of all five metrics."""
    tp = fp = tn = fn = 0
    for p, y in zip(probs, labels):
        flagged = p >= threshold
        if flagged and y == 1:
            tp += 1
        elif flagged and y == 0:
            fp += 1
        elif not flagged and y == 0:
            tn += 1
        else:
            fn += 1
    total = tp + fp + tn + fn
    return {
        "tp": tp, "fp": fp, "tn": tn, "fn": fn,
        "accuracy": 100 * (tp + tn) / total,
        "precision": 100 * tp / (tp + fp) if tp + fp else 0.0,
        "recall": 100 * tp / (tp + fn) if tp + fn else 0.0,
        "fp_rate": 100 * fp / (fp + tn) if fp + tn else 0.0,
        "fn_rate": 100 * fn / (fn + tp) if fn + tp else 0.0,
    }


class TestMetrics:
    def test_hand_computed_example(self):
        rep = report_from_confusion(ConfusionMatrix(tp=45, fp=5, tn=40, fn=10))
        assert rep.as_row() == {
            "accuracy": "85.00",
            "precision": "90.00",
            "recall": "81.82",
            "fp_rate": "11.11",
            "fn_rate": "18.18",
        }

    def test_perfect_classifier(self):
        rep = report_from_confusion(ConfusionMatrix(tp=50, fp=0, tn=50, fn=0))
        assert rep.accuracy == 100.0
        assert rep.fp_rate == 0.0 and rep.fn_rate == 0.0
        assert rep.flags == ()

    def test_precision_undefined_flag(self):
        rep = report_from_confusion(ConfusionMatrix(tp=0, fp=0, tn=10, fn=5))
        assert rep.precision == 0.0
        assert "precision_undefined" in rep.flags

    def test_negative_count_rejected(self):
        with pytest.raises(DataError):
            ConfusionMatrix(tp=-1, fp=0, tn=0, fn=0)
        with pytest.raises(DataError):
            ConfusionMatrix(tp=0.5, fp=0, tn=0, fn=0)

    def test_zero_total_rejected(self):
        with pytest.raises(DataError):
            report_from_confusion(ConfusionMatrix(0, 0, 0, 0))

    def test_threshold_is_inclusive(self):
        cm = confusion_from_predictions(np.array([0.5, 0.49]), np.array([1.0, 1.0]))
        assert (cm.tp, cm.fn) == (1, 1)

    def test_brute_force_equivalence_random_cases(self):
        gen = np.random.default_rng(17)
        for _ in range(200):
            n = int(gen.integers(2, 40))
            probs = gen.random(n)
            labels = (gen.random(n) < 0.5).astype(float)
            labels[0], labels[1] = 1.0, 0.0
            rep = report_from_confusion(confusion_from_predictions(probs, labels))
            want = brute_force_report(probs, labels)
            cm = rep.confusion
            assert (cm.tp, cm.fp, cm.tn, cm.fn) == (
                want["tp"], want["fp"], want["tn"], want["fn"],
            )
            for name in ("accuracy", "precision", "recall", "fp_rate", "fn_rate"):
                assert getattr(rep, name) == want[name]

    def test_identities(self):
        gen = np.random.default_rng(23)
        for _ in range(200):
            n = int(gen.integers(2, 40))
            probs = gen.random(n)
            labels = (gen.random(n) < 0.5).astype(float)
            labels[0], labels[1] = 1.0, 0.0
            rep = report_from_confusion(confusion_from_predictions(probs, labels))
            cm = rep.confusion
            specificity = 100.0 * cm.tn / (cm.tn + cm.fp)
            assert abs(rep.recall + rep.fn_rate - 100.0) < 1e-9
            assert abs(rep.fp_rate + specificity - 100.0) < 1e-9

    def test_total_invariant(self):
        cm = ConfusionMatrix(tp=3, fp=4, tn=5, fn=6)
        assert cm.total == 18


def _tiny_dataset(seed=0, n_samples=80):
    corpus = gen_scenario_corpus(default_config(FR_AES, seed=seed, n_samples=n_samples), 3, 3)
    return split_dataset(corpus, test_fraction=0.25, window_len=16, stride=8, seed=seed)


def _tiny_model(kind=ModelKind.MLP, seed=0):
    return build(ModelSpec(kind=kind, window_len=16, seed=seed))


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"lr": -1.0},
            {"early_stop_patience": 0},
            {"val_fraction": 0.0},
            {"val_fraction": 1.0},
        ],
    )
    def test_invalid_rejected(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


class TestTrain:
    def test_zero_lr_is_noop(self):
        ds = _tiny_dataset()
        model = _tiny_model()
        before = {k: v.copy() for k, v in model.params().items()}
        _, result = train(model, ds, TrainConfig(epochs=3, lr=0.0))
        after = model.params()
        for k in before:
            assert before[k].tobytes() == after[k].tobytes()
        assert result.epochs_run >= 1

    def test_loss_decreases(self):
        ds = _tiny_dataset()
        model = _tiny_model()
        _, result = train(model, ds, TrainConfig(epochs=10, shuffle_seed=1))
        assert result.train_loss[-1] < result.train_loss[0]

    def test_deterministic_history(self):
        def run():
            model = _tiny_model(seed=3)
            _, result = train(model, _tiny_dataset(), TrainConfig(epochs=5, shuffle_seed=2))
            return result, model.params()

        r1, p1 = run()
        r2, p2 = run()
        assert r1 == r2
        assert all(p1[k].tobytes() == p2[k].tobytes() for k in p1)

    def test_history_lengths_match(self):
        _, result = train(_tiny_model(), _tiny_dataset(), TrainConfig(epochs=4))
        assert len(result.train_loss) == len(result.val_loss) == result.epochs_run
        assert result.epochs_run <= 4

    def test_restores_best_epoch_snapshot(self):
        # truncating the schedule right after the best epoch reproduces the
        # restored parameters bit-exactly
        cfg = TrainConfig(epochs=8, shuffle_seed=5)
        model_a = _tiny_model(seed=1)
        _, result_a = train(model_a, _tiny_dataset(), cfg)
        cfg_b = TrainConfig(epochs=result_a.best_epoch + 1, shuffle_seed=5)
        model_b = _tiny_model(seed=1)
        _, result_b = train(model_b, _tiny_dataset(), cfg_b)
        assert result_b.best_epoch == result_a.best_epoch
        pa, pb = model_a.params(), model_b.params()
        assert all(pa[k].tobytes() == pb[k].tobytes() for k in pa)

    def test_divergence_reported_with_position(self):
        model = _tiny_model()
        # poison the classifier head: upstream ReLU gates would zero a NaN
        model.params()["5.Dense.W"][:] = np.nan
        with pytest.raises(DivergenceError) as exc:
            train(model, _tiny_dataset(), TrainConfig(epochs=2))
        assert exc.value.epoch == 0
        assert exc.value.batch == 0

    def test_batch_gradient_is_mean_of_singles(self):
        model = _tiny_model(seed=2)
        gen = np.random.default_rng(0)
        x = gen.standard_normal((6, 16, 3))
        y = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
        p = model.forward(x)
        _, dgrad = bce_loss(p, y)
        model.backward(dgrad / len(x))
        batched = {k: v.copy() for k, v in model.grads().items()}
        mean = {k: np.zeros_like(v) for k, v in batched.items()}
        for i in range(len(x)):
            pi = model.forward(x[i : i + 1])
            _, gi = bce_loss(pi, y[i : i + 1])
            model.backward(gi)
            for k, v in model.grads().items():
                mean[k] += v / len(x)
        for k in batched:
            np.testing.assert_allclose(batched[k], mean[k], atol=1e-12)


class TestEvaluate:
    def test_report_matches_brute_force(self):
        ds = _tiny_dataset()
        model = _tiny_model()
        train(model, ds, TrainConfig(epochs=3))
        rep = evaluate(model, ds.test)
        x = np.stack([w.values for w in ds.test])
        y = np.array([1.0 if w.label.value == "malicious" else 0.0 for w in ds.test])
        want = brute_force_report(model.forward(x), y)
        assert rep.confusion.tp == want["tp"]
        assert rep.accuracy == want["accuracy"]

    def test_threshold_one_kills_recall(self):
        ds = _tiny_dataset()
        model = _tiny_model()
        rep = evaluate(model, ds.test, threshold=1.0)
        assert rep.recall == 0.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            evaluate(_tiny_model(), [])

    def test_bad_threshold_rejected(self):
        ds = _tiny_dataset()
        with pytest.raises(ConfigError):
            evaluate(_tiny_model(), ds.test, threshold=1.5)
