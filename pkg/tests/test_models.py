"""Architecture construction, prediction interface, end-to-end gradients."""

import numpy as np
import pytest

from csentry.errors import ConfigError, ShapeError
from csentry.models import (
    ALL_KINDS,
    MLP_WIDTHS,
    Model,
    ModelKind,
    ModelSpec,
    build,
)
from csentry.nn.layers import LSTM, Conv1D, Dense, MaxPool1D, ReLU, Sigmoid

from _gradcheck import TOLERANCE, check_model_gradients


def _build(kind, **kw):
    return build(ModelSpec(kind=kind, **kw))


def _window(seed=0, w=32):
    return np.random.default_rng(seed).standard_normal((w, 3))


class TestKinds:
    def test_exactly_six(self):
        assert len(ALL_KINDS) == 6
        assert {k.value for k in ALL_KINDS} == {
            "Mlp", "Cnn", "Rnn", "Lstm", "Gru", "HybridCnnLstm",
        }

    def test_parse_case_insensitive(self):
        assert ModelKind.parse("mlp") is ModelKind.MLP
        assert ModelKind.parse("HybridCnnLstm") is ModelKind.HYBRID_CNN_LSTM
        assert ModelKind.parse(" gru ") is ModelKind.GRU

    def test_parse_unknown(self):
        with pytest.raises(ConfigError, match="transformer"):
            ModelKind.parse("transformer")


class TestConstruction:
    def test_hybrid_shape_chain(self):
        # W=32, k=3, p=2: conv gives 30 steps, pooling 15, so the LSTM
        # consumes a length-15 sequence
        model = _build(ModelKind.HYBRID_CNN_LSTM)
        model.forward(_window()[None])
        lstm = model.layers[3]
        assert isinstance(lstm, LSTM)
        assert lstm.hidden_seq.shape == (1, 15, 32)

    def test_mlp_parameter_count(self):
        # (96*64+64) + (64*32+32) + (32*1+1)
        model = _build(ModelKind.MLP)
        w = 32 * 3
        w1, w2 = MLP_WIDTHS
        expected = (w * w1 + w1) + (w1 * w2 + w2) + (w2 * 1 + 1)
        assert expected == 8321
        assert model.param_count() == expected

    def test_architecture_layer_sequences(self):
        names = {
            ModelKind.MLP: ["Flatten", "Dense", "ReLU", "Dense", "ReLU", "Dense", "Sigmoid"],
            ModelKind.CNN: ["Conv1D", "ReLU", "MaxPool1D", "Conv1D", "ReLU",
                            "MaxPool1D", "Flatten", "Dense", "Sigmoid"],
            ModelKind.RNN: ["SimpleRNN", "Dense", "Sigmoid"],
            ModelKind.LSTM: ["LSTM", "Dense", "Sigmoid"],
            ModelKind.GRU: ["GRU", "Dense", "Sigmoid"],
            ModelKind.HYBRID_CNN_LSTM: ["Conv1D", "ReLU", "MaxPool1D", "LSTM",
                                        "Dense", "Sigmoid"],
        }
        for kind, expected in names.items():
            assert [l.name for l in _build(kind).layers] == expected

    def test_window_too_small_names_stage(self):
        with pytest.raises(ShapeError, match="Cnn.*stage"):
            _build(ModelKind.CNN, window_len=6)
        with pytest.raises(ShapeError, match="HybridCnnLstm"):
            _build(ModelKind.HYBRID_CNN_LSTM, window_len=2)

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigError):
            ModelSpec(kind=ModelKind.MLP, hidden=0)

    def test_init_deterministic_in_seed(self):
        a = _build(ModelKind.LSTM, seed=5).params()
        b = _build(ModelKind.LSTM, seed=5).params()
        c = _build(ModelKind.LSTM, seed=6).params()
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)
        assert any(a[k].tobytes() != c[k].tobytes() for k in a)


class TestPredict:
    def test_zero_window_gives_half(self):
        # zero biases (and a zero cell state) make every pipeline collapse
        # to sigmoid(0)
        zero = np.zeros((32, 3))
        for kind in ALL_KINDS:
            assert _build(kind).predict(zero) == 0.5

    def test_probability_range_random_trials(self):
        # 10,000 random windows per kind stay strictly inside (0,1)
        gen = np.random.default_rng(8)
        x = gen.standard_normal((10_000, 32, 3))
        for kind in ALL_KINDS:
            p = _build(kind, seed=3).predict_batch(x)
            assert p.shape == (10_000,)
            assert ((p > 0.0) & (p < 1.0)).all(), kind

    def test_purity(self):
        w = _window(2)
        for kind in ALL_KINDS:
            model = _build(kind, seed=1)
            assert model.predict(w) == model.predict(w)

    def test_shape_mismatch(self):
        model = _build(ModelKind.MLP)
        with pytest.raises(ShapeError, match="Mlp"):
            model.predict(np.zeros((16, 3)))
        with pytest.raises(ShapeError):
            model.forward(np.zeros((4, 32, 2)))

    def test_batch_matches_single(self):
        x = np.stack([_window(i) for i in range(4)])
        for kind in ALL_KINDS:
            model = _build(kind, seed=2)
            batch = model.predict_batch(x)
            singles = [model.predict(x[i]) for i in range(4)]
            np.testing.assert_allclose(batch, singles, atol=1e-14)


class TestParams:
    def test_names_unique_and_ordered(self):
        model = _build(ModelKind.HYBRID_CNN_LSTM)
        names = list(model.params())
        assert len(names) == len(set(names))
        assert names == ["0.Conv1D.W", "0.Conv1D.b", "3.LSTM.Wx", "3.LSTM.Wh",
                         "3.LSTM.b", "4.Dense.W", "4.Dense.b"]

    def test_set_params_round_trip(self):
        a = _build(ModelKind.GRU, seed=1)
        b = _build(ModelKind.GRU, seed=2)
        w = _window(5)
        assert a.predict(w) != b.predict(w)
        b.set_params(a.clone_params())
        assert a.predict(w) == b.predict(w)

    def test_set_params_rejects_bad_names(self):
        model = _build(ModelKind.RNN)
        with pytest.raises(ShapeError, match="missing"):
            model.set_params({"nope": np.zeros(1)})

    def test_set_params_rejects_bad_shape(self):
        model = _build(ModelKind.RNN)
        named = model.clone_params()
        named["1.Dense.b"] = np.zeros(7)
        with pytest.raises(ShapeError, match="1.Dense.b"):
            model.set_params(named)

    def test_clone_is_deep(self):
        model = _build(ModelKind.MLP)
        snap = model.clone_params()
        w = _window(3)
        before = model.predict(w)
        model.params()["1.Dense.W"][:] += 1.0
        assert model.predict(w) != before
        model.set_params(snap)
        assert model.predict(w) == before


class TestHybridSharing:
    def test_cnn_stage_equals_standalone_cnn(self):
        # with identical conv parameters, the hybrid's first three stages
        # compute exactly the standalone Cnn's first three stages
        hybrid = _build(ModelKind.HYBRID_CNN_LSTM, seed=4)
        cnn = _build(ModelKind.CNN, seed=9)
        cnn.layers[0].params = {k: v.copy() for k, v in hybrid.layers[0].params.items()}
        x = _window(6)[None]
        out_h = x
        for layer in hybrid.layers[:3]:
            out_h = layer.forward(out_h)
        out_c = x
        for layer in cnn.layers[:3]:
            out_c = layer.forward(out_c)
        np.testing.assert_array_equal(out_h, out_c)
        assert isinstance(hybrid.layers[0], Conv1D)
        assert isinstance(hybrid.layers[2], MaxPool1D)


class TestEndToEndGradients:
    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
    def test_bce_of_predict_matches_finite_differences(self, kind):
        spec = ModelSpec(kind=kind, window_len=12, hidden=5, conv_channels=3,
                         kernel=3, pool=2, seed=7)
        model = build(spec)
        window = np.random.default_rng(13).standard_normal((12, 3))
        err = check_model_gradients(model, window, target=1.0)
        assert err < TOLERANCE, f"{kind.value}: rel err {err:.3e}"
