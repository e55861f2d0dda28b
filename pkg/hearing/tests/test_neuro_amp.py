import inspect
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from hearing.dataset import ManifestEntry, PairedExample
from hearing.exceptions import EmptySplit, InvalidAudiogram, InvalidConfig, ShapeMismatch
from hearing.neuro_amp import (
    AdamState,
    AmpModel,
    Architecture,
    EarlyStopping,
    ModelConfig,
    TrainConfig,
    adam_step,
    backward,
    check_gradients,
    count_parameters,
    embed_audiogram,
    fit,
    forward,
    infer,
    infer_manifest,
    loss_mse,
    preset_config,
    with_depth,
    write_history,
)
from hearing.neuro_amp import layers
from hearing.neuro_amp.architectures import SCALE_PRESETS, forward_graph, inverse_softplus
from hearing.neuro_amp.tensor import Tensor, parameters
from hearing.prescription import Audiogram
from hearing.services import SweepKind, sweep_variants
from hearing.signal_core import DEFAULT_STFT, MagnitudeSpectrogram, WaveBuffer, istft, recombine, write_wav

LN2 = np.log(2.0)
SLOPING = Audiogram((20, 25, 35, 50, 65, 70), "slope")


def tiny(arch, **overrides):
    sizes = dict(audiogram_embed_dim=4, cnn_filters=(4,), crnn_filters=(4,), lstm_units=4, lstm_layers=1,
                 tfm_blocks=1, tfm_heads=2, tfm_dim=8, tfm_ffn_dim=8)
    sizes.update(overrides)
    return ModelConfig(arch=arch, **sizes)


def random_example(seed, n_frames=3, a=SLOPING):
    rng = np.random.default_rng(seed)
    features = rng.uniform(0, 2, (n_frames, 257))
    target = rng.uniform(0, 2, (n_frames, 257))
    return PairedExample(features, target, a, np.zeros_like(features), key=f"ex{seed}")


def silent_head(model):
    params = dict(model.params)
    params["head.weight"] = np.zeros_like(params["head.weight"])
    params["head.bias"] = np.zeros_like(params["head.bias"])
    return AmpModel(model.config, params, model.rng_seed)


class ModelShapeTests(SimpleTestCase):
    def test_desk_parameter_counts(self):
        expected = {"cnn": 12194, "lstm": 58498, "crnn": 30898, "transformer": 102690}
        for arch, count in expected.items():
            cfg = preset_config("desk", arch=arch)
            self.assertEqual(count_parameters(cfg), count)
            self.assertEqual(AmpModel.initialize(cfg).parameter_count, count)

    def test_output_shape(self):
        features = np.random.default_rng(0).uniform(0, 2, (7, 257))
        for arch in Architecture.values:
            out = forward(AmpModel.initialize(tiny(arch), seed=1), features, SLOPING)
            self.assertEqual(out.shape, (7, 257))
            self.assertTrue(np.all(out >= 0))

    def test_zero_parameters_give_softplus_of_zero(self):
        features = np.random.default_rng(0).uniform(0, 2, (5, 257))
        for arch in Architecture.values:
            model = AmpModel.initialize(tiny(arch))
            zeroed = AmpModel(model.config, {k: np.zeros_like(v) for k, v in model.params.items()})
            np.testing.assert_allclose(forward(zeroed, features, SLOPING), LN2, rtol=1e-12)

    def test_silent_head_passes_input_through(self):
        features = np.random.default_rng(4).uniform(0.01, 3, (6, 257))
        for arch in Architecture.values:
            model = silent_head(AmpModel.initialize(tiny(arch), seed=2))
            np.testing.assert_allclose(forward(model, features, SLOPING), features, rtol=1e-9)

    def test_skip_connection_off(self):
        cfg = preset_config("desk", arch=Architecture.CNN, skip_connection=False)
        model = AmpModel.initialize(cfg)
        self.assertNotIn("head.skip", model.params)
        self.assertEqual(count_parameters(cfg), 11937)
        self.assertEqual(model.parameter_count, 11937)

    def test_inverse_softplus(self):
        x = np.array([0.0, 1e-9, 0.5, 4.0])
        restored = np.logaddexp(0.0, inverse_softplus(x))
        np.testing.assert_allclose(restored[2:], x[2:], rtol=1e-12)
        self.assertTrue(np.all(restored[:2] <= 1.1e-6))
        self.assertTrue(np.all(np.isfinite(inverse_softplus(x))))

    def test_skip_weights_start_at_one(self):
        model = AmpModel.initialize(preset_config("desk"), seed=0)
        np.testing.assert_array_equal(model.params["head.skip"], np.ones(257))

    def test_scale_presets_grow(self):
        for arch in Architecture.values:
            counts = [count_parameters(preset_config(name, arch=arch)) for name in SCALE_PRESETS]
            self.assertEqual(counts, sorted(counts), arch)
            self.assertLess(counts[0], counts[1])
            self.assertLess(counts[1], counts[2])
        self.assertEqual(preset_config("medium"), preset_config("desk"))

    def test_with_depth(self):
        self.assertEqual(with_depth(preset_config("desk", arch="transformer"), 3).tfm_blocks, 3)
        self.assertEqual(with_depth(preset_config("desk", arch="lstm"), 1).lstm_layers, 1)
        self.assertEqual(with_depth(preset_config("desk", arch="crnn"), 4).lstm_layers, 4)
        self.assertEqual(with_depth(preset_config("desk", arch="cnn"), 3).cnn_filters, (8, 16, 32))
        for arch in Architecture.values:
            counts = [count_parameters(with_depth(preset_config("desk", arch=arch), d)) for d in (1, 2, 3)]
            self.assertLess(counts[0], counts[1], arch)
            self.assertLess(counts[1], counts[2], arch)
        self.assertEqual(with_depth(preset_config("desk", arch="cnn"), 2), preset_config("desk", arch="cnn"))

    def test_with_depth_rejects_zero(self):
        with self.assertRaises(InvalidConfig):
            with_depth(ModelConfig(), 0)

    def test_sweep_variants(self):
        base = preset_config("desk", arch="crnn")
        scale = sweep_variants(base, SweepKind.SCALE)
        self.assertEqual(list(scale), ["small", "medium", "large"])
        self.assertTrue(all(cfg.arch == "crnn" for cfg in scale.values()))
        plain = sweep_variants(preset_config("desk", skip_connection=False), SweepKind.SCALE)
        self.assertFalse(any(cfg.skip_connection for cfg in plain.values()))
        depth = sweep_variants(base, SweepKind.DEPTH, (1, 3))
        self.assertEqual(list(depth), ["depth1", "depth3"])
        self.assertEqual(depth["depth3"].lstm_layers, 3)
        with self.assertRaises(InvalidConfig):
            sweep_variants(base, "width")

    def test_rejects_wrong_feature_width(self):
        model = AmpModel.initialize(tiny(Architecture.CNN))
        with self.assertRaises(ShapeMismatch):
            forward(model, np.zeros((4, 128)), SLOPING)

    def test_config_validation(self):
        with self.assertRaises(InvalidConfig):
            ModelConfig(arch="gru")
        with self.assertRaises(InvalidConfig):
            ModelConfig(tfm_dim=30, tfm_heads=4)
        with self.assertRaises(InvalidConfig):
            preset_config("huge")
        self.assertEqual(preset_config("full").lstm_units, 256)

    def test_transformer_without_positions_is_permutation_equivariant(self):
        cfg = tiny(Architecture.TRANSFORMER, positional_encoding=False)
        model = AmpModel.initialize(cfg, seed=3, dtype=np.float64)
        features = np.random.default_rng(1).uniform(0, 2, (3, 257))
        order = [2, 0, 1]
        permuted = forward(model, features[order], SLOPING)
        np.testing.assert_allclose(permuted, forward(model, features, SLOPING)[order], atol=1e-10)

    def test_positions_break_equivariance(self):
        model = AmpModel.initialize(tiny(Architecture.TRANSFORMER), seed=3, dtype=np.float64)
        features = np.random.default_rng(1).uniform(0, 2, (3, 257))
        order = [2, 0, 1]
        permuted = forward(model, features[order], SLOPING)
        self.assertFalse(np.allclose(permuted, forward(model, features, SLOPING)[order]))


class EmbeddingTests(SimpleTestCase):
    def test_zero_weights(self):
        p = parameters([("embed.weight", np.zeros((6, 8))), ("embed.bias", np.zeros(8))])
        self.assertFalse(np.any(embed_audiogram(SLOPING, p).data))

    def test_normalized_thresholds(self):
        weight = np.zeros((6, 8))
        weight[np.arange(6), np.arange(6)] = 1.0
        p = parameters([("embed.weight", weight), ("embed.bias", np.zeros(8))])
        embedding = embed_audiogram(Audiogram((120, 0, 0, 0, 0, 0)), p).data
        np.testing.assert_array_equal(embedding, [1, 0, 0, 0, 0, 0, 0, 0])

    def test_different_audiograms_differ(self):
        model = AmpModel.initialize(preset_config("desk"), seed=2)
        p = parameters(model.params.items())
        a = embed_audiogram(SLOPING, p).data
        b = embed_audiogram(Audiogram((40,) * 6), p).data
        self.assertFalse(np.array_equal(a, b))


class LossTests(SimpleTestCase):
    def test_zero_when_equal(self):
        target = np.random.default_rng(0).uniform(0, 2, (4, 257))
        self.assertEqual(float(loss_mse(Tensor(target), target).data), 0.0)

    def test_sum_over_bins(self):
        target = np.zeros((1, 257))
        self.assertAlmostEqual(float(loss_mse(Tensor(target + 0.1), target).data), 2.57, places=10)

    @given(st.floats(min_value=0.1, max_value=10))
    @settings(max_examples=20)
    def test_quadratic(self, scale):
        rng = np.random.default_rng(1)
        target = rng.normal(size=(3, 257))
        residual = rng.normal(size=(3, 257))
        base = float(loss_mse(Tensor(target + residual), target).data)
        scaled = float(loss_mse(Tensor(target + scale * residual), target).data)
        self.assertAlmostEqual(scaled / base, scale**2, places=6)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            loss_mse(Tensor(np.zeros((2, 257))), np.zeros((3, 257)))


class GradientTests(SimpleTestCase):
    def test_dense_layer_matches_closed_form(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=5), rng.normal(size=3)
        weight, bias = rng.normal(size=(5, 3)), rng.normal(size=3)
        p = parameters([("layer.weight", weight), ("layer.bias", bias)])
        pred = layers.dense(p, "layer", Tensor(x[None, :]))
        grads = backward(loss_mse(pred, y[None, :]), p)
        residual = x @ weight + bias - y
        np.testing.assert_allclose(grads["layer.weight"], 2 * np.outer(x, residual), rtol=1e-12)
        np.testing.assert_allclose(grads["layer.bias"], 2 * residual, rtol=1e-12)

    def assertGradientsMatch(self, cfg):
        example = random_example(4, n_frames=4)
        model = AmpModel.initialize(cfg, seed=5)
        errors = check_gradients(model, example.input_logmag, example.target_logmag, example.audiogram)
        self.assertEqual(set(errors), set(model.params))
        worst = max(errors, key=errors.get)
        self.assertLessEqual(errors[worst], 1e-4, f"{cfg.arch}: {worst}")

    def test_cnn(self):
        self.assertGradientsMatch(preset_config("desk", arch=Architecture.CNN))

    def test_lstm(self):
        self.assertGradientsMatch(preset_config("desk", arch=Architecture.LSTM))

    def test_crnn(self):
        self.assertGradientsMatch(preset_config("desk", arch=Architecture.CRNN))

    def test_transformer(self):
        self.assertGradientsMatch(preset_config("desk", arch=Architecture.TRANSFORMER))

    def test_default_step(self):
        self.assertEqual(inspect.signature(check_gradients).parameters["step"].default, 1e-3)

    def test_leaves_cover_every_parameter(self):
        model = AmpModel.initialize(tiny(Architecture.CRNN))
        example = random_example(0)
        pred, leaves = forward_graph(model, example.input_logmag, SLOPING)
        grads = backward(loss_mse(pred, example.target_logmag), leaves)
        self.assertEqual(set(grads), set(model.params))
        self.assertTrue(any(np.any(g) for g in grads.values()))


class AdamTests(SimpleTestCase):
    def test_first_step(self):
        cfg = TrainConfig()
        params = {"w": np.zeros(1)}
        updated, state = adam_step(params, {"w": np.ones(1)}, AdamState.zeros_like(params), cfg)
        self.assertAlmostEqual(updated["w"][0], -1e-4 / (1 + 1e-7), places=15)
        self.assertEqual(state.t, 1)

    def test_zero_gradient(self):
        params = {"w": np.array([0.5, -2.0])}
        updated, state = adam_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params), TrainConfig())
        np.testing.assert_array_equal(updated["w"], params["w"])
        self.assertEqual(state.t, 1)

    def test_keeps_parameter_dtype(self):
        params = {"w": np.ones(3, dtype=np.float32)}
        updated, _ = adam_step(params, {"w": np.ones(3)}, AdamState.zeros_like(params), TrainConfig())
        self.assertEqual(updated["w"].dtype, np.float32)

    def test_shape_mismatch(self):
        params = {"w": np.zeros(3)}
        with self.assertRaises(ShapeMismatch):
            adam_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params), TrainConfig())

    def test_config_validation(self):
        with self.assertRaises(InvalidConfig):
            TrainConfig(batch_size=4)
        with self.assertRaises(InvalidConfig):
            TrainConfig(lr=0)
        with self.assertRaises(InvalidConfig):
            TrainConfig(beta2=1.0)


class EarlyStoppingTests(SimpleTestCase):
    def test_patience_three(self):
        stopper = EarlyStopping(3)
        stopped_at = None
        for epoch, loss in enumerate([1.0, 0.9, 0.95, 0.96, 0.97, 0.5], start=1):
            stopper.update(epoch, loss)
            if stopper.should_stop:
                stopped_at = epoch
                break
        self.assertEqual(stopped_at, 5)
        self.assertEqual(stopper.best_epoch, 2)
        self.assertEqual(stopper.best_loss, 0.9)

    def test_improvement_resets(self):
        stopper = EarlyStopping(2)
        for epoch, loss in enumerate([1.0, 1.1, 0.8, 0.9], start=1):
            stopper.update(epoch, loss)
        self.assertFalse(stopper.should_stop)


class FitTests(SimpleTestCase):
    def setUp(self):
        self.train = [random_example(s) for s in range(3)]
        self.val = [random_example(10)]
        self.cfg = TrainConfig(lr=1e-3, max_epochs=4, early_stop_patience=2, seed=7)

    def test_deterministic(self):
        first = fit(AmpModel.initialize(tiny(Architecture.CNN), seed=1), self.train, self.val, self.cfg)
        second = fit(AmpModel.initialize(tiny(Architecture.CNN), seed=1), self.train, self.val, self.cfg)
        self.assertEqual(first.history, second.history)
        for name, value in first.model.params.items():
            np.testing.assert_array_equal(value, second.model.params[name])

    def test_returns_best_validation_weights(self):
        seen = []
        result = fit(AmpModel.initialize(tiny(Architecture.LSTM), seed=1), self.train, self.val, self.cfg, seen.append)
        self.assertEqual(seen, result.history)
        best = min(result.history, key=lambda s: s.val_loss)
        self.assertEqual(result.best_epoch, best.epoch)
        self.assertEqual(result.best_val_loss, best.val_loss)
        example = self.val[0]
        pred = forward(result.model, example.input_logmag, example.audiogram)
        loss = np.sum((pred - example.target_logmag) ** 2) / pred.shape[0]
        self.assertAlmostEqual(loss, best.val_loss, places=9)

    def test_training_lowers_loss(self):
        cfg = TrainConfig(lr=1e-2, max_epochs=15, early_stop_patience=15, seed=0)
        result = fit(AmpModel.initialize(tiny(Architecture.CNN), seed=0), self.train[:1], self.train[:1], cfg)
        self.assertLess(result.history[-1].train_loss, result.history[0].train_loss)

    def test_empty_splits(self):
        model = AmpModel.initialize(tiny(Architecture.CNN))
        with self.assertRaises(EmptySplit):
            fit(model, [], self.val, self.cfg)
        with self.assertRaises(EmptySplit):
            fit(model, self.train, [], self.cfg)

    def test_history_file(self):
        result = fit(AmpModel.initialize(tiny(Architecture.CNN), seed=1), self.train, self.val, self.cfg)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "history.csv"
            write_history(path, result.history)
            lines = path.read_text().splitlines()
        self.assertEqual(lines[0], "epoch,train_loss,val_loss")
        self.assertEqual(len(lines), len(result.history) + 1)


class InferenceTests(SimpleTestCase):
    def setUp(self):
        self.model = AmpModel.initialize(tiny(Architecture.LSTM), seed=2)

    def test_output_length(self):
        wave = WaveBuffer(np.random.default_rng(0).normal(size=3001) * 0.05)
        out = infer(self.model, wave, SLOPING)
        self.assertEqual(len(out), 3001)
        self.assertTrue(np.all(np.isfinite(out.samples)))

    def test_silence_through_zeroed_model(self):
        zeroed = AmpModel(self.model.config, {k: np.zeros_like(v) for k, v in self.model.params.items()})
        out = infer(zeroed, WaveBuffer(np.zeros(2000)), SLOPING)
        # softplus(0) = ln 2 predicts unit magnitude in every bin; silent input carries zero phase
        n_frames = 2000 // DEFAULT_STFT.hop + 1
        unit = MagnitudeSpectrogram(np.ones((n_frames, DEFAULT_STFT.n_bins)), DEFAULT_STFT)
        expected = istft(recombine(unit, np.zeros((n_frames, DEFAULT_STFT.n_bins)), 2000))
        np.testing.assert_allclose(out.samples, expected.samples, atol=1e-9)

    def test_silent_head_resynthesizes_input(self):
        wave = WaveBuffer(np.random.default_rng(6).normal(size=4000) * 0.05)
        out = infer(silent_head(self.model), wave, SLOPING)
        error = wave.samples - out.samples
        self.assertGreaterEqual(10.0 * np.log10(np.sum(wave.samples**2) / np.sum(error**2)), 60.0)

    def test_manifest_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            write_wav(root / "u1.wav", WaveBuffer(np.random.default_rng(1).normal(size=2000) * 0.05))
            entry = ManifestEntry("u1", str(root / "u1.wav"), str(root / "u1.wav"), audiogram_id="slope")
            written = infer_manifest(self.model, [entry], {"slope": SLOPING}, root / "out")
            self.assertEqual(Path(written[0][1]).name, "u1__slope.wav")
            self.assertTrue(Path(written[0][1]).is_file())

            with self.assertRaises(InvalidAudiogram):
                infer_manifest(self.model, [entry], {}, root / "out")
