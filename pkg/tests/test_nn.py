"""
Unit tests for layers, networks, Adam, training and checkpoints
"""

import unittest
from types import SimpleNamespace

import numpy as np
import pytest

from src.harness.selftest import loss_spec_for, miniature_config, network_gradient_errors, network_suite, residual_config
from src.losses import LossKind, LossSpec, Targets
from src.nn import (
    AdamState,
    Dropout,
    LayerSpec,
    Network,
    NetworkConfig,
    ResidualBlock,
    TrainSchedule,
    accuracy_from_logits,
    adam_step,
    evaluate,
    load_checkpoint,
    mini_resnet,
    save_checkpoint,
    train,
)
from src.numerics import Rng
from src.utils.errors import ArgumentError, DataError, FormatError, ShapeError, StateError


def dense_config(hidden=4, inputs=3, classes=2):
    return NetworkConfig((inputs,), (LayerSpec.dense(hidden), LayerSpec("relu"), LayerSpec.dense(classes)), classes)


def split(images, labels):
    return SimpleNamespace(images=np.asarray(images), labels=np.asarray(labels))


def separable_toy(count=200, seed=0):
    rng = Rng(seed)
    points = rng.uniform_array(-1.0, 1.0, (count * 2, 2))
    margin = points.sum(axis=1)
    points = points[np.abs(margin) > 0.2][:count]
    labels = (points.sum(axis=1) > 0).astype(np.int64)
    return SimpleNamespace(train=split(points, labels), val=split(points, labels))


class TestForward(unittest.TestCase):
    """Tests for forward passes"""

    def test_zero_weights_give_bias(self):
        """Test a zero-weight network outputs its head bias"""
        net = Network(dense_config()).eval()
        for value in net.parameters().values():
            value[...] = 0.0
        net.parameters()["dense2.bias"][...] = [0.3, -0.7]
        logits, _ = net.forward(Rng(1).normal_array((5, 3)))
        np.testing.assert_array_equal(logits, np.tile([0.3, -0.7], (5, 1)))

    def test_eval_forward_is_repeatable(self):
        """Test two eval passes agree bitwise"""
        net = Network(mini_resnet((3, 8, 8), 4, stem_width=4, widths=(4, 8)), seed=3).eval()
        x = Rng(2).uniform_array(0.0, 1.0, (6, 3, 8, 8))
        self.assertEqual(net.forward(x)[0].tobytes(), net.forward(x)[0].tobytes())

    def test_dense_chain_by_hand(self):
        """Test a dense-relu-dense net against an explicit product chain"""
        net = Network(dense_config(), seed=4).eval()
        p = net.parameters()
        x = Rng(5).normal_array((7, 3))
        hidden = np.maximum(x @ p["dense1.weight"] + p["dense1.bias"], 0.0)
        expected = hidden @ p["dense2.weight"] + p["dense2.bias"]
        np.testing.assert_allclose(net.forward(x)[0], expected, atol=1e-12)

    def test_input_shape_mismatch(self):
        """Test a wrongly shaped batch is a shape error"""
        net = Network(dense_config())
        with self.assertRaises(ShapeError):
            net.forward(np.zeros((2, 4)))

    def test_config_must_end_in_classes(self):
        """Test a head of the wrong width is refused"""
        config = NetworkConfig((3,), (LayerSpec.dense(5),), 2)
        with self.assertRaises(ShapeError):
            Network(config)

    def test_trace_covers_capturable_layers(self):
        """Test capture lists normalisation and activation layers but not dropout"""
        net = Network(mini_resnet((3, 8, 8), 3, stem_width=4, widths=(4, 8))).eval()
        logits, trace = net.forward(Rng(6).uniform_array(0.0, 1.0, (5, 3, 8, 8)), capture=True)
        names = trace.names
        for expected in ("conv1", "bn1", "relu1", "block1.conv1", "block1.bn1", "block1.relu",
                         "block2.bn2", "block2.relu", "gap", "dense1"):
            self.assertIn(expected, names)
        self.assertFalse(any(name.startswith("dropout") for name in names))
        self.assertFalse(any("shortcut" in name for name in names))
        for _, activation in trace.entries:
            self.assertEqual(activation.ndim, 2)
            self.assertEqual(activation.shape[0], 5)
        np.testing.assert_array_equal(trace.entries[-1][1], logits)

    def test_no_trace_without_capture(self):
        """Test the trace is None unless requested"""
        _, trace = Network(dense_config()).forward(np.zeros((1, 3)))
        self.assertIsNone(trace)


class TestLayers(unittest.TestCase):
    """Tests for individual layer properties"""

    def test_dropout_eval_identity(self):
        """Test eval-mode dropout returns its input object"""
        layer = Dropout("dropout1", 0.4, Rng(0))
        x = Rng(1).normal_array((4, 6))
        self.assertIs(layer.forward(x, training=False), x)

    def test_dropout_rate_range(self):
        """Test rates outside [0, 1) are refused"""
        with self.assertRaises(ArgumentError):
            Dropout("dropout1", 1.0, Rng(0))

    def test_dropout_train_scales_kept_units(self):
        """Test kept units are scaled by 1 / (1 - rate)"""
        layer = Dropout("dropout1", 0.4, Rng(0))
        out = layer.forward(np.ones((200, 50)), training=True)
        kept = out[out != 0]
        np.testing.assert_allclose(kept, 1.0 / 0.6)
        self.assertLess(abs((out != 0).mean() - 0.6), 0.02)

    def test_residual_identity_with_zero_convs(self):
        """Test a zeroed residual block without batchnorm passes non-negative input through"""
        block = ResidualBlock("block1", 3, 3, 1, Rng(0), use_batchnorm=False)
        for leaf in block.leaves():
            for value in leaf.params.values():
                value[...] = 0.0
        x = Rng(2).uniform_array(0.0, 1.0, (4, 3, 5, 5))
        np.testing.assert_allclose(block.forward(x, training=False), x, atol=1e-12)


class TestBackward(unittest.TestCase):
    """Tests for manual backpropagation"""

    def test_backward_without_forward(self):
        """Test backward with no cached pass is a state error"""
        net = Network(dense_config())
        with self.assertRaises(StateError):
            net.backward(np.zeros((1, 2)))

    def test_backward_consumes_cache(self):
        """Test a second backward needs a new forward"""
        net = Network(dense_config())
        net.forward(np.zeros((2, 3)))
        net.backward(np.zeros((2, 2)))
        with self.assertRaises(StateError):
            net.backward(np.zeros((2, 2)))

    def test_zero_loss_gradient(self):
        """Test a zero upstream gradient gives zero parameter gradients"""
        net = Network(mini_resnet((3, 6, 6), 3, stem_width=4, widths=(4,))).train()
        logits, _ = net.forward(Rng(3).uniform_array(0.0, 1.0, (4, 3, 6, 6)))
        grads = net.backward(np.zeros_like(logits))
        for name, g in grads.items():
            self.assertFalse(np.any(g), name)

    def test_dense_net_gradients(self):
        """Test a tiny dense net against finite differences"""
        net = Network(dense_config(hidden=5), seed=8).eval()
        x = Rng(9).normal_array((4, 3))
        y = Targets.from_labels(np.array([0, 1, 1, 0]), 2)
        for name, err in network_gradient_errors(net, x, y, LossSpec(LossKind.SCE)).items():
            self.assertLessEqual(err, 1e-5, name)

    def test_residual_block_gradients(self):
        """Test a residual block with batchnorm in train mode against finite differences"""
        config = NetworkConfig((2, 4, 4), (LayerSpec.residual_block(3), LayerSpec("global_avg_pool"),
                                           LayerSpec.dense(2)), 2)
        net = Network(config, seed=10).train()
        x = Rng(11).normal_array((3, 2, 4, 4))
        y = Targets.from_labels(np.array([0, 1, 0]), 2)
        for name, err in network_gradient_errors(net, x, y, LossSpec(LossKind.L2)).items():
            self.assertLessEqual(err, 1e-5, name)

    def test_bias_ahead_of_batchnorm(self):
        """Test conv biases feeding train-mode batchnorm get a zero gradient that passes the check"""
        net = Network(residual_config(), seed=10).train()
        x = Rng(11).normal_array((3, 2, 4, 4))
        y = Targets.from_labels(np.array([0, 1, 2]), 3)
        logits, _ = net.forward(x)
        grads = net.backward(np.ones_like(logits))
        for name in ("block1.conv1.bias", "block1.conv2.bias", "block1.shortcut.bias"):
            self.assertLessEqual(np.max(np.abs(grads[name])), 1e-12, name)
        errors = network_gradient_errors(net, x, y, LossSpec(LossKind.SCE))
        for name in ("block1.conv1.bias", "block1.conv2.bias", "block1.shortcut.bias"):
            self.assertLessEqual(errors[name], 1e-5, name)

    def test_network_selftest_suite(self):
        """Test the network oracle suite passes, residual block included"""
        result = network_suite()
        self.assertEqual(result.failed, 0, result.failures)
        per_loss = len(Network(miniature_config()).parameters()) + len(Network(residual_config()).parameters())
        self.assertEqual(result.passed, len(LossKind) * per_loss)


@pytest.mark.parametrize("kind", list(LossKind))
def test_full_pipeline_gradients(kind):
    net = Network(miniature_config(), seed=5).eval()
    images = Rng(99).normal_array((3, 2, 5, 5))
    y = Targets.from_labels(np.array([0, 1, 2]), 3)
    for name, err in network_gradient_errors(net, images, y, loss_spec_for(kind)).items():
        assert err <= 1e-5, name


class TestAdam(unittest.TestCase):
    """Tests for the Adam update"""

    def test_first_step(self):
        """Test the analytic first step from zero"""
        params = {"w": np.zeros(1)}
        adam_step(AdamState(weight_decay=0.0), params, {"w": np.ones(1)})
        self.assertAlmostEqual(params["w"][0], -1e-3 / (1.0 + 1e-8), places=15)

    def test_zero_gradient(self):
        """Test zero gradients without decay leave parameters unchanged"""
        params = {"w": np.array([0.5, -2.0])}
        state = AdamState(weight_decay=0.0)
        for _ in range(10):
            adam_step(state, params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], [0.5, -2.0])
        self.assertEqual(state.step, 10)

    def test_descent_on_square(self):
        """Test 100 steps on theta^2 move theta towards 0"""
        params = {"w": np.ones(1)}
        state = AdamState(lr=0.01, weight_decay=0.0)
        for _ in range(100):
            adam_step(state, params, {"w": 2.0 * params["w"]})
        self.assertLess(abs(params["w"][0]), 0.9)

    def test_weight_decay_shrinks(self):
        """Test decay alone pulls parameters towards zero"""
        params = {"w": np.ones(1)}
        adam_step(AdamState(lr=0.1, weight_decay=0.5), params, {"w": np.zeros(1)})
        self.assertAlmostEqual(params["w"][0], 1.0 - 0.1 * 0.5)

    def test_gradient_shape_mismatch(self):
        """Test mismatched gradient shapes are refused"""
        with self.assertRaises(ShapeError):
            adam_step(AdamState(), {"w": np.zeros(2)}, {"w": np.zeros(3)})


class TestTraining(unittest.TestCase):
    """Tests for the training loop"""

    def test_frozen_validation_stops_after_patience(self):
        """Test a run that cannot improve stops after patience + 1 epochs"""
        data = separable_toy(64)
        net = Network(dense_config(inputs=2), seed=1)
        schedule = TrainSchedule(batch_size=16, max_epochs=30, patience=3, lr=0.0, weight_decay=0.0)
        report = train(net, data, LossSpec(LossKind.SCE), schedule)
        self.assertEqual(report.num_epochs, 4)
        self.assertEqual(report.best_epoch, 1)
        self.assertEqual(report.stop_reason, "early_stop")
        self.assertEqual(net.mode, "eval")

    def test_runs_to_max_epochs(self):
        """Test patience beyond max_epochs means max_epochs runs"""
        data = separable_toy(64)
        net = Network(dense_config(inputs=2), seed=1)
        schedule = TrainSchedule(batch_size=16, max_epochs=5, patience=10, lr=1e-2)
        report = train(net, data, LossSpec(LossKind.SCE), schedule)
        self.assertEqual(report.num_epochs, 5)
        self.assertEqual(report.stop_reason, "max_epochs")

    def test_separable_toy(self):
        """Test SCE reaches 99% train accuracy on a separable 2-class set"""
        data = separable_toy(200)
        net = Network(NetworkConfig((2,), (LayerSpec.dense(16), LayerSpec("relu"), LayerSpec.dense(2)), 2), seed=2)
        schedule = TrainSchedule(batch_size=32, max_epochs=50, patience=50, lr=1e-2)
        train(net, data, LossSpec(LossKind.SCE), schedule)
        self.assertGreaterEqual(evaluate(net, data.train), 0.99)

    def test_identical_seeds_identical_reports(self):
        """Test training is reproducible"""
        data = separable_toy(64)
        reports = []
        for _ in range(2):
            net = Network(mini_dropout_config(), seed=7)
            schedule = TrainSchedule(batch_size=16, max_epochs=4, patience=2, seed=3, lr=1e-2)
            reports.append(train(net, data, LossSpec(LossKind.BCE), schedule).to_dict())
        self.assertEqual(reports[0], reports[1])

    def test_empty_split(self):
        """Test an empty training split is a data error"""
        data = SimpleNamespace(train=split(np.zeros((0, 2)), np.zeros(0, dtype=np.int64)),
                               val=split(np.zeros((1, 2)), np.zeros(1, dtype=np.int64)))
        with self.assertRaises(DataError):
            train(Network(dense_config(inputs=2)), data, LossSpec(LossKind.SCE), TrainSchedule())

    def test_report_roundtrip(self):
        """Test TrainReport survives its dict form"""
        data = separable_toy(32)
        report = train(Network(dense_config(inputs=2)), data, LossSpec(LossKind.SOS),
                       TrainSchedule(batch_size=8, max_epochs=2, patience=5))
        self.assertEqual(type(report).from_dict(report.to_dict()), report)


def mini_dropout_config():
    return NetworkConfig((2,), (LayerSpec.dense(8), LayerSpec("relu"), LayerSpec.dropout(0.4),
                                LayerSpec.dense(2)), 2)


class TestEvaluate(unittest.TestCase):
    """Tests for accuracy"""

    def test_all_correct(self):
        """Test perfect logits give 1.0"""
        self.assertEqual(accuracy_from_logits(np.eye(3), np.array([0, 1, 2])), 1.0)

    def test_all_wrong(self):
        """Test adversarial labels give 0.0"""
        self.assertEqual(accuracy_from_logits(np.eye(3), np.array([1, 2, 0])), 0.0)

    def test_ties_pick_lowest_class(self):
        """Test tied logits predict the lowest index"""
        self.assertEqual(accuracy_from_logits(np.zeros((2, 3)), np.array([0, 0])), 1.0)

    def test_random_network_near_chance(self):
        """Test an untrained 10-class network scores about 0.1 on balanced labels"""
        rng = Rng(21)
        images = rng.uniform_array(0.0, 1.0, (1000, 3, 6, 6))
        labels = np.repeat(np.arange(10), 100)[rng.permutation(1000)]
        net = Network(mini_resnet((3, 6, 6), 10, stem_width=4, widths=(4,)), seed=22)
        accuracy = evaluate(net, split(images, labels))
        self.assertLess(abs(accuracy - 0.1), 0.03)
        self.assertEqual(net.mode, "eval")


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        net = Network(mini_resnet((3, 6, 6), 3, stem_width=4, widths=(4, 8)), seed=4)
        # move batchnorm buffers off their defaults
        net.train().forward(Rng(1).uniform_array(0.0, 1.0, (6, 3, 6, 6)))
        net.eval()
        path = tmp_path / "checkpoint.bin"
        save_checkpoint(net, path)
        assert path.read_bytes()[:4] == b"BLCK"
        restored = load_checkpoint(path)
        assert restored.mode == "eval"
        assert restored.config == net.config
        x = Rng(2).uniform_array(0.0, 1.0, (4, 3, 6, 6))
        assert restored.forward(x)[0].tobytes() == net.forward(x)[0].tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "checkpoint.bin"
        save_checkpoint(Network(dense_config()), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError) as info:
            load_checkpoint(path)
        assert info.value.offset == 0
        assert "BLCK" in str(info.value)

    def test_truncated(self, tmp_path):
        path = tmp_path / "checkpoint.bin"
        save_checkpoint(Network(dense_config()), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(FormatError):
            load_checkpoint(path)


if __name__ == "__main__":
    unittest.main()
