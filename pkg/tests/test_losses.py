"""
Unit tests for objectives and the finite-difference oracle
"""

import math
import unittest

import numpy as np
import pytest

from src.losses import (
    LossFamily,
    LossKind,
    LossSpec,
    Targets,
    compute_loss,
    finite_diff_grad,
    loss_bce,
    loss_l1,
    loss_l2,
    loss_nll,
    loss_sce,
    loss_sos,
    relative_error,
    sigmoid,
    softmax,
)
from src.numerics import Rng
from src.utils.errors import ArgumentError, ShapeError


def one_hot(*rows):
    return Targets(np.array(rows, dtype=np.float64))


def random_problem(rng, samples=4, classes=5, scale=2.0):
    fv = rng.normal_array((samples, classes)) * scale
    return fv, Targets.from_labels(rng.integers(classes, samples), classes)


class TestActivations(unittest.TestCase):
    """Tests for softmax and sigmoid"""

    def test_softmax_uniform(self):
        """Test equal logits give equal probabilities"""
        np.testing.assert_allclose(softmax(np.zeros((1, 4))), [[0.25] * 4], atol=1e-15)

    def test_softmax_analytic(self):
        """Test [ln 2, 0] -> [2/3, 1/3]"""
        np.testing.assert_allclose(softmax(np.array([[math.log(2.0), 0.0]])), [[2 / 3, 1 / 3]], atol=1e-15)

    def test_softmax_no_overflow(self):
        """Test large logits stay finite"""
        p = softmax(np.array([[1000.0, 0.0]]))
        self.assertTrue(np.all(np.isfinite(p)))
        self.assertAlmostEqual(p[0, 0], 1.0)

    def test_softmax_rows_sum_to_one(self):
        """Test row sums on random logits"""
        p = softmax(Rng(1).normal_array((10, 7)) * 30)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_sigmoid(self):
        """Test sigmoid values, symmetry and overflow safety"""
        self.assertEqual(sigmoid(np.array([0.0]))[0], 0.5)
        x = Rng(2).normal_array((50,)) * 20
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-15)
        with np.errstate(over="raise"):
            self.assertAlmostEqual(sigmoid(np.array([-1000.0]))[0], 0.0)
            self.assertAlmostEqual(sigmoid(np.array([1000.0]))[0], 1.0)


class TestObjectiveValues(unittest.TestCase):
    """Tests for hand-computed objective values"""

    def test_sce(self):
        """Test uniform logits and an analytic case"""
        result = loss_sce(np.zeros((1, 2)), one_hot([1, 0]))
        self.assertAlmostEqual(result.value, math.log(2.0), places=12)
        np.testing.assert_allclose(result.grad, [[-0.5, 0.5]], atol=1e-15)
        self.assertAlmostEqual(loss_sce(np.array([[math.log(3.0), 0.0]]), one_hot([1, 0])).value,
                               math.log(4 / 3), places=12)

    def test_bce(self):
        """Test 2 ln 2 at zero logits and the confident limit"""
        self.assertAlmostEqual(loss_bce(np.zeros((1, 2)), one_hot([1, 0])).value, 2 * math.log(2.0), places=12)
        self.assertLess(loss_bce(np.array([[50.0, -50.0]]), one_hot([1, 0])).value, 1e-20)

    def test_nll(self):
        """Test ln 2 for uniform logits on the second class"""
        self.assertAlmostEqual(loss_nll(np.zeros((1, 2)), one_hot([0, 1])).value, math.log(2.0), places=12)

    def test_l1(self):
        """Test 0.5 for probabilities [0.75, 0.25]"""
        fv = np.array([[math.log(3.0), 0.0]])
        self.assertAlmostEqual(loss_l1(fv, one_hot([1, 0])).value, 0.5, places=12)

    def test_l2(self):
        """Test 0.125 for probabilities [0.75, 0.25]"""
        fv = np.array([[math.log(3.0), 0.0]])
        self.assertAlmostEqual(loss_l2(fv, one_hot([1, 0])).value, 0.125, places=12)

    def test_sos(self):
        """Test the rescaled square loss on a two-class example"""
        self.assertAlmostEqual(loss_sos(np.array([[0.9, 0.2]]), one_hot([1, 0])).value, 0.025, places=12)
        self.assertEqual(loss_sos(np.array([[1.0, 0.0]]), one_hot([1, 0])).value, 0.0)

    def test_sos_rejects_alpha(self):
        """Test alpha <= 0 is an argument error"""
        with self.assertRaises(ArgumentError):
            loss_sos(np.zeros((1, 2)), one_hot([1, 0]), alpha=0.0)
        with self.assertRaises(ArgumentError):
            LossSpec(LossKind.SOS, alpha=-1.0)

    def test_perfect_fit_is_zero_for_distances(self):
        """Test L1 and L2 vanish as the prediction approaches the target"""
        fv = np.array([[60.0, -60.0]])
        self.assertLess(loss_l1(fv, one_hot([1, 0])).value, 1e-20)
        self.assertLess(loss_l2(fv, one_hot([1, 0])).value, 1e-40)

    def test_shape_mismatch(self):
        """Test outputs and targets must agree in shape"""
        with self.assertRaises(ShapeError):
            loss_sce(np.zeros((2, 3)), one_hot([1, 0]))

    def test_targets_validation(self):
        """Test rows must be one-hot"""
        with self.assertRaises(ArgumentError):
            Targets(np.array([[1.0, 1.0]]))


class TestLossKinds(unittest.TestCase):
    """Tests for loss selection"""

    def test_parse(self):
        """Test names parse case-insensitively and unknown names fail"""
        self.assertIs(LossKind.parse("SoS"), LossKind.SOS)
        with self.assertRaises(ArgumentError):
            LossKind.parse("focal")

    def test_families(self):
        """Test the probabilistic / margin split"""
        probabilistic = {k for k in LossKind if k.family is LossFamily.PROBABILISTIC}
        self.assertEqual(probabilistic, {LossKind.SCE, LossKind.BCE, LossKind.NLL})


class TestGradients(unittest.TestCase):
    """Tests for analytic gradients against central differences"""

    def test_every_loss_at_seeded_points(self):
        """Test 100 random points per objective"""
        for kind in LossKind:
            spec = LossSpec(kind, alpha=3.0, beta=2.0) if kind is LossKind.SOS else LossSpec(kind)
            tol = 1e-5 if kind is LossKind.L1 else 1e-6
            rng = Rng(100).fork(kind.value)
            for _ in range(100):
                fv, y = random_problem(rng)
                analytic = compute_loss(spec, fv, y).grad
                self.assertLessEqual(relative_error(analytic, finite_diff_grad(spec, fv, y, 1e-6)), tol, kind)

    def test_oracle_on_sce(self):
        """Test the oracle reproduces the analytic SCE gradient"""
        numeric = finite_diff_grad(LossSpec(LossKind.SCE), np.zeros((1, 2)), one_hot([1, 0]), 1e-6)
        np.testing.assert_allclose(numeric, [[-0.5, 0.5]], atol=1e-8)

    def test_oracle_constant_region(self):
        """Test a flat objective gives a zero gradient"""
        spec = LossSpec(LossKind.L1)
        numeric = finite_diff_grad(spec, np.array([[800.0, -800.0]]), one_hot([1, 0]), 1e-6)
        np.testing.assert_array_equal(numeric, np.zeros((1, 2)))

    def test_oracle_step_range(self):
        """Test h outside [1e-8, 1e-3] is refused"""
        with self.assertRaises(ArgumentError):
            finite_diff_grad(LossSpec(LossKind.SCE), np.zeros((1, 2)), one_hot([1, 0]), 1e-2)

    def test_relative_error_vanishing_gradients(self):
        """Test rounding noise around a zero gradient counts as a match"""
        analytic = np.array([0.0, 6.9e-18, -6.9e-18])
        numeric = np.array([5.6e-12, 5.6e-12, -5.6e-12])
        self.assertLessEqual(relative_error(analytic, numeric), 1e-6)
        self.assertEqual(relative_error(np.zeros(3), np.zeros(3)), 0.0)

    def test_relative_error_scales_with_gradient(self):
        """Test gradients above the floor are compared relatively"""
        a = np.array([3.0, 4.0])
        self.assertAlmostEqual(relative_error(a, a * 1.01), 0.05 / 5.05)
        self.assertAlmostEqual(relative_error(a, -a), 2.0)

    def test_gradients_are_finite(self):
        """Test extreme logits keep gradients finite"""
        fv = np.array([[1e4, -1e4, 0.0]])
        for kind in LossKind:
            grad = compute_loss(LossSpec(kind), fv, one_hot([0, 1, 0])).grad
            self.assertTrue(np.all(np.isfinite(grad)), kind)


class TestIdentities(unittest.TestCase):
    """Tests for structural identities between objectives"""

    def test_sce_equals_nll(self):
        """Test SCE and NLL agree in value and gradient on 1000 inputs"""
        rng = Rng(12)
        for _ in range(1000):
            fv, y = random_problem(rng, scale=10.0)
            a, b = loss_sce(fv, y), loss_nll(fv, y)
            self.assertLessEqual(abs(a.value - b.value), 1e-12)
            self.assertLessEqual(np.max(np.abs(a.grad - b.grad)), 1e-12)

    def test_shift_invariance_of_softmax_losses(self):
        """Test adding a constant per sample leaves softmax-based losses unchanged"""
        rng = Rng(13)
        fv, y = random_problem(rng)
        shifted = fv + rng.normal_array((fv.shape[0], 1)) * 5
        for fn in (loss_sce, loss_nll, loss_l1, loss_l2):
            self.assertAlmostEqual(fn(fv, y).value, fn(shifted, y).value, delta=1e-12)

    def test_values_non_negative(self):
        """Test every objective is non-negative"""
        rng = Rng(14)
        for _ in range(50):
            fv, y = random_problem(rng, scale=5.0)
            for kind in LossKind:
                self.assertGreaterEqual(compute_loss(LossSpec(kind), fv, y).value, 0.0)


@pytest.mark.parametrize("kind", list(LossKind))
def test_zero_logits_gradient_rows_shape(kind):
    fv = np.zeros((3, 4))
    y = Targets.from_labels(np.array([0, 1, 3]), 4)
    result = compute_loss(LossSpec(kind), fv, y)
    assert result.grad.shape == fv.shape
    assert result.value >= 0.0


if __name__ == "__main__":
    unittest.main()
