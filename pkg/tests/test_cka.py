"""
Unit tests for HSIC, CKA, similarity matrices and structure scores
"""

import unittest
from types import SimpleNamespace

import numpy as np
import pytest

from src.cka import (
    DISPLAY_EPSILON,
    SimilarityMatrix,
    cka_full,
    cka_full_unbiased,
    cka_minibatch,
    gram_linear,
    hsic_unbiased,
    layer_similarity,
    redundant_layers,
    spearman,
    structure_report,
)
from src.cka.hsic import ratio_from_sums
from src.harness.selftest import orthogonal
from src.nn import LayerSpec, Network, NetworkConfig
from src.numerics import Rng
from src.utils.errors import ArgumentError, DegenerateInputError, FormatError, ShapeError


def termwise_hsic(k, l):  # noqa: E741
    n = k.shape[0]
    kt = np.array(k, dtype=np.float64)
    lt = np.array(l, dtype=np.float64)
    np.fill_diagonal(kt, 0.0)
    np.fill_diagonal(lt, 0.0)
    trace = 0.0
    sum_k = 0.0
    sum_l = 0.0
    cross = 0.0
    for i in range(n):
        for j in range(n):
            trace += kt[i, j] * lt[j, i]
            sum_k += kt[i, j]
            sum_l += lt[i, j]
            for m in range(n):
                cross += kt[i, m] * lt[m, j]
    return (trace + sum_k * sum_l / ((n - 1) * (n - 2)) - 2.0 / (n - 2) * cross) / (n * (n - 3))


def fake_trace(entries):
    return SimpleNamespace(names=[name for name, _ in entries], entries=entries)


def block_matrix():
    values = np.full((10, 10), 0.2)
    values[6:, 6:] = 0.95
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(values)


class TestGram(unittest.TestCase):
    """Tests for the linear Gram"""

    def test_identity(self):
        """Test I2 -> I2"""
        np.testing.assert_array_equal(gram_linear(np.eye(2)), np.eye(2))

    def test_single_row(self):
        """Test [1, 2] -> [[5]]"""
        np.testing.assert_array_equal(gram_linear(np.array([[1.0, 2.0]])), [[5.0]])

    def test_against_dot_products(self):
        """Test a random 6x3 against pairwise row dot products"""
        x = Rng(1).normal_array((6, 3))
        expected = np.array([[float(np.dot(x[i], x[j])) for j in range(6)] for i in range(6)])
        k = gram_linear(x)
        np.testing.assert_allclose(k, expected, atol=1e-12, rtol=0)
        self.assertTrue(np.array_equal(k, k.T))


class TestHsic(unittest.TestCase):
    """Tests for the unbiased HSIC estimator"""

    def test_against_termwise_sum(self):
        """Test random n=8 pairs against an explicit termwise sum"""
        rng = Rng(2)
        for _ in range(3):
            k = gram_linear(rng.normal_array((8, 4)))
            l = gram_linear(rng.normal_array((8, 3)))  # noqa: E741
            self.assertAlmostEqual(hsic_unbiased(k, l), termwise_hsic(k, l), delta=1e-10)

    def test_symmetric(self):
        """Test HSIC(K, L) == HSIC(L, K)"""
        rng = Rng(3)
        k = gram_linear(rng.normal_array((9, 5)))
        l = gram_linear(rng.normal_array((9, 2)))  # noqa: E741
        self.assertAlmostEqual(hsic_unbiased(k, l), hsic_unbiased(l, k), delta=1e-12)

    def test_self_hsic_non_negative(self):
        """Test HSIC(K, K) >= 0 on real features"""
        rng = Rng(4)
        for _ in range(10):
            k = gram_linear(rng.normal_array((8, 5)))
            self.assertGreaterEqual(hsic_unbiased(k, k), 0.0)

    def test_constant_features(self):
        """Test a Gram of identical rows carries no dependence"""
        k = gram_linear(np.tile([[0.5, -0.3]], (8, 1)))
        l = gram_linear(Rng(5).normal_array((8, 3)))  # noqa: E741
        self.assertAlmostEqual(hsic_unbiased(k, l), 0.0, delta=1e-12)

    def test_needs_four_samples(self):
        """Test n < 4 is an argument error"""
        k = gram_linear(np.eye(3))
        with self.assertRaises(ArgumentError):
            hsic_unbiased(k, k)

    def test_non_square(self):
        """Test a rectangular Gram is a shape error"""
        with self.assertRaises(ShapeError):
            hsic_unbiased(np.zeros((4, 5)), np.zeros((4, 5)))


class TestCkaFull(unittest.TestCase):
    """Tests for full-batch linear CKA"""

    def setUp(self):
        rng = Rng(6)
        self.x = rng.normal_array((20, 5))
        self.y = self.x @ rng.normal_array((5, 4)) + 0.3 * rng.normal_array((20, 4))
        self.q = orthogonal(rng, 4)

    def test_self_similarity(self):
        """Test CKA(X, X) = 1"""
        self.assertAlmostEqual(cka_full(self.x, self.x), 1.0, delta=1e-10)

    def test_orthogonal_invariance(self):
        """Test rotating Y leaves CKA unchanged"""
        self.assertAlmostEqual(cka_full(self.x, self.y @ self.q), cka_full(self.x, self.y), delta=1e-10)

    def test_scaling_invariance(self):
        """Test isotropic scaling of Y leaves CKA unchanged"""
        base = cka_full(self.x, self.y)
        for c in (1e-3, 1.0, 1e3):
            self.assertAlmostEqual(cka_full(self.x, c * self.y), base, delta=1e-10)
        self.assertAlmostEqual(cka_full(self.x, 3.7 * self.x), 1.0, delta=1e-10)

    def test_not_invariant_to_general_maps(self):
        """Test some non-orthogonal map lowers CKA(X, XA)"""
        rng = Rng(7)
        values = [cka_full(self.x, self.x @ rng.normal_array((5, 5))) for _ in range(10)]
        self.assertTrue(any(v < 0.999 for v in values))

    def test_range(self):
        """Test values stay in [0, 1]"""
        rng = Rng(8)
        for _ in range(10):
            value = cka_full(rng.normal_array((12, 3)), rng.normal_array((12, 7)))
            self.assertTrue(-1e-10 <= value <= 1.0 + 1e-10)

    def test_wide_features_use_same_definition(self):
        """Test n <= d agrees with the feature-space formula"""
        rng = Rng(9)
        x, y = rng.normal_array((6, 10)), rng.normal_array((6, 12))
        xc, yc = x - x.mean(axis=0), y - y.mean(axis=0)
        expected = np.sum((yc.T @ xc) ** 2) / (np.linalg.norm(xc.T @ xc) * np.linalg.norm(yc.T @ yc))
        self.assertAlmostEqual(cka_full(x, y), expected, delta=1e-10)

    def test_degenerate_input(self):
        """Test identical rows raise a degenerate-input error"""
        with self.assertRaises(DegenerateInputError):
            cka_full(np.ones((5, 3)), self.x[:5])

    def test_sample_count_mismatch(self):
        """Test differing n is a shape error"""
        with self.assertRaises(ShapeError):
            cka_full(self.x, self.y[:10])


class TestCkaMinibatch(unittest.TestCase):
    """Tests for the batch-summed estimator"""

    def test_single_batch(self):
        """Test N=1 is the single-batch unbiased ratio"""
        rng = Rng(10)
        x, y = rng.normal_array((16, 4)), rng.normal_array((16, 3))
        kx, ky = gram_linear(x), gram_linear(y)
        expected = hsic_unbiased(kx, ky) / np.sqrt(hsic_unbiased(kx, kx) * hsic_unbiased(ky, ky))
        self.assertAlmostEqual(cka_minibatch([x], [y]), expected, delta=1e-12)
        self.assertEqual(cka_minibatch([x], [y]), cka_full_unbiased(x, y))

    def test_same_batches(self):
        """Test xs == ys gives 1"""
        rng = Rng(11)
        xs = [rng.normal_array((10, 4)) for _ in range(3)]
        self.assertAlmostEqual(cka_minibatch(xs, xs), 1.0, delta=1e-10)

    def test_batch_order(self):
        """Test reordering the batch list changes nothing"""
        rng = Rng(12)
        xs = [rng.normal_array((8, 3)) for _ in range(5)]
        ys = [x @ rng.normal_array((3, 2)) + rng.normal_array((8, 2)) for x in xs]
        order = [3, 0, 4, 1, 2]
        self.assertEqual(cka_minibatch(xs, ys), cka_minibatch([xs[i] for i in order], [ys[i] for i in order]))

    def test_close_to_full_unbiased(self):
        """Test 4 batches of 256 track the 1024-sample estimate"""
        rng = Rng(13)
        x = rng.normal_array((1024, 16))
        y = x @ rng.normal_array((16, 16)) + rng.normal_array((1024, 16))
        full = cka_full_unbiased(x, y)
        gaps = []
        for _ in range(10):
            perm = rng.permutation(1024)
            xs = [x[perm[i:i + 256]] for i in range(0, 1024, 256)]
            ys = [y[perm[i:i + 256]] for i in range(0, 1024, 256)]
            gaps.append(abs(cka_minibatch(xs, ys) - full))
        self.assertLessEqual(float(np.mean(gaps)), 0.05)

    def test_argument_errors(self):
        """Test mismatched and empty batch lists"""
        x = np.eye(4)
        with self.assertRaises(ArgumentError):
            cka_minibatch([x], [x, x])
        with self.assertRaises(ArgumentError):
            cka_minibatch([], [])

    def test_degenerate_denominator(self):
        """Test a non-positive self term raises"""
        with self.assertRaises(DegenerateInputError):
            ratio_from_sums(0.1, 0.0, 1.0)
        with self.assertRaises(DegenerateInputError):
            cka_minibatch([np.ones((6, 2))], [Rng(14).normal_array((6, 2))])


class TestLayerSimilarity(unittest.TestCase):
    """Tests for layer-by-layer matrices"""

    def test_duplicated_layers(self):
        """Test identical activations give similarity 1 and the shape is L x L"""
        rng = Rng(15)
        batches = []
        for _ in range(3):
            a = rng.normal_array((12, 6))
            batches.append(fake_trace([("a", a), ("copy", a.copy()), ("other", rng.normal_array((12, 2, 2)))]))
        s = layer_similarity(batches)
        self.assertEqual(s.values.shape, (3, 3))
        self.assertEqual(s.layer_names, ["a", "copy", "other"])
        self.assertAlmostEqual(s.values[0, 1], 1.0, delta=1e-8)
        self.assertTrue(s.is_symmetric())
        np.testing.assert_array_equal(np.diag(s.values), 1.0)

    def test_matches_full_batch_on_network(self):
        """Test a tiny network's matrix against cka_full on the pooled batches"""
        config = NetworkConfig((4,), (LayerSpec.dense(8), LayerSpec("relu"), LayerSpec.dense(3)), 3)
        net = Network(config, seed=16).eval()
        rng = Rng(17)
        batches = [net.forward(rng.normal_array((128, 4)), capture=True)[1] for _ in range(4)]
        s = layer_similarity(batches)
        for i in range(len(s.layer_names)):
            for j in range(len(s.layer_names)):
                pooled_i = np.concatenate([b.entries[i][1] for b in batches])
                pooled_j = np.concatenate([b.entries[j][1] for b in batches])
                self.assertLessEqual(abs(s.values[i, j] - cka_full(pooled_i, pooled_j)), 0.05)

    def test_constant_layer_is_zero(self):
        """Test a layer without variance scores 0 against the others"""
        rng = Rng(18)
        batches = [fake_trace([("a", rng.normal_array((8, 3))), ("flat", np.zeros((8, 3)))]) for _ in range(2)]
        s = layer_similarity(batches)
        self.assertEqual(s.values[0, 1], 0.0)
        self.assertEqual(s.values[1, 1], 1.0)

    def test_mismatched_layers(self):
        """Test traces with different layer lists are refused"""
        rng = Rng(19)
        first = fake_trace([("a", rng.normal_array((8, 3)))])
        second = fake_trace([("b", rng.normal_array((8, 3)))])
        with self.assertRaises(ArgumentError):
            layer_similarity([first, second])
        with self.assertRaises(ArgumentError):
            layer_similarity([])


class TestSimilarityMatrix:
    def test_text_roundtrip_is_stable(self, tmp_path):
        values = Rng(20).uniform_array(0.0, 1.0, (4, 4))
        s = SimilarityMatrix(values, ["conv1", "bn1", "relu1", "dense1"])
        path = tmp_path / "sim_matrix.txt"
        s.save(path)
        loaded = SimilarityMatrix.load(path)
        assert loaded.layer_names == s.layer_names
        np.testing.assert_allclose(loaded.values, values, rtol=1e-8)
        assert loaded.to_text() == path.read_text()

    def test_header_line(self):
        text = SimilarityMatrix(np.eye(2), ["a", "b"]).to_text()
        assert text.splitlines() == ["a b", "1 0", "0 1"]

    def test_bad_grid(self):
        with pytest.raises(FormatError):
            SimilarityMatrix.from_text("a b\n1 0\n")
        with pytest.raises(FormatError):
            SimilarityMatrix.from_text("a b\n1 x\n0 1\n")
        with pytest.raises(FormatError):
            SimilarityMatrix.from_text("")

    def test_names_without_whitespace(self):
        with pytest.raises(ArgumentError):
            SimilarityMatrix(np.eye(2), ["a b", "c"])

    def test_default_names(self):
        assert SimilarityMatrix(np.eye(3)).layer_names == ["layer0", "layer1", "layer2"]

    def test_display_clamps_negatives_only(self):
        values = np.array([[1.0, -0.3], [-0.3, 1.0]])
        s = SimilarityMatrix(values)
        np.testing.assert_array_equal(s.display_values(), [[1.0, -DISPLAY_EPSILON], [-DISPLAY_EPSILON, 1.0]])
        assert s.values[0, 1] == -0.3
        assert "-0.3" in s.to_text()
        np.testing.assert_array_equal(SimilarityMatrix(np.eye(2)).display_values(), np.eye(2))


class TestStructure(unittest.TestCase):
    """Tests for block and progressive scores"""

    def test_identity(self):
        """Test no block and a positive progressive score"""
        report = structure_report(SimilarityMatrix(np.eye(5)))
        self.assertEqual(report.block_score, 0.0)
        self.assertIsNone(report.block)
        self.assertGreater(report.progressive_score, 0.0)

    def test_progressive_pairs_include_diagonal(self):
        """Test the score ranks every pair i <= j, distance 0 included"""
        values = np.array([[1.0, 0.8, 0.3, 0.1],
                           [0.8, 1.0, 0.6, 0.4],
                           [0.3, 0.6, 1.0, 0.7],
                           [0.1, 0.4, 0.7, 1.0]])
        distances = [0, 1, 2, 3, 0, 1, 2, 0, 1, 0]
        similarities = [1.0, 0.8, 0.3, 0.1, 1.0, 0.6, 0.4, 1.0, 0.7, 1.0]
        expected = -spearman(np.array(distances, dtype=float), np.array(similarities))
        report = structure_report(SimilarityMatrix(values))
        self.assertAlmostEqual(report.progressive_score, expected, delta=1e-12)

    def test_all_ones(self):
        """Test one block over everything and a tied ranking"""
        report = structure_report(SimilarityMatrix(np.ones((6, 6))))
        self.assertEqual(report.block_score, 1.0)
        self.assertEqual(report.progressive_score, 0.0)
        self.assertEqual(report.block, (0, 5))

    def test_tail_block(self):
        """Test a 4-layer block of 0.95 at the tail of 10 layers scores 0.4"""
        report = structure_report(block_matrix())
        self.assertAlmostEqual(report.block_score, 0.4)
        self.assertEqual(report.block, (6, 9))

    def test_threshold_is_strict(self):
        """Test entries equal to tau do not form a block"""
        values = np.full((4, 4), 0.9)
        np.fill_diagonal(values, 1.0)
        self.assertEqual(structure_report(SimilarityMatrix(values), tau=0.9).block_score, 0.0)

    def test_decay_with_depth(self):
        """Test a matrix that decays with distance scores near 1"""
        idx = np.arange(6)
        values = 1.0 / (1.0 + np.abs(idx[:, None] - idx[None, :]))
        report = structure_report(SimilarityMatrix(values))
        self.assertGreater(report.progressive_score, 0.9)
        self.assertLessEqual(report.progressive_score, 1.0)

    def test_too_few_layers(self):
        """Test L < 3 is an argument error"""
        with self.assertRaises(ArgumentError):
            structure_report(SimilarityMatrix(np.eye(2)))

    def test_redundant_layers(self):
        """Test every layer after the first of a block is a truncation candidate"""
        self.assertEqual(redundant_layers(block_matrix()), ["layer7", "layer8", "layer9"])
        self.assertEqual(redundant_layers(SimilarityMatrix(np.eye(4))), [])

    def test_report_text_and_dict(self):
        """Test the text summary and the dict round trip"""
        s = block_matrix()
        report = structure_report(s)
        text = report.to_text(s.layer_names)
        self.assertIn("block_score = 0.400000", text)
        self.assertIn("largest_block = 6..9 (layer6 .. layer9)", text)
        self.assertEqual(type(report).from_dict(report.to_dict()), report)

    def test_spearman_ties(self):
        """Test average ranks and the constant case"""
        self.assertAlmostEqual(spearman(np.array([1.0, 2.0, 3.0]), np.array([3.0, 2.0, 1.0])), -1.0)
        self.assertEqual(spearman(np.array([1.0, 2.0, 3.0]), np.ones(3)), 0.0)
        self.assertAlmostEqual(spearman(np.array([1.0, 1.0, 2.0]), np.array([5.0, 5.0, 9.0])), 1.0)


if __name__ == "__main__":
    unittest.main()
