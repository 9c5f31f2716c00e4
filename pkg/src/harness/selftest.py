"""
Built-in oracle suites for the `selftest` subcommand

- losses: analytic vs finite-difference gradients at seeded random points,
  and the SCE/NLL identity
- network: full-pipeline parameter gradients of a miniature network and
  of a batchnorm residual block in train mode, under every objective
- cka: self-similarity, invariances and the naive HSIC oracle
- data: conflicting-count exactness and the colour-only baseline
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.cka import cka_full, gram_linear, hsic_unbiased
from src.data import BiasSpec, color_only_baseline, generate
from src.losses import LossKind, LossSpec, Targets, compute_loss, finite_diff_grad, numeric_gradient, relative_error
from src.nn import LayerSpec, Network, NetworkConfig
from src.numerics import Rng

logger = logging.getLogger(__name__)

LOSS_TOLERANCE = 1e-6
L1_TOLERANCE = 1e-5
NETWORK_TOLERANCE = 1e-5
CKA_TOLERANCE = 1e-10


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    failures: List[str] = field(default_factory=list)

    def check(self, ok: bool, label: str):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failures.append(label)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def summary(self) -> str:
        return f"{self.name}: {self.passed}/{self.passed + self.failed} passed"


def random_problem(rng: Rng, samples: int = 4, classes: int = 5, scale: float = 2.0):
    fv = rng.normal_array((samples, classes)) * scale
    labels = rng.integers(classes, samples)
    return fv, Targets.from_labels(labels, classes)


def loss_spec_for(kind: LossKind) -> LossSpec:
    return LossSpec(kind, alpha=3.0, beta=2.0) if kind is LossKind.SOS else LossSpec(kind)


def losses_suite(points: int = 100) -> SuiteResult:
    result = SuiteResult("losses")
    for kind in LossKind:
        spec = loss_spec_for(kind)
        tol = L1_TOLERANCE if kind is LossKind.L1 else LOSS_TOLERANCE
        rng = Rng(2024).fork(f"loss:{kind.value}")
        for point in range(points):
            fv, y = random_problem(rng)
            analytic = compute_loss(spec, fv, y).grad
            err = relative_error(analytic, finite_diff_grad(spec, fv, y, 1e-6))
            result.check(err <= tol, f"{kind.value} point {point}: rel-err {err:.2e}")

    rng = Rng(7).fork("sce-nll")
    for point in range(points):
        fv, y = random_problem(rng, scale=10.0)
        a = compute_loss(LossSpec(LossKind.SCE), fv, y)
        b = compute_loss(LossSpec(LossKind.NLL), fv, y)
        same = abs(a.value - b.value) <= 1e-12 and np.max(np.abs(a.grad - b.grad)) <= 1e-12
        result.check(bool(same), f"sce/nll identity point {point}")
    return result


def miniature_config(num_classes: int = 3) -> NetworkConfig:
    """conv(4, 3, 1) - relu - gap - dense(C) on 2x5x5 inputs"""
    return NetworkConfig(
        input_shape=(2, 5, 5),
        layers=(LayerSpec.conv(4, 3, 1), LayerSpec("relu"), LayerSpec("global_avg_pool"),
                LayerSpec.dense(num_classes)),
        num_classes=num_classes,
    )


def network_gradient_errors(net: Network, images: np.ndarray, y: Targets, spec: LossSpec,
                            h: float = 1e-5) -> Dict[str, float]:
    """Relative error of every parameter's analytic gradient against central differences"""
    logits, _ = net.forward(images)
    grads = net.backward(compute_loss(spec, logits, y).grad)
    grads = {name: g.copy() for name, g in grads.items()}

    def batch_loss(_: np.ndarray) -> float:
        out, _ = net.forward(images)
        return compute_loss(spec, out, y).value

    errors = {}
    for name, param in net.parameters().items():
        numeric = numeric_gradient(batch_loss, param, h)
        errors[name] = relative_error(grads[name], numeric)
    return errors


def residual_config(num_classes: int = 3) -> NetworkConfig:
    """residual_block(3) with batchnorm - gap - dense(C) on 2x4x4 inputs"""
    return NetworkConfig(
        input_shape=(2, 4, 4),
        layers=(LayerSpec.residual_block(3), LayerSpec("global_avg_pool"), LayerSpec.dense(num_classes)),
        num_classes=num_classes,
    )


def network_suite() -> SuiteResult:
    result = SuiteResult("network")
    rng = Rng(99)
    images = rng.normal_array((3, 2, 5, 5))
    block_images = rng.normal_array((3, 2, 4, 4))
    y = Targets.from_labels(np.array([0, 1, 2]), 3)
    for kind in LossKind:
        spec = loss_spec_for(kind)
        net = Network(miniature_config(), seed=5).eval()
        for name, err in network_gradient_errors(net, images, y, spec).items():
            result.check(err <= NETWORK_TOLERANCE, f"{kind.value} {name}: rel-err {err:.2e}")
        # batch statistics in play; the conv biases ahead of batchnorm have zero gradient
        block = Network(residual_config(), seed=10).train()
        for name, err in network_gradient_errors(block, block_images, y, spec).items():
            result.check(err <= NETWORK_TOLERANCE, f"{kind.value} {name}: rel-err {err:.2e}")
    return result


def naive_hsic(k: np.ndarray, l: np.ndarray) -> float:  # noqa: E741
    """Termwise unbiased HSIC with materialised zero-diagonal Grams"""
    n = k.shape[0]
    kt = k.copy()
    lt = l.copy()
    for i in range(n):
        kt[i, i] = 0.0
        lt[i, i] = 0.0
    ones = np.ones(n)
    trace = sum(kt[i, j] * lt[j, i] for i in range(n) for j in range(n))
    middle = (ones @ kt @ ones) * (ones @ lt @ ones) / ((n - 1) * (n - 2))
    cross = ones @ kt @ lt @ ones
    return (trace + middle - 2.0 / (n - 2) * cross) / (n * (n - 3))


def orthogonal(rng: Rng, d: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal_array((d, d)))
    return q


def cka_suite(draws: int = 10) -> SuiteResult:
    result = SuiteResult("cka")
    rng = Rng(31337)
    for draw in range(draws):
        x = rng.normal_array((20, 6))
        y = x @ rng.normal_array((6, 4)) + 0.1 * rng.normal_array((20, 4))
        base = cka_full(x, y)
        result.check(abs(cka_full(x, x) - 1.0) <= CKA_TOLERANCE, f"self-similarity draw {draw}")
        result.check(abs(cka_full(y, x) - base) <= CKA_TOLERANCE, f"symmetry draw {draw}")
        result.check(abs(cka_full(x, y @ orthogonal(rng, 4)) - base) <= CKA_TOLERANCE,
                     f"orthogonal invariance draw {draw}")
        for c in (1e-3, 1.0, 1e3):
            result.check(abs(cka_full(x, c * y) - base) <= CKA_TOLERANCE, f"scaling {c} draw {draw}")

        k = gram_linear(rng.normal_array((8, 3)))
        l = gram_linear(rng.normal_array((8, 5)))  # noqa: E741
        result.check(abs(hsic_unbiased(k, l) - naive_hsic(k, l)) <= CKA_TOLERANCE, f"naive HSIC draw {draw}")
        result.check(abs(hsic_unbiased(k, l) - hsic_unbiased(l, k)) <= 1e-12, f"HSIC symmetry draw {draw}")
    return result


def data_suite() -> SuiteResult:
    result = SuiteResult("data")
    for ratio in (0.0, 0.005, 0.01, 0.05, 0.2):
        for seed in (1, 2):
            spec = BiasSpec(diversity_ratio=ratio, train_count=1000, val_count=100, test_count=100, seed=seed)
            ds = generate(spec)
            expected = spec.conflicting_count(1000)
            result.check(ds.train.conflicting_count == expected, f"conflicting count ratio {ratio} seed {seed}")

    ds = generate(BiasSpec(diversity_ratio=0.05, train_count=1000, val_count=100, test_count=200, seed=3))
    aligned, conflicting = color_only_baseline(ds)
    result.check(aligned >= 0.95, f"baseline aligned {aligned:.4f} < 0.95")
    result.check(conflicting <= 1.0 / ds.num_classes + 0.05, f"baseline conflicting {conflicting:.4f} too high")
    return result


SUITES: Dict[str, Callable[[], SuiteResult]] = {
    "losses": losses_suite,
    "network": network_suite,
    "cka": cka_suite,
    "data": data_suite,
}


def run_selftest(names: Optional[Sequence[str]] = None) -> List[SuiteResult]:
    results = []
    for name in names or list(SUITES):
        suite = SUITES[name]()
        logger.info(suite.summary())
        for failure in suite.failures:
            logger.warning(f"{name}: {failure}")
        results.append(suite)
    return results
