"""
Numerics self-verification.

Runs finite-difference gradient checks over every differentiable op, the
analytic kernel suite, theta codec roundtrips and JPEG quality monotonicity,
and reports the worst error of each check against its tolerance.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
from scipy import special
from tabulate import tabulate

from app.core import kernels
from app.core.autodiff import ops
from app.core.autodiff.gradcheck import grad_check
from app.core.degradation.jpeg import jpeg_roundtrip
from app.core.degradation.presets import DEGRADATION_PRESETS, sample_degradation
from app.core.degradation.theta_codec import CONTINUOUS_INDICES, DISCRETE_INDICES, decode_theta, encode_theta
from app.core.metrics.quality import psnr
from app.core.training.synthetic import synth_hr_image
from app.utils.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4
SHAPES_PER_OP = 3
JPEG_QUALITIES = (10, 30, 50, 70, 90, 100)


@dataclass
class CheckResult:
    name: str
    value: float
    limit: float
    # "max": value must not exceed limit; "min": value must reach it
    bound: str = "max"

    @property
    def passed(self) -> bool:
        if math.isnan(self.value):
            return False
        return self.value <= self.limit if self.bound == "max" else self.value >= self.limit


Case = Callable[[np.random.Generator], Sequence[np.ndarray]]


def _dims(rng: np.random.Generator, low: int = 1, high: int = 3) -> int:
    return int(rng.integers(low, high + 1))


def _conv_inputs(k: int) -> Case:
    def make(rng):
        n, c, o = _dims(rng, 1, 2), _dims(rng), _dims(rng)
        h, w = _dims(rng, k, k + 3), _dims(rng, k, k + 3)
        return [rng.standard_normal((n, c, h, w)), rng.standard_normal((o, c, k, k)), rng.standard_normal(o)]

    return make


def _matrix(rng):
    return [rng.standard_normal((_dims(rng), _dims(rng, 2, 5)))]


def _feature_map(rng):
    return [rng.standard_normal((_dims(rng, 1, 2), _dims(rng), _dims(rng, 2, 5), _dims(rng, 2, 5)))]


def _away_from_zero(rng, shape):
    values = rng.uniform(0.1, 1.0, size=shape)
    return values * rng.choice([-1.0, 1.0], size=shape)


def _fc_inputs(rng):
    n, f, g = _dims(rng), _dims(rng, 2, 5), _dims(rng, 2, 5)
    return [rng.standard_normal((n, f)), rng.standard_normal((g, f)), rng.standard_normal(g)]


def _same_pair(rng):
    shape = (_dims(rng), _dims(rng, 2, 4))
    return [rng.standard_normal(shape), rng.standard_normal(shape)]


def _concat_inputs(rng):
    return [rng.standard_normal((2, _dims(rng), 3, 3)), rng.standard_normal((2, _dims(rng), 3, 3))]


def _shuffle_inputs(rng):
    return [rng.standard_normal((_dims(rng, 1, 2), 4 * _dims(rng), _dims(rng), _dims(rng)))]


def _gradient_cases():
    """(name, op, input factory) for every differentiable op; losses use `_loss_case`."""
    return [
        ("conv2d zero", lambda x, w, b: ops.conv2d(x, w, b, padding="zero"), _conv_inputs(3)),
        ("conv2d reflect", lambda x, w, b: ops.conv2d(x, w, b, padding="reflect"), _conv_inputs(3)),
        ("conv2d reflect k5", lambda x, w, b: ops.conv2d(x, w, b, padding="reflect"), _conv_inputs(5)),
        ("conv2d stride 2", lambda x, w, b: ops.conv2d(x, w, b, stride=2), _conv_inputs(3)),
        ("fully_connected", ops.fully_connected, _fc_inputs),
        ("leaky_relu", lambda x: ops.leaky_relu(x, 0.2), lambda r: [_away_from_zero(r, (2, _dims(r), 4, 3))]),
        ("relu", ops.relu, lambda r: [_away_from_zero(r, (2, _dims(r), 3, 4))]),
        ("add", ops.add, _same_pair),
        ("scale", lambda x: ops.scale(x, -1.7), _matrix),
        ("concat_channels", ops.concat_channels, _concat_inputs),
        ("broadcast_spatial", lambda x: ops.broadcast_spatial(x, 3, 2), _matrix),
        ("broadcast_batch", lambda x: ops.broadcast_batch(x, 3), lambda r: [r.standard_normal(_dims(r, 2, 6))]),
        ("pixel_shuffle", lambda x: ops.pixel_shuffle(x, 2), _shuffle_inputs),
        ("avg_pool", lambda x: ops.avg_pool(x, 2), _feature_map),
        ("global_avg_pool", ops.global_avg_pool, _feature_map),
        ("select_features", lambda x: ops.select_features(x, [0, 2, 2, 1]), lambda r: [r.standard_normal((_dims(r), 4))]),
        ("l1_loss", None, None),
        ("l2_loss", None, None),
        ("sigmoid_bce_loss", None, None),
    ]


def _loss_case(name: str, rng: np.random.Generator):
    shape = (_dims(rng), _dims(rng, 2, 5))
    if name == "sigmoid_bce_loss":
        target = rng.integers(0, 2, size=shape).astype(np.float64)
        return (lambda x: ops.sigmoid_bce_loss(x, target)), [rng.standard_normal(shape)]
    target = rng.standard_normal(shape)
    pred = target + _away_from_zero(rng, shape)
    loss = ops.l1_loss if name == "l1_loss" else ops.l2_loss
    return (lambda x: loss(x, target)), [pred]


def check_gradients(seed: int = 0) -> List[CheckResult]:
    results = []
    for index, (name, op, factory) in enumerate(_gradient_cases()):
        worst = 0.0
        for trial in range(SHAPES_PER_OP):
            rng = make_rng(derive_seed(seed, index, trial))
            if op is None:
                fn, inputs = _loss_case(name, rng)
            else:
                fn, inputs = op, factory(rng)
            worst = max(worst, grad_check(fn, inputs, rng=rng))
        results.append(CheckResult(f"grad {name}", worst, GRAD_TOLERANCE))
    return results


def _gaussian_oracle(sigma_x: float, sigma_y: float, theta: float, beta: float, size: int, plateau: bool) -> np.ndarray:
    center = size // 2
    out = np.zeros((size, size))
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    for i in range(size):
        for j in range(size):
            x, y = j - center, i - center
            u, v = cos_t * x + sin_t * y, -sin_t * x + cos_t * y
            q = (u / sigma_x) ** 2 + (v / sigma_y) ** 2
            out[i, j] = 1.0 / (1.0 + q ** beta) if plateau else math.exp(-0.5 * q ** beta)
    return out


def check_kernels(seed: int = 0) -> List[CheckResult]:
    rng = make_rng(seed)
    xs = np.linspace(0.0, 10.0, 1001)
    results = [CheckResult("bessel_j1 vs scipy on [0, 10]", float(np.max(np.abs(kernels.bessel_j1(xs) - special.j1(xs)))), 1e-8)]

    pointwise, sums = 0.0, 0.0
    for _ in range(10):
        sx, sy = rng.uniform(0.3, 4.0, size=2)
        theta, beta = rng.uniform(-math.pi, math.pi), rng.uniform(0.5, 4.0)
        size = int(rng.choice([3, 7, 11, 21]))
        for plateau, synth in ((False, kernels.synth_gaussian_kernel), (True, kernels.synth_plateau_kernel)):
            raw = synth(sx, sy, theta, beta, size, normalize=False)
            pointwise = max(pointwise, float(np.max(np.abs(raw - _gaussian_oracle(sx, sy, theta, beta, size, plateau)))))
            sums = max(sums, abs(float(synth(sx, sy, theta, beta, size).sum()) - 1.0))
        omega = rng.uniform(0.2, math.pi)
        sums = max(sums, abs(float(kernels.synth_sinc_kernel(omega, size).sum()) - 1.0))
    results.append(CheckResult("gaussian/plateau pointwise oracle", pointwise, 1e-10))
    results.append(CheckResult("kernel sums", sums, 1e-6))
    return results


def check_codec(seed: int = 0, samples: int = 200) -> List[CheckResult]:
    rng = make_rng(seed)
    discrete, continuous = 0.0, 0.0
    presets = sorted(DEGRADATION_PRESETS)
    for index in range(samples):
        preset = presets[index % len(presets)]
        params = sample_degradation(preset, rng)
        theta = encode_theta(params)
        again = encode_theta(decode_theta(theta, params.target_sr_scale))
        discrete = max(discrete, float(np.max(np.abs(again[DISCRETE_INDICES] - theta[DISCRETE_INDICES]))))
        continuous = max(continuous, float(np.max(np.abs(again[CONTINUOUS_INDICES] - theta[CONTINUOUS_INDICES]))))
    return [
        CheckResult("theta roundtrip discrete", discrete, 0.0),
        CheckResult("theta roundtrip continuous", continuous, 1e-6),
    ]


def check_jpeg(seed: int = 0) -> List[CheckResult]:
    image = synth_hr_image(32, make_rng(seed))
    scores = [psnr(jpeg_roundtrip(image, q), image, y_channel=False) for q in JPEG_QUALITIES]
    logger.debug("JPEG PSNR by quality: " + ", ".join(f"q{q}={p:.2f}" for q, p in zip(JPEG_QUALITIES, scores)))
    worst_drop = max(0.0, max(a - b for a, b in zip(scores, scores[1:])))
    return [
        CheckResult("jpeg psnr monotone in quality (max drop dB)", worst_drop, 0.0),
        CheckResult("jpeg q=100 psnr (dB)", scores[-1], 50.0, bound="min"),
    ]


def run_selfcheck(seed: int = 0) -> List[CheckResult]:
    """Every check, in a fixed order."""
    results = check_gradients(seed) + check_kernels(seed) + check_codec(seed) + check_jpeg(seed)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"{len(failed)} self-checks failed: {', '.join(failed)}")
    else:
        logger.info(f"All {len(results)} self-checks passed")
    return results


def format_results(results: Sequence[CheckResult]) -> str:
    rows = [
        [r.name, f"{r.value:.3e}", ("<= " if r.bound == "max" else ">= ") + f"{r.limit:.1e}", "PASS" if r.passed else "FAIL"]
        for r in results
    ]
    return tabulate(rows, headers=["Check", "Value", "Limit", "Status"], tablefmt="grid")
