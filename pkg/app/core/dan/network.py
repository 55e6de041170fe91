"""
The unfolded Restorer/Estimator network.

    f_x0 = head_image(y)                  f_t0 = head_theta(theta0)
    for i in 1..T (Jacobi):
        f_x_i = restorer(f_x0, f_t_{i-1})
        f_t_i = estimator(f_x0, f_x_{i-1})
    sr = tail_image(f_x_T)                theta_hat = tail_theta(f_t_T)

Weights are shared across iterations. Parameters live in one
`ParameterStore` under dotted names whose first component is the module
group (head_image, head_theta, theta0, restorer, estimator, tail_image,
tail_theta).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from app.core.autodiff import ops
from app.core.autodiff.parameters import ParameterStore, kaiming_uniform
from app.core.autodiff.tensor import Tensor
from app.core.dan.config import DanConfig
from app.core.errors import ShapeMismatchError
from app.utils.rng import make_rng

logger = logging.getLogger(__name__)

RESIDUAL_OUT_SCALE = 0.1
PARAMETER_GROUPS = ("theta0", "head_image", "head_theta", "restorer", "estimator", "tail_image", "tail_theta")


def parameter_group(name: str) -> str:
    """Group of a parameter name; calibrated tails map to their base tail."""
    return name.split(".", 1)[0].split("@", 1)[0]


def tail_prefix(base: str, iteration: Optional[int] = None) -> str:
    return base if iteration is None else f"{base}@it{iteration}"


@dataclass
class IterationTrace:
    """Diagnostics of one unfolded iteration."""

    iteration: int
    sr_feature_norm: float
    theta_feature_norm: float
    sr: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None


@dataclass
class DanOutput:
    sr: Tensor
    theta: Tensor
    trace: List[IterationTrace] = field(default_factory=list)
    # (sr, theta) tensors per iteration; filled when decoding every iteration
    iteration_outputs: List[Tuple[Tensor, Tensor]] = field(default_factory=list)


class _Builder:
    def __init__(self, store: ParameterStore, rng: np.random.Generator):
        self.store = store
        self.rng = rng

    def conv(self, name: str, in_ch: int, out_ch: int, k: int = 3, gain_scale: float = 1.0, zero: bool = False) -> None:
        fan_in = in_ch * k * k
        shape = (out_ch, in_ch, k, k)
        weight = np.zeros(shape) if zero else kaiming_uniform(shape, fan_in, self.rng) * gain_scale
        self.store.add(f"{name}.weight", weight)
        self.store.add(f"{name}.bias", np.zeros(out_ch))

    def fc(self, name: str, in_f: int, out_f: int, zero: bool = False) -> None:
        shape = (out_f, in_f)
        weight = np.zeros(shape) if zero else kaiming_uniform(shape, in_f, self.rng)
        self.store.add(f"{name}.weight", weight)
        self.store.add(f"{name}.bias", np.zeros(out_f))

    def residual_block(self, name: str, channels: int) -> None:
        self.conv(f"{name}.conv1", channels, channels)
        self.conv(f"{name}.conv2", channels, channels, gain_scale=RESIDUAL_OUT_SCALE)

    def tail_image(self, prefix: str, config: DanConfig) -> None:
        channels = config.feature_channels
        for stage in range(upsample_stages(config.sr_scale)):
            self.conv(f"{prefix}.up{stage}", channels, channels * 4)
        self.conv(f"{prefix}.out", channels, 3, zero=config.zero_init_tails)

    def tail_theta(self, prefix: str, config: DanConfig) -> None:
        self.fc(f"{prefix}.fc1", config.theta_feature_dim, config.tail_theta_hidden)
        self.fc(f"{prefix}.fc2", config.tail_theta_hidden, config.theta_dim, zero=config.zero_init_tails)


def upsample_stages(sr_scale: int) -> int:
    """Number of x2 pixel-shuffle stages."""
    return int(round(math.log2(sr_scale)))


def init_parameters(config: DanConfig, seed: int = 0, dtype: np.dtype = np.float32) -> ParameterStore:
    """
    Create every parameter for a config with Kaiming-uniform weights and zero biases.

    The parameter count depends on the config only.
    """
    store = ParameterStore(dtype)
    build = _Builder(store, make_rng(seed))
    channels, features = config.feature_channels, config.theta_feature_dim

    store.add("theta0", np.zeros(config.theta_dim), trainable=config.learnable_init)
    build.conv("head_image", 3, channels)
    build.fc("head_theta", config.theta_dim, features)

    build.conv("restorer.fusion", channels + features, channels)
    for block in range(config.restorer_blocks):
        build.residual_block(f"restorer.block{block}", channels)

    build.conv("estimator.fusion", 2 * channels, channels)
    for block in range(config.estimator_blocks):
        build.residual_block(f"estimator.block{block}", channels)
    build.fc("estimator.fc", channels, features)

    build.tail_image("tail_image", config)
    build.tail_theta("tail_theta", config)
    if config.calibrated_tails:
        for iteration in range(1, config.iterations + 1):
            build.tail_image(tail_prefix("tail_image", iteration), config)
            build.tail_theta(tail_prefix("tail_theta", iteration), config)
    logger.debug(f"Initialized {store.num_parameters()} parameters in {len(store)} tensors")
    return store


class DanNetwork:
    """Forward computation over a config and a parameter store."""

    def __init__(self, config: DanConfig, params: ParameterStore):
        self.config = config
        self.params = params

    @classmethod
    def build(cls, config: DanConfig, seed: int = 0, dtype: np.dtype = np.float32) -> "DanNetwork":
        return cls(config, init_parameters(config, seed, dtype))

    def _conv(self, name: str, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"], padding="zero")

    def _fc(self, name: str, x: Tensor) -> Tensor:
        return ops.fully_connected(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"])

    def _act(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(x, self.config.leaky_slope)

    def residual_block(self, name: str, x: Tensor) -> Tensor:
        """x + conv2(relu(conv1(x)))."""
        return ops.add(x, self._conv(f"{name}.conv2", ops.relu(self._conv(f"{name}.conv1", x))))

    def head_image(self, y: Tensor) -> Tensor:
        return self._conv("head_image", y)

    def head_theta(self, theta: Tensor) -> Tensor:
        """Features of an (N, 36) batch of theta vectors."""
        return self._fc("head_theta", theta)

    def initial_theta(self, batch: int) -> Tensor:
        return ops.broadcast_batch(self.params["theta0"], batch)

    def restorer(self, f_x0: Tensor, f_theta: Tensor) -> Tensor:
        _, _, height, width = f_x0.shape
        expanded = ops.broadcast_spatial(f_theta, height, width)
        features = self._act(self._conv("restorer.fusion", ops.concat_channels(f_x0, expanded)))
        for block in range(self.config.restorer_blocks):
            features = self.residual_block(f"restorer.block{block}", features)
        return features

    def estimator(self, f_x0: Tensor, f_x: Tensor) -> Tensor:
        _, _, height, width = f_x0.shape
        if min(height, width) < self.config.min_input_size:
            raise ShapeMismatchError(
                f"Estimator with {self.config.estimator_blocks} pooling blocks needs inputs of at least "
                f"{self.config.min_input_size}x{self.config.min_input_size}, got {height}x{width}"
            )
        features = self._act(self._conv("estimator.fusion", ops.concat_channels(f_x0, f_x)))
        for block in range(self.config.estimator_blocks):
            features = ops.avg_pool(self.residual_block(f"estimator.block{block}", features), 2)
        return self._fc("estimator.fc", ops.global_avg_pool(features))

    def tail_image(self, f_x: Tensor, iteration: Optional[int] = None) -> Tensor:
        prefix = tail_prefix("tail_image", iteration)
        features = f_x
        for stage in range(upsample_stages(self.config.sr_scale)):
            features = ops.pixel_shuffle(self._conv(f"{prefix}.up{stage}", features), 2)
        return self._conv(f"{prefix}.out", features)

    def tail_theta(self, f_theta: Tensor, iteration: Optional[int] = None) -> Tensor:
        prefix = tail_prefix("tail_theta", iteration)
        return self._fc(f"{prefix}.fc2", self._act(self._fc(f"{prefix}.fc1", f_theta)))

    def has_calibrated_tails(self, iteration: int) -> bool:
        return f"{tail_prefix('tail_image', iteration)}.out.weight" in self.params

    def _decode_tails(self, f_x: Tensor, f_theta: Tensor, iteration: int, use_calibrated: bool):
        tail_iteration = iteration if use_calibrated and self.has_calibrated_tails(iteration) else None
        return self.tail_image(f_x, tail_iteration), self.tail_theta(f_theta, tail_iteration)

    def forward(
        self,
        y: np.ndarray,
        gt_theta: Optional[np.ndarray] = None,
        iterations: Optional[int] = None,
        decode_every_iteration: bool = False,
        use_calibrated_tails: bool = True,
    ) -> DanOutput:
        """
        Run the unfolded alternation.

        Args:
            y: (N, 3, H, W) LR batch
            gt_theta: (N, 36) or (36,) ground-truth theta; replaces the
                degradation features fed to the Restorer at every iteration
            iterations: Unfolding depth; defaults to config.iterations
            decode_every_iteration: Record tail outputs of every iteration in the trace
            use_calibrated_tails: Decode iteration i with its calibrated tails when present

        Returns:
            DanOutput with the SR tensor, the theta tensor and one trace entry per iteration
        """
        cfg = self.config
        steps = cfg.iterations if iterations is None else iterations
        if steps < 1:
            raise ShapeMismatchError(f"iterations must be >= 1, got {steps}")
        y_t = Tensor(np.asarray(y, dtype=self.params.dtype))
        if y_t.ndim != 4 or y_t.shape[1] != 3:
            raise ShapeMismatchError(f"Expected an (N, 3, H, W) LR batch, got {y_t.shape}")
        batch = y_t.shape[0]

        f_x0 = self.head_image(y_t)
        f_theta = self.head_theta(self.initial_theta(batch))
        f_x = f_x0

        gt_features = None
        if gt_theta is not None:
            gt = np.asarray(gt_theta, dtype=self.params.dtype)
            gt = np.broadcast_to(gt.reshape(-1, cfg.theta_dim), (batch, cfg.theta_dim)).copy()
            gt_features = self.head_theta(Tensor(gt))

        trace: List[IterationTrace] = []
        outputs: List[Tuple[Tensor, Tensor]] = []
        sr: Optional[Tensor] = None
        theta: Optional[Tensor] = None
        for i in range(1, steps + 1):
            restorer_theta = gt_features if gt_features is not None else f_theta
            if cfg.jacobi_update:
                new_f_x = self.restorer(f_x0, restorer_theta)
                new_f_theta = self.estimator(f_x0, f_x)
            else:
                new_f_theta = self.estimator(f_x0, f_x)
                new_f_x = self.restorer(f_x0, gt_features if gt_features is not None else new_f_theta)
            f_x, f_theta = new_f_x, new_f_theta

            entry = IterationTrace(
                iteration=i,
                sr_feature_norm=float(np.sqrt(np.mean(f_x.data.astype(np.float64) ** 2))),
                theta_feature_norm=float(np.sqrt(np.mean(f_theta.data.astype(np.float64) ** 2))),
            )
            last = i == steps
            if not cfg.feature_space_iteration:
                sr, theta = self._decode_tails(f_x, f_theta, i, use_calibrated_tails)
                if not last:
                    f_x = self.head_image(ops.avg_pool(sr, cfg.sr_scale))
                    f_theta = self.head_theta(theta)
            elif last or decode_every_iteration:
                sr, theta = self._decode_tails(f_x, f_theta, i, use_calibrated_tails)
            if decode_every_iteration:
                entry.sr = sr.data.copy()
                entry.theta = theta.data.copy()
                outputs.append((sr, theta))
            trace.append(entry)
        return DanOutput(sr=sr, theta=theta, trace=trace, iteration_outputs=outputs)


def dan_forward(
    y: np.ndarray,
    config: DanConfig,
    params: ParameterStore,
    gt_theta_vector: Optional[np.ndarray] = None,
    iterations: Optional[int] = None,
    decode_every_iteration: bool = False,
) -> DanOutput:
    """Functional form of `DanNetwork.forward`."""
    return DanNetwork(config, params).forward(
        y, gt_theta=gt_theta_vector, iterations=iterations, decode_every_iteration=decode_every_iteration
    )


def group_grad_norms(grads: Mapping[str, np.ndarray]) -> Dict[str, float]:
    """Gradient norm per parameter group."""
    totals: Dict[str, float] = {}
    for name, grad in grads.items():
        group = parameter_group(name)
        totals[group] = totals.get(group, 0.0) + float(np.sum(grad.astype(np.float64) ** 2))
    return {group: math.sqrt(value) for group, value in totals.items()}
