"""
Parameter, multiply-add and latency accounting for a network config.
"""
import logging
import time
from typing import Optional

import numpy as np
from pydantic import BaseModel

from app.core.autodiff.tensor import no_grad
from app.core.dan.config import DanConfig
from app.core.dan.network import DanNetwork, init_parameters, upsample_stages

logger = logging.getLogger(__name__)


class ModelComplexity(BaseModel):
    parameters: int
    multiply_adds: int
    lr_height: int
    lr_width: int
    iterations: int
    mean_latency_s: Optional[float] = None
    latency_runs: int = 0


def _conv_macs(height: int, width: int, in_ch: int, out_ch: int, k: int = 3) -> int:
    return height * width * in_ch * out_ch * k * k


def count_multiply_adds(config: DanConfig, height: int, width: int, iterations: Optional[int] = None) -> int:
    """
    Multiply-adds of one forward pass on an (H, W) LR input.

    Convolutions, fully connected layers and the tails of the final
    iteration are counted; pooling, activations and additions are not.
    """
    steps = config.iterations if iterations is None else iterations
    c, f = config.feature_channels, config.theta_feature_dim

    total = _conv_macs(height, width, 3, c) + config.theta_dim * f

    restorer = _conv_macs(height, width, c + f, c) + config.restorer_blocks * 2 * _conv_macs(height, width, c, c)

    estimator = _conv_macs(height, width, 2 * c, c)
    h, w = height, width
    for _ in range(config.estimator_blocks):
        estimator += 2 * _conv_macs(h, w, c, c)
        h, w = h // 2, w // 2
    estimator += c * f

    tails = 0
    h, w = height, width
    for _ in range(upsample_stages(config.sr_scale)):
        tails += _conv_macs(h, w, c, 4 * c)
        h, w = 2 * h, 2 * w
    tails += _conv_macs(h, w, c, 3)
    tails += f * config.tail_theta_hidden + config.tail_theta_hidden * config.theta_dim

    per_iteration = restorer + estimator
    if not config.feature_space_iteration:
        # tails and heads re-run every iteration
        reencode = _conv_macs(height, width, 3, c) + config.theta_dim * f
        per_iteration += tails + reencode
        return total + steps * per_iteration - reencode
    return total + steps * per_iteration + tails


def model_complexity(
    config: DanConfig,
    lr_height: int,
    lr_width: int,
    runs: int = 0,
    seed: int = 0,
    network: Optional[DanNetwork] = None,
) -> ModelComplexity:
    """
    Parameter count, multiply-adds and optional mean forward latency.

    Args:
        config: Network config
        lr_height: LR input height
        lr_width: LR input width
        runs: Timed forward passes (0 skips timing)
        seed: Init seed for an untrained network when `network` is omitted
        network: Trained network to time

    Returns:
        ModelComplexity record
    """
    params = network.params if network is not None else init_parameters(config, seed)
    report = ModelComplexity(
        parameters=params.num_parameters(),
        multiply_adds=count_multiply_adds(config, lr_height, lr_width),
        lr_height=lr_height,
        lr_width=lr_width,
        iterations=config.iterations,
    )
    if runs > 0:
        net = network or DanNetwork(config, params)
        y = np.zeros((1, 3, lr_height, lr_width), dtype=params.dtype)
        timings = []
        with no_grad():
            net.forward(y)
            for _ in range(runs):
                start = time.perf_counter()
                net.forward(y)
                timings.append(time.perf_counter() - start)
        report.mean_latency_s = float(np.mean(timings))
        report.latency_runs = runs
        logger.info(f"Mean forward latency over {runs} runs: {report.mean_latency_s * 1000:.1f} ms")
    return report
