"""
Supervised training of the unfolded network.

The loss is L1(SR, HR) + w * theta_loss(theta_hat, theta), both taken at the
final iteration. Batches are drawn from a stream seeded by (train seed, step),
so a run resumed from a checkpoint continues exactly where it stopped.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd

from app.core.autodiff import ops
from app.core.autodiff.optim import AdamState, adam_step, lr_schedule
from app.core.autodiff.parameters import ParameterStore
from app.core.autodiff.tensor import Tensor
from app.core.dan.config import DanConfig
from app.core.dan.network import DanNetwork, group_grad_norms, init_parameters
from app.core.degradation.theta_codec import CONTINUOUS_INDICES, DISCRETE_INDICES
from app.core.errors import CheckpointFormatError, NonFiniteError, ParameterDomainError, TrainingDivergedError
from app.core.metrics.evaluation import super_resolve
from app.core.metrics.quality import psnr
from app.core.training.checkpoint import Checkpoint
from app.core.training.dataset import Batch, PairDataset, sample_batch
from app.schemas.training import TrainConfig
from app.utils.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "loss_l1", "loss_l2", "lr", "val_psnr"]
PathLike = Union[str, Path]


@dataclass
class LossTerms:
    total: Tensor
    l1: float
    theta: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: pd.DataFrame


def theta_loss(theta_hat: Tensor, target: np.ndarray, kind: str = "l2") -> Tensor:
    """
    Estimator loss on (N, 36) predictions.

    "l2" is the mean squared error over every slot. "mixed" adds binary
    cross-entropy on the sigmoid of the discrete slots to the mean squared
    error of the continuous slots.
    """
    if kind == "l2":
        return ops.l2_loss(theta_hat, target)
    discrete = ops.sigmoid_bce_loss(ops.select_features(theta_hat, DISCRETE_INDICES), target[:, DISCRETE_INDICES])
    continuous = ops.l2_loss(ops.select_features(theta_hat, CONTINUOUS_INDICES), target[:, CONTINUOUS_INDICES])
    return ops.add(discrete, continuous)


def compute_loss(
    network: DanNetwork, batch: Batch, train_config: TrainConfig, weight: float = 1.0
) -> LossTerms:
    """
    Loss of one batch at the final iteration, scaled by `weight`.

    The returned l1 and theta values are unscaled.
    """
    out = network.forward(batch.lr, use_calibrated_tails=False)
    l1 = ops.l1_loss(out.sr, batch.hr)
    l2 = theta_loss(out.theta, batch.theta, train_config.theta_loss)
    total = ops.add(l1, ops.scale(l2, train_config.theta_loss_weight))
    if weight != 1.0:
        total = ops.scale(total, weight)
    return LossTerms(total=total, l1=l1.item(), theta=l2.item())


def _shard(batch: Batch, index: np.ndarray) -> Batch:
    return Batch(
        lr=batch.lr[index],
        hr=batch.hr[index],
        theta=batch.theta[index],
        indices=batch.indices[index],
        lr_offsets=batch.lr_offsets[index],
    )


def _replica_gradients(
    config: DanConfig, params: ParameterStore, batch: Batch, train_config: TrainConfig, replicas: int
):
    """
    Split the batch into contiguous shards, run each on a cloned store and
    sum gradients in shard order.
    """
    shards = [index for index in np.array_split(np.arange(len(batch.lr)), replicas) if index.size]
    size = len(batch.lr)

    def run(index: np.ndarray):
        clone = params.clone()
        terms = compute_loss(DanNetwork(config, clone), _shard(batch, index), train_config, weight=index.size / size)
        terms.total.backward()
        return terms, clone.grads()

    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        results = list(pool.map(run, shards))

    grads = {name: np.zeros_like(value) for name, value in results[0][1].items()}
    l1 = theta = 0.0
    for (terms, shard_grads), index in zip(results, shards):
        fraction = index.size / size
        l1 += fraction * terms.l1
        theta += fraction * terms.theta
        for name, grad in shard_grads.items():
            grads[name] += grad
    return l1, theta, grads


def _single_gradients(network: DanNetwork, batch: Batch, train_config: TrainConfig):
    network.params.zero_grad()
    terms = compute_loss(network, batch, train_config)
    terms.total.backward()
    return terms.l1, terms.theta, network.params.grads()


def _all_finite(grads: Mapping[str, np.ndarray]) -> bool:
    return all(np.all(np.isfinite(grad)) for grad in grads.values())


def validation_psnr(network: DanNetwork, dataset: PairDataset, images: int) -> float:
    """Mean Y-PSNR over the first `images` pairs, with infinities excluded."""
    values = []
    for index in range(min(images, len(dataset))):
        sr, _ = super_resolve(network, dataset.lr[index])
        values.append(psnr(sr, dataset.hr[index]))
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.inf


def train(
    dan_config: DanConfig,
    train_config: TrainConfig,
    dataset: PairDataset,
    resume: Optional[Checkpoint] = None,
    log_path: Optional[PathLike] = None,
    val_dataset: Optional[PairDataset] = None,
) -> TrainResult:
    """
    Run Adam with the step-halving schedule until train_config.total_steps.

    Args:
        dan_config: Network config
        train_config: Schedule, batch geometry and loss settings
        dataset: Training pairs
        resume: Checkpoint whose weights, moments and step counter continue
        log_path: CSV file for the per-step log
        val_dataset: Pairs for periodic validation PSNR

    Returns:
        TrainResult with the final checkpoint and the log frame

    Raises:
        TrainingDivergedError: non-finite loss or gradient
    """
    if dataset.scale != dan_config.sr_scale:
        raise ParameterDomainError(f"Dataset scale x{dataset.scale} differs from the network scale x{dan_config.sr_scale}")
    if resume is not None:
        if resume.config != dan_config:
            raise CheckpointFormatError("Resume checkpoint was trained with a different network config")
        params = resume.params
        state = resume.adam or AdamState()
        start = resume.step
    else:
        params = init_parameters(dan_config, train_config.init_seed)
        state = AdamState()
        start = 0
    state.lr = train_config.lr0
    state.beta1, state.beta2, state.eps = train_config.beta1, train_config.beta2, train_config.eps

    network = DanNetwork(dan_config, params)
    logger.info(
        f"Training {params.num_parameters()} parameters from step {start} to {train_config.total_steps} "
        f"(batch {train_config.batch}, patch {train_config.lr_patch}, theta loss {train_config.theta_loss} "
        f"x{train_config.theta_loss_weight}, replicas {train_config.threads})"
    )

    rows: List[Dict[str, float]] = []
    for step in range(start, train_config.total_steps):
        lr = lr_schedule(step, train_config.lr0, train_config.halve_every)
        batch = sample_batch(
            dataset, train_config.batch, train_config.lr_patch, make_rng(derive_seed(train_config.seed, step)),
            augment=train_config.augment,
        )
        grads: Dict[str, np.ndarray] = {}
        try:
            if train_config.threads > 1:
                l1, l2, grads = _replica_gradients(dan_config, params, batch, train_config, train_config.threads)
            else:
                l1, l2, grads = _single_gradients(network, batch, train_config)
        except NonFiniteError as exc:
            logger.error(f"Non-finite values at step {step}: {exc}")
            raise TrainingDivergedError(step, lr, group_grad_norms(grads or params.grads())) from exc
        if not (math.isfinite(l1) and math.isfinite(l2) and _all_finite(grads)):
            logger.error(f"Non-finite loss or gradient at step {step}")
            raise TrainingDivergedError(step, lr, group_grad_norms(grads))

        adam_step(params, grads, state, lr)

        completed = step + 1
        val = math.nan
        if val_dataset is not None and train_config.val_every and completed % train_config.val_every == 0:
            val = validation_psnr(network, val_dataset, train_config.val_images)
            logger.info(f"Step {completed}: validation PSNR {val:.3f} dB")
        rows.append({"step": completed, "loss_l1": l1, "loss_l2": l2, "lr": lr, "val_psnr": val})
        if completed % train_config.log_every == 0:
            logger.info(f"Step {completed}/{train_config.total_steps}: L1 {l1:.5f}, theta {l2:.5f}, lr {lr:.2e}")

    log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        log.to_csv(log_path, index=False)

    checkpoint = Checkpoint(
        config=dan_config,
        train_config=train_config,
        params=params,
        step=max(start, train_config.total_steps),
        adam=state,
        theta_mean=dataset.theta_mean(),
    )
    return TrainResult(checkpoint=checkpoint, log=log)


def smoothed(series: pd.Series, window: int = 200) -> pd.Series:
    """Trailing moving average used to compare noisy loss curves."""
    return series.rolling(window, min_periods=1).mean()
