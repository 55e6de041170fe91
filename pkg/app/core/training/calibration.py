"""
Per-iteration tail calibration.

A network trained with T iterations only learns to decode its last
iteration. Calibration adds one image tail and one theta tail per iteration,
starts them from the shared tails and trains them with every other weight
frozen, so a trained model can be evaluated at any depth 1..T.
"""
import logging
from typing import Optional

from app.core.autodiff import ops
from app.core.autodiff.optim import AdamState, adam_step, lr_schedule
from app.core.autodiff.tensor import Tensor
from app.core.dan.network import DanNetwork, group_grad_norms, init_parameters, parameter_group, tail_prefix
from app.core.errors import NonFiniteError, TrainingDivergedError
from app.core.training.checkpoint import Checkpoint
from app.core.training.dataset import PairDataset, sample_batch
from app.core.training.trainer import theta_loss
from app.schemas.training import TrainConfig
from app.utils.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

TAIL_GROUPS = ("tail_image", "tail_theta")


def _is_iteration_tail(name: str) -> bool:
    return parameter_group(name) in TAIL_GROUPS and "@it" in name.split(".", 1)[0]


def calibrate_iteration_tails(
    checkpoint: Checkpoint,
    train_config: TrainConfig,
    dataset: PairDataset,
    steps: Optional[int] = None,
) -> Checkpoint:
    """
    Train per-iteration tails on top of a frozen network.

    Args:
        checkpoint: Trained network
        train_config: Batch geometry, learning rate and loss settings
        dataset: Training pairs
        steps: Calibration steps; defaults to train_config.total_steps

    Returns:
        A new checkpoint whose config has calibrated_tails enabled
    """
    config = checkpoint.config.model_copy(update={"calibrated_tails": True})
    params = init_parameters(config, train_config.init_seed)
    source = checkpoint.params.state_dict()
    params.load_state_dict(source, strict=False)

    for iteration in range(1, config.iterations + 1):
        for base in TAIL_GROUPS:
            prefix = tail_prefix(base, iteration)
            for name in params.names():
                if name.startswith(base + ".") and f"{prefix}{name[len(base):]}" not in source:
                    params[f"{prefix}{name[len(base):]}"].data = params[name].data.copy()

    tails = [name for name in params.names() if _is_iteration_tail(name)]
    params.set_trainable([name for name in params.names() if name not in tails], False)
    params.set_trainable(tails, True)

    network = DanNetwork(config, params)
    state = AdamState(lr=train_config.lr0, beta1=train_config.beta1, beta2=train_config.beta2, eps=train_config.eps)
    total_steps = train_config.total_steps if steps is None else steps
    logger.info(f"Calibrating {len(tails)} tail tensors over {config.iterations} iterations for {total_steps} steps")

    for step in range(total_steps):
        lr = lr_schedule(step, train_config.lr0, train_config.halve_every)
        batch = sample_batch(
            dataset, train_config.batch, train_config.lr_patch, make_rng(derive_seed(train_config.seed, step)),
            augment=train_config.augment,
        )
        params.zero_grad()
        try:
            out = network.forward(batch.lr, decode_every_iteration=True, use_calibrated_tails=True)
            loss: Optional[Tensor] = None
            for sr, theta in out.iteration_outputs:
                term = ops.add(
                    ops.l1_loss(sr, batch.hr),
                    ops.scale(theta_loss(theta, batch.theta, train_config.theta_loss), train_config.theta_loss_weight),
                )
                loss = term if loss is None else ops.add(loss, term)
            loss.backward()
        except NonFiniteError as exc:
            raise TrainingDivergedError(step, lr, group_grad_norms(params.grads())) from exc
        adam_step(params, params.grads(), state, lr)
        if (step + 1) % train_config.log_every == 0:
            logger.info(f"Calibration step {step + 1}/{total_steps}: summed loss {loss.item():.5f}")

    for name in params.names():
        trainable = checkpoint.params.is_trainable(name) if name in checkpoint.params else True
        params.set_trainable([name], trainable)
    return Checkpoint(
        config=config,
        train_config=train_config,
        params=params,
        step=checkpoint.step,
        theta_mean=checkpoint.theta_mean,
    )
