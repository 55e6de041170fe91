"""
Command-line entry point.

    dansr kernel | degrade | dataset | train | eval | estimate | calibrate | info | selfcheck

Exit codes: 0 success, 1 runtime failure, 2 usage, JSON or validation error.
Settings precedence: explicit flag > --config JSON file > DAN_* environment > defaults.
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.core.dan.complexity import model_complexity
from app.core.dan.config import DanConfig
from app.core.degradation.pipeline import degrade_for_preset
from app.core.degradation.presets import DEGRADATION_PRESETS, get_preset, sample_degradation
from app.core.degradation.theta_codec import THETA_TABLE_VERSION, decode_theta_with_repairs, encode_theta
from app.core.errors import DanError, ParameterDomainError
from app.core.kernels import kernel_from_spec, second_moments
from app.core.metrics.evaluation import evaluate, super_resolve, write_report
from app.core.metrics.kernel_metrics import kernel_from_theta
from app.core.selfcheck import format_results, run_selfcheck
from app.core.training.calibration import calibrate_iteration_tails
from app.core.training.checkpoint import load_checkpoint, save_checkpoint
from app.core.training.dataset import center_crop_to_multiple, load_pairs, make_dataset
from app.core.training.trainer import train
from app.schemas.degradation import BlurKernelSpec, DegradationRecord
from app.schemas.training import TrainConfig
from app.utils.image_io import read_netpbm, write_kernel_pgm, write_kernel_text, write_netpbm
from app.utils.logging_config import configure_logging
from app.utils.rng import degradation_streams, make_rng
from app.utils.settings import get_settings

logger = logging.getLogger(__name__)

NETPBM_SUFFIXES = (".ppm", ".pgm", ".pnm")


class UsageError(Exception):
    """Invalid command-line input; maps to exit code 2."""


def load_json(path: str) -> Dict[str, Any]:
    """Parse a JSON file, reporting the parse location on failure."""
    text = Path(path).read_text()
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(value, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return value


def _file_config(args: argparse.Namespace) -> Dict[str, Any]:
    return load_json(args.config) if getattr(args, "config", None) else {}


def _pick(flag: Any, file_cfg: Dict[str, Any], key: str, fallback: Any) -> Any:
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return fallback


def _seed(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    return int(_pick(getattr(args, "seed", None), file_cfg, "seed", get_settings().seed))


def _threads(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    return int(_pick(getattr(args, "threads", None), file_cfg, "threads", get_settings().threads))


def _echo(command: str, effective: Dict[str, Any]) -> None:
    logger.info(f"Effective {command} config: {json.dumps(effective, sort_keys=True, default=str)}")


def cmd_kernel(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    seed = _seed(args, file_cfg)
    kind = _pick(args.kind, file_cfg, "kind", None)
    if kind is None:
        raise UsageError("--kind is required")
    size = int(_pick(args.size, file_cfg, "size", 21))
    sigma_x = float(_pick(args.sigma_x, file_cfg, "sigma_x", 2.0))
    sigma_y = float(_pick(args.sigma_y, file_cfg, "sigma_y", sigma_x))
    theta = float(_pick(args.theta, file_cfg, "theta", 0.0))
    beta = float(_pick(args.beta, file_cfg, "beta", 1.0))
    omega_c = float(_pick(args.omega_c, file_cfg, "omega_c", math.pi / 2))
    noise = float(_pick(args.noise, file_cfg, "noise", 0.0))

    if kind == "sinc":
        spec = BlurKernelSpec.sinc(size, omega_c)
    elif kind == "plateau":
        spec = BlurKernelSpec.plateau(size, sigma_x, sigma_y, theta, beta)
    elif kind == "gaussian":
        spec = BlurKernelSpec.gaussian(size, sigma_x, sigma_y, theta, beta)
    else:
        raise UsageError(f"--kind must be gaussian, plateau or sinc, got '{kind}'")
    _echo("kernel", {"spec": spec.model_dump(), "noise": noise, "seed": seed})

    kernel = kernel_from_spec(spec, noise, make_rng(seed))
    if args.out:
        out = Path(args.out)
        write_kernel_text(out.with_suffix(".txt"), kernel)
        write_kernel_pgm(out.with_suffix(".pgm"), kernel)
    m_xx, m_xy, m_yy = second_moments(kernel)
    print(f"sum {kernel.sum():.6f}")
    print(f"moments m_xx {m_xx:.6f} m_xy {m_xy:.6f} m_yy {m_yy:.6f}")
    return 0


def _record_params(record: DegradationRecord, scale: Optional[int]):
    if record.params is not None:
        params = record.params
    else:
        params, repairs = decode_theta_with_repairs(record.theta, scale or 4)
        for repair in repairs:
            logger.warning(f"Theta repair: {repair}")
    if scale is not None and params.target_sr_scale != scale:
        params = params.model_copy(update={"target_sr_scale": scale})
    return params


def cmd_degrade(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    preset = _pick(args.preset, file_cfg, "preset", None)
    if (preset is None) == (args.theta_json is None):
        raise UsageError("exactly one of --preset or --theta-json is required")
    hr = read_netpbm(args.input)

    if preset is not None:
        cfg = get_preset(preset)
        if args.scale is not None and args.scale != cfg.sr_scale:
            raise UsageError(f"--scale {args.scale} conflicts with preset {preset} (x{cfg.sr_scale})")
        seed = _seed(args, file_cfg)
        theta_rng, pixel_rng = degradation_streams(seed)
        params = sample_degradation(
            preset,
            theta_rng,
            blurry_noise=float(_pick(args.blurry_noise, file_cfg, "blurry_noise", 0.0)),
            noise_sinc_kernels=bool(_pick(args.noise_sinc_kernels, file_cfg, "noise_sinc_kernels", False)),
        )
        model = cfg.model
    else:
        record = DegradationRecord.model_validate(load_json(args.theta_json))
        params = _record_params(record, args.scale)
        model = args.model or record.model or "two_stage"
        seed = int(args.seed if args.seed is not None else record.seed if record.seed is not None else get_settings().seed)
        _, pixel_rng = degradation_streams(seed)

    s = params.target_sr_scale
    hr = center_crop_to_multiple(hr, s)
    chroma = bool(_pick(args.chroma_subsampling, file_cfg, "chroma_subsampling", False))
    _echo("degrade", {"model": model, "seed": seed, "params": params.model_dump(by_alias=True), "chroma_subsampling": chroma})
    lr, _ = degrade_for_preset(hr, params, model, pixel_rng, chroma_subsampling=chroma)
    write_netpbm(args.out, lr)
    logger.info(f"Degraded {hr.shape[2]}x{hr.shape[1]} to {lr.shape[2]}x{lr.shape[1]} -> {args.out}")

    if args.emit_theta:
        record = DegradationRecord(
            params=params, theta=encode_theta(params).tolist(), table_version=THETA_TABLE_VERSION, model=model, seed=seed
        )
        Path(args.emit_theta).write_text(record.model_dump_json(indent=2, by_alias=True))
    return 0


def _read_hr_dir(directory: str, n: int) -> List[np.ndarray]:
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in NETPBM_SUFFIXES)
    if len(files) < n:
        raise UsageError(f"--hr-dir {directory} holds {len(files)} Netpbm images, {n} requested")
    return [read_netpbm(path) for path in files[:n]]


def cmd_dataset(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    preset = _pick(args.preset, file_cfg, "preset", None)
    n = _pick(args.n, file_cfg, "n", None)
    if preset is None or n is None:
        raise UsageError("--preset and --n are required")
    cfg = get_preset(preset)
    default_size = 64 if cfg.model == "blurry" else 128
    effective = {
        "preset": preset,
        "n": int(n),
        "seed": _seed(args, file_cfg),
        "hr_size": int(_pick(args.size, file_cfg, "size", default_size)),
        "threads": _threads(args, file_cfg),
        "blurry_noise": float(_pick(args.blurry_noise, file_cfg, "blurry_noise", 0.0)),
        "noise_sinc_kernels": bool(_pick(args.noise_sinc_kernels, file_cfg, "noise_sinc_kernels", False)),
        "hr_dir": args.hr_dir,
        "out_dir": args.out_dir,
    }
    _echo("dataset", effective)
    hr_source = _read_hr_dir(args.hr_dir, effective["n"]) if args.hr_dir else None
    try:
        make_dataset(
            hr_source,
            preset,
            effective["n"],
            effective["seed"],
            args.out_dir,
            hr_size=effective["hr_size"],
            threads=effective["threads"],
            blurry_noise=effective["blurry_noise"],
            noise_sinc_kernels=effective["noise_sinc_kernels"],
            force=args.force,
        )
    except FileExistsError as exc:
        logger.warning(str(exc))
        raise UsageError(str(exc)) from exc
    return 0


def _train_configs(args: argparse.Namespace, file_cfg: Dict[str, Any], sr_scale: int):
    preset = "paper" if args.paper else "desk"
    network_cfg = dict(file_cfg.get("network", {}))
    for key, flag in (("iterations", args.iterations), ("feature_channels", args.channels)):
        if flag is not None:
            network_cfg[key] = flag
    network_cfg.setdefault("sr_scale", sr_scale)
    dan_config = DanConfig.paper(**network_cfg) if args.paper else DanConfig.desk(**network_cfg)

    train_values = {k: v for k, v in file_cfg.items() if k not in ("network",)}
    train_values["seed"] = _seed(args, file_cfg)
    train_values["threads"] = _threads(args, file_cfg)
    if args.steps is not None:
        train_values["total_steps"] = args.steps
    train_config = TrainConfig.paper(**train_values) if args.paper else TrainConfig.desk(**train_values)
    return preset, dan_config, train_config


def _network_requested(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> bool:
    return bool(args.paper) or args.iterations is not None or args.channels is not None or "network" in file_cfg


def cmd_train(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    dataset = load_pairs(args.dataset)
    resume = load_checkpoint(args.resume) if args.resume else None
    preset, dan_config, train_config = _train_configs(args, file_cfg, dataset.scale)
    if resume is not None:
        if not _network_requested(args, file_cfg):
            dan_config = resume.config
        elif dan_config != resume.config:
            raise UsageError(f"Network flags conflict with the config stored in {args.resume}")
    _echo("train", {"preset": preset, "network": dan_config.model_dump(), "train": train_config.model_dump()})

    val_dataset = load_pairs(args.val_dataset) if args.val_dataset else None
    log_path = args.log or str(Path(args.out).with_suffix(".csv"))
    result = train(dan_config, train_config, dataset, resume=resume, log_path=log_path, val_dataset=val_dataset)
    save_checkpoint(args.out, result.checkpoint)
    if len(result.log):
        last = result.log.iloc[-1]
        logger.info(f"Finished at step {int(last['step'])}: L1 {last['loss_l1']:.5f}, theta {last['loss_l2']:.5f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    dataset = load_pairs(args.dataset)
    checkpoint = load_checkpoint(args.ckpt)
    options = {
        "use_gt_degradation": bool(args.use_gt_degradation),
        "iterations": _pick(args.iters, file_cfg, "iters", None),
        "border": int(_pick(args.shave, file_cfg, "shave", 0)),
        "y_range": "full" if args.full_range_y else file_cfg.get("y_range", "studio"),
        "threads": _threads(args, file_cfg),
        "kernel_dir": args.kernel_dir,
    }
    _echo("eval", {**options, "dataset": args.dataset, "ckpt": args.ckpt})
    report = evaluate(dataset, checkpoint, manifest_label=args.dataset, **options)
    write_report(report, args.report, args.csv)
    for name, summary in report.aggregates.items():
        print(f"{name:20s} mean {summary.mean:.6g} std {summary.std:.3g} n {summary.count}")
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    lr = read_netpbm(args.input)
    if lr.shape[0] != 3:
        raise UsageError(f"{args.input} must be an RGB image")
    sr, theta_hat = super_resolve(checkpoint.network(), lr)
    scale = checkpoint.config.sr_scale
    params, repairs = decode_theta_with_repairs(theta_hat, scale)
    for repair in repairs:
        logger.warning(f"Estimated theta repaired: {repair}")
    record = DegradationRecord(
        params=params, theta=theta_hat.tolist(), table_version=THETA_TABLE_VERSION, repairs=repairs
    )
    Path(args.out).write_text(record.model_dump_json(indent=2, by_alias=True))
    if args.kernel_pgm:
        kernel = kernel_from_theta(theta_hat, scale)
        write_kernel_pgm(args.kernel_pgm, kernel)
        logger.info(f"Estimated kernel {kernel.shape[0]}x{kernel.shape[0]} sums to {kernel.sum():.6f}")
    if args.sr_out:
        write_netpbm(args.sr_out, sr)
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    checkpoint = load_checkpoint(args.ckpt)
    dataset = load_pairs(args.dataset)
    values = checkpoint.train_config.model_dump()
    values.update({k: v for k, v in file_cfg.items() if k != "network"})
    values["seed"] = _seed(args, {**values, **file_cfg})
    train_config = TrainConfig(**values)
    steps = int(_pick(args.steps, file_cfg, "steps", 1000))
    _echo("calibrate", {"train": train_config.model_dump(), "steps": steps})
    calibrated = calibrate_iteration_tails(checkpoint, train_config, dataset, steps=steps)
    save_checkpoint(args.out, calibrated)
    return 0


def cmd_info(args: argparse.Namespace) -> int:
    if args.ckpt:
        checkpoint = load_checkpoint(args.ckpt)
        config, network = checkpoint.config, checkpoint.network()
    else:
        overrides = load_json(args.config) if args.config else {}
        if args.scale is not None:
            overrides["sr_scale"] = args.scale
        config = DanConfig.paper(**overrides) if args.paper else DanConfig.desk(**overrides)
        network = None
    height, width = args.lr_size
    report = model_complexity(config, height, width, runs=args.runs, network=network)
    print(report.model_dump_json(indent=2))
    return 0


def cmd_selfcheck(args: argparse.Namespace) -> int:
    results = run_selfcheck(_seed(args, {}))
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dansr", description="Blind super-resolution lab")
    parser.add_argument("--log-level", default=None, help="Logging level (default: DAN_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", help="Synthesize one blur kernel")
    p.add_argument("--kind", choices=["gaussian", "plateau", "sinc"])
    p.add_argument("--size", type=int)
    p.add_argument("--sigma-x", type=float)
    p.add_argument("--sigma-y", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--omega-c", type=float)
    p.add_argument("--noise", type=float, help="Multiplicative kernel noise strength in [0, 1]")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file with default values")
    p.add_argument("--out", help="Output path stem; writes <stem>.txt and <stem>.pgm")
    p.set_defaults(handler=cmd_kernel)

    p = sub.add_parser("degrade", help="Degrade one HR image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--preset", choices=sorted(DEGRADATION_PRESETS))
    p.add_argument("--theta-json", help="Replay a recorded degradation")
    p.add_argument("--model", choices=["blurry", "two_stage"], help="Degradation model for --theta-json")
    p.add_argument("--scale", type=int, choices=[2, 4])
    p.add_argument("--seed", type=int)
    p.add_argument("--blurry-noise", type=float)
    p.add_argument("--noise-sinc-kernels", action="store_true", default=None)
    p.add_argument("--chroma-subsampling", action="store_true", default=None)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--emit-theta", help="Write the applied degradation as JSON")
    p.set_defaults(handler=cmd_degrade)

    p = sub.add_parser("dataset", help="Synthesize a dataset of HR/LR pairs")
    p.add_argument("--preset", choices=sorted(DEGRADATION_PRESETS))
    p.add_argument("--n", type=int)
    p.add_argument("--size", type=int, help="Side of procedural HR images")
    p.add_argument("--seed", type=int)
    p.add_argument("--hr-dir", help="Directory of Netpbm HR images to degrade instead of procedural ones")
    p.add_argument("--threads", type=int)
    p.add_argument("--blurry-noise", type=float)
    p.add_argument("--noise-sinc-kernels", action="store_true", default=None)
    p.add_argument("--force", action="store_true")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_dataset)

    p = sub.add_parser("train", help="Train a network on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="TrainConfig fields plus an optional 'network' object")
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--desk", action="store_true", help="Desk-scale schedule (default)")
    group.add_argument("--paper", action="store_true", help="Full-scale schedule")
    p.add_argument("--resume")
    p.add_argument("--log", help="CSV log path (default: <out>.csv)")
    p.add_argument("--val-dataset")
    p.add_argument("--steps", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="Data-parallel replicas")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--use-gt-degradation", action="store_true")
    p.add_argument("--iters", type=int)
    p.add_argument("--shave", type=int)
    p.add_argument("--full-range-y", action="store_true")
    p.add_argument("--kernel-dir", help="Write (GT, predicted, |diff|) kernel PGMs here")
    p.add_argument("--threads", type=int)
    p.add_argument("--config")
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("estimate", help="Estimate the degradation of one LR image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kernel-pgm")
    p.add_argument("--sr-out", help="Also write the super-resolved image")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("calibrate", help="Train per-iteration tails of a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("info", help="Parameter count, multiply-adds and latency")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--ckpt")
    source.add_argument("--config", help="DanConfig fields as JSON")
    p.add_argument("--paper", action="store_true")
    p.add_argument("--scale", type=int, choices=[2, 4])
    p.add_argument("--lr-size", type=int, nargs=2, default=[32, 32], metavar=("H", "W"))
    p.add_argument("--runs", type=int, default=0)
    p.set_defaults(handler=cmd_info)

    p = sub.add_parser("selfcheck", help="Run the numerics self-verification suite")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_selfcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)

    try:
        return args.handler(args)
    except (UsageError, ParameterDomainError, ValidationError) as exc:
        logger.error(f"{args.command}: {exc}")
        return 2
    except (DanError, OSError) as exc:
        logger.error(f"{args.command} failed: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
