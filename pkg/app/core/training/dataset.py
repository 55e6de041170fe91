"""
Dataset synthesis, manifests and batch sampling.

A dataset directory holds

    manifest.json
    hr/<id>.ppm
    lr/<id>.ppm
    kernels/<id>.txt      realized stage-1 kernel, when the stage blurs

Each entry's degradation depends only on its per-image seed, derived from
(dataset seed, index): theta is drawn from one stream and the pixel/kernel
noise from another, so the stored LR can be regenerated from (hr, params, seed).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.degradation.pipeline import degrade_for_preset
from app.core.degradation.presets import get_preset, min_hr_size, sample_degradation
from app.core.degradation.theta_codec import (
    THETA_TABLE_VERSION,
    decode_theta_with_repairs,
    encode_theta,
    table_hash,
)
from app.core.errors import ManifestError, ParameterDomainError
from app.core.training.synthetic import synth_hr_at
from app.schemas.dataset import DatasetManifest, ManifestEntry
from app.utils.image_io import (
    dequantize_8bit,
    quantize_8bit,
    read_kernel_text,
    read_netpbm,
    write_kernel_text,
    write_netpbm,
)
from app.utils.rng import degradation_streams, derive_seed

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PathLike = Union[str, Path]


def center_crop_to_multiple(image: np.ndarray, multiple: int) -> np.ndarray:
    """Center-crop (C, H, W) so H and W are divisible by `multiple`."""
    _, height, width = image.shape
    new_h, new_w = height - height % multiple, width - width % multiple
    if new_h == 0 or new_w == 0:
        raise ParameterDomainError(f"Image {height}x{width} is smaller than the scale {multiple}")
    top, left = (height - new_h) // 2, (width - new_w) // 2
    return image[:, top : top + new_h, left : left + new_w]


def _synthesize_entry(
    index: int,
    hr: np.ndarray,
    preset: str,
    dataset_seed: int,
    out_dir: Path,
    blurry_noise: float,
    noise_sinc_kernels: bool,
) -> ManifestEntry:
    cfg = get_preset(preset)
    entry_id = f"{index:05d}"
    image_seed = derive_seed(dataset_seed, index)
    theta_rng, pixel_rng = degradation_streams(image_seed)

    # The LR is computed from the stored 8-bit HR so it can be replayed from the files
    hr = dequantize_8bit(quantize_8bit(center_crop_to_multiple(hr, cfg.sr_scale)))
    params = sample_degradation(preset, theta_rng, blurry_noise=blurry_noise, noise_sinc_kernels=noise_sinc_kernels)
    lr, kernels = degrade_for_preset(hr, params, cfg.model, pixel_rng)

    hr_rel, lr_rel = f"hr/{entry_id}.ppm", f"lr/{entry_id}.ppm"
    write_netpbm(out_dir / hr_rel, hr)
    write_netpbm(out_dir / lr_rel, lr)
    kernel_rel = None
    if kernels and kernels[0] is not None:
        kernel_rel = f"kernels/{entry_id}.txt"
        write_kernel_text(out_dir / kernel_rel, kernels[0])
    logger.debug(f"Synthesized pair {entry_id} (seed {image_seed})")
    return ManifestEntry(
        id=entry_id,
        hr_path=hr_rel,
        lr_path=lr_rel,
        theta=encode_theta(params).tolist(),
        params=params,
        seed=image_seed,
        kernel_path=kernel_rel,
    )


def make_dataset(
    hr_source: Optional[Sequence[np.ndarray]],
    preset: str,
    n: int,
    seed: int,
    out_dir: PathLike,
    hr_size: int = 64,
    threads: int = 1,
    blurry_noise: float = 0.0,
    noise_sinc_kernels: bool = False,
    force: bool = False,
) -> DatasetManifest:
    """
    Synthesize HR/LR pairs and write them with a manifest.

    Args:
        hr_source: HR images to degrade; procedural images of side `hr_size` when None
        preset: Degradation preset name
        n: Number of pairs
        seed: Dataset seed
        out_dir: Output directory
        hr_size: Side of procedural HR images
        threads: Worker threads; output does not depend on this value
        blurry_noise: AWGN sigma bound for blurry presets
        noise_sinc_kernels: Perturb sinc kernels too
        force: Allow writing into a non-empty directory

    Returns:
        The written DatasetManifest
    """
    cfg = get_preset(preset)
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"Output directory {out} is not empty; pass force to overwrite")
    if n < 1:
        raise ParameterDomainError(f"Dataset size must be >= 1, got {n}")

    if hr_source is None:
        if hr_size < min_hr_size(preset) or hr_size % cfg.sr_scale:
            raise ParameterDomainError(
                f"Preset {preset} needs a HR size divisible by {cfg.sr_scale} and >= {min_hr_size(preset)}, got {hr_size}"
            )
        images = None
    else:
        if len(hr_source) < n:
            raise ParameterDomainError(f"Requested {n} pairs but only {len(hr_source)} HR images were given")
        images = list(hr_source[:n])

    def build(index: int) -> ManifestEntry:
        hr = images[index] if images is not None else synth_hr_at(hr_size, seed, index)
        return _synthesize_entry(index, hr, preset, seed, out, blurry_noise, noise_sinc_kernels)

    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        entries = list(pool.map(build, range(n)))

    manifest = DatasetManifest(
        preset=preset,
        degradation_model=cfg.model,
        sr_scale=cfg.sr_scale,
        dataset_seed=seed,
        hr_size=hr_size if images is None else None,
        theta_table_version=THETA_TABLE_VERSION,
        theta_table_hash=table_hash(),
        blurry_noise=blurry_noise,
        noise_sinc_kernels=noise_sinc_kernels,
        entries=entries,
    )
    save_manifest(manifest, out / MANIFEST_NAME)
    logger.info(f"Wrote {n} {preset} pairs to {out}")
    return manifest


def save_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(manifest.model_dump_json(indent=2, by_alias=True))


def validate_manifest(manifest: DatasetManifest) -> None:
    """
    Check a manifest against the current theta codec.

    Raises:
        ManifestError: table hash mismatch or a theta vector that needs repair
    """
    if manifest.theta_table_hash != table_hash():
        raise ManifestError(
            f"Manifest was encoded with theta table {manifest.theta_table_hash[:12]}, current is {table_hash()[:12]}"
        )
    for entry in manifest.entries:
        _, repairs = decode_theta_with_repairs(entry.theta, manifest.sr_scale)
        if repairs:
            raise ManifestError(f"Entry {entry.id} has an invalid theta vector: {repairs[0]}")


def load_manifest(path: PathLike) -> DatasetManifest:
    """Read and validate a manifest file."""
    try:
        manifest = DatasetManifest.model_validate_json(Path(path).read_text())
    except ValidationError as exc:
        raise ManifestError(f"Invalid manifest {path}: {exc}") from exc
    validate_manifest(manifest)
    return manifest


@dataclass
class PairDataset:
    """HR/LR pairs loaded into memory."""

    manifest: DatasetManifest
    root: Path
    ids: List[str]
    lr: List[np.ndarray]
    hr: List[np.ndarray]
    theta: np.ndarray

    @property
    def scale(self) -> int:
        return self.manifest.sr_scale

    def __len__(self) -> int:
        return len(self.ids)

    def kernel(self, index: int) -> Optional[np.ndarray]:
        rel = self.manifest.entries[index].kernel_path
        return read_kernel_text(self.root / rel) if rel else None

    def theta_mean(self) -> np.ndarray:
        return self.theta.mean(axis=0)


def load_pairs(manifest_path: PathLike) -> PairDataset:
    """Load every pair of a manifest once."""
    path = Path(manifest_path)
    manifest = load_manifest(path)
    root = path.parent
    lr, hr = [], []
    for entry in manifest.entries:
        lr_image = read_netpbm(root / entry.lr_path)
        hr_image = read_netpbm(root / entry.hr_path)
        if lr_image.shape[0] != 3 or hr_image.shape[0] != 3:
            raise ManifestError(f"Entry {entry.id} is not an RGB pair")
        if hr_image.shape[1] != lr_image.shape[1] * manifest.sr_scale or hr_image.shape[2] != lr_image.shape[2] * manifest.sr_scale:
            raise ManifestError(f"Entry {entry.id}: HR {hr_image.shape[1:]} is not {manifest.sr_scale}x LR {lr_image.shape[1:]}")
        lr.append(lr_image)
        hr.append(hr_image)
    theta = np.array([entry.theta for entry in manifest.entries], dtype=np.float64).reshape(-1, 36)
    logger.info(f"Loaded {len(lr)} pairs from {path}")
    return PairDataset(manifest=manifest, root=root, ids=[e.id for e in manifest.entries], lr=lr, hr=hr, theta=theta)


@dataclass
class Batch:
    lr: np.ndarray
    hr: np.ndarray
    theta: np.ndarray
    indices: np.ndarray
    lr_offsets: np.ndarray


def random_crop_pair(
    lr: np.ndarray, hr: np.ndarray, lr_patch: int, scale: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, Tuple[int, int]]:
    """Aligned crops: the HR crop starts at scale times the LR offset."""
    _, height, width = lr.shape
    if lr_patch > height or lr_patch > width:
        raise ParameterDomainError(f"LR patch {lr_patch} exceeds the {height}x{width} LR image")
    top = int(rng.integers(0, height - lr_patch + 1))
    left = int(rng.integers(0, width - lr_patch + 1))
    lr_crop = lr[:, top : top + lr_patch, left : left + lr_patch]
    hr_patch = lr_patch * scale
    hr_crop = hr[:, top * scale : top * scale + hr_patch, left * scale : left * scale + hr_patch]
    return lr_crop, hr_crop, (top, left)


def _augment(lr: np.ndarray, hr: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if rng.random() < 0.5:
        lr, hr = lr[:, :, ::-1], hr[:, :, ::-1]
    if rng.random() < 0.5:
        lr, hr = lr[:, ::-1, :], hr[:, ::-1, :]
    turns = int(rng.integers(4))
    return np.rot90(lr, turns, axes=(1, 2)), np.rot90(hr, turns, axes=(1, 2))


def sample_batch(
    dataset: PairDataset, batch: int, lr_patch: int, rng: np.random.Generator, augment: bool = False
) -> Batch:
    """
    Draw `batch` aligned random crops with their theta targets.

    Args:
        dataset: Loaded pairs
        batch: Batch size
        lr_patch: LR crop side; HR crops are lr_patch * scale
        rng: Random stream
        augment: Apply the same random flips and 90-degree rotation to both crops

    Returns:
        Batch with float64 arrays
    """
    indices = rng.integers(0, len(dataset), size=batch)
    lr_crops, hr_crops, offsets = [], [], []
    for index in indices:
        lr_crop, hr_crop, offset = random_crop_pair(dataset.lr[index], dataset.hr[index], lr_patch, dataset.scale, rng)
        if augment:
            lr_crop, hr_crop = _augment(lr_crop, hr_crop, rng)
        lr_crops.append(lr_crop)
        hr_crops.append(hr_crop)
        offsets.append(offset)
    return Batch(
        lr=np.ascontiguousarray(np.stack(lr_crops)),
        hr=np.ascontiguousarray(np.stack(hr_crops)),
        theta=dataset.theta[indices].copy(),
        indices=indices,
        lr_offsets=np.array(offsets, dtype=np.int64),
    )
