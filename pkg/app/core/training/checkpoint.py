"""
Binary checkpoint files.

Layout (little endian):

    b"DANC"  u32 format version  u32 header length  header (UTF-8 JSON)
    u32 tensor count
    per tensor: u32 name length, name (UTF-8), u8 dtype tag, u8 ndim,
                ndim x u32 dims, raw payload

The header carries both configs, the theta normalization table, the step
counter and the Adam hyperparameters. Adam moments are stored as tensors
named "adam.m/<param>" and "adam.v/<param>".
"""
import hashlib
import io
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from app.core.autodiff.optim import AdamState
from app.core.autodiff.parameters import ParameterStore
from app.core.dan.config import DanConfig
from app.core.dan.network import DanNetwork, init_parameters
from app.core.degradation.theta_codec import THETA_TABLE, THETA_TABLE_VERSION, table_hash
from app.core.errors import CheckpointFormatError, ShapeMismatchError
from app.schemas.training import TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b"DANC"
FORMAT_VERSION = 1
DTYPE_TAGS = {1: np.dtype("<f4")}
F32_TAG = 1
ADAM_M_PREFIX = "adam.m/"
ADAM_V_PREFIX = "adam.v/"
PathLike = Union[str, Path]


class ThetaTableInfo(BaseModel):
    version: int
    hash: str
    ranges: Dict[str, Tuple[float, float]]


class AdamInfo(BaseModel):
    beta1: float
    beta2: float
    eps: float
    step: int


class CheckpointHeader(BaseModel):
    format_version: int = FORMAT_VERSION
    dan_config: DanConfig
    train_config: TrainConfig
    theta_table: ThetaTableInfo
    step: int = Field(default=0, ge=0)
    config_hash: str
    theta_mean: Optional[List[float]] = None
    adam: Optional[AdamInfo] = None


@dataclass
class Checkpoint:
    """Everything needed to rebuild a network or resume training."""

    config: DanConfig
    train_config: TrainConfig
    params: ParameterStore
    step: int = 0
    adam: Optional[AdamState] = None
    theta_mean: Optional[np.ndarray] = None
    sha256: Optional[str] = None

    def network(self) -> DanNetwork:
        return DanNetwork(self.config, self.params)


def _current_table() -> ThetaTableInfo:
    return ThetaTableInfo(version=THETA_TABLE_VERSION, hash=table_hash(), ranges=THETA_TABLE)


def _write_tensor(stream: BinaryIO, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    data = np.ascontiguousarray(array, dtype="<f4")
    stream.write(struct.pack("<I", len(encoded)))
    stream.write(encoded)
    stream.write(struct.pack("<BB", F32_TAG, data.ndim))
    stream.write(struct.pack(f"<{data.ndim}I", *data.shape))
    stream.write(data.tobytes())


def save_checkpoint(path: PathLike, checkpoint: Checkpoint) -> str:
    """
    Write a checkpoint atomically.

    Args:
        path: Destination file
        checkpoint: Network weights, configs and optional optimizer state

    Returns:
        sha256 of the written file
    """
    tensors: List[Tuple[str, np.ndarray]] = list(checkpoint.params.state_dict().items())
    adam_info = None
    if checkpoint.adam is not None:
        state = checkpoint.adam
        adam_info = AdamInfo(beta1=state.beta1, beta2=state.beta2, eps=state.eps, step=state.step)
        for name in checkpoint.params.names():
            if name in state.m:
                tensors.append((ADAM_M_PREFIX + name, state.m[name]))
                tensors.append((ADAM_V_PREFIX + name, state.v[name]))

    header = CheckpointHeader(
        dan_config=checkpoint.config,
        train_config=checkpoint.train_config,
        theta_table=_current_table(),
        step=checkpoint.step,
        config_hash=checkpoint.config.config_hash(),
        theta_mean=None if checkpoint.theta_mean is None else [float(v) for v in checkpoint.theta_mean],
        adam=adam_info,
    )
    header_bytes = header.model_dump_json().encode("utf-8")

    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
    buffer.write(header_bytes)
    buffer.write(struct.pack("<I", len(tensors)))
    for name, array in tensors:
        _write_tensor(buffer, name, array)
    payload = buffer.getvalue()

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, target)
    digest = hashlib.sha256(payload).hexdigest()
    logger.info(f"Saved checkpoint at step {checkpoint.step} to {target} ({len(tensors)} tensors)")
    return digest


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise CheckpointFormatError(f"Truncated checkpoint while reading {what} at byte {self.offset}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_tensors(reader: _Reader) -> Dict[str, np.ndarray]:
    (count,) = reader.unpack("<I", "tensor count")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<I", "tensor name length")
        try:
            name = reader.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError(f"Tensor name is not UTF-8 at byte {reader.offset}") from exc
        tag, ndim = reader.unpack("<BB", f"dtype of '{name}'")
        if tag not in DTYPE_TAGS:
            raise CheckpointFormatError(f"Tensor '{name}' has unknown dtype tag {tag}")
        dims = reader.unpack(f"<{ndim}I", f"dims of '{name}'") if ndim else ()
        dtype = DTYPE_TAGS[tag]
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = reader.take(size * dtype.itemsize, f"payload of '{name}'")
        if name in tensors:
            raise CheckpointFormatError(f"Duplicate tensor '{name}'")
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(np.float32)
    if reader.offset != len(reader.data):
        raise CheckpointFormatError(f"{len(reader.data) - reader.offset} trailing bytes after the last tensor")
    return tensors


def load_checkpoint(path: PathLike) -> Checkpoint:
    """
    Read and validate a checkpoint.

    Raises:
        CheckpointFormatError: bad magic or version, truncation, config or
            theta-table hash mismatch, missing or unexpected tensors
    """
    data = Path(path).read_bytes()
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointFormatError(f"{path} is not a checkpoint (bad magic)")
    version, header_len = reader.unpack("<II", "header")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    try:
        header = CheckpointHeader.model_validate_json(reader.take(header_len, "header"))
    except ValidationError as exc:
        raise CheckpointFormatError(f"Invalid checkpoint header: {exc}") from exc
    if header.config_hash != header.dan_config.config_hash():
        raise CheckpointFormatError("Checkpoint config hash does not match its network config")
    if header.theta_table.hash != table_hash():
        raise CheckpointFormatError(
            f"Checkpoint theta table {header.theta_table.hash[:12]} differs from the current table {table_hash()[:12]}"
        )

    tensors = _read_tensors(reader)
    params = init_parameters(header.dan_config)
    weights = {name: value for name, value in tensors.items() if not name.startswith((ADAM_M_PREFIX, ADAM_V_PREFIX))}
    for name in params.names():
        if name not in weights:
            raise CheckpointFormatError(f"Checkpoint is missing tensor '{name}'")
    unknown = [name for name in weights if name not in params]
    if unknown:
        raise CheckpointFormatError(f"Checkpoint has unexpected tensor '{unknown[0]}'")
    try:
        params.load_state_dict(weights)
    except ShapeMismatchError as exc:
        raise CheckpointFormatError(str(exc)) from exc

    adam = None
    if header.adam is not None:
        adam = AdamState(
            lr=header.train_config.lr0,
            beta1=header.adam.beta1,
            beta2=header.adam.beta2,
            eps=header.adam.eps,
            step=header.adam.step,
        )
        for name, value in tensors.items():
            if name.startswith(ADAM_M_PREFIX):
                adam.m[name[len(ADAM_M_PREFIX) :]] = value.copy()
            elif name.startswith(ADAM_V_PREFIX):
                adam.v[name[len(ADAM_V_PREFIX) :]] = value.copy()

    digest = hashlib.sha256(data).hexdigest()
    logger.debug(f"Loaded checkpoint {path} at step {header.step} (sha256 {digest[:12]})")
    return Checkpoint(
        config=header.dan_config,
        train_config=header.train_config,
        params=params,
        step=header.step,
        adam=adam,
        theta_mean=None if header.theta_mean is None else np.array(header.theta_mean, dtype=np.float64),
        sha256=digest,
    )
