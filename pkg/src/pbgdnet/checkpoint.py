"""Binary checkpoints: magic 'PBGD', explicit version, raw f64 payloads.

Layout (all integers little-endian):

    b"PBGD"  u32 version
    u32 meta_len, meta JSON  (arch, epoch counters, plateau + rng state)
    u32 n_params
    per parameter: u16 name_len, name, u8 frozen, u8 ndim, u32 dims..., f64 data

Raw float64 bytes make load(save(x)) bit-identical, and the stored rng /
plateau / schedule position let a resumed run reproduce the exact
trajectory of an uninterrupted one.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import TinyNet
from .optim import PBGDConfig, PlateauState
from .training import TrainState

MAGIC = b"PBGD"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Wrong magic, unsupported version, or corrupted structure."""


@dataclass
class Checkpoint:
    version: int
    meta: dict
    params: list  # (name, frozen, ndarray) in model order


def _pack_param(name: str, frozen: bool, data: np.ndarray) -> bytes:
    nb = name.encode()
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<BB", int(frozen), data.ndim)
    dims = struct.pack(f"<{data.ndim}I", *data.shape)
    return head + dims + np.ascontiguousarray(data, dtype="<f8").tobytes()


def save_checkpoint(path, state: TrainState, cfg: PBGDConfig) -> None:
    model = state.model
    meta = {
        "backbone": "tinynet",
        "spp_scales": list(model.spp_spec.scales),
        "residual": model.residual_bank is not None,
        "epoch": state.epoch,
        "phase_index": state.phase_index,
        "epoch_in_phase": state.epoch_in_phase,
        "plateau": {
            "current_eta": state.plateau.current_eta,
            "best_val_acc": state.plateau.best_val_acc,
            "epochs_since_improve": state.plateau.epochs_since_improve,
        },
        "eta0": cfg.eta,
        "rng": state.rng.bit_generator.state,
    }
    mb = json.dumps(meta).encode()
    params = model.parameters()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(mb)))
        f.write(mb)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            f.write(_pack_param(p.param_id, p.frozen, p.data))


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointFormatError(
            f"{path}: format version {version} is not supported (expected {VERSION})")
    off = 8
    (mlen,) = struct.unpack_from("<I", data, off)
    off += 4
    meta = json.loads(data[off:off + mlen].decode())
    off += mlen
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    params = []
    try:
        for _ in range(n):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nlen].decode()
            off += nlen
            frozen, ndim = struct.unpack_from("<BB", data, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            count = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
            off += 8 * count
            params.append((name, bool(frozen), arr.reshape(dims).copy()))
    except struct.error as e:
        raise CheckpointFormatError(f"{path}: truncated checkpoint") from e
    return Checkpoint(version=version, meta=meta, params=params)


def restore_state(ckpt: Checkpoint) -> TrainState:
    """Rebuild the model and training clocks from a loaded checkpoint."""
    meta = ckpt.meta
    model = TinyNet(spp_scales=tuple(meta["spp_scales"]), residual=meta["residual"])
    by_name = {p.param_id: p for p in model.parameters()}
    if set(by_name) != {name for name, _, _ in ckpt.params}:
        raise CheckpointFormatError("checkpoint parameter table does not match the model")
    for name, frozen, arr in ckpt.params:
        p = by_name[name]
        if p.data.shape != arr.shape:
            raise CheckpointFormatError(
                f"parameter {name}: shape {list(arr.shape)} does not match "
                f"model shape {list(p.data.shape)}")
        p.data = np.ascontiguousarray(arr)
        p.frozen = frozen
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    plateau = PlateauState(current_eta=meta["plateau"]["current_eta"],
                           best_val_acc=meta["plateau"]["best_val_acc"],
                           epochs_since_improve=meta["plateau"]["epochs_since_improve"])
    return TrainState(model=model, rng=rng, plateau=plateau,
                      epoch=meta["epoch"], phase_index=meta["phase_index"],
                      epoch_in_phase=meta["epoch_in_phase"])
