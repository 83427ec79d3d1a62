"""Checkpoint container: magic "EMGSE\\0", format version, an embedded
key=value config blob, and length-prefixed named float64 blocks for every
parameter and normalizer statistic. Writers are canonical: save(load(x))
reproduces x byte for byte."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..normalize import Normalizer
from .network import VARIANT_AUDIO_ONLY, EMGSEParams, NetDims, build_params

MAGIC = b"EMGSE\0"
CHECKPOINT_VERSION = 1


@dataclass
class ModelCheckpoint:
    params: EMGSEParams
    emg_normalizer: Normalizer | None
    audio_normalizer: Normalizer
    epoch: int
    best_val_loss: float
    master_seed: int

    @property
    def system_name(self) -> str:
        if self.params.variant == VARIANT_AUDIO_ONLY:
            return "SE(A)"
        if self.params.channel_set == "cheek":
            return "EMGSE_cheek"
        return "EMGSE"


def _config_blob(ckpt: ModelCheckpoint) -> bytes:
    dims = ckpt.params.dims
    fields = {
        "audio_in": dims.audio_in,
        "aux_in": dims.aux_in,
        "best_val_loss": repr(ckpt.best_val_loss),
        "blstm_hidden": dims.blstm_hidden,
        "channel_set": ckpt.params.channel_set,
        "enc_hidden": dims.enc_hidden,
        "enc_out": dims.enc_out,
        "epoch": ckpt.epoch,
        "fusion_out": dims.fusion_out,
        "has_emg_normalizer": int(ckpt.emg_normalizer is not None),
        "master_seed": ckpt.master_seed,
        "out_dim": dims.out_dim,
        "variant": ckpt.params.variant,
    }
    lines = [f"{k}={fields[k]}" for k in sorted(fields)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_config(blob: bytes) -> dict[str, str]:
    out = {}
    for line in blob.decode("utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


def _pack_block(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f8")
    enc = name.encode("utf-8")
    head = struct.pack("<H", len(enc)) + enc + struct.pack("<B", data.ndim)
    head += b"".join(struct.pack("<I", d) for d in data.shape)
    return head + data.tobytes()


def save_checkpoint(path, ckpt: ModelCheckpoint) -> None:
    blocks: list[tuple[str, np.ndarray]] = list(ckpt.params.named_params())
    if ckpt.emg_normalizer is not None:
        blocks.append(("norm.emg.lo", ckpt.emg_normalizer.lo))
        blocks.append(("norm.emg.hi", ckpt.emg_normalizer.hi))
    blocks.append(("norm.audio.lo", ckpt.audio_normalizer.lo))
    blocks.append(("norm.audio.hi", ckpt.audio_normalizer.hi))

    config = _config_blob(ckpt)
    parts = [MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(config)), config]
    parts.append(struct.pack("<I", len(blocks)))
    for name, arr in blocks:
        parts.append(_pack_block(name, arr))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> ModelCheckpoint:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    off = len(MAGIC)
    version, config_len = struct.unpack_from("<II", blob, off)
    off += 8
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    cfg = _parse_config(blob[off : off + config_len])
    off += config_len
    (n_blocks,) = struct.unpack_from("<I", blob, off)
    off += 4

    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += 8 * count
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes after last block")

    dims = NetDims(
        aux_in=int(cfg["aux_in"]),
        audio_in=int(cfg["audio_in"]),
        enc_hidden=int(cfg["enc_hidden"]),
        enc_out=int(cfg["enc_out"]),
        fusion_out=int(cfg["fusion_out"]),
        blstm_hidden=int(cfg["blstm_hidden"]),
        out_dim=int(cfg["out_dim"]),
    )
    params = build_params(cfg["variant"], cfg["channel_set"], dims, np.random.default_rng(0))
    for name, _ in params.named_params():
        if name not in arrays:
            raise ValueError(f"{path}: missing parameter block {name}")
        params.set_param(name, arrays[name])  # set_param validates the shape

    emg_norm = None
    if int(cfg["has_emg_normalizer"]):
        emg_norm = Normalizer(lo=arrays["norm.emg.lo"], hi=arrays["norm.emg.hi"])
        if emg_norm.dim != dims.aux_in:
            raise ValueError(f"{path}: EMG normalizer dim {emg_norm.dim} != {dims.aux_in}")
    audio_norm = Normalizer(lo=arrays["norm.audio.lo"], hi=arrays["norm.audio.hi"])
    if audio_norm.dim != dims.audio_in:
        raise ValueError(f"{path}: audio normalizer dim {audio_norm.dim} != {dims.audio_in}")

    return ModelCheckpoint(
        params=params,
        emg_normalizer=emg_norm,
        audio_normalizer=audio_norm,
        epoch=int(cfg["epoch"]),
        best_val_loss=float(cfg["best_val_loss"]),
        master_seed=int(cfg["master_seed"]),
    )
