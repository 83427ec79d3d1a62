"""On-disk formats: 16-bit PCM WAV, the EMGC channel container, the corpus
manifest, and the dataset index. All writers emit canonical bytes."""
from __future__ import annotations

import json
import os
import struct
import wave
from pathlib import Path

import numpy as np

from .dataset import DatasetIndex, ManifestRow, MixSpec

EMGC_MAGIC = b"EMGC"
EMGC_VERSION = 1
NORM_MAGIC = b"EMGN"
NORM_VERSION = 1
INDEX_FORMAT = "emgse-dataset-index"
INDEX_VERSION = 1
MANIFEST_HEADER = "id\tsplit\taudio\temg"


class FileFormatError(ValueError):
    """Raised when a file does not match its declared format."""


def wav_write(path, samples: np.ndarray, sample_rate_hz: int) -> None:
    """Write mono 16-bit PCM. Samples clamp to [-1, 1 - 2^-15]."""
    samples = np.asarray(samples, dtype=np.float64)
    clipped = np.clip(samples, -1.0, 32767 / 32768)
    pcm = np.floor(clipped * 32768 + 0.5).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate_hz)
        w.writeframes(pcm.tobytes())


def wav_read(path) -> tuple[np.ndarray, int]:
    """Read mono 16-bit PCM; returns (float samples in [-1, 1), rate)."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise FileFormatError(f"{path}: compressed WAV not supported")
            if w.getsampwidth() != 2:
                raise FileFormatError(f"{path}: only 16-bit PCM supported")
            if w.getnchannels() != 1:
                raise FileFormatError(f"{path}: only mono supported")
            n = w.getnframes()
            raw = w.readframes(n)
            if len(raw) != 2 * n:
                raise FileFormatError(f"{path}: truncated payload ({len(raw)} of {2 * n} bytes)")
            rate = w.getframerate()
    except wave.Error as exc:
        raise FileFormatError(f"{path}: malformed WAV ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def emgc_write(path, channels: np.ndarray, sample_rate_hz: int, channel_ids) -> None:
    """Write the EMGC container: header, channel labels, float32 LE matrix."""
    channels = np.ascontiguousarray(channels, dtype="<f4")
    if channels.ndim != 2:
        raise ValueError("channels must be (C, T)")
    c, t = channels.shape
    channel_ids = list(channel_ids)
    if len(channel_ids) != c:
        raise ValueError("one label per channel required")
    parts = [EMGC_MAGIC, struct.pack("<III Q", EMGC_VERSION, c, sample_rate_hz, t)]
    for cid in channel_ids:
        enc = cid.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)))
        parts.append(enc)
    parts.append(channels.tobytes())
    Path(path).write_bytes(b"".join(parts))


def emgc_read(path) -> tuple[np.ndarray, int, list[str]]:
    """Read an EMGC container; validates dimensions against the payload."""
    blob = Path(path).read_bytes()
    if blob[:4] != EMGC_MAGIC:
        raise FileFormatError(f"{path}: bad magic, not an EMGC file")
    if len(blob) < 24:
        raise FileFormatError(f"{path}: header truncated")
    version, c, rate, t = struct.unpack_from("<III Q", blob, 4)
    if version != EMGC_VERSION:
        raise FileFormatError(f"{path}: unsupported EMGC version {version}")
    off = 24
    labels = []
    for _ in range(c):
        if off + 2 > len(blob):
            raise FileFormatError(f"{path}: label table truncated")
        (n,) = struct.unpack_from("<H", blob, off)
        off += 2
        labels.append(blob[off : off + n].decode("utf-8"))
        off += n
    expected = off + 4 * c * t
    if len(blob) != expected:
        raise FileFormatError(
            f"{path}: payload is {len(blob)} bytes, header declares {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=off).reshape(c, t).astype(np.float64)
    return data, rate, labels


def norm_write(path, normalizers: dict) -> None:
    """Write named normalizer statistics: magic, version, then per entry a
    length-prefixed name, the dimension, and min/max float64 LE vectors."""
    parts = [NORM_MAGIC, struct.pack("<II", NORM_VERSION, len(normalizers))]
    for name in sorted(normalizers):
        norm = normalizers[name]
        enc = name.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)))
        parts.append(enc)
        parts.append(struct.pack("<I", norm.dim))
        parts.append(np.ascontiguousarray(norm.lo, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(norm.hi, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def norm_read(path) -> dict:
    from .normalize import Normalizer

    blob = Path(path).read_bytes()
    if blob[:4] != NORM_MAGIC:
        raise FileFormatError(f"{path}: not a normalizer file")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != NORM_VERSION:
        raise FileFormatError(f"{path}: unsupported normalizer version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + n].decode("utf-8")
        off += n
        (dim,) = struct.unpack_from("<I", blob, off)
        off += 4
        lo = np.frombuffer(blob, dtype="<f8", count=dim, offset=off).copy()
        off += 8 * dim
        hi = np.frombuffer(blob, dtype="<f8", count=dim, offset=off).copy()
        off += 8 * dim
        out[name] = Normalizer(lo=lo, hi=hi)
    if off != len(blob):
        raise FileFormatError(f"{path}: trailing bytes after last normalizer")
    return out


def _relativize(path_str: str, base: Path) -> str:
    """Store paths relative to the containing file so identical builds in
    different roots produce identical bytes."""
    try:
        rel = os.path.relpath(path_str, base)
    except ValueError:  # different drive
        return path_str
    return Path(rel).as_posix()


def _resolve(path_str: str, base: Path) -> str:
    p = Path(path_str)
    return str(p) if p.is_absolute() else str((base / p).resolve())


def manifest_write(path, rows: list[ManifestRow]) -> None:
    base = Path(path).resolve().parent
    lines = [MANIFEST_HEADER]
    for row in sorted(rows, key=lambda r: r.utt_id):
        audio = _relativize(row.audio_path, base)
        emg = _relativize(row.emg_path, base)
        lines.append(f"{row.utt_id}\t{row.split}\t{audio}\t{emg}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def manifest_read(path) -> list[ManifestRow]:
    base = Path(path).resolve().parent
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != MANIFEST_HEADER:
        raise FileFormatError(f"{path}: missing manifest header line")
    rows = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != 4:
            raise FileFormatError(f"{path}: bad manifest row {ln!r}")
        rows.append(
            ManifestRow(
                utt_id=parts[0],
                split=parts[1],
                audio_path=_resolve(parts[2], base),
                emg_path=_resolve(parts[3], base),
            )
        )
    return rows


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def index_write(path, index: DatasetIndex) -> None:
    base = Path(path).resolve().parent
    lines = [
        _json_line(
            {
                "format": INDEX_FORMAT,
                "version": INDEX_VERSION,
                "split_counts": index.split_counts,
            }
        )
    ]
    for kind, paths in (
        ("audio", index.audio_paths),
        ("emg", index.emg_paths),
        ("noise", index.noise_paths),
    ):
        for key in sorted(paths):
            lines.append(_json_line({"type": kind, "id": key, "path": _relativize(paths[key], base)}))
    for m in index.mixes:
        lines.append(
            _json_line(
                {
                    "type": "mix",
                    "clean": m.clean_id,
                    "noise": m.noise_id,
                    "snr_db": m.snr_db,
                    "seed": m.rng_seed,
                    "split": m.split,
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def index_read(path) -> DatasetIndex:
    base = Path(path).resolve().parent
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FileFormatError(f"{path}: empty index")
    head = json.loads(lines[0])
    if head.get("format") != INDEX_FORMAT or head.get("version") != INDEX_VERSION:
        raise FileFormatError(f"{path}: not a version-{INDEX_VERSION} dataset index")
    index = DatasetIndex(
        mixes=[], audio_paths={}, emg_paths={}, noise_paths={}, split_counts=head["split_counts"]
    )
    for ln in lines[1:]:
        if not ln.strip():
            continue
        rec = json.loads(ln)
        kind = rec["type"]
        if kind == "audio":
            index.audio_paths[rec["id"]] = _resolve(rec["path"], base)
        elif kind == "emg":
            index.emg_paths[rec["id"]] = _resolve(rec["path"], base)
        elif kind == "noise":
            index.noise_paths[rec["id"]] = _resolve(rec["path"], base)
        elif kind == "mix":
            index.mixes.append(
                MixSpec(
                    clean_id=rec["clean"],
                    noise_id=rec["noise"],
                    snr_db=float(rec["snr_db"]),
                    rng_seed=int(rec["seed"]),
                    split=rec["split"],
                )
            )
        else:
            raise FileFormatError(f"{path}: unknown record type {kind!r}")
    return index
