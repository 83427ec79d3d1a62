"""Corpus import: re-encode raw multichannel EMG into EMGC containers,
dropping excluded channels and labeling the cheek/chin arrays.

Expected source layout (one pair per utterance, ids shared):

    <src>/audio/<speaker>_<utt>.wav     16 kHz mono PCM
    <src>/emg/<speaker>_<utt>.npy       float (raw_channels, T) matrix at 2048 Hz

Utterances missing their EMG file are skipped with a warning. Speaker grouping
comes from the id prefix before the first underscore; splits are assigned per
speaker in sorted id order.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from . import fileio
from .config import ImportConfig
from .dataset import ManifestRow
from .dsp import EMG_RATE
from .emg import CHEEK_PREFIX, CHIN_PREFIX

log = logging.getLogger(__name__)

PIPELINE_CHANNELS = 35


def _labels_after_exclusion(cfg: ImportConfig) -> list[str]:
    labels = []
    cheek_n = 0
    chin_n = 0
    for raw in range(cfg.raw_channels):
        if raw in cfg.exclude_channels:
            continue
        if raw < cfg.cheek_channels_end:
            cheek_n += 1
            labels.append(f"{CHEEK_PREFIX}{cheek_n:02d}")
        else:
            chin_n += 1
            labels.append(f"{CHIN_PREFIX}{chin_n:02d}")
    return labels


def import_corpus(
    src_dir,
    out_dir,
    cfg: ImportConfig,
    split_counts: tuple[int, int, int] = (280, 20, 40),
) -> list[ManifestRow]:
    """Convert a raw corpus tree into EMGC containers plus a manifest.

    Idempotent: re-running over the same source produces identical bytes.
    """
    src = Path(src_dir)
    out = Path(out_dir)
    (out / "emg").mkdir(parents=True, exist_ok=True)
    labels = _labels_after_exclusion(cfg)
    if len(labels) != PIPELINE_CHANNELS:
        raise ValueError(
            f"{cfg.raw_channels} raw channels minus {len(cfg.exclude_channels)} exclusions "
            f"leaves {len(labels)}, pipeline expects {PIPELINE_CHANNELS}"
        )
    keep = [c for c in range(cfg.raw_channels) if c not in cfg.exclude_channels]

    wavs = sorted((src / "audio").glob("*.wav"))
    if not wavs:
        raise ValueError(f"{src}/audio contains no wav files")

    by_speaker: dict[str, list] = {}
    for wav_path in wavs:
        utt_id = wav_path.stem
        emg_src = src / "emg" / f"{utt_id}.npy"
        if not emg_src.exists():
            log.warning("skipping %s: no EMG file at %s", utt_id, emg_src)
            continue
        raw = np.load(emg_src)
        if raw.ndim != 2 or raw.shape[0] != cfg.raw_channels:
            raise ValueError(
                f"{emg_src}: expected ({cfg.raw_channels}, T) channel matrix, got {raw.shape}"
            )
        emg_out = out / "emg" / f"{utt_id}.emgc"
        fileio.emgc_write(emg_out, raw[keep], EMG_RATE, labels)
        speaker = utt_id.split("_", 1)[0]
        by_speaker.setdefault(speaker, []).append((utt_id, str(wav_path), str(emg_out)))

    n_train, n_val, n_test = split_counts
    rows: list[ManifestRow] = []
    for speaker in sorted(by_speaker):
        utts = sorted(by_speaker[speaker])
        for i, (utt_id, audio_path, emg_path) in enumerate(utts):
            if i < n_train:
                split = "train"
            elif i < n_train + n_val:
                split = "val"
            elif i < n_train + n_val + n_test:
                split = "test"
            else:
                log.warning("%s: beyond configured split sizes, left out of manifest", utt_id)
                continue
            rows.append(ManifestRow(utt_id=utt_id, split=split, audio_path=audio_path, emg_path=emg_path))

    fileio.manifest_write(out / "manifest.tsv", rows)
    return rows
