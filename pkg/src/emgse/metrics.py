"""Objective evaluation: short-time intelligibility scoring, scale-invariant
SDR, and report aggregation by SNR and noise type."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetIndex
from .dsp import Waveform, resample
from .loader import DataSource
from .model.checkpoint import ModelCheckpoint
from .model.infer import enhance
from .model.network import VARIANT_MULTIMODAL

STOI_FS = 10000
STOI_FRAME = 256
STOI_HOP = 128
STOI_FFT = 512
STOI_NUM_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEG_FRAMES = 30  # 384 ms at 10 kHz with a 128-sample hop
STOI_DYN_RANGE_DB = 40.0
STOI_CLIP_DB = -15.0

SDR_CAP_DB = 100.0


def _hann(n: int) -> np.ndarray:
    # Endpoint-free symmetric Hann, the window the metric's reference uses.
    return np.hanning(n + 2)[1:-1]


def _frame(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    n_frames = 1 + (len(x) - frame_len) // hop if len(x) >= frame_len else 0
    idx = hop * np.arange(n_frames)[:, None] + np.arange(frame_len)[None, :]
    return x[idx]


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    n_frames, frame_len = frames.shape
    out = np.zeros((n_frames - 1) * hop + frame_len)
    for m in range(n_frames):
        out[m * hop : m * hop + frame_len] += frames[m]
    return out


def _remove_silent_frames(x: np.ndarray, y: np.ndarray):
    """Drop frames more than 40 dB below the loudest clean frame; the same
    mask (derived from the clean signal) applies to both signals."""
    win = _hann(STOI_FRAME)
    xf = _frame(x, STOI_FRAME, STOI_HOP) * win
    yf = _frame(y, STOI_FRAME, STOI_HOP) * win
    if len(xf) == 0:
        raise ValueError("signal shorter than one metric frame")
    energies = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + 1e-300)
    mask = energies > np.max(energies) - STOI_DYN_RANGE_DB
    return _overlap_add(xf[mask], STOI_HOP), _overlap_add(yf[mask], STOI_HOP)


def _third_octave_matrix() -> np.ndarray:
    freqs = np.linspace(0, STOI_FS / 2, STOI_FFT // 2 + 1)
    centers = STOI_MIN_FREQ * 2.0 ** (np.arange(STOI_NUM_BANDS) / 3.0)
    obm = np.zeros((STOI_NUM_BANDS, len(freqs)))
    for j, cf in enumerate(centers):
        lo = np.argmin((freqs - cf * 2 ** (-1 / 6)) ** 2)
        hi = np.argmin((freqs - cf * 2 ** (1 / 6)) ** 2)
        obm[j, lo:hi] = 1.0
    return obm


def _band_envelopes(x: np.ndarray, obm: np.ndarray) -> np.ndarray:
    win = _hann(STOI_FRAME)
    frames = _frame(x, STOI_FRAME, STOI_HOP) * win
    spec = np.fft.rfft(frames, n=STOI_FFT, axis=1)
    return np.sqrt(obm @ (np.abs(spec.T) ** 2))  # (bands, frames)


def stoi(clean: Waveform, processed: Waveform) -> float:
    """Short-time objective intelligibility of `processed` against `clean`.

    Both signals are resampled to 10 kHz, silent frames are removed using the
    clean signal's energy mask, and per-band short-time correlation
    coefficients are averaged over 15 one-third-octave bands and 384 ms
    segments, with the processed segments normalized and clipped at -15 dB.
    """
    if clean.sample_rate_hz != processed.sample_rate_hz:
        raise ValueError("sample rates differ")
    if len(clean.samples) != len(processed.samples):
        raise ValueError("lengths differ")
    x = resample(clean, STOI_FS).samples
    y = resample(processed, STOI_FS).samples
    if np.max(np.abs(x)) == 0.0:
        raise ValueError("clean signal is all silent: score undefined")
    x, y = _remove_silent_frames(x, y)

    obm = _third_octave_matrix()
    xb = _band_envelopes(x, obm)
    yb = _band_envelopes(y, obm)
    n_frames = xb.shape[1]
    if n_frames < STOI_SEG_FRAMES:
        raise ValueError(
            f"only {n_frames} active frames; need {STOI_SEG_FRAMES} for one segment"
        )

    clip_gain = 10.0 ** (-STOI_CLIP_DB / 20.0)
    total = 0.0
    n_segments = n_frames - STOI_SEG_FRAMES + 1
    for m in range(n_segments):
        xs = xb[:, m : m + STOI_SEG_FRAMES]
        ys = yb[:, m : m + STOI_SEG_FRAMES]
        alpha = np.sqrt(
            np.sum(xs**2, axis=1, keepdims=True) / (np.sum(ys**2, axis=1, keepdims=True) + 1e-300)
        )
        ys_clipped = np.minimum(alpha * ys, xs * (1.0 + clip_gain))
        xs_c = xs - xs.mean(axis=1, keepdims=True)
        ys_c = ys_clipped - ys_clipped.mean(axis=1, keepdims=True)
        num = np.sum(xs_c * ys_c, axis=1)
        den = np.linalg.norm(xs_c, axis=1) * np.linalg.norm(ys_c, axis=1) + 1e-300
        total += float(np.sum(num / den))
    return total / (STOI_NUM_BANDS * n_segments)


def si_sdr(reference: Waveform, estimate: Waveform) -> float:
    """Scale-invariant SDR in dB: project the estimate onto the reference and
    compare target to residual energy. Capped at 100 dB."""
    if len(reference.samples) != len(estimate.samples):
        raise ValueError("lengths differ")
    r = reference.samples
    e = estimate.samples
    r_energy = float(np.dot(r, r))
    if r_energy < 1e-24:
        raise ValueError("reference is silent")
    alpha = float(np.dot(e, r)) / r_energy
    target = alpha * r
    residual = e - target
    t_pow = float(np.dot(target, target))
    r_pow = float(np.dot(residual, residual))
    if r_pow <= t_pow * 10.0 ** (-SDR_CAP_DB / 10.0):
        return SDR_CAP_DB
    return min(SDR_CAP_DB, 10.0 * np.log10(t_pow / r_pow))


@dataclass
class EvalRecord:
    utterance_id: str
    noise_type: str
    snr_db: float
    system: str
    stoi_noisy: float
    stoi_enhanced: float | None
    si_sdr_noisy: float
    si_sdr_enhanced: float | None
    error: str | None = None


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)

    def systems(self) -> list[str]:
        return sorted({r.system for r in self.records})

    def aggregate(self, key) -> dict:
        """Mean STOI/SI-SDR per (system, key(record)); unweighted means."""
        groups: dict[tuple[str, object], list[EvalRecord]] = {}
        for rec in self.records:
            if rec.error is not None:
                continue
            groups.setdefault((rec.system, key(rec)), []).append(rec)
        out = {}
        for (system, k), recs in sorted(groups.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
            stoi_vals = [r.stoi_enhanced if r.stoi_enhanced is not None else r.stoi_noisy for r in recs]
            sdr_vals = [
                r.si_sdr_enhanced if r.si_sdr_enhanced is not None else r.si_sdr_noisy for r in recs
            ]
            out[(system, k)] = {
                "stoi": float(np.mean(stoi_vals)),
                "si_sdr": float(np.mean(sdr_vals)),
                "count": len(recs),
            }
        return out

    def by_snr(self) -> dict:
        return self.aggregate(lambda r: r.snr_db)

    def by_noise_type(self) -> dict:
        return self.aggregate(lambda r: r.noise_type)

    def mean_stoi(self, system: str, snr_db: float | None = None) -> float:
        vals = [
            (r.stoi_enhanced if r.stoi_enhanced is not None else r.stoi_noisy)
            for r in self.records
            if r.system == system
            and r.error is None
            and (snr_db is None or r.snr_db == snr_db)
        ]
        if not vals:
            raise ValueError(f"no records for system {system!r} at snr {snr_db}")
        return float(np.mean(vals))


def evaluate(
    ckpts: list[ModelCheckpoint], index: DatasetIndex, jobs: int = 1
) -> EvalReport:
    """Score the test split: the unprocessed noisy signal plus every
    checkpoint's enhanced output, per mixture."""
    test_mixes = index.split_mixes("test")
    if not test_mixes:
        raise ValueError("dataset has no test mixtures")
    sources = {}
    for ckpt in ckpts:
        sources.setdefault(ckpt.params.channel_set, DataSource(index, ckpt.params.channel_set))
    base_source = sources.setdefault("full", DataSource(index, "full"))

    def score_one(mix) -> list[EvalRecord]:
        clean, noisy = base_source.realize(mix)
        stoi_noisy = stoi(clean, noisy)
        sdr_noisy = si_sdr(clean, noisy)
        recs = [
            EvalRecord(
                utterance_id=mix.clean_id,
                noise_type=mix.noise_id,
                snr_db=mix.snr_db,
                system="Noisy",
                stoi_noisy=stoi_noisy,
                stoi_enhanced=None,
                si_sdr_noisy=sdr_noisy,
                si_sdr_enhanced=None,
            )
        ]
        for ckpt in ckpts:
            src = sources[ckpt.params.channel_set]
            try:
                emg_rec = (
                    src.emg(mix.clean_id)
                    if ckpt.params.variant == VARIANT_MULTIMODAL
                    else None
                )
                enhanced = enhance(ckpt, noisy, emg_rec)
                recs.append(
                    EvalRecord(
                        utterance_id=mix.clean_id,
                        noise_type=mix.noise_id,
                        snr_db=mix.snr_db,
                        system=ckpt.system_name,
                        stoi_noisy=stoi_noisy,
                        stoi_enhanced=stoi(clean, enhanced),
                        si_sdr_noisy=sdr_noisy,
                        si_sdr_enhanced=si_sdr(clean, enhanced),
                    )
                )
            except Exception as exc:  # failure rows are recorded, never skipped
                recs.append(
                    EvalRecord(
                        utterance_id=mix.clean_id,
                        noise_type=mix.noise_id,
                        snr_db=mix.snr_db,
                        system=ckpt.system_name,
                        stoi_noisy=stoi_noisy,
                        stoi_enhanced=None,
                        si_sdr_noisy=sdr_noisy,
                        si_sdr_enhanced=None,
                        error=str(exc),
                    )
                )
        return recs

    report = EvalReport()
    if jobs <= 1:
        for mix in test_mixes:
            report.records.extend(score_one(mix))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for recs in pool.map(score_one, test_mixes):
                report.records.extend(recs)
    return report


def report_to_jsonl(report: EvalReport) -> str:
    lines = []
    for r in report.records:
        lines.append(
            json.dumps(
                {
                    "utterance": r.utterance_id,
                    "noise": r.noise_type,
                    "snr_db": r.snr_db,
                    "system": r.system,
                    "stoi_noisy": r.stoi_noisy,
                    "stoi": r.stoi_enhanced,
                    "si_sdr_noisy": r.si_sdr_noisy,
                    "si_sdr": r.si_sdr_enhanced,
                    "error": r.error,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + "\n"


def _format_table(title: str, rows: dict, key_header: str) -> list[str]:
    systems = sorted({system for system, _ in rows})
    keys = sorted({k for _, k in rows}, key=str)
    lines = [title]
    header = f"{key_header:>12} |" + "".join(f" {s:>12} |" for s in systems)
    lines.append(header)
    lines.append("-" * len(header))
    for k in keys:
        cells = []
        for s in systems:
            cell = rows.get((s, k))
            cells.append(f" {cell['stoi']:>12.4f} |" if cell else " " + " " * 12 + " |")
        lines.append(f"{str(k):>12} |" + "".join(cells))
    return lines


def report_to_table(report: EvalReport) -> str:
    """Aligned plain-text tables: mean STOI by SNR and by noise type, plus
    mean SI-SDR by SNR."""
    lines = _format_table("Mean STOI by SNR (dB)", report.by_snr(), "snr")
    lines.append("")
    lines.extend(_format_table("Mean STOI by noise type", report.by_noise_type(), "noise"))
    lines.append("")
    by_snr = report.by_snr()
    sdr_rows = {k: {"stoi": v["si_sdr"]} for k, v in by_snr.items()}
    lines.extend(_format_table("Mean SI-SDR (dB) by SNR", sdr_rows, "snr"))
    failures = [r for r in report.records if r.error is not None]
    if failures:
        lines.append("")
        lines.append(f"FAILURES: {len(failures)}")
        for r in failures:
            lines.append(f"  {r.system} {r.utterance_id} {r.noise_type} {r.snr_db} dB: {r.error}")
    return "\n".join(lines) + "\n"


def write_report(out_dir, report: EvalReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.jsonl").write_text(report_to_jsonl(report), encoding="utf-8")
    (out / "report.txt").write_text(report_to_table(report), encoding="utf-8")
