"""Command-line surface tying the pipeline together.

Subcommands: synth, import, build-dataset, fit-norm, train, enhance,
evaluate, export-latents. Machine-readable output goes to files or stdout;
logging goes to stderr. Exit codes: 0 success, 1 runtime error, 2 usage.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import FORMAT_VERSIONS, __version__, fileio, metrics
from .config import PipelineConfig, load_config
from .corpus import import_corpus
from .dataset import build_dataset
from .dsp import AUDIO_RATE, Waveform
from .emg import EMGRecording
from .loader import DataSource, fit_feature_normalizers
from .model import TrainConfig, enhance, export_latents, load_checkpoint, save_checkpoint, train
from .model.network import VARIANT_MULTIMODAL
from .synth import synth_corpus

log = logging.getLogger("emgse")


def _load_waveform(path) -> Waveform:
    samples, rate = fileio.wav_read(path)
    return Waveform(samples=samples, sample_rate_hz=rate)


def _load_emg(path) -> EMGRecording:
    channels, rate, labels = fileio.emgc_read(path)
    return EMGRecording(channels=channels, sample_rate_hz=rate, channel_ids=labels)


def _noise_bank(dir_path) -> dict[str, str]:
    bank = {p.stem: str(p) for p in sorted(Path(dir_path).glob("*.wav"))}
    if not bank:
        raise ValueError(f"no wav files in noise bank {dir_path}")
    return bank


def _config_from_args(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig()


def _train_config(cfg: PipelineConfig, args) -> TrainConfig:
    tc = cfg.train
    if getattr(args, "seed", None) is not None:
        tc.seed = args.seed
    if getattr(args, "channels", None):
        tc.channel_set = args.channels
    if getattr(args, "variant", None):
        tc.variant = args.variant
    return tc


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    seed = args.seed if args.seed is not None else 0
    rows, train_noises, test_noises = synth_corpus(cfg.corpus, seed, args.out)
    log.info(
        "synthesized %d utterances, %d train noises, %d test noises into %s",
        len(rows),
        len(train_noises),
        len(test_noises),
        args.out,
    )
    return 0


def cmd_import(args) -> int:
    cfg = _config_from_args(args)
    counts = cfg.corpus.split_counts
    rows = import_corpus(args.src, args.out, cfg.importer, split_counts=counts)
    log.info("imported %d utterances into %s", len(rows), args.out)
    return 0


def cmd_build_dataset(args) -> int:
    cfg = _config_from_args(args)
    rows = fileio.manifest_read(args.manifest)
    train_bank = _noise_bank(args.noise_train)
    test_bank = _noise_bank(args.noise_test)
    seed = args.seed if args.seed is not None else 0
    index = build_dataset(rows, train_bank, test_bank, cfg.dataset, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.index_write(out / "dataset.jsonl", index)
    log.info(
        "dataset index: %d mixes (%s) -> %s",
        len(index.mixes),
        ", ".join(f"{s}={index.split_counts.get(s, 0)} utts" for s in ("train", "val", "test")),
        out / "dataset.jsonl",
    )
    return 0


def cmd_fit_norm(args) -> int:
    cfg = _config_from_args(args)
    index = fileio.index_read(args.index)
    channel_set = args.channels or cfg.train.channel_set
    source = DataSource(index, channel_set=channel_set)
    emg_norm, audio_norm = fit_feature_normalizers(source, index.split_mixes("train"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"normalizers_{channel_set}.emgn"
    fileio.norm_write(path, {"emg": emg_norm, "audio": audio_norm})
    log.info("fitted normalizers (emg dim %d, audio dim %d) -> %s", emg_norm.dim, audio_norm.dim, path)
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    index = fileio.index_read(args.index)
    tc = _train_config(cfg, args)
    normalizers = None
    if args.norms:
        loaded = fileio.norm_read(args.norms)
        normalizers = (loaded["emg"], loaded["audio"])
    ckpt = train(tc, index, normalizers=normalizers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "checkpoint.emgse"
    save_checkpoint(path, ckpt)
    log.info(
        "trained %s (best val L1 %.6f at epoch %d) -> %s",
        ckpt.system_name,
        ckpt.best_val_loss,
        ckpt.epoch,
        path,
    )
    return 0


def cmd_enhance(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    noisy = _load_waveform(args.input)
    if noisy.sample_rate_hz != AUDIO_RATE:
        raise ValueError(f"input must be {AUDIO_RATE} Hz, got {noisy.sample_rate_hz}")
    emg_rec = None
    if ckpt.params.variant == VARIANT_MULTIMODAL:
        if not args.emg:
            raise ValueError(
                "checkpoint is multimodal: pass --emg with the co-recorded EMG container"
            )
        emg_rec = _load_emg(args.emg)
    elif args.emg:
        raise ValueError("audio-only checkpoint does not accept --emg")
    enhanced = enhance(ckpt, noisy, emg_rec)
    fileio.wav_write(args.out, enhanced.samples, AUDIO_RATE)
    log.info("enhanced %s -> %s", args.input, args.out)
    return 0


def cmd_evaluate(args) -> int:
    index = fileio.index_read(args.index)
    ckpts = [load_checkpoint(p) for p in args.ckpt or []]
    report = metrics.evaluate(ckpts, index, jobs=args.jobs)
    metrics.write_report(args.out, report)
    sys.stdout.write(metrics.report_to_table(report))
    return 0


def cmd_export_latents(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    clean = _load_waveform(args.clean)
    noisy = _load_waveform(args.noisy)
    emg_rec = _load_emg(args.emg)
    result = export_latents(ckpt, clean, noisy, emg_rec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, latent in result["latents"].items():
        np.save(out / f"latent_{name}.npy", latent)
    for name, diff in result["diffs"].items():
        np.save(out / f"diff_{name}.npy", diff)
    log.info("exported %d latent matrices to %s", len(result["latents"]), out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgse", description="EMG-assisted multimodal speech enhancement pipeline"
    )
    versions = ", ".join(f"{k}=v{v}" for k, v in sorted(FORMAT_VERSIONS.items()))
    parser.add_argument(
        "--version", action="version", version=f"emgse {__version__} (formats: {versions})"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="pipeline config TOML")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", required=out_required, help="output path")

    p = sub.add_parser("synth", help="generate a synthetic corpus plus noise banks")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import", help="import a raw corpus into EMGC containers")
    common(p)
    p.add_argument("--src", required=True, help="source corpus directory")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("build-dataset", help="build the seeded mixture index")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--noise-train", required=True, help="train noise bank directory")
    p.add_argument("--noise-test", required=True, help="test noise bank directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("fit-norm", help="fit feature normalizers on the train split")
    common(p)
    p.add_argument("--index", required=True, help="dataset index file")
    p.add_argument("--channels", choices=["full", "cheek"])
    p.set_defaults(func=cmd_fit_norm)

    p = sub.add_parser("train", help="train an enhancement model")
    common(p)
    p.add_argument("--index", required=True, help="dataset index file")
    p.add_argument("--channels", choices=["full", "cheek"])
    p.add_argument("--variant", choices=["EMGSE", "SE_A"])
    p.add_argument("--norms", help="precomputed normalizer file from fit-norm")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance one noisy utterance")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True, help="noisy wav")
    p.add_argument("--emg", help="co-recorded EMGC container")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score checkpoints on the test split")
    common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--ckpt", action="append", help="checkpoint file (repeatable)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-latents", help="export fusion latents for analysis")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--clean", required=True, help="clean wav")
    p.add_argument("--noisy", required=True, help="noisy wav")
    p.add_argument("--emg", required=True, help="EMGC container")
    p.set_defaults(func=cmd_export_latents)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError, fileio.FileFormatError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
