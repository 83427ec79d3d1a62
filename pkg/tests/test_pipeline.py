"""Integration: importer, loader, tiny-scale training, checkpointing,
enhancement, and latent export."""
import logging

import numpy as np
import pytest

from emgse import fileio
from emgse.config import ImportConfig
from emgse.corpus import import_corpus
from emgse.dataset import MixProtocol, build_dataset
from emgse.dsp import Waveform
from emgse.loader import DataSource, fit_feature_normalizers
from emgse.model import (
    TrainConfig,
    enhance,
    export_latents,
    load_checkpoint,
    save_checkpoint,
    train,
)
from emgse.synth import SynthConfig, synth_corpus

logging.getLogger("emgse").setLevel(logging.WARNING)

TINY_CORPUS = SynthConfig(
    num_speakers=1,
    utterances_per_speaker=5,
    split_counts=(3, 1, 1),
    duration_range_sec=(0.8, 1.0),
    num_train_noises=2,
    num_test_noises=1,
)
TINY_PROTOCOL = MixProtocol(train_snrs_db=(0.0,), test_snrs_db=(-5.0,), noises_per_utterance=1)


@pytest.fixture(scope="module")
def tiny_index(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    rows, train_noises, test_noises = synth_corpus(TINY_CORPUS, 77, out)
    return build_dataset(rows, train_noises, test_noises, TINY_PROTOCOL, 77)


@pytest.fixture(scope="module")
def tiny_ckpt(tiny_index):
    cfg = TrainConfig(seed=3, max_epochs=2, patience_epochs=2, learning_rate=1e-3)
    return train(cfg, tiny_index)


class TestImportCorpus:
    def make_raw(self, tmp_path, n_utts=3, raw_channels=40, drop_emg_for=()):
        src = tmp_path / "raw"
        (src / "audio").mkdir(parents=True)
        (src / "emg").mkdir()
        rng = np.random.default_rng(0)
        for i in range(n_utts):
            utt = f"spk1_{i:03d}"
            fileio.wav_write(src / "audio" / f"{utt}.wav", rng.uniform(-0.1, 0.1, 8000), 16000)
            if utt not in drop_emg_for:
                np.save(src / "emg" / f"{utt}.npy", rng.standard_normal((raw_channels, 2048)))
        return src

    def test_40_to_35_channels(self, tmp_path):
        src = self.make_raw(tmp_path)
        rows = import_corpus(src, tmp_path / "out", ImportConfig(), split_counts=(2, 1, 0))
        assert len(rows) == 3
        channels, rate, labels = fileio.emgc_read(rows[0].emg_path)
        assert channels.shape[0] == 35
        assert sum(1 for l in labels if l.startswith("cheek")) == 28
        assert sum(1 for l in labels if l.startswith("chin")) == 7

    def test_idempotent(self, tmp_path):
        src = self.make_raw(tmp_path)
        out = tmp_path / "out"
        import_corpus(src, out, ImportConfig(), split_counts=(2, 1, 0))
        first = {p.name: p.read_bytes() for p in (out / "emg").iterdir()}
        first["manifest"] = (out / "manifest.tsv").read_bytes()
        import_corpus(src, out, ImportConfig(), split_counts=(2, 1, 0))
        second = {p.name: p.read_bytes() for p in (out / "emg").iterdir()}
        second["manifest"] = (out / "manifest.tsv").read_bytes()
        assert first == second

    def test_missing_emg_skipped_with_warning(self, tmp_path, caplog):
        src = self.make_raw(tmp_path, drop_emg_for=("spk1_001",))
        with caplog.at_level(logging.WARNING):
            rows = import_corpus(src, tmp_path / "out", ImportConfig(), split_counts=(2, 1, 0))
        assert len(rows) == 2
        assert all(r.utt_id != "spk1_001" for r in rows)
        assert any("spk1_001" in rec.message for rec in caplog.records)

    def test_wrong_channel_count_rejected(self, tmp_path):
        src = self.make_raw(tmp_path, raw_channels=38)
        with pytest.raises(ValueError, match="expected"):
            import_corpus(src, tmp_path / "out", ImportConfig(), split_counts=(2, 1, 0))

    def test_bad_exclusion_config_rejected(self, tmp_path):
        src = self.make_raw(tmp_path)
        cfg = ImportConfig(exclude_channels=(1, 2, 3))  # leaves 37, not 35
        with pytest.raises(ValueError, match="pipeline expects 35"):
            import_corpus(src, tmp_path / "out", cfg, split_counts=(2, 1, 0))


class TestDataSource:
    def test_realize_matches_target_snr(self, tiny_index):
        src = DataSource(tiny_index)
        mix = tiny_index.split_mixes("test")[0]
        clean, noisy = src.realize(mix)
        resid = noisy.samples - clean.samples
        snr = 10 * np.log10(np.mean(clean.samples**2) / np.mean(resid**2))
        assert snr == pytest.approx(mix.snr_db, abs=1e-6)

    def test_realize_deterministic(self, tiny_index):
        mix = tiny_index.split_mixes("train")[0]
        a = DataSource(tiny_index).realize(mix)[1]
        b = DataSource(tiny_index).realize(mix)[1]
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_network_inputs_shapes(self, tiny_index):
        src = DataSource(tiny_index)
        emg_norm, audio_norm = fit_feature_normalizers(src, tiny_index.split_mixes("train"))
        got = src.network_inputs(tiny_index.split_mixes("train")[0], emg_norm, audio_norm, True)
        t = got["target"].shape[0]
        assert got["x_emg"].shape == (t, 5425)
        assert got["noisy_feats"].log_mag_norm.shape == (t, 257)
        assert 0.0 <= got["x_emg"].min() and got["x_emg"].max() <= 1.0


class TestTrainingIntegration:
    def test_checkpoint_has_metadata(self, tiny_ckpt):
        assert tiny_ckpt.params.variant == "EMGSE"
        assert tiny_ckpt.epoch >= 1
        assert np.isfinite(tiny_ckpt.best_val_loss)
        assert tiny_ckpt.master_seed == 3

    def test_determinism_same_seed(self, tiny_index):
        cfg = TrainConfig(seed=11, max_epochs=1, patience_epochs=1, learning_rate=1e-3)
        a = train(cfg, tiny_index)
        b = train(cfg, tiny_index)
        for (name_a, arr_a), (name_b, arr_b) in zip(a.params.named_params(), b.params.named_params()):
            assert name_a == name_b
            np.testing.assert_array_equal(arr_a, arr_b, err_msg=name_a)

    def test_checkpoint_roundtrip_byte_identical(self, tiny_ckpt, tmp_path):
        p1 = tmp_path / "a.emgse"
        p2 = tmp_path / "b.emgse"
        save_checkpoint(p1, tiny_ckpt)
        loaded = load_checkpoint(p1)
        save_checkpoint(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        assert loaded.best_val_loss == tiny_ckpt.best_val_loss
        assert loaded.epoch == tiny_ckpt.epoch

    def test_empty_split_rejected(self, tiny_index):
        import copy

        broken = copy.deepcopy(tiny_index)
        broken.mixes = [m for m in broken.mixes if m.split != "val"]
        with pytest.raises(ValueError, match="validation"):
            train(TrainConfig(seed=0, max_epochs=1), broken)


class TestEnhance:
    def test_output_length_and_determinism(self, tiny_ckpt, tiny_index):
        src = DataSource(tiny_index)
        mix = tiny_index.split_mixes("test")[0]
        _, noisy = src.realize(mix)
        emg_rec = src.emg(mix.clean_id)
        out1 = enhance(tiny_ckpt, noisy, emg_rec)
        out2 = enhance(tiny_ckpt, noisy, emg_rec)
        assert len(out1.samples) == len(noisy.samples)
        np.testing.assert_array_equal(out1.samples, out2.samples)

    def test_missing_emg_rejected(self, tiny_ckpt, tiny_index):
        src = DataSource(tiny_index)
        _, noisy = src.realize(tiny_index.split_mixes("test")[0])
        with pytest.raises(ValueError, match="EMG"):
            enhance(tiny_ckpt, noisy)


class TestExportLatents:
    def test_shapes_and_identity(self, tiny_ckpt, tiny_index):
        src = DataSource(tiny_index)
        mix = tiny_index.split_mixes("test")[0]
        clean, noisy = src.realize(mix)
        out = export_latents(tiny_ckpt, clean, noisy, src.emg(mix.clean_id))
        t = out["latents"]["clean_only"].shape[0]
        for name in ("clean_only", "noisy_only", "noisy_plus_emg"):
            assert out["latents"][name].shape == (t, 200)
        same = np.abs(out["latents"]["clean_only"] - out["latents"]["clean_only"])
        np.testing.assert_array_equal(same, 0.0)
        assert out["diffs"]["clean_only_vs_noisy_only"].shape == (t, 200)
