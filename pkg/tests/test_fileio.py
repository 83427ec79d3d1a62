import numpy as np
import pytest

from emgse import fileio
from emgse.config import PipelineConfig, load_config, parse_config
from emgse.dataset import ManifestRow, MixProtocol, build_dataset
from emgse.normalize import Normalizer


class TestWav:
    def test_roundtrip_exact_for_quantized(self, tmp_path):
        rng = np.random.default_rng(0)
        x = np.floor(rng.uniform(-1, 1, 4000) * 32768) / 32768.0
        path = tmp_path / "x.wav"
        fileio.wav_write(path, x, 16000)
        back, rate = fileio.wav_read(path)
        assert rate == 16000
        np.testing.assert_array_equal(back, x)

    def test_write_clamps(self, tmp_path):
        path = tmp_path / "c.wav"
        fileio.wav_write(path, np.array([1.5, -2.0, 0.0]), 16000)
        back, _ = fileio.wav_read(path)
        np.testing.assert_allclose(back, [32767 / 32768, -1.0, 0.0])

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "t.wav"
        fileio.wav_write(path, np.zeros(1000), 16000)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 500])
        with pytest.raises(fileio.FileFormatError):
            fileio.wav_read(path)

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"not a riff file at all")
        with pytest.raises(fileio.FileFormatError):
            fileio.wav_read(path)


class TestEmgc:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        channels = rng.standard_normal((35, 2048)).astype(np.float32).astype(np.float64)
        labels = [f"cheek{i:02d}" for i in range(28)] + [f"chin{i:02d}" for i in range(7)]
        path = tmp_path / "x.emgc"
        fileio.emgc_write(path, channels, 2048, labels)
        back, rate, back_labels = fileio.emgc_read(path)
        assert rate == 2048
        assert back_labels == labels
        np.testing.assert_array_equal(back, channels)

    def test_payload_size_mismatch_rejected(self, tmp_path):
        path = tmp_path / "short.emgc"
        fileio.emgc_write(path, np.zeros((2, 100)), 2048, ["a", "b"])
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(fileio.FileFormatError):
            fileio.emgc_read(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.emgc"
        path.write_bytes(b"XXXX" + b"\0" * 100)
        with pytest.raises(fileio.FileFormatError):
            fileio.emgc_read(path)

    def test_write_is_canonical(self, tmp_path):
        channels = np.ones((3, 50))
        a, b = tmp_path / "a.emgc", tmp_path / "b.emgc"
        fileio.emgc_write(a, channels, 2048, ["x", "y", "z"])
        fileio.emgc_write(b, channels, 2048, ["x", "y", "z"])
        assert a.read_bytes() == b.read_bytes()


class TestNormFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        lo = rng.standard_normal(40)
        norms = {"emg": Normalizer(lo=lo, hi=lo + 1.0), "audio": Normalizer(lo=np.zeros(5), hi=np.ones(5))}
        path = tmp_path / "n.emgn"
        fileio.norm_write(path, norms)
        back = fileio.norm_read(path)
        assert set(back) == {"emg", "audio"}
        np.testing.assert_array_equal(back["emg"].lo, lo)
        np.testing.assert_array_equal(back["audio"].hi, np.ones(5))


class TestManifestAndIndex:
    def rows(self, base):
        return [
            ManifestRow("u0", "train", f"{base}/audio/u0.wav", f"{base}/emg/u0.emgc"),
            ManifestRow("u1", "val", f"{base}/audio/u1.wav", f"{base}/emg/u1.emgc"),
            ManifestRow("u2", "test", f"{base}/audio/u2.wav", f"{base}/emg/u2.emgc"),
        ]

    def test_manifest_roundtrip_resolves_paths(self, tmp_path):
        rows = self.rows(tmp_path)
        path = tmp_path / "manifest.tsv"
        fileio.manifest_write(path, rows)
        back = fileio.manifest_read(path)
        assert back == rows

    def test_manifest_is_relative_on_disk(self, tmp_path):
        fileio.manifest_write(tmp_path / "manifest.tsv", self.rows(tmp_path))
        text = (tmp_path / "manifest.tsv").read_text()
        assert str(tmp_path) not in text

    def test_manifest_bad_header_rejected(self, tmp_path):
        (tmp_path / "m.tsv").write_text("wrong\n")
        with pytest.raises(fileio.FileFormatError):
            fileio.manifest_read(tmp_path / "m.tsv")

    def test_index_roundtrip(self, tmp_path):
        rows = self.rows(tmp_path)
        train_bank = {"n0": str(tmp_path / "noise/n0.wav")}
        test_bank = {"t0": str(tmp_path / "noise/t0.wav")}
        proto = MixProtocol(train_snrs_db=(-10.0, 0.0), test_snrs_db=(-11.0,), noises_per_utterance=1)
        index = build_dataset(rows, train_bank, test_bank, proto, 3)
        path = tmp_path / "dataset.jsonl"
        fileio.index_write(path, index)
        back = fileio.index_read(path)
        assert back.mixes == index.mixes
        assert back.audio_paths == index.audio_paths
        assert back.noise_paths == index.noise_paths
        assert back.split_counts == index.split_counts

    def test_index_write_deterministic(self, tmp_path):
        rows = self.rows(tmp_path)
        proto = MixProtocol(noises_per_utterance=2)
        bank = {f"n{i}": str(tmp_path / f"n{i}.wav") for i in range(5)}
        test_bank = {"t0": str(tmp_path / "t0.wav")}
        a = build_dataset(rows, bank, test_bank, proto, 9)
        b = build_dataset(rows, bank, test_bank, proto, 9)
        fileio.index_write(tmp_path / "a.jsonl", a)
        fileio.index_write(tmp_path / "b.jsonl", b)
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.dataset.train_snrs_db == (-10.0, -5.0, 0.0, 5.0, 10.0)
        assert cfg.dataset.test_snrs_db == (-11.0, -4.0, -1.0, 4.0)
        assert cfg.corpus.split_counts == (28, 4, 8)
        assert cfg.train.patience_epochs == 15
        assert cfg.importer.raw_channels == 40
        assert len(cfg.importer.exclude_channels) == 5

    def test_load_and_override(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(
            """
[dataset]
train_snrs_db = [-10.0, 0.0]
noises_per_utterance = 2

[train]
learning_rate = 3e-4
variant = "SE_A"
"""
        )
        cfg = load_config(path)
        assert cfg.dataset.train_snrs_db == (-10.0, 0.0)
        assert cfg.dataset.noises_per_utterance == 2
        assert cfg.train.learning_rate == 3e-4
        assert cfg.train.variant == "SE_A"
        # untouched sections keep defaults
        assert cfg.train.patience_epochs == 15

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match=r"unknown key \[train\].learnig_rate"):
            parse_config({"train": {"learnig_rate": 1e-3}})

    def test_unknown_section_rejected(self):
        with pytest.raises(ValueError, match=r"unknown config section"):
            parse_config({"trainer": {}})

    def test_unsupported_dsp_rejected(self):
        with pytest.raises(ValueError, match="unsupported dsp"):
            parse_config({"dsp": {"fft_size": 1024}})

    def test_toml_syntax_error(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[train\nlearning_rate = 1")
        with pytest.raises(ValueError, match="config parse error"):
            load_config(path)
