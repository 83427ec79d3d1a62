"""Pipeline configuration: a sectioned TOML file with strict key validation.

Every tunable has a default; unknown sections or keys are rejected so typos
fail loudly instead of silently running with defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dataset import MixProtocol
from .model.training import TrainConfig
from .synth import SynthConfig


@dataclass
class DspConfig:
    window_sec: float = 0.032
    hop_sec: float = 0.008
    fft_size: int = 512

    def __post_init__(self):
        # The 257-bin architecture pins the analysis configuration; the keys
        # exist so a config file states them explicitly, but other values are
        # not supported by this implementation.
        if (self.window_sec, self.hop_sec, self.fft_size) != (0.032, 0.008, 512):
            raise ValueError(
                "unsupported dsp configuration: this pipeline requires "
                "window_sec=0.032, hop_sec=0.008, fft_size=512"
            )


@dataclass
class FeatureConfig:
    context_frames: int = 15

    def __post_init__(self):
        if self.context_frames < 0:
            raise ValueError("context_frames must be >= 0")


@dataclass
class ImportConfig:
    raw_channels: int = 40
    exclude_channels: tuple[int, ...] = (7, 15, 23, 31, 39)
    cheek_channels_end: int = 32  # raw indices below this belong to the cheek array

    def __post_init__(self):
        self.exclude_channels = tuple(int(c) for c in self.exclude_channels)
        if any(not 0 <= c < self.raw_channels for c in self.exclude_channels):
            raise ValueError("exclude_channels indices out of range")
        if len(set(self.exclude_channels)) != len(self.exclude_channels):
            raise ValueError("exclude_channels has duplicates")


@dataclass
class PathsConfig:
    corpus_dir: str = ""
    noise_train_dir: str = ""
    noise_test_dir: str = ""


@dataclass
class PipelineConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    corpus: SynthConfig = field(default_factory=SynthConfig)
    importer: ImportConfig = field(default_factory=ImportConfig)
    dataset: MixProtocol = field(default_factory=MixProtocol)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_SECTION_TYPES = {
    "dsp": DspConfig,
    "features": FeatureConfig,
    "corpus": SynthConfig,
    "import": ImportConfig,
    "dataset": MixProtocol,
    "train": TrainConfig,
    "paths": PathsConfig,
}
_SECTION_ATTR = {name: ("importer" if name == "import" else name) for name in _SECTION_TYPES}

# TOML has no tuple type; these keys arrive as lists and are stored as tuples.
_TUPLE_KEYS = {"split_counts", "duration_range_sec", "exclude_channels", "train_snrs_db", "test_snrs_db"}


def _build_section(name: str, cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown key [{name}].{key}")
        if key in _TUPLE_KEYS:
            if not isinstance(value, list):
                raise ValueError(f"[{name}].{key} must be a list")
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def parse_config(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    for section, content in data.items():
        if section not in _SECTION_TYPES:
            raise ValueError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ValueError(f"config section [{section}] must be a table")
        setattr(cfg, _SECTION_ATTR[section], _build_section(section, _SECTION_TYPES[section], content))
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"{path}: config parse error: {exc}") from exc
    return parse_config(data)
