"""EMG time-domain feature extraction: band split, per-frame TD features,
context stacking, and min-max normalization."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dsp import EMG_RATE, design_butterworth, filter_apply, make_frame_clock
from .normalize import Normalizer

BAND_SPLIT_HZ = 134.0
CONTEXT_FRAMES = 15
TD_FEATURES = 5

CHEEK_PREFIX = "cheek"
CHIN_PREFIX = "chin"


@dataclass(frozen=True)
class EMGRecording:
    """Multichannel surface EMG, channels x samples, at 2048 Hz."""

    channels: np.ndarray
    sample_rate_hz: int
    channel_ids: tuple[str, ...]

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=np.float64)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "channel_ids", tuple(self.channel_ids))
        if channels.ndim != 2:
            raise ValueError("channels must be a (C, T) matrix")
        if len(self.channel_ids) != channels.shape[0]:
            raise ValueError("one channel id per channel required")
        if not np.all(np.isfinite(channels)):
            raise ValueError("EMG contains non-finite samples")

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def num_samples(self) -> int:
        return self.channels.shape[1]

    def cheek_indices(self) -> list[int]:
        return [i for i, cid in enumerate(self.channel_ids) if cid.startswith(CHEEK_PREFIX)]


@dataclass(frozen=True)
class TDFrame:
    low_mean: float
    low_power: float
    high_abs_mean: float
    high_power: float
    high_zcr: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.low_mean, self.low_power, self.high_abs_mean, self.high_power, self.high_zcr]
        )


@dataclass(frozen=True)
class FeatureMatrix:
    """Frames x dims feature matrix with optional per-dimension labels."""

    data: np.ndarray
    dim_labels: tuple[str, ...] | None = None

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@lru_cache(maxsize=8)
def _band_filters(fs_hz: int):
    lo = design_butterworth(3, BAND_SPLIT_HZ, fs_hz, "lowpass")
    hi = design_butterworth(3, BAND_SPLIT_HZ, fs_hz, "highpass")
    return lo, hi


def split_bands(x: np.ndarray, fs_hz: int = EMG_RATE) -> tuple[np.ndarray, np.ndarray]:
    """Split one EMG channel into low/high bands at 134 Hz (causal, zero state)."""
    lo, hi = _band_filters(fs_hz)
    return filter_apply(lo, x), filter_apply(hi, x)


def zcr(frame: np.ndarray) -> float:
    """Fraction of adjacent sample pairs with a strict sign flip."""
    frame = np.asarray(frame, dtype=np.float64)
    n = len(frame)
    if n < 2:
        raise ValueError("zcr needs at least 2 samples")
    return float(np.count_nonzero(frame[:-1] * frame[1:] < 0) / (n - 1))


def td_features(low_frame: np.ndarray, high_frame: np.ndarray) -> TDFrame:
    """Five time-domain descriptors of one frame's low/high band pair."""
    low_frame = np.asarray(low_frame, dtype=np.float64)
    high_frame = np.asarray(high_frame, dtype=np.float64)
    if low_frame.shape != high_frame.shape:
        raise ValueError("low/high frames must have equal length")
    return TDFrame(
        low_mean=float(np.mean(low_frame)),
        low_power=float(np.mean(low_frame**2)),
        high_abs_mean=float(np.mean(np.abs(high_frame))),
        high_power=float(np.mean(high_frame**2)),
        high_zcr=zcr(high_frame),
    )


def _td_feature_frames(low_frames: np.ndarray, high_frames: np.ndarray) -> np.ndarray:
    """Vectorized td_features over (T, window) frame matrices -> (T, 5)."""
    n = low_frames.shape[1]
    flips = np.count_nonzero(high_frames[:, :-1] * high_frames[:, 1:] < 0, axis=1)
    return np.stack(
        [
            np.mean(low_frames, axis=1),
            np.mean(low_frames**2, axis=1),
            np.mean(np.abs(high_frames), axis=1),
            np.mean(high_frames**2, axis=1),
            flips / (n - 1),
        ],
        axis=1,
    )


def stack_context(per_frame: np.ndarray, context: int = CONTEXT_FRAMES) -> np.ndarray:
    """Stack +-context frames around each frame, zero-padded at the edges.

    Input is (T, C*5) with channel-major feature blocks. Output is
    (T, C * (2*context+1) * 5), ordered channel-major, then frame offset
    (-context..+context), then the five TD features.
    """
    t, dim = per_frame.shape
    if dim % TD_FEATURES != 0:
        raise ValueError("per-frame dim must be a multiple of 5")
    c = dim // TD_FEATURES
    width = 2 * context + 1

    padded = np.zeros((t + 2 * context, c, TD_FEATURES))
    padded[context : context + t] = per_frame.reshape(t, c, TD_FEATURES)
    out = np.empty((t, c, width, TD_FEATURES))
    for j in range(width):
        out[:, :, j, :] = padded[j : j + t]
    return out.reshape(t, c * width * TD_FEATURES)


def select_channels(rec: EMGRecording, channel_set: str) -> list[int]:
    if channel_set == "full":
        return list(range(rec.num_channels))
    if channel_set == "cheek":
        idx = rec.cheek_indices()
        if not idx:
            raise ValueError("recording has no cheek-labeled channels")
        return idx
    raise ValueError(f"unknown channel_set {channel_set!r}")


def per_frame_features(rec: EMGRecording, channel_set: str = "full") -> np.ndarray:
    """Per-frame TD features before context stacking: (T, C*5), channel-major.

    Frame timing follows the shared clock, so a co-recorded waveform of equal
    duration yields the same frame count.
    """
    if rec.sample_rate_hz != EMG_RATE:
        raise ValueError(f"expected {EMG_RATE} Hz EMG, got {rec.sample_rate_hz} Hz")
    idx = select_channels(rec, channel_set)
    clock = make_frame_clock(rec.num_samples, rec.sample_rate_hz)
    per_channel = []
    for i in idx:
        x_low, x_high = split_bands(rec.channels[i], rec.sample_rate_hz)
        per_channel.append(_td_feature_frames(clock.frames(x_low), clock.frames(x_high)))
    # (C, T, 5) -> (T, C*5), channel-major blocks of five.
    return np.stack(per_channel, axis=0).transpose(1, 0, 2).reshape(clock.num_frames, -1)


def extract_emg_features(
    rec: EMGRecording,
    channel_set: str = "full",
    normalizer: Normalizer | None = None,
    context: int = CONTEXT_FRAMES,
) -> FeatureMatrix:
    """Full EMG feature pipeline: band split, framing, TD features, context stacking."""
    data = stack_context(per_frame_features(rec, channel_set), context=context)
    if normalizer is not None:
        data = normalizer.apply(data)
    idx = select_channels(rec, channel_set)
    labels = tuple(
        f"{rec.channel_ids[i]}/off{off:+d}/{feat}"
        for i in idx
        for off in range(-context, context + 1)
        for feat in ("low_mean", "low_power", "high_abs_mean", "high_power", "high_zcr")
    )
    return FeatureMatrix(data=data, dim_labels=labels)
