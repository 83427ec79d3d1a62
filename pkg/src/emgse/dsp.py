"""Shared DSP primitives: IIR filters, windowing, frame clock, STFT/iSTFT, resampling.

Everything here is a pure function of its inputs; no module-level state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, upfirdn

AUDIO_RATE = 16000
EMG_RATE = 2048
WINDOW_SEC = 0.032
HOP_SEC = 0.008
FFT_SIZE = 512
NUM_BINS = FFT_SIZE // 2 + 1


@dataclass(frozen=True)
class Waveform:
    """Mono sampled signal. Samples are dimensionless, nominal range [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if samples.ndim != 1:
            raise ValueError("waveform must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_sec(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class IIRFilter:
    """Digital IIR filter in transfer-function form, a[0] == 1."""

    b: np.ndarray
    a: np.ndarray
    kind: str
    cutoff_hz: float
    design_fs_hz: float

    def response_at(self, freq_hz: float) -> complex:
        """Evaluate H(z) on the unit circle at the given frequency."""
        w = 2.0 * np.pi * freq_hz / self.design_fs_hz
        z = np.exp(-1j * w * np.arange(len(self.b)))
        return complex(np.dot(self.b, z) / np.dot(self.a, z[: len(self.a)]))

    def poles(self) -> np.ndarray:
        return np.roots(self.a)


def design_butterworth(order: int, cutoff_hz: float, fs_hz: float, kind: str) -> IIRFilter:
    """Design a digital Butterworth filter via the bilinear transform.

    The analog prototype poles are frequency pre-warped so the digital
    magnitude response passes through 1/sqrt(2) exactly at ``cutoff_hz``.

    Args:
        order: filter order, >= 1.
        cutoff_hz: -3 dB frequency, strictly between 0 and fs_hz/2.
        fs_hz: sampling rate the filter will run at.
        kind: "lowpass" or "highpass".
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0.0 < cutoff_hz < fs_hz / 2.0:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({fs_hz / 2} Hz)"
        )
    if kind not in ("lowpass", "highpass"):
        raise ValueError(f"kind must be 'lowpass' or 'highpass', got {kind!r}")

    # Analog Butterworth prototype: poles on the unit circle, left half-plane.
    k = np.arange(1, order + 1)
    theta = np.pi * (2.0 * k - 1.0) / (2.0 * order) + np.pi / 2.0
    proto = np.exp(1j * theta)

    fs2 = 2.0 * fs_hz
    warped = fs2 * np.tan(np.pi * cutoff_hz / fs_hz)

    if kind == "lowpass":
        analog_poles = warped * proto
        analog_zeros = np.array([])  # n zeros at infinity -> z = -1
    else:
        analog_poles = warped / proto
        analog_zeros = np.zeros(order, dtype=complex)  # n zeros at s = 0 -> z = +1

    digital_poles = (fs2 + analog_poles) / (fs2 - analog_poles)
    digital_zeros = (fs2 + analog_zeros) / (fs2 - analog_zeros)
    # Zeros at s = infinity map to z = -1 under the bilinear transform.
    digital_zeros = np.concatenate(
        [digital_zeros, -np.ones(order - len(digital_zeros), dtype=complex)]
    )

    a = np.real(np.poly(digital_poles))
    b = np.real(np.poly(digital_zeros))

    # Set unity gain in the passband: DC for lowpass, Nyquist for highpass.
    ref = 1.0 if kind == "lowpass" else -1.0
    zpow = ref ** np.arange(order + 1)
    gain = np.dot(a, zpow) / np.dot(b, zpow)
    b = b * gain

    return IIRFilter(b=b, a=a, kind=kind, cutoff_hz=cutoff_hz, design_fs_hz=fs_hz)


def filter_apply(filt: IIRFilter, x: np.ndarray) -> np.ndarray:
    """Causal direct-form filtering with zero initial conditions.

    y[n] = sum_k b[k] x[n-k] - sum_k a[k] y[n-k]; output length == input length.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite samples")
    return lfilter(filt.b, filt.a, x)


def blackman_window(n: int) -> np.ndarray:
    """Symmetric Blackman window: 0.42 - 0.5 cos(2pi k/(n-1)) + 0.08 cos(4pi k/(n-1))."""
    if n < 2:
        raise ValueError("window length must be >= 2")
    k = np.arange(n)
    return 0.42 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1)) + 0.08 * np.cos(4.0 * np.pi * k / (n - 1))


@dataclass(frozen=True)
class FrameClock:
    """Shared frame timing for co-recorded signals at different sample rates.

    Frame n starts at sample round(n * hop_sec * fs); the window spans
    round(window_sec * fs) samples. num_frames is computed in the time domain,
    so equal-duration signals at different rates get identical frame counts.
    """

    window_sec: float
    hop_sec: float
    sample_rate_hz: int
    num_frames: int
    num_samples: int

    @property
    def window_len(self) -> int:
        return int(np.floor(self.window_sec * self.sample_rate_hz + 0.5))

    def frame_starts(self) -> np.ndarray:
        n = np.arange(self.num_frames, dtype=np.float64)
        return np.floor(n * self.hop_sec * self.sample_rate_hz + 0.5).astype(np.int64)

    def frames(self, x: np.ndarray) -> np.ndarray:
        """Gather the signal into a (num_frames, window_len) matrix."""
        x = np.asarray(x)
        if len(x) != self.num_samples:
            raise ValueError(f"signal has {len(x)} samples, clock expects {self.num_samples}")
        idx = self.frame_starts()[:, None] + np.arange(self.window_len)[None, :]
        return x[idx]


def make_frame_clock(
    duration_samples: int,
    fs_hz: int,
    window_sec: float = WINDOW_SEC,
    hop_sec: float = HOP_SEC,
) -> FrameClock:
    """Build the shared frame clock for a signal of the given length."""
    duration_sec = duration_samples / fs_hz
    if duration_sec < window_sec:
        raise ValueError(
            f"signal of {duration_sec * 1000:.1f} ms is shorter than one "
            f"{window_sec * 1000:.0f} ms window"
        )
    # 1e-9 guards binary rounding when the quotient is an exact integer.
    num_frames = 1 + int(np.floor((duration_sec - window_sec) / hop_sec + 1e-9))
    return FrameClock(
        window_sec=window_sec,
        hop_sec=hop_sec,
        sample_rate_hz=fs_hz,
        num_frames=num_frames,
        num_samples=duration_samples,
    )


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT frames: (num_frames, fft_size/2 + 1) complex matrix."""

    data: np.ndarray
    frame_clock: FrameClock
    fft_size: int = FFT_SIZE

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != self.fft_size // 2 + 1:
            raise ValueError(
                f"spectrogram must be (frames, {self.fft_size // 2 + 1}), got {self.data.shape}"
            )

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.data)


def stft(x: Waveform) -> ComplexSpectrogram:
    """Blackman-windowed STFT with 512-point FFT, 257 bins kept.

    Requires 16 kHz input so the 32 ms window maps to exactly 512 samples;
    resample explicitly first if needed.
    """
    if x.sample_rate_hz != AUDIO_RATE:
        raise ValueError(f"stft expects {AUDIO_RATE} Hz input, got {x.sample_rate_hz} Hz")
    clock = make_frame_clock(len(x.samples), x.sample_rate_hz)
    window = blackman_window(clock.window_len)
    frames = clock.frames(x.samples) * window[None, :]
    data = np.fft.rfft(frames, n=FFT_SIZE, axis=1)
    return ComplexSpectrogram(data=data, frame_clock=clock, fft_size=FFT_SIZE)


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Weighted overlap-add inverse STFT with window-squared normalization.

    Output has the clock's original sample count. Samples where the summed
    squared window falls below 1e-10 (signal edges) are set to zero.
    """
    clock = spec.frame_clock
    window = blackman_window(clock.window_len)
    frames = np.fft.irfft(spec.data, n=spec.fft_size, axis=1)[:, : clock.window_len]
    frames = frames * window[None, :]

    out = np.zeros(clock.num_samples)
    den = np.zeros(clock.num_samples)
    wsq = window * window
    for start, frame in zip(clock.frame_starts(), frames):
        out[start : start + clock.window_len] += frame
        den[start : start + clock.window_len] += wsq

    good = den >= 1e-10
    out[good] /= den[good]
    out[~good] = 0.0
    return Waveform(samples=out, sample_rate_hz=clock.sample_rate_hz)


def _kaiser_sinc_filter(up: int, down: int, taps_per_phase: int = 64, beta: float = 8.6) -> np.ndarray:
    """Lowpass prototype for polyphase resampling, odd length for integer delay."""
    n_taps = taps_per_phase * up + 1
    cutoff = 1.0 / max(up, down)  # relative to the upsampled Nyquist
    m = np.arange(n_taps) - (n_taps - 1) / 2.0
    h = cutoff * np.sinc(cutoff * m) * np.kaiser(n_taps, beta)
    # Force exact unity DC gain per polyphase branch so constants pass through.
    for phase in range(up):
        branch = h[phase::up]
        h[phase::up] = branch / branch.sum()
    return h


def resample(x: Waveform, to_hz: int) -> Waveform:
    """Band-limited resampling via Kaiser-windowed-sinc polyphase filtering."""
    if to_hz <= 0:
        raise ValueError("target rate must be positive")
    if to_hz == x.sample_rate_hz:
        return Waveform(samples=x.samples.copy(), sample_rate_hz=to_hz)

    g = np.gcd(x.sample_rate_hz, to_hz)
    up, down = to_hz // g, x.sample_rate_hz // g
    # Branch normalization in the prototype already accounts for the up factor.
    h = _kaiser_sinc_filter(up, down)
    half_len = (len(h) - 1) // 2

    n_in = len(x.samples)
    n_out = n_in * up // down + bool(n_in * up % down)
    # Pre-pad the filter so its group delay is an integer number of output
    # samples, then drop exactly that many outputs.
    n_pre_pad = (down - half_len % down) % down
    n_pre_remove = (half_len + n_pre_pad) // down
    n_post_pad = up * (len(h) + n_pre_pad)  # generous tail so trimming never starves
    h = np.concatenate([np.zeros(n_pre_pad), h, np.zeros(n_post_pad)])

    y = upfirdn(h, x.samples, up=up, down=down)
    y = y[n_pre_remove : n_pre_remove + n_out]
    if len(y) < n_out:
        y = np.concatenate([y, np.zeros(n_out - len(y))])
    return Waveform(samples=y, sample_rate_hz=to_hz)
