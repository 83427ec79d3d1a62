import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emgse import dsp


def unit_circle_gain(b, a, freq_hz, fs_hz):
    # Independent oracle: evaluate H(z) = B(z)/A(z) at z = e^{j w} with plain Python.
    w = 2.0 * math.pi * freq_hz / fs_hz
    num = sum(bk * complex(math.cos(-w * k), math.sin(-w * k)) for k, bk in enumerate(b))
    den = sum(ak * complex(math.cos(-w * k), math.sin(-w * k)) for k, ak in enumerate(a))
    return abs(num / den)


class TestButterworth:
    def test_lowpass_dc_gain(self):
        f = dsp.design_butterworth(3, 134, 2048, "lowpass")
        assert sum(f.b) / sum(f.a) == pytest.approx(1.0, abs=1e-9)

    def test_highpass_dc_gain(self):
        f = dsp.design_butterworth(3, 134, 2048, "highpass")
        assert sum(f.b) / sum(f.a) == pytest.approx(0.0, abs=1e-9)

    def test_cutoff_is_3db_point(self):
        f = dsp.design_butterworth(3, 134, 2048, "lowpass")
        assert unit_circle_gain(f.b, f.a, 134, 2048) == pytest.approx(1 / math.sqrt(2), abs=1e-6)

    def test_gain_at_268hz_matches_measured_sine_gain(self):
        f = dsp.design_butterworth(3, 134, 2048, "lowpass")
        oracle = unit_circle_gain(f.b, f.a, 268, 2048)
        # Closed form for a bilinear-transformed Butterworth: the magnitude at a
        # digital frequency equals the analog response at its pre-warped image.
        ratio = math.tan(math.pi * 268 / 2048) / math.tan(math.pi * 134 / 2048)
        assert oracle == pytest.approx(1 / math.sqrt(1 + ratio**6), rel=1e-9)
        # Dual route: steady-state amplitude of a filtered 268 Hz sine.
        t = np.arange(8192) / 2048.0
        y = dsp.filter_apply(f, np.sin(2 * np.pi * 268 * t))
        measured = np.sqrt(2 * np.mean(y[4096:] ** 2))
        assert measured == pytest.approx(oracle, rel=1e-3)

    def test_coefficient_lengths(self):
        f = dsp.design_butterworth(3, 134, 2048, "lowpass")
        assert len(f.b) == 4 and len(f.a) == 4
        assert f.a[0] == pytest.approx(1.0)

    def test_stability_all_designs(self):
        for kind in ("lowpass", "highpass"):
            for cutoff in (10.0, 134.0, 500.0, 1000.0):
                f = dsp.design_butterworth(3, cutoff, 2048, kind)
                assert np.all(np.abs(f.poles()) < 1.0)

    def test_cutoff_at_nyquist_rejected(self):
        with pytest.raises(ValueError):
            dsp.design_butterworth(3, 1024, 2048, "lowpass")
        with pytest.raises(ValueError):
            dsp.design_butterworth(3, 0, 2048, "lowpass")
        with pytest.raises(ValueError):
            dsp.design_butterworth(0, 134, 2048, "lowpass")


class TestFilterApply:
    def test_lowpass_constant_converges_to_input(self):
        f = dsp.design_butterworth(3, 134, 2048, "lowpass")
        y = dsp.filter_apply(f, np.full(4096, 0.5))
        assert abs(y[-1] - 0.5) < 1e-6

    def test_highpass_constant_converges_to_zero(self):
        f = dsp.design_butterworth(3, 134, 2048, "highpass")
        y = dsp.filter_apply(f, np.full(4096, 0.5))
        assert abs(y[-1]) < 1e-6

    def test_impulse_response_matches_hand_recursion(self):
        f = dsp.design_butterworth(3, 134, 2048, "lowpass")
        x = np.zeros(8)
        x[0] = 1.0
        y = dsp.filter_apply(f, x)
        # Oracle: unroll y[n] = sum b[k] x[n-k] - sum a[k] y[n-k] by hand.
        ref = [0.0] * 8
        for n in range(8):
            acc = 0.0
            for k in range(len(f.b)):
                if n - k >= 0:
                    acc += f.b[k] * x[n - k]
            for k in range(1, len(f.a)):
                if n - k >= 0:
                    acc -= f.a[k] * ref[n - k]
            ref[n] = acc
        np.testing.assert_allclose(y, ref, rtol=0, atol=1e-15)

    def test_output_length_and_nonfinite_rejection(self):
        f = dsp.design_butterworth(3, 134, 2048, "lowpass")
        assert len(dsp.filter_apply(f, np.zeros(100))) == 100
        with pytest.raises(ValueError):
            dsp.filter_apply(f, np.array([1.0, np.nan]))


class TestBlackmanWindow:
    def test_endpoints_near_zero_n512(self):
        w = dsp.blackman_window(512)
        assert abs(w[0]) < 1e-12
        assert abs(w[-1]) < 1e-12
        assert w[255] == pytest.approx(w[256], rel=1e-3)
        assert w[255] > 0.99

    def test_n3_is_0_1_0(self):
        np.testing.assert_allclose(dsp.blackman_window(3), [0.0, 1.0, 0.0], atol=1e-12)

    def test_sum_matches_direct_summation(self):
        w = dsp.blackman_window(512)
        # Oracle: sum the closed form term by term with math.cos.
        total = 0.0
        for k in range(512):
            total += (
                0.42
                - 0.5 * math.cos(2 * math.pi * k / 511)
                + 0.08 * math.cos(4 * math.pi * k / 511)
            )
        assert w.sum() == pytest.approx(total, rel=1e-12)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            dsp.blackman_window(1)


class TestFrameClock:
    def test_one_second_at_16k(self):
        clock = dsp.make_frame_clock(16000, 16000)
        assert clock.num_frames == 1 + math.floor((1.0 - 0.032) / 0.008)
        assert clock.num_frames == 122

    def test_one_second_at_2048(self):
        assert dsp.make_frame_clock(2048, 2048).num_frames == 122

    def test_exactly_one_window(self):
        assert dsp.make_frame_clock(512, 16000).num_frames == 1

    def test_shorter_than_window_rejected(self):
        with pytest.raises(ValueError):
            dsp.make_frame_clock(511, 16000)

    def test_frames_fit_inside_signal(self):
        for n_samples, fs in ((16000, 16000), (2048, 2048), (5120, 2048), (40000, 16000)):
            clock = dsp.make_frame_clock(n_samples, fs)
            assert clock.frame_starts()[-1] + clock.window_len <= n_samples

    def test_window_length_at_2048(self):
        assert dsp.make_frame_clock(2048, 2048).window_len == 66

    @given(st.integers(min_value=3, max_value=400))
    @settings(max_examples=40, deadline=None)
    def test_rate_invariance_on_shared_grid(self, k64):
        # Durations on the 1/64 s grid are integer sample counts at both rates.
        n16 = k64 * 250
        n2048 = k64 * 32
        c_a = dsp.make_frame_clock(n16, 16000)
        c_e = dsp.make_frame_clock(n2048, 2048)
        assert c_a.num_frames == c_e.num_frames


class TestSTFT:
    def test_zero_signal(self):
        spec = dsp.stft(dsp.Waveform(np.zeros(16000), 16000))
        assert spec.data.shape == (122, 257)
        assert np.all(spec.data == 0)

    def test_wrong_rate_rejected(self):
        with pytest.raises(ValueError):
            dsp.stft(dsp.Waveform(np.zeros(2048), 2048))

    def test_sine_at_bin_center(self):
        k = 40
        t = np.arange(16000) / 16000.0
        x = dsp.Waveform(np.sin(2 * np.pi * (k * 16000 / 512) * t), 16000)
        spec = dsp.stft(x)
        mags = np.abs(spec.data[5])
        assert np.argmax(mags) == k
        expected = dsp.blackman_window(512).sum() / 2.0
        assert mags[k] == pytest.approx(expected, rel=0.01)

    def test_linearity(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(8000)
        y = rng.standard_normal(8000)
        sx = dsp.stft(dsp.Waveform(x, 16000)).data
        sy = dsp.stft(dsp.Waveform(y, 16000)).data
        sxy = dsp.stft(dsp.Waveform(2.5 * x - 0.5 * y, 16000)).data
        np.testing.assert_allclose(sxy, 2.5 * sx - 0.5 * sy, rtol=1e-9, atol=1e-12)

    def test_scaling_by_two(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(8000)
        s1 = dsp.stft(dsp.Waveform(x, 16000)).data
        s2 = dsp.stft(dsp.Waveform(2.0 * x, 16000)).data
        np.testing.assert_allclose(s2, 2.0 * s1, rtol=1e-12)

    def test_parseval_per_frame(self):
        rng = np.random.default_rng(9)
        x = dsp.Waveform(rng.standard_normal(8000), 16000)
        clock = dsp.make_frame_clock(8000, 16000)
        w = dsp.blackman_window(512)
        frames = clock.frames(x.samples) * w
        full = np.fft.fft(frames, n=512, axis=1)
        time_energy = np.sum(frames**2, axis=1)
        freq_energy = np.sum(np.abs(full) ** 2, axis=1) / 512.0
        np.testing.assert_allclose(time_energy, freq_energy, rtol=1e-6)


class TestISTFT:
    def interior_error(self, x):
        spec = dsp.stft(dsp.Waveform(x, 16000))
        y = dsp.istft(spec).samples
        half = 256
        a, b = x[half:-half], y[half : len(x) - half]
        return np.sqrt(np.mean((a - b) ** 2)) / np.sqrt(np.mean(a**2))

    def test_white_noise_roundtrip(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(16000)
        spec = dsp.stft(dsp.Waveform(x, 16000))
        y = dsp.istft(spec).samples
        assert len(y) == 16000
        assert np.max(np.abs(y[256:-256] - x[256:-256])) < 1e-6

    def test_zero_spectrogram(self):
        clock = dsp.make_frame_clock(8000, 16000)
        spec = dsp.ComplexSpectrogram(np.zeros((clock.num_frames, 257), dtype=complex), clock)
        assert np.all(dsp.istft(spec).samples == 0)

    def test_speech_shaped_roundtrip_snr(self):
        # Harmonic stack with a slow envelope, loosely speech-like.
        t = np.arange(24000) / 16000.0
        env = 0.5 * (1 - np.cos(2 * np.pi * 4 * t))
        x = env * sum((1.0 / k) * np.sin(2 * np.pi * 150 * k * t) for k in range(1, 20))
        spec = dsp.stft(dsp.Waveform(x, 16000))
        y = dsp.istft(spec).samples
        a, b = x[512:-512], y[512 : len(x) - 512]
        snr = 10 * np.log10(np.sum(a**2) / np.sum((a - b) ** 2))
        assert snr > 100

    def test_random_signals_interior_error(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            n = int(rng.integers(4 * 512, 30000))
            assert self.interior_error(rng.standard_normal(n)) < 1e-6


class TestResample:
    def test_identity_rate(self):
        rng = np.random.default_rng(13)
        x = dsp.Waveform(rng.standard_normal(5000), 16000)
        y = dsp.resample(x, 16000)
        assert np.array_equal(y.samples, x.samples)

    def test_sine_16k_to_10k(self):
        t = np.arange(16000) / 16000.0
        x = dsp.Waveform(np.sin(2 * np.pi * 1000 * t), 16000)
        y = dsp.resample(x, 10000)
        assert y.sample_rate_hz == 10000
        assert len(y.samples) == 10000
        # Oracle: correlate against the reference sine on the new grid.
        t2 = np.arange(10000) / 10000.0
        ref_sin = np.sin(2 * np.pi * 1000 * t2)
        ref_cos = np.cos(2 * np.pi * 1000 * t2)
        mid = slice(500, 9500)
        amp = 2 * math.hypot(
            np.mean(y.samples[mid] * ref_sin[mid]), np.mean(y.samples[mid] * ref_cos[mid])
        )
        assert amp == pytest.approx(1.0, rel=0.01)

    def test_dc_preserved(self):
        x = dsp.Waveform(np.full(4000, 0.7), 16000)
        y = dsp.resample(x, 10000)
        assert np.max(np.abs(y.samples[200:-200] - 0.7)) < 1e-6

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            dsp.resample(dsp.Waveform(np.zeros(100), 16000), 0)


class TestWaveform:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            dsp.Waveform(np.array([0.0, np.nan]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            dsp.Waveform(np.zeros(10), 0)
