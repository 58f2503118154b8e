"""F0 reconstruction, vibrato, excitation and the MLSA filter."""

import math

import numpy as np
import pytest

from core.errors import ConfigError, FeatureError, FilterOverflowError, ShapeError
from core.model import AcousticLayout
from core.vocoder import (
    F0Track, MLSAFilter, SynthesisConfig, VibratoSection, apply_vibrato, frame_hop,
    generate_excitation, interpolate_frames, mel_cepstrum_to_mlsa, mlsa_filter,
    mlsa_to_mel_cepstrum, reconstruct_logf0, standard_alpha, vibrato_cents, vibrato_sections,
    vocode,
)


def _log_magnitude_target(c: np.ndarray, alpha: float, n: int) -> np.ndarray:
    """Re Σ c(m) z̃⁻ᵐ on the FFT grid, z̃⁻¹ the all-pass warped delay."""
    z1 = np.exp(-2j * np.pi * np.arange(n) / n)
    warped = (z1 - alpha) / (1 - alpha * z1)
    return np.real(sum(cm * warped ** m for m, cm in enumerate(c)))


class TestConfig:

    def test_standard_alpha(self):
        assert standard_alpha(16000) == 0.42
        assert standard_alpha(48000) == 0.55
        assert standard_alpha(24000) == 0.466

    def test_defaults_fill_alpha(self):
        assert SynthesisConfig(sample_rate=16000).alpha == 0.42
        assert SynthesisConfig(sample_rate=16000, alpha=0.3).alpha == 0.3

    @pytest.mark.parametrize("kwargs", [{"sample_rate": 0}, {"alpha": 1.0}, {"alpha": -0.1}])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            SynthesisConfig(**kwargs)

    def test_from_dict_warns(self, caplog):
        cfg = SynthesisConfig.from_dict({"sample_rate": 22050, "reverb": 0.3})
        assert cfg.alpha == 0.466
        assert "reverb" in caplog.text

    def test_frame_hop(self):
        assert frame_hop(16000, 0.005) == 80
        assert frame_hop(44100, 0.005) == 220
        with pytest.raises(ConfigError):
            frame_hop(100, 0.001)


class TestF0:

    def test_voiced_and_unvoiced(self):
        note = np.log(np.array([440.0, 440.0, 220.0]))
        f0 = reconstruct_logf0(np.array([0.0, 0.1, math.log(2.0)]), note, np.array([1.0, 0.2, 0.9]))
        np.testing.assert_allclose(f0.hz, [440.0, 0.0, 440.0])
        np.testing.assert_array_equal(f0.voiced, [True, False, True])

    def test_clipped_to_singing_range(self):
        f0 = reconstruct_logf0(np.zeros(2), np.log([5.0, 5000.0]), np.ones(2))
        np.testing.assert_allclose(f0.hz, [20.0, 2000.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            reconstruct_logf0(np.zeros(3), np.zeros(4), np.ones(3))


class TestVibrato:

    def test_depth_and_rate(self):
        f0 = F0Track(np.full(400, 440.0))
        out = apply_vibrato(f0, [VibratoSection(0, 399, 100.0, 6.0)])
        cents = 1200.0 * np.log2(out.hz / 440.0)
        assert abs(cents.max() - 100.0) < 0.5
        assert abs(cents.min() + 100.0) < 0.5
        assert np.all(np.abs(cents) <= 100.0 + 1e-9)
        spectrum = np.abs(np.fft.rfft(cents - cents.mean(), n=2 ** 16))
        freqs = np.fft.rfftfreq(2 ** 16, d=0.005)
        assert abs(freqs[np.argmax(spectrum)] - 6.0) < 0.1

    def test_cents_start_at_zero(self):
        sec = VibratoSection(10, 19, 50.0, 5.0)
        v = vibrato_cents(sec, 0.005)
        assert v[0] == 0.0
        assert v.shape == (10,)

    def test_unvoiced_frames_stay_silent(self):
        hz = np.full(20, 300.0)
        hz[5:8] = 0.0
        out = apply_vibrato(F0Track(hz), [VibratoSection(0, 19, 80.0, 6.0)])
        np.testing.assert_array_equal(out.hz[5:8], 0.0)
        np.testing.assert_array_equal(hz[0], 300.0)

    def test_sections_from_flags(self):
        amp = np.array([0.0, 5.0, 5.0, 0.5, 5.0, 7.0])
        flag = np.array([1.0, 1.0, 1.0, 1.0, 0.0, 1.0])
        sections = vibrato_sections(amp, np.full(6, 5.5), flag)
        assert [(s.start, s.end) for s in sections] == [(1, 2), (5, 5)]

    def test_overlapping_sections(self):
        with pytest.raises(FeatureError):
            apply_vibrato(F0Track(np.full(20, 300.0)),
                          [VibratoSection(0, 10, 10.0, 5.0), VibratoSection(8, 15, 10.0, 5.0)])

    def test_section_past_track_end(self):
        with pytest.raises(ShapeError):
            apply_vibrato(F0Track(np.full(5, 300.0)), [VibratoSection(0, 9, 10.0, 5.0)])

    def test_invalid_section(self):
        with pytest.raises(FeatureError):
            VibratoSection(5, 4, 10.0, 5.0)
        with pytest.raises(FeatureError):
            VibratoSection(0, 4, -1.0, 5.0)


class TestExcitation:

    def test_pulse_positions_and_power(self, rng):
        out = generate_excitation(F0Track(np.full(4, 100.0)), 16000, rng)
        assert out.shape == (320,)
        np.testing.assert_array_equal(np.nonzero(out)[0], [0, 160])
        assert out[0] == pytest.approx(math.sqrt(160))
        assert np.mean(out ** 2) == pytest.approx(1.0)

    def test_noise_is_unit_variance(self, rng):
        out = generate_excitation(F0Track(np.zeros(200)), 16000, rng)
        assert abs(out.var() - 1.0) < 0.05

    def test_phase_carries_across_frames(self, rng):
        # 160 Hz at 16 kHz: period 100 samples, hop 80
        out = generate_excitation(F0Track(np.full(5, 160.0)), 16000, rng)
        np.testing.assert_array_equal(np.nonzero(out)[0], [0, 100, 200, 300])


class TestMLSA:

    def test_cepstrum_conversion_is_invertible(self, rng):
        c = rng.normal(size=(4, 10))
        np.testing.assert_allclose(mlsa_to_mel_cepstrum(mel_cepstrum_to_mlsa(c, 0.42), 0.42), c)

    def test_conversion_by_hand(self):
        b = mel_cepstrum_to_mlsa(np.array([1.0, 0.5, 0.25]), 0.5)
        np.testing.assert_allclose(b, [1.0 - 0.5 * 0.375, 0.5 - 0.5 * 0.25, 0.25])

    def test_zero_cepstra_is_identity(self, rng):
        x = rng.normal(size=400)
        wave = mlsa_filter(x, np.zeros((5, 8)), 0.42, 16000)
        np.testing.assert_array_equal(wave.samples, x)

    def test_gain_only(self, rng):
        x = rng.normal(size=200)
        c = np.zeros((3, 6))
        c[:, 0] = 0.5
        # with only c(0) set every b(m ≥ 1) is zero
        wave = mlsa_filter(x, c, 0.42, 16000)
        np.testing.assert_allclose(wave.samples, math.exp(0.5) * x, rtol=1e-14)

    @pytest.mark.parametrize("c", [
        [0.0, 0.2],
        [0.1, 0.15, -0.08, 0.04],
    ])
    def test_frequency_response(self, c):
        n, alpha = 4096, 0.42
        impulse = np.zeros(n)
        impulse[0] = 1.0
        h = mlsa_filter(impulse, np.array([c]), alpha, 16000).samples
        log_mag = np.log(np.abs(np.fft.fft(h)))
        np.testing.assert_allclose(log_mag, _log_magnitude_target(np.array(c), alpha, n), atol=1e-3)

    def test_overflow_is_reported(self):
        x = np.ones(10)
        with pytest.raises(FilterOverflowError, match="sample 0"):
            mlsa_filter(x, np.array([[50.0, 0.0]]), 0.42, 16000)

    def test_rejects_bad_arguments(self, rng):
        with pytest.raises(ConfigError):
            mlsa_filter(rng.normal(size=10), np.zeros((1, 3)), 1.2, 16000)
        with pytest.raises(ShapeError):
            mlsa_filter(rng.normal(size=10), np.zeros(3), 0.42, 16000)

    def test_empty_excitation(self):
        assert mlsa_filter(np.zeros(0), np.zeros((1, 3)), 0.42, 16000).samples.size == 0

    def test_filter_state_is_per_instance(self):
        a, b = MLSAFilter(4, 0.42), MLSAFilter(4, 0.42)
        coefs = [0.0, 0.3, 0.1, -0.1, 0.05]
        first = [a.step(1.0 if n == 0 else 0.0, coefs) for n in range(20)]
        second = [b.step(1.0 if n == 0 else 0.0, coefs) for n in range(20)]
        assert first == second

    def test_interpolate_frames(self):
        values = np.array([[0.0], [8.0]])
        np.testing.assert_allclose(interpolate_frames(values, 4, 6)[:, 0], [0, 2, 4, 6, 8, 8])


class TestVocode:

    def _features(self, layout, T=20):
        f = np.zeros((T, layout.dim))
        f[:, 0] = -1.0
        f[:, layout.vuv_index] = 1.0
        f[T // 2:, layout.vuv_index] = 0.0
        return f

    def test_chain_produces_bounded_audio(self, small_layout):
        cfg = SynthesisConfig(sample_rate=16000)
        features = self._features(small_layout)
        note = np.full(20, math.log(220.0))
        wave = vocode(features, note, small_layout, cfg)
        assert wave.sample_rate == 16000
        assert wave.samples.shape == (1600,)
        assert np.all(np.isfinite(wave.samples))
        assert np.max(np.abs(wave.samples)) <= 1.0
        again = vocode(features, note, small_layout, cfg)
        np.testing.assert_array_equal(wave.samples, again.samples)

    def test_layout_mismatch(self, small_layout):
        with pytest.raises(ShapeError):
            vocode(np.zeros((5, 12)), np.zeros(5), small_layout, SynthesisConfig(sample_rate=16000))

    def test_vibrato_parameters_reach_the_pitch(self):
        layout = AcousticLayout(mgc=3, ap=0)
        features = np.zeros((40, layout.dim))
        vib = layout.slice_of("vibrato")
        features[:, vib.start] = 100.0
        features[:, vib.start + 1] = 6.0
        features[:, layout.vibrato_flag_index] = 1.0
        features[:, layout.vuv_index] = 1.0
        cfg = SynthesisConfig(sample_rate=16000)
        plain = features.copy()
        plain[:, layout.vibrato_flag_index] = 0.0
        note = np.full(40, math.log(300.0))
        with_vib = vocode(features, note, layout, cfg).samples
        without = vocode(plain, note, layout, cfg).samples
        assert not np.array_equal(with_vib, without)
