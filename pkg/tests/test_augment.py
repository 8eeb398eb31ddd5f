import numpy as np
import pytest

from aoanet.array import ArrayConfig
from aoanet.augment import (FOV, PHASE_SHIFTS, carrier_phase, expand_awgn, phase_shift, phase_shift_vector,
                            superimpose)
from aoanet.covariance import sample_covariance
from aoanet.errors import DomainError
from aoanet.music import estimate_aoa_music
from aoanet.signals import IQFrame, SourceSpec, signal_power, synthesize_frame


def _frame(theta, kind="random_qpsk", seed=3, length=4096):
    return synthesize_frame([SourceSpec(theta, kind, seed=seed)], length=length)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestPhaseShift:
    def test_zero_shift_is_identity(self):
        f = _frame(12.0)
        assert phase_shift(f, 12.0, 0.0) is f

    def test_matches_resynthesis_at_two_degrees(self):
        shifted = phase_shift(_frame(0.0), 0.0, 2.0)
        direct = _frame(2.0)
        assert _rel(sample_covariance(shifted.samples), sample_covariance(direct.samples)) < 1e-6

    @pytest.mark.parametrize("phi", PHASE_SHIFTS)
    def test_grid_equivalence(self, phi):
        for theta in range(-70, 71, 10):
            shifted = phase_shift(_frame(float(theta), "linear_chirp"), theta, phi)
            direct = _frame(theta + phi, "linear_chirp")
            assert _rel(sample_covariance(shifted.samples), sample_covariance(direct.samples)) < 1e-6

    def test_fov_violation(self):
        with pytest.raises(DomainError):
            phase_shift(_frame(72.0), 72.0, 4.0)
        # -70 - 4 sits exactly on the edge and is allowed
        phase_shift(_frame(-70.0), -70.0, -4.0)

    def test_preserves_per_sample_magnitude(self):
        f = synthesize_frame([SourceSpec(30.0, "random_qpsk", seed=1)], length=512, snr_db=3, seed=2)
        g = phase_shift(f, 30.0, -2.0)
        np.testing.assert_allclose(np.abs(g.samples), np.abs(f.samples), rtol=1e-12)

    def test_smaller_angles_see_larger_phase_change(self):
        cfg = ArrayConfig()
        for phi in PHASE_SHIFTS:
            at0 = np.abs(np.angle(phase_shift_vector(0.0, phi, cfg)))
            at60 = np.abs(np.angle(phase_shift_vector(60.0, phi, cfg)))
            assert np.all(at0[1:] > at60[1:])

    @pytest.mark.parametrize("theta,phi", [(-40.0, 4.0), (0.0, -2.0), (20.0, 2.0)])
    def test_music_follows_label(self, theta, phi):
        g = phase_shift(_frame(theta, length=2**15), theta, phi)
        est = estimate_aoa_music(g, 1)
        assert est[0] == pytest.approx(theta + phi, abs=0.1)


class TestSuperimpose:
    def test_zero_partner(self):
        a = _frame(-10.0)
        z = a.with_samples(np.zeros_like(a.samples))
        np.testing.assert_array_equal(superimpose(a, z, seed=4).samples, a.samples)

    def test_forced_zero_phase_is_sum(self):
        a, b = _frame(-10.0, seed=1), _frame(25.0, seed=2)
        np.testing.assert_allclose(superimpose(a, b, delta_phi=0.0).samples, a.samples + b.samples)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            superimpose(_frame(0.0, length=64), _frame(10.0, length=128))

    def test_carrier_phase_range_and_determinism(self):
        draws = np.array([carrier_phase(s) for s in range(500)])
        assert np.all((draws >= 0) & (draws < 2 * np.pi))
        assert carrier_phase(7) == carrier_phase(7)
        # roughly uniform: each quarter period gets a fair share
        counts = np.histogram(draws, bins=4, range=(0, 2 * np.pi))[0]
        assert counts.min() > 90

    def test_monte_carlo_mean_covariance(self):
        a = _frame(-20.0, "random_qpsk", seed=1)
        b = _frame(35.0, "linear_chirp", seed=2)
        Ra, Rb = sample_covariance(a.samples), sample_covariance(b.samples)
        mean = np.mean([sample_covariance(superimpose(a, b, seed=s).samples) for s in range(200)], axis=0)
        assert _rel(mean, Ra + Rb) < 0.05

    def test_monte_carlo_coherent_sources(self):
        # identical tones make the cross term as large as possible; it still averages out
        tone = {"freq_offset": 1000.0}
        a = synthesize_frame([SourceSpec(-20.0, "complex_tone", baseband_params=tone)], length=256)
        b = synthesize_frame([SourceSpec(35.0, "complex_tone", baseband_params=tone)], length=256)
        Ra, Rb = sample_covariance(a.samples), sample_covariance(b.samples)
        mean = np.mean([sample_covariance(superimpose(a, b, seed=s).samples) for s in range(5000)], axis=0)
        assert _rel(mean, Ra + Rb) < 0.05

    def test_music_resolves_superposed_pair(self):
        a = _frame(-30.0, "random_qpsk", seed=1, length=2**15)
        b = _frame(30.0, "random_qpsk", seed=2, length=2**15)
        est = estimate_aoa_music(superimpose(a, b, seed=9), 2)
        np.testing.assert_allclose(est, [-30.0, 30.0], atol=0.1)


class TestExpandAwgn:
    def test_empty_levels(self):
        assert expand_awgn(_frame(0.0), [], 0) == []

    def test_count_and_determinism(self):
        f = _frame(0.0)
        out = expand_awgn(f, [0, 5, 10], 11)
        assert len(out) == 3
        again = expand_awgn(f, [0, 5, 10], 11)
        for x, y in zip(out, again):
            np.testing.assert_array_equal(x.samples, y.samples)
        assert not np.array_equal(out[0].samples, expand_awgn(f, [0], 12)[0].samples)

    def test_zero_db_noise_matches_signal_power(self):
        f = _frame(15.0, length=2**15)
        noisy = expand_awgn(f, [0], 5)[0]
        noise = noisy.samples - f.samples
        assert np.mean(np.abs(noise) ** 2) == pytest.approx(signal_power(f), rel=0.05)


def test_fov_constant():
    assert FOV == (-74.0, 74.0)
    assert isinstance(_frame(0.0), IQFrame)
