import numpy as np
import pytest

from aoanet.array import ArrayConfig
from aoanet.covariance import stack_covariances
from aoanet.errors import ConfigurationError, DataError, DomainError, UnsupportedError
from aoanet.signals import (IQFrame, SourceSpec, add_awgn, gen_baseband, load_frame, save_frame,
                            signal_power, synthesize_frame)


class TestBaseband:
    def test_zero_offset_tone_is_constant(self):
        s = gen_baseband("complex_tone", 64, {"freq_offset": 0.0})
        np.testing.assert_array_equal(s, np.ones(64, dtype=complex))

    @pytest.mark.parametrize("kind", ["complex_tone", "linear_chirp", "random_qpsk"])
    def test_unit_power_constant_modulus(self, kind):
        s = gen_baseband(kind, 8 if kind == "linear_chirp" else 4096, seed=3)
        np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-12)
        assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0)

    def test_qpsk_deterministic(self):
        a = gen_baseband("random_qpsk", 1000, seed=11)
        b = gen_baseband("random_qpsk", 1000, seed=11)
        c = gen_baseband("random_qpsk", 1000, seed=12)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            gen_baseband("lora", 10)
        with pytest.raises(ConfigurationError):
            SourceSpec(0.0, "lora")

    def test_nonpositive_length(self):
        with pytest.raises(DomainError):
            gen_baseband("complex_tone", 0)


class TestSynthesize:
    def test_broadside_rows_identical(self):
        f = synthesize_frame([SourceSpec(0.0, "random_qpsk", seed=1)], length=1024)
        for row in f.samples[1:]:
            np.testing.assert_allclose(row, f.samples[0])

    def test_noise_only_variance(self):
        p = 2.5e-3
        f = synthesize_frame([], length=2**15, noise_power=p, seed=4)
        per_channel = np.mean(np.abs(f.samples) ** 2, axis=1)
        np.testing.assert_allclose(per_channel, p, rtol=0.05)
        # snr-relative form: unit reference power
        f = synthesize_frame([], length=2**15, snr_db=10.0, seed=5)
        np.testing.assert_allclose(np.mean(np.abs(f.samples) ** 2, axis=1), 0.1, rtol=0.05)

    def test_linearity(self):
        a = SourceSpec(-30.0, "random_qpsk", seed=1)
        b = SourceSpec(30.0, "linear_chirp", power=0.5, seed=2)
        both = synthesize_frame([a, b], length=4096).samples
        fa = synthesize_frame([a], length=4096).samples
        fb = synthesize_frame([b], length=4096).samples
        np.testing.assert_allclose(both, fa + fb, atol=1e-12)

    def test_rank_one_noiseless_covariance(self):
        f = synthesize_frame([SourceSpec(23.0, "linear_chirp")], length=4096)
        R = stack_covariances(f, 512, 8).mean()
        w = np.linalg.eigvalsh(R)
        assert np.all(np.abs(w[:-1]) <= 1e-9 * w[-1])

    def test_source_limits(self):
        s = SourceSpec(0.0)
        with pytest.raises(UnsupportedError):
            synthesize_frame([s, SourceSpec(10.0), SourceSpec(20.0)], length=16)
        with pytest.raises(DomainError):
            synthesize_frame([s, SourceSpec(0.0)], length=16)

    def test_snr_is_relative_to_total_power(self):
        srcs = [SourceSpec(-20.0, "random_qpsk", power=1.0, seed=1), SourceSpec(40.0, "random_qpsk", power=3.0, seed=2)]
        clean = synthesize_frame(srcs, length=2**15)
        noisy = synthesize_frame(srcs, length=2**15, snr_db=0.0, seed=9)
        noise = noisy.samples - clean.samples
        assert np.mean(np.abs(noise) ** 2) == pytest.approx(signal_power(clean), rel=0.05)


class TestAWGN:
    def frame(self):
        return synthesize_frame([SourceSpec(10.0, "random_qpsk", seed=7)], length=2**15)

    def test_none_is_identity(self):
        f = self.frame()
        assert add_awgn(f, None, 0) is f
        assert add_awgn(f, np.inf, 0) is f

    @pytest.mark.parametrize("snr", [0.0, -5.0, 10.0])
    def test_measured_snr(self, snr):
        f = self.frame()
        noise = add_awgn(f, snr, 1).samples - f.samples
        measured = 10 * np.log10(signal_power(f) / np.mean(np.abs(noise) ** 2))
        # 5% power tolerance is about 0.21 dB
        assert measured == pytest.approx(snr, abs=0.21)

    def test_deterministic(self):
        f = self.frame()
        np.testing.assert_array_equal(add_awgn(f, 3.0, 42).samples, add_awgn(f, 3.0, 42).samples)

    def test_noise_is_white_across_channels(self):
        f = synthesize_frame([], length=2**15, noise_power=1.0, seed=2)
        R = f.samples @ f.samples.conj().T / f.length
        off = R[~np.eye(4, dtype=bool)]
        assert np.max(np.abs(off)) < 5 / np.sqrt(f.length)

    def test_empty_frame(self):
        with pytest.raises(DomainError):
            add_awgn(IQFrame(np.zeros((4, 0), complex)), 0.0, 0)


def test_frame_container_roundtrip(tmp_path):
    f = synthesize_frame([SourceSpec(15.0, "random_qpsk", seed=3)], length=256, snr_db=5, seed=21)
    save_frame(f, tmp_path / "f.iq")
    g = load_frame(tmp_path / "f.iq")
    assert g.samples.shape == (4, 256)
    assert g.rng_seed == 21 and g.sample_rate == f.sample_rate
    np.testing.assert_allclose(g.samples, f.samples, atol=1e-6)
    raw = (tmp_path / "f.iq").read_bytes()
    # header is 4+2+4+4+8+8 bytes, then float32 I/Q pairs, channel-major
    assert len(raw) == 30 + 4 * 256 * 2 * 4
    first = np.frombuffer(raw, "<f4", count=2, offset=30)
    np.testing.assert_allclose(first, [f.samples[0, 0].real, f.samples[0, 0].imag], rtol=1e-6)


def test_frame_container_rejects_garbage(tmp_path):
    p = tmp_path / "bad.iq"
    p.write_bytes(b"nope" + bytes(40))
    with pytest.raises(DataError):
        load_frame(p)
    with pytest.raises(DataError):
        load_frame(tmp_path / "bad.iq", ArrayConfig(4))
