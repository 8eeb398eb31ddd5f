"""Synthetic multichannel IQ frames for narrowband sources on a ULA.

The received frame is the steering-vector-weighted sum of the source
basebands plus complex white Gaussian noise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .array import ArrayConfig, steering_vector
from .errors import ConfigurationError, DataError, DomainError, UnsupportedError

DEFAULT_FRAME_LENGTH = 2**15
DEFAULT_SAMPLE_RATE = 500e3  # 2 MS/s front end, decimated by 4

BASEBAND_KINDS = ("complex_tone", "linear_chirp", "random_qpsk")


@dataclass(frozen=True)
class SourceSpec:
    angle: float
    baseband_kind: str = "complex_tone"
    power: float = 1.0
    baseband_params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.baseband_kind not in BASEBAND_KINDS:
            raise ConfigurationError(f"unknown baseband kind {self.baseband_kind!r}")
        if not self.power >= 0:
            raise ConfigurationError("source power must be non-negative")


@dataclass
class IQFrame:
    samples: np.ndarray  # (M, N) complex
    sample_rate: float = DEFAULT_SAMPLE_RATE
    config: ArrayConfig = ArrayConfig()
    rng_seed: int = 0

    @property
    def num_elements(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples: np.ndarray) -> "IQFrame":
        return replace(self, samples=samples)


def gen_baseband(kind: str, length: int, params: dict | None = None, seed: int = 0,
                 sample_rate: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Unit-average-power complex baseband sequence.

    Kinds and their ``params``:

    * ``complex_tone``: ``freq_offset`` (Hz, default 0)
    * ``linear_chirp``: ``sweep`` (Hz, default sample_rate/4), swept
      symmetrically about DC over the whole sequence
    * ``random_qpsk``: ``symbol_rate`` (Hz, default sample_rate/8),
      rectangular pulses, symbols drawn from ``seed``
    """
    if length <= 0:
        raise DomainError("baseband length must be positive")
    params = params or {}
    n = np.arange(length)
    if kind == "complex_tone":
        f = float(params.get("freq_offset", 0.0))
        return np.exp(2j * np.pi * f / sample_rate * n)
    if kind == "linear_chirp":
        sweep = float(params.get("sweep", sample_rate / 4))
        t = n / sample_rate
        duration = length / sample_rate
        rate = sweep / duration
        return np.exp(2j * np.pi * (-0.5 * sweep * t + 0.5 * rate * t**2))
    if kind == "random_qpsk":
        symbol_rate = float(params.get("symbol_rate", sample_rate / 8))
        sps = max(1, int(round(sample_rate / symbol_rate)))
        rng = np.random.default_rng(seed)
        nsym = -(-length // sps)
        bits = rng.integers(0, 4, nsym)
        symbols = np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))
        return np.repeat(symbols, sps)[:length]
    raise ConfigurationError(f"unknown baseband kind {kind!r}")


def synthesize_frame(sources, config: ArrayConfig = ArrayConfig(), length: int = DEFAULT_FRAME_LENGTH,
                     snr_db: float | None = None, seed: int = 0,
                     sample_rate: float = DEFAULT_SAMPLE_RATE,
                     noise_power: float | None = None) -> IQFrame:
    """Received frame for up to two sources, optionally with AWGN.

    SNR is measured against the summed signal power of all sources. For a
    noise-only frame the noise power is ``noise_power`` if given, otherwise
    ``10**(-snr_db/10)`` (i.e. relative to a unit-power reference).
    """
    sources = list(sources)
    if len(sources) > 2:
        raise UnsupportedError("at most two sources are supported")
    if len(sources) == 2 and np.isclose(sources[0].angle, sources[1].angle):
        raise DomainError("two-source frames need distinct angles")
    x = np.zeros((config.num_elements, length), dtype=complex)
    for src in sources:
        s = gen_baseband(src.baseband_kind, length, src.baseband_params, src.seed, sample_rate)
        x += np.sqrt(src.power) * np.outer(steering_vector(src.angle, config), s)
    frame = IQFrame(x, sample_rate, config, seed)
    if not sources:
        if snr_db is None and noise_power is None:
            return frame
        p = noise_power if noise_power is not None else 10.0 ** (-snr_db / 10.0)
        return frame.with_samples(x + complex_awgn(x.shape, p, seed))
    if snr_db is None:
        return frame
    return add_awgn(frame, snr_db, seed)


def complex_awgn(shape, noise_power: float, seed) -> np.ndarray:
    """Circular complex Gaussian noise with ``E|n|^2 = noise_power``."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((*shape, 2))
    return np.sqrt(noise_power / 2.0) * (w[..., 0] + 1j * w[..., 1])


def signal_power(frame: IQFrame) -> float:
    return float(np.mean(np.abs(frame.samples) ** 2))


def add_awgn(frame: IQFrame, snr_db: float | None, seed) -> IQFrame:
    """Add white noise so that signal/noise power equals ``snr_db``.

    Signal power is measured from ``frame`` itself. ``snr_db=None`` (or +inf)
    returns the frame unchanged.
    """
    if frame.samples.size == 0:
        raise DomainError("cannot add noise to an empty frame")
    if snr_db is None or snr_db == np.inf:
        return frame
    if not np.all(np.isfinite(frame.samples)):
        raise DomainError("frame contains non-finite samples")
    p_noise = signal_power(frame) / 10.0 ** (snr_db / 10.0)
    return frame.with_samples(frame.samples + complex_awgn(frame.samples.shape, p_noise, seed))


# Binary container: little-endian header then float32 I/Q pairs, channel-major.
_MAGIC = b"IQFR"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIdq")


def save_frame(frame: IQFrame, path) -> None:
    m, n = frame.samples.shape
    header = _HEADER.pack(_MAGIC, _VERSION, m, n, float(frame.sample_rate), int(frame.rng_seed))
    iq = np.empty((m, n, 2), dtype="<f4")
    iq[..., 0] = frame.samples.real
    iq[..., 1] = frame.samples.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(iq.tobytes())


def load_frame(path, config: ArrayConfig | None = None) -> IQFrame:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated frame header")
    magic, version, m, n, rate, seed = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise DataError(f"{path}: not an IQ frame container (v{_VERSION})")
    payload = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if payload.size != m * n * 2:
        raise DataError(f"{path}: payload size mismatch")
    iq = payload.reshape(m, n, 2).astype(np.float64)
    if config is None:
        config = ArrayConfig(num_elements=m)
    elif config.num_elements != m:
        raise DataError(f"{path}: frame has {m} channels, config expects {config.num_elements}")
    return IQFrame(iq[..., 0] + 1j * iq[..., 1], rate, config, seed)
