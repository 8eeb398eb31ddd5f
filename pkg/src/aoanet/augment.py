"""Label-changing and label-preserving augmentations on IQ frames."""

from __future__ import annotations

import numpy as np

from .array import ArrayConfig
from .errors import DomainError
from .signals import IQFrame, add_awgn

FOV = (-74.0, 74.0)
PHASE_SHIFTS = (-4.0, -2.0, 2.0, 4.0)


def in_fov(theta: float, fov=FOV) -> bool:
    return fov[0] - 1e-9 <= theta <= fov[1] + 1e-9


def phase_shift_vector(theta: float, phi: float, config: ArrayConfig) -> np.ndarray:
    """Per-element multiplier that moves a plane wave from ``theta`` to ``theta + phi``."""
    ds = np.sin(np.radians(theta + phi)) - np.sin(np.radians(theta))
    m = np.arange(config.num_elements)
    return np.exp(-2j * np.pi * config.spacing_factor * m * ds)


def phase_shift(frame: IQFrame, theta: float, phi: float, config: ArrayConfig | None = None,
                fov=FOV) -> IQFrame:
    """Relabel a single-source frame from ``theta`` to ``theta + phi`` degrees.

    Multiplies element m by ``exp(-j 2 pi alpha (m-1) [sin(theta+phi) - sin(theta)])``,
    which is exactly the steering-phase difference between the two angles.
    """
    config = config or frame.config
    if not in_fov(theta + phi, fov):
        raise DomainError(f"shifted angle {theta + phi} leaves the FOV {fov}")
    if phi == 0:
        return frame
    d = phase_shift_vector(theta, phi, config)
    return frame.with_samples(frame.samples * d[:, None])


def carrier_phase(seed) -> float:
    """Uniform carrier phase difference in [0, 2 pi) drawn from ``seed``."""
    return float(np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi))


def superimpose(frame_a: IQFrame, frame_b: IQFrame, seed=0, delta_phi: float | None = None) -> IQFrame:
    """Baseband sum ``a + b * exp(j dphi)`` with a random carrier phase difference.

    ``delta_phi`` overrides the seeded draw (used for tests and provenance replay).
    """
    if frame_a.samples.shape != frame_b.samples.shape:
        raise DomainError("frames to superimpose must share shape")
    if frame_a.sample_rate != frame_b.sample_rate:
        raise DomainError("frames to superimpose must share sample rate")
    if delta_phi is None:
        delta_phi = carrier_phase(seed)
    out = frame_a.samples + frame_b.samples * np.exp(1j * delta_phi)
    return frame_a.with_samples(out)


def expand_awgn(frame: IQFrame, snr_levels, seed) -> list[IQFrame]:
    """One noisy copy per SNR level; the i-th copy uses seed ``(seed, i)``."""
    return [add_awgn(frame, snr, np.random.SeedSequence([int(seed), i]))
            for i, snr in enumerate(snr_levels)]
