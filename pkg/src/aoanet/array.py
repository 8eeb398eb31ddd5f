"""Uniform linear array geometry, steering vectors and beam patterns.

Angles cross every public boundary in degrees; radians stay internal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayConfig:
    """ULA geometry.

    ``spacing_factor`` is the inter-element spacing in wavelengths, so the
    physical spacing is ``spacing_factor * wavelength``.
    """

    num_elements: int = 4
    spacing_factor: float = 0.2
    carrier_frequency: float = 868e6

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 2:
            raise ConfigurationError(f"num_elements must be an integer >= 2, got {self.num_elements}")
        if not self.spacing_factor > 0:
            raise ConfigurationError(f"spacing_factor must be positive, got {self.spacing_factor}")
        if not self.carrier_frequency > 0:
            raise ConfigurationError(f"carrier_frequency must be positive, got {self.carrier_frequency}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @classmethod
    def from_wavelength(cls, wavelength: float, num_elements: int = 4, spacing_factor: float = 0.2):
        if not wavelength > 0:
            raise ConfigurationError(f"wavelength must be positive, got {wavelength}")
        return cls(num_elements, spacing_factor, SPEED_OF_LIGHT / wavelength)


def wave_number(wavelength: float) -> float:
    """Return ``2*pi/wavelength`` in rad/m."""
    if not np.isfinite(wavelength) or wavelength <= 0:
        raise DomainError(f"wavelength must be positive and finite, got {wavelength}")
    return 2.0 * np.pi / wavelength


def element_positions(config: ArrayConfig) -> np.ndarray:
    """Element positions along the array axis in meters, first element at 0."""
    m = np.arange(config.num_elements)
    return config.spacing_factor * m * config.wavelength


def _check_angles(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > 90.0):
        raise DomainError("angles must lie in [-90, 90] degrees")
    return theta


def _phase_matrix(theta_deg, config: ArrayConfig) -> np.ndarray:
    # rows: angles, cols: elements; lambda cancels between k and y_m
    m = np.arange(config.num_elements)
    s = np.sin(np.radians(np.atleast_1d(theta_deg)))
    return np.exp(-2j * np.pi * config.spacing_factor * np.outer(s, m))


def steering_vector(theta: float, config: ArrayConfig = ArrayConfig()) -> np.ndarray:
    """Steering vector ``a(theta)``; element m is ``exp(-j 2 pi alpha (m-1) sin theta)``."""
    theta = _check_angles(theta)
    if theta.ndim != 0:
        raise DomainError("steering_vector takes a scalar angle; use steering_matrix for grids")
    return _phase_matrix(theta, config)[0]


def steering_matrix(thetas, config: ArrayConfig = ArrayConfig()) -> np.ndarray:
    """Stack of steering vectors, shape ``(len(thetas), M)``."""
    thetas = _check_angles(thetas)
    return _phase_matrix(thetas.ravel(), config)


def array_factor(steer_angle: float, scan_grid, config: ArrayConfig = ArrayConfig()) -> np.ndarray:
    """Normalized power pattern in dB of a beam steered to ``steer_angle``.

    ``scan_grid`` may cover the full circle; angles behind the array mirror
    the front because ``sin(180 - x) == sin(x)``.
    """
    scan = np.asarray(scan_grid, dtype=float).ravel()
    if scan.size == 0:
        raise DomainError("scan grid must be non-empty")
    w = steering_vector(steer_angle, config)
    A = _phase_matrix(scan, config)
    power = np.abs(A @ w.conj()) ** 2 / config.num_elements**2
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.maximum(power, 1e-30))


def beamwidth(steer_angle: float, config: ArrayConfig = ArrayConfig(), level_db: float = -3.0,
              resolution: float = 0.01) -> float:
    """Width in degrees of the contiguous main-lobe region above ``level_db``.

    The pattern is scanned over the full circle, so a lobe that spills past
    endfire merges with its mirror image behind the array.
    """
    n = int(round(360.0 / resolution))
    grid = -180.0 + resolution * np.arange(n)
    p = array_factor(steer_angle, grid, config)
    i0 = int(np.argmin(np.abs(grid - steer_angle)))
    above = p >= level_db
    if above.all():
        return 360.0
    lo = 0
    while above[(i0 - lo - 1) % n]:
        lo += 1
    hi = 0
    while above[(i0 + hi + 1) % n]:
        hi += 1
    return (lo + hi) * resolution
