"""Label encoding: (two-source flag, z1, z2) with angles mapped into (0, 1)."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError

FOV_MIN, FOV_MAX = -74.0, 74.0
SPAN = FOV_MAX - FOV_MIN


def encode_angle(theta):
    return (np.asarray(theta, dtype=float) - FOV_MIN) / SPAN


def decode_angle(z):
    return np.asarray(z, dtype=float) * SPAN + FOV_MIN


def encode_label(theta1: float, theta2: float | None = None) -> np.ndarray:
    """Return ``[class, z1, z2]``; single sources repeat ``theta1`` in both slots."""
    angles = [theta1] if theta2 is None else sorted([theta1, theta2])
    for a in angles:
        if not FOV_MIN - 1e-9 <= a <= FOV_MAX + 1e-9:
            raise DomainError(f"angle {a} outside the FOV [{FOV_MIN}, {FOV_MAX}]")
    if theta2 is None:
        z = float(encode_angle(theta1))
        return np.array([0.0, z, z])
    return np.array([1.0, float(encode_angle(angles[0])), float(encode_angle(angles[1]))])


def label_angles(label) -> list[float]:
    """Ground-truth angles (ascending) from an encoded label."""
    cls, z1, z2 = label
    if cls >= 0.5:
        return sorted([float(decode_angle(z1)), float(decode_angle(z2))])
    return [float(decode_angle(z1))]


def decode_prediction(p: float, z1: float, z2: float, threshold: float = 0.5):
    """Turn head outputs into ``(L, angles)``.

    L=1 reports the decoded mean of both regression heads; L=2 reports both
    decoded heads in ascending order.
    """
    if p >= threshold:
        return 2, sorted([float(decode_angle(z1)), float(decode_angle(z2))])
    return 1, [float(decode_angle(0.5 * (z1 + z2)))]


def decode_batch(outputs, threshold: float = 0.5):
    """Vectorized decode: ``(L array, raw decoded head angles (B, 2) ascending)``."""
    outputs = np.asarray(outputs, dtype=float)
    L = np.where(outputs[:, 0] >= threshold, 2, 1)
    angles = np.sort(decode_angle(outputs[:, 1:3]), axis=1)
    return L, angles
