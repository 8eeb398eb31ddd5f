"""Classification/regression losses and their gradients w.r.t. head outputs."""

import numpy as np

CLAMP = 1e-7


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy; ``p`` is clamped to ``[1e-7, 1 - 1e-7]``."""
    p = np.clip(np.asarray(p, dtype=float), CLAMP, 1 - CLAMP)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def bce_grad(p, y):
    pc = np.clip(p, CLAMP, 1 - CLAMP)
    g = (-(y / pc) + (1 - y) / (1 - pc)) / p.shape[0]
    # clamped probabilities carry no gradient
    return np.where((p < CLAMP) | (p > 1 - CLAMP), 0.0, g).astype(p.dtype)


def mse_loss(z_hat, z) -> float:
    d = np.asarray(z, dtype=float) - np.asarray(z_hat, dtype=float)
    return float(np.mean(d**2))


def mse_grad(z_hat, z):
    return (2.0 * (z_hat - z) / z_hat.shape[0]).astype(z_hat.dtype)


def joint_loss(losses, tau) -> float:
    """Weighted sum ``tau . [L_c, L_r1, L_r2]``."""
    return float(np.dot(np.asarray(tau, dtype=float), np.asarray(losses, dtype=float)))


def hybrid_loss(outputs, targets, tau):
    """Joint loss of the three heads.

    ``outputs`` and ``targets`` are ``(B, 3)``: class probability, z1, z2.
    Returns ``(total, (L_c, L_r1, L_r2), grad_outputs)``.
    """
    tau = np.asarray(tau, dtype=float)
    p, z1h, z2h = outputs[:, 0], outputs[:, 1], outputs[:, 2]
    y, z1, z2 = targets[:, 0], targets[:, 1], targets[:, 2]
    parts = (bce_loss(p, y), mse_loss(z1h, z1), mse_loss(z2h, z2))
    grad = np.stack([tau[0] * bce_grad(p, y), tau[1] * mse_grad(z1h, z1), tau[2] * mse_grad(z2h, z2)], axis=1)
    return joint_loss(parts, tau), parts, grad.astype(outputs.dtype)
