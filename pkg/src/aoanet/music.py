"""MUSIC direction-of-arrival baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array import ArrayConfig, steering_matrix
from .covariance import CovarianceStack, stack_covariances, DEFAULT_WINDOW, DEFAULT_COUNT
from .errors import DomainError
from .signals import IQFrame

DEFAULT_GRID = np.round(np.arange(-900, 901) * 0.1, 10)


@dataclass
class Eigendecomposition:
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # columns

    def noise_subspace(self, num_sources: int) -> np.ndarray:
        return self.eigenvectors[:, : len(self.eigenvalues) - num_sources]


@dataclass
class MusicSpectrum:
    grid: np.ndarray
    power: np.ndarray
    assumed_sources: int


def eigendecompose_hermitian(R: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> Eigendecomposition:
    """Cyclic Jacobi eigendecomposition of a Hermitian matrix.

    Each rotation first removes the phase of the pivot ``R[p, q]`` with a
    diagonal unitary, then zeroes it with a real Givens rotation.
    """
    R = np.asarray(R, dtype=complex)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DomainError("expected a square matrix")
    if not np.all(np.isfinite(R)):
        raise DomainError("matrix has non-finite entries")
    A = 0.5 * (R + R.conj().T)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    scale = np.linalg.norm(A)
    if scale == 0:
        return Eigendecomposition(np.zeros(n), V)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.linalg.norm(A[offdiag]) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = 0.5 * np.arctan2(2.0 * mag, (A[p, p] - A[q, q]).real)
                c, s = np.cos(theta), np.sin(theta)
                # G = diag(1, conj(phase)) @ [[c, -s], [s, c]] acting on columns p, q
                gp = np.array([c, s * np.conj(phase)])
                gq = np.array([-s, c * np.conj(phase)])
                cols = A[:, [p, q]]
                new_p = cols @ gp
                new_q = cols @ gq
                A[:, p], A[:, q] = new_p, new_q
                rows = A[[p, q], :]
                new_p = gp.conj() @ rows
                new_q = gq.conj() @ rows
                A[p, :], A[q, :] = new_p, new_q
                A[p, q] = A[q, p] = 0.0
                vcols = V[:, [p, q]]
                V[:, p], V[:, q] = vcols @ gp, vcols @ gq
    w = np.diag(A).real.copy()
    order = np.argsort(w, kind="stable")
    return Eigendecomposition(w[order], V[:, order])


def music_spectrum(R: np.ndarray, num_sources: int, grid=DEFAULT_GRID,
                   config: ArrayConfig = ArrayConfig()) -> MusicSpectrum:
    """Pseudo-spectrum ``P(theta) = 1 / ||Q_n^H a(theta)||^2`` on ``grid``."""
    m = config.num_elements
    if not 1 <= num_sources < m:
        raise DomainError(f"num_sources must be in [1, {m - 1}], got {num_sources}")
    grid = np.asarray(grid, dtype=float)
    Qn = eigendecompose_hermitian(R).noise_subspace(num_sources)
    A = steering_matrix(grid, config)
    denom = np.sum(np.abs(A.conj() @ Qn) ** 2, axis=1)
    return MusicSpectrum(grid, 1.0 / np.maximum(denom, 1e-300), num_sources)


def _local_maxima(power: np.ndarray) -> np.ndarray:
    inner = np.flatnonzero((power[1:-1] > power[:-2]) & (power[1:-1] > power[2:])) + 1
    return inner


def _refine(grid, logp, i) -> float:
    y0, y1, y2 = logp[i - 1], logp[i], logp[i + 1]
    den = y0 - 2.0 * y1 + y2
    step = grid[i + 1] - grid[i]
    if den >= 0:
        return float(grid[i])
    delta = 0.5 * (y0 - y2) / den
    return float(grid[i] + np.clip(delta, -0.5, 0.5) * step)


def find_peaks(spectrum: MusicSpectrum, count: int):
    """Angles of the ``count`` highest strict local maxima, ascending.

    Returns ``(angles, ambiguous)``; when fewer peaks exist the list is
    padded by repeating the strongest ones and ``ambiguous`` is True.
    """
    p = spectrum.power
    grid = spectrum.grid
    logp = np.log(np.maximum(p, np.finfo(float).tiny))
    peaks = _local_maxima(p)
    # larger power first, then smaller angle
    order = sorted(peaks, key=lambda i: (-p[i], grid[i]))
    chosen = order[:count]
    ambiguous = len(chosen) < count
    if not chosen:
        chosen = [int(np.argmax(p))]
    angles = [_refine(grid, logp, i) if 0 < i < len(grid) - 1 else float(grid[i]) for i in chosen]
    while len(angles) < count:
        angles.append(angles[(len(angles)) % len(chosen)])
    return np.sort(np.array(angles)), ambiguous


def estimate_aoa_music(data, num_sources: int, config: ArrayConfig = ArrayConfig(), grid=DEFAULT_GRID,
                       window_length: int = DEFAULT_WINDOW, count: int = DEFAULT_COUNT,
                       full_output: bool = False):
    """Estimate ``num_sources`` angles (degrees, ascending) with MUSIC.

    ``data`` may be an :class:`IQFrame`, a :class:`CovarianceStack` (whose
    matrices are averaged) or a single covariance matrix.
    """
    if isinstance(data, IQFrame):
        data = stack_covariances(data, window_length, count)
    R = data.mean() if isinstance(data, CovarianceStack) else np.asarray(data)
    spec = music_spectrum(R, num_sources, grid, config)
    angles, ambiguous = find_peaks(spec, num_sources)
    if full_output:
        return angles, ambiguous, spec
    return angles
