"""Sample covariance stacks and the features derived from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, UnsupportedError
from .signals import IQFrame

DEFAULT_WINDOW = 2**12
DEFAULT_COUNT = 8
FEATURE_ELEMENTS = 4


@dataclass
class CovarianceStack:
    matrices: np.ndarray  # (C, M, M) complex
    window_length: int
    source_frame_id: str = ""

    @property
    def count(self) -> int:
        return self.matrices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.matrices.shape[1]

    def mean(self) -> np.ndarray:
        return self.matrices.mean(axis=0)


def sample_covariance(window: np.ndarray) -> np.ndarray:
    """``R = (1/W) sum_n x[n] x[n]^H`` for an ``(M, W)`` window."""
    window = np.asarray(window)
    if window.ndim != 2 or window.shape[1] < 1:
        raise DomainError("window must be a non-empty (M, W) array")
    R = window @ window.conj().T / window.shape[1]
    # exact Hermitian symmetry; matmul rounding can leave ~1 ulp asymmetry
    return 0.5 * (R + R.conj().T)


def stack_covariances(frame: IQFrame | np.ndarray, window_length: int = DEFAULT_WINDOW,
                      count: int = DEFAULT_COUNT, frame_id: str = "") -> CovarianceStack:
    """Covariances of ``count`` consecutive non-overlapping windows."""
    x = frame.samples if isinstance(frame, IQFrame) else np.asarray(frame)
    m, n = x.shape
    if window_length < 1 or count < 1:
        raise DomainError("window_length and count must be positive")
    if n < window_length * count:
        raise DomainError(f"frame of {n} samples is shorter than {count} windows of {window_length}")
    w = x[:, : window_length * count].reshape(m, count, window_length).transpose(1, 0, 2)
    R = w @ np.conj(np.swapaxes(w, 1, 2)) / window_length
    R = 0.5 * (R + np.conj(np.swapaxes(R, 1, 2)))
    return CovarianceStack(R, window_length, frame_id)


def scatter_matrices(frame: IQFrame | np.ndarray, window_length: int = DEFAULT_WINDOW,
                     count: int = DEFAULT_COUNT) -> np.ndarray:
    """Un-normalized window scatters ``S S^H``, shape ``(count, M, M)``."""
    return stack_covariances(frame, window_length, count).matrices * window_length


def _complex_wishart(rng, dof: int, shape) -> np.ndarray:
    """Bartlett draws of ``Z Z^H`` for ``Z`` an ``M x dof`` standard complex Gaussian."""
    c, m = shape
    L = np.zeros((c, m, m), dtype=complex)
    i, j = np.tril_indices(m, -1)
    L[:, i, j] = (rng.standard_normal((c, len(i))) + 1j * rng.standard_normal((c, len(i)))) / np.sqrt(2)
    d = np.arange(m)
    L[:, d, d] = np.sqrt(rng.chisquare(2 * (dof - d), size=(c, m)) / 2)
    return L @ np.conj(np.swapaxes(L, 1, 2))


def awgn_covariances(scatter: np.ndarray, window_length: int, noise_power: float, seed,
                     frame_id: str = "") -> CovarianceStack:
    """Window covariances of ``S + N`` for white complex noise, drawn in the covariance domain.

    ``scatter`` holds the clean per-window ``S S^H``. With ``A A^H = S S^H``
    there is an orthonormal ``W x M`` basis ``V`` with ``S V = A``, and
    ``(S + N)(S + N)^H = SS^H + A G^H + G A^H + G G^H + N_perp N_perp^H`` where
    ``G = N V`` is ``M x M`` Gaussian and the last term is an independent
    Wishart draw with ``W - M`` degrees of freedom. The result has exactly the
    distribution of ``stack_covariances(S + complex_awgn(...))`` without
    generating the ``M x W`` noise samples.
    """
    P = np.asarray(scatter, dtype=complex)
    c, m, _ = P.shape
    if window_length < m:
        raise DomainError("covariance-domain noise needs window_length >= num_elements")
    if not noise_power >= 0:
        raise DomainError("noise power must be non-negative")
    P = 0.5 * (P + np.conj(np.swapaxes(P, 1, 2)))
    lam, U = np.linalg.eigh(P)
    A = U * np.sqrt(np.clip(lam, 0.0, None))[:, None, :]
    rng = np.random.default_rng(seed)
    s = np.sqrt(noise_power / 2.0)
    G = s * (rng.standard_normal((c, m, m)) + 1j * rng.standard_normal((c, m, m)))
    cross = A @ np.conj(np.swapaxes(G, 1, 2))
    R = P + cross + np.conj(np.swapaxes(cross, 1, 2)) + G @ np.conj(np.swapaxes(G, 1, 2))
    R = R + noise_power * _complex_wishart(rng, window_length - m, (c, m))
    R = R / window_length
    R = 0.5 * (R + np.conj(np.swapaxes(R, 1, 2)))
    return CovarianceStack(R, window_length, frame_id)


def detect_signal(R: np.ndarray, magnitude_threshold: float = 1e-4, fraction: float = 0.9) -> bool:
    """Signal-presence gate on off-diagonal covariance magnitudes.

    True iff strictly more than ``fraction`` of the ``M^2 - M`` off-diagonal
    entries exceed ``magnitude_threshold``.
    """
    R = np.asarray(R)
    m = R.shape[0]
    off = ~np.eye(m, dtype=bool)
    above = np.count_nonzero(np.abs(R[off]) > magnitude_threshold)
    return above > fraction * (m * m - m)


def _check_stack(stack: CovarianceStack):
    if stack.num_elements != FEATURE_ELEMENTS:
        raise UnsupportedError(f"features are defined for {FEATURE_ELEMENTS}-element arrays only")


def _upper_idx(m):
    return np.triu_indices(m)  # row-major, j <= k


def _lower_idx(m):
    # column-major strict lower triangle: i21, i31, i41, i32, i42, i43
    k, j = np.triu_indices(m, 1)
    return j, k


def serialize_blocks(matrices: np.ndarray) -> np.ndarray:
    """Un-normalized ``b = [b_r; b_i]`` per matrix, shape ``(C, M*M)``."""
    m = matrices.shape[-1]
    ur, uc = _upper_idx(m)
    lr, lc = _lower_idx(m)
    return np.concatenate([matrices[:, ur, uc].real, matrices[:, lr, lc].imag], axis=1)


def serialize_features(stack: CovarianceStack) -> np.ndarray:
    """128-element feature vector: 8 unit-norm blocks of 16 values each.

    Each block holds the real parts of the upper triangle (diagonal
    included, row-major) followed by the imaginary parts of the strict lower
    triangle (column-major).
    """
    _check_stack(stack)
    b = serialize_blocks(stack.matrices)
    norms = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError("zero-norm covariance block cannot be normalized")
    return (b / norms).ravel()


def featurize_image(stack: CovarianceStack) -> np.ndarray:
    """Feature image of shape ``(M, M, C)``; channel c is block c reshaped row-major."""
    v = serialize_features(stack)
    return vector_to_image(v, stack.count)


def vector_to_image(vectors: np.ndarray, count: int = DEFAULT_COUNT) -> np.ndarray:
    """Reshape ``(..., C*16)`` feature vectors into ``(..., 4, 4, C)`` images."""
    v = np.asarray(vectors)
    lead = v.shape[:-1]
    blocks = v.reshape(*lead, count, FEATURE_ELEMENTS, FEATURE_ELEMENTS)
    return np.moveaxis(blocks, -3, -1)


def deserialize_block(b: np.ndarray, m: int = FEATURE_ELEMENTS) -> np.ndarray:
    """Rebuild the Hermitian matrix a 16-value block was serialized from."""
    b = np.asarray(b, dtype=float)
    ur, uc = _upper_idx(m)
    lr, lc = _lower_idx(m)
    n_upper = len(ur)
    re = np.zeros((m, m))
    re[ur, uc] = b[:n_upper]
    re = re + np.triu(re, 1).T
    im = np.zeros((m, m))
    im[lr, lc] = b[n_upper:]
    im = im - im.T
    return re + 1j * im


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardization fitted on the training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features) -> "FeatureScaler":
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or len(X) == 0:
            raise DomainError("scaler needs a non-empty (n, d) feature matrix")
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "FeatureScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))
