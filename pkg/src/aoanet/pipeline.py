"""Glue between features, trained models and the MUSIC baseline."""

from __future__ import annotations

import platform
import time
from dataclasses import asdict, dataclass

import numpy as np

from .array import ArrayConfig
from .covariance import FeatureScaler, detect_signal, serialize_features, stack_covariances
from .metrics import EvalRecord
from .music import estimate_aoa_music
from .nn.labels import decode_prediction, label_angles
from .nn.model import HybridNet, prepare_inputs
from .nn.train import predict, to_records
from .signals import IQFrame


def infer_vector(model: HybridNet, scaler: FeatureScaler, features, threshold: float = 0.5) -> dict:
    """Single feature vector in, ``{"L", "angles_deg", "p"}`` out."""
    x = scaler.transform(np.asarray(features, dtype=float)[None])
    p, z1, z2 = model.forward(prepare_inputs(model, x))[0]
    L, angles = decode_prediction(float(p), float(z1), float(z2), threshold)
    return {"L": L, "angles_deg": [round(a, 4) for a in angles], "p": float(p)}


def infer_frame(model: HybridNet, scaler: FeatureScaler, frame: IQFrame, threshold: float = 0.5,
                window_length: int = 2**12, count: int = 8, magnitude_threshold: float = 1e-4) -> dict:
    """Detection gate, then the network. A frame with no signal gives ``{"L": 0}``."""
    stack = stack_covariances(frame, window_length, count)
    if not detect_signal(stack.mean(), magnitude_threshold):
        return {"L": 0, "angles_deg": [], "p": None}
    return infer_vector(model, scaler, serialize_features(stack), threshold)


def model_records(model: HybridNet, scaler: FeatureScaler, features, labels, snr_db=None,
                  threshold: float = 0.5) -> list[EvalRecord]:
    features = np.asarray(features, dtype=float)
    snrs = None if snr_db is None else np.broadcast_to(np.asarray(snr_db, dtype=float), (len(features),))
    return to_records(predict(model, scaler.transform(features)), labels, snrs, threshold)


def music_records(covariances, labels, snr_db=float("nan"), config: ArrayConfig = ArrayConfig()) -> list[EvalRecord]:
    """MUSIC with the true source count on each window-averaged covariance."""
    out = []
    for R, lab in zip(covariances, labels):
        truth = label_angles(lab)
        est = estimate_aoa_music(R, len(truth), config)
        out.append(EvalRecord(len(truth), truth, len(truth), list(est), float(snr_db)))
    return out


@dataclass
class BenchReport:
    model: str
    parameters: int
    runs: int
    mean_latency_ms: float
    p95_latency_ms: float
    platform: str

    def to_dict(self):
        return asdict(self)


def bench(model: HybridNet, scaler: FeatureScaler | None = None, runs: int = 1000, seed: int = 0,
          warmup: int = 20) -> BenchReport:
    """Time single-sample feature-to-angles inference, decode included."""
    dim = int(np.prod(model.spec.input_shape))
    scaler = scaler or FeatureScaler.identity(dim)
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((runs + warmup, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    times = []
    for i, v in enumerate(vecs):
        t0 = time.perf_counter()
        infer_vector(model, scaler, v)
        if i >= warmup:
            times.append(time.perf_counter() - t0)
    ms = 1e3 * np.asarray(times)
    return BenchReport(model.spec.name, model.num_parameters(), runs, float(ms.mean()),
                       float(np.percentile(ms, 95)), f"{platform.machine()} {platform.system()}")
