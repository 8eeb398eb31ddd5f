"""Mini-batch training with a staged loss-weight schedule."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..metrics import EvalRecord, classification_accuracy, penalized_rmse
from .labels import decode_batch, label_angles
from .losses import hybrid_loss
from .model import HybridNet, prepare_inputs
from .optim import Adam

log = logging.getLogger(__name__)

DEFAULT_STAGES = ((40, (0.1, 1.0, 1.0)), (10, (0.001, 1.0, 1.0)))


@dataclass
class TrainConfig:
    lr: float = 1e-3
    decay: float = 1e-6
    batch_size: int = 512
    stages: tuple = DEFAULT_STAGES  # ((epochs, tau), ...)
    seed: int = 0
    threshold: float = 0.5
    keep_best: bool = False  # restore the weights of the epoch with the lowest val_rmse

    def __post_init__(self):
        for epochs, tau in self.stages:
            if epochs < 0 or len(tau) != 3 or min(tau) < 0:
                raise ConfigurationError(f"bad stage ({epochs}, {tau})")

    @property
    def total_epochs(self) -> int:
        return sum(e for e, _ in self.stages)

    def tau_for_epoch(self, epoch: int):
        """Loss weights for a 0-based epoch index."""
        start = 0
        for epochs, tau in self.stages:
            if epoch < start + epochs:
                return tuple(tau)
            start += epochs
        return tuple(self.stages[-1][1])


@dataclass
class History:
    rows: list = field(default_factory=list)
    best_epoch: int | None = None  # set when training kept the best-validation weights

    COLUMNS = ("epoch", "L_c", "L_r1", "L_r2", "val_rmse", "val_acc")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r[c] for c in self.COLUMNS])

    def column(self, name):
        return np.array([r[name] for r in self.rows])


def predict(model: HybridNet, features, batch_size: int = 2048) -> np.ndarray:
    """Eval-mode head outputs ``(B, 3)`` for (already scaled) feature vectors."""
    x = prepare_inputs(model, features)
    out = [model.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, 3), dtype=model.dtype)


def to_records(outputs, labels, snrs=None, threshold: float = 0.5) -> list[EvalRecord]:
    L, angles = decode_batch(outputs, threshold)
    recs = []
    for i, lab in enumerate(np.asarray(labels)):
        truth = label_angles(lab)
        snr = float(snrs[i]) if snrs is not None else float("nan")
        recs.append(EvalRecord(len(truth), truth, int(L[i]), list(angles[i]), snr))
    return recs


def train(model: HybridNet, train_set, val_set=None, config: TrainConfig = TrainConfig(),
          on_epoch=None) -> History:
    """Train in place; ``train_set``/``val_set`` are ``(features, labels)`` pairs.

    Features must already be standard-scaled. Batches are reshuffled every
    epoch from ``config.seed``; dropout masks come from the same stream.
    """
    X, Y = train_set
    if len(X) == 0:
        raise ConfigurationError("empty training split")
    if val_set is not None and len(val_set[0]) == 0:
        raise ConfigurationError("empty validation split")
    X = prepare_inputs(model, X)
    Y = np.asarray(Y, dtype=model.dtype)
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.param_arrays(), lr=config.lr, decay=config.decay)
    history = History()
    n = len(X)
    best, best_rmse = None, np.inf
    for epoch in range(config.total_epochs):
        t0 = time.perf_counter()
        tau = config.tau_for_epoch(epoch)
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out = model.forward(X[idx], training=True, rng=rng)
            _, parts, grad = hybrid_loss(out, Y[idx], tau)
            model.backward(grad)
            opt.step(model.gradients())
            sums += np.asarray(parts) * len(idx)
        row = {"epoch": epoch + 1, "L_c": sums[0] / n, "L_r1": sums[1] / n, "L_r2": sums[2] / n,
               "val_rmse": float("nan"), "val_acc": float("nan")}
        if val_set is not None:
            recs = to_records(predict(model, val_set[0]), val_set[1], threshold=config.threshold)
            row["val_rmse"] = penalized_rmse(recs)
            row["val_acc"] = classification_accuracy(recs)
            if config.keep_best and row["val_rmse"] < best_rmse:
                best_rmse = row["val_rmse"]
                best = (epoch + 1, [p.copy() for p in model.param_arrays()],
                        [(name, b.copy()) for name, b in model.buffers()])
        history.rows.append(row)
        log.info("epoch %d tau=%s L_c=%.4f L_r1=%.5f L_r2=%.5f val_rmse=%.3f val_acc=%.4f (%.1fs)",
                 epoch + 1, tau, row["L_c"], row["L_r1"], row["L_r2"], row["val_rmse"], row["val_acc"],
                 time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(row)
    if best is not None:
        history.best_epoch, params, buffers = best
        for live, saved in zip(model.param_arrays(), params):
            live[...] = saved
        for name, value in buffers:
            model.set_buffer(name, value)
        log.info("restored weights from epoch %d (val_rmse=%.3f)", history.best_epoch, best_rmse)
    return history
