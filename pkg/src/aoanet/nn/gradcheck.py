"""Central finite-difference checks for layers and whole networks."""

from __future__ import annotations

import numpy as np

from .losses import hybrid_loss


# Below this magnitude both derivatives are treated as zero. Central
# differences with h=1e-4 through a deep float64 net carry ~1e-10 of
# round-off, so a structurally zero gradient (e.g. a conv bias feeding batch
# norm, which removes any per-channel offset) would otherwise show a large
# "relative" error. Real gradients here are orders of magnitude larger.
ZERO_FLOOR = 1e-6


def _rel_err(a, n, floor=ZERO_FLOOR):
    return abs(a - n) / max(abs(a), abs(n), floor)


def _coords(shape, rng, count):
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(count, size), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def check_layer(layer, x, rng, training=False, h=1e-4, coords=8, forward_seed=0):
    """Max relative error of a layer's input and parameter gradients.

    The scalar probe is ``sum(out * G)`` for a fixed random ``G``; any
    randomness inside the layer (dropout) is replayed from ``forward_seed``.
    Returns ``{name: max_rel_err}`` with ``"x"`` for the input gradient.
    """
    x = np.array(x, dtype=np.float64)

    def run(inp):
        return layer.forward(inp, training, np.random.default_rng(forward_seed))

    out = run(x)
    G = rng.standard_normal(out.shape)
    dx = layer.backward(G)
    analytic = {"x": dx, **{k: v.copy() for k, v in layer.grads.items()}}
    targets = {"x": x, **layer.params}
    result = {}
    for name, arr in targets.items():
        worst = 0.0
        for idx in _coords(arr.shape, rng, coords):
            old = arr[idx]
            arr[idx] = old + h
            fp = float(np.sum(run(x) * G))
            arr[idx] = old - h
            fm = float(np.sum(run(x) * G))
            arr[idx] = old
            layer._cache = None
            worst = max(worst, _rel_err(analytic[name][idx], (fp - fm) / (2 * h)))
        result[name] = worst
    return result


def check_model(model, x, y, tau=(0.1, 1.0, 1.0), rng=None, h=1e-5, coords=6, training=True, forward_seed=0):
    """Max relative error per parameter tensor of the full hybrid loss.

    ``model`` should be float64. Training mode (dropout, batch statistics)
    is exercised with masks replayed from ``forward_seed``. The small default
    step keeps the +-h probe from straddling a ReLU or max-pool kink, which
    a deep ReLU net hits often enough at h=1e-4 to make the check flaky.
    """
    rng = rng or np.random.default_rng(0)

    def loss():
        out = model.forward(x, training=training, seed=forward_seed)
        total, _, grad = hybrid_loss(out, y, tau)
        return total, grad

    _, grad = loss()
    model.backward(grad)
    analytic = [g.copy() for g in model.gradients()]
    result = {}
    for (name, arr), ga in zip(model.parameters(), analytic):
        worst = 0.0
        for idx in _coords(arr.shape, rng, coords):
            old = arr[idx]
            arr[idx] = old + h
            fp, _ = loss()
            arr[idx] = old - h
            fm, _ = loss()
            arr[idx] = old
            worst = max(worst, _rel_err(ga[idx], (fp - fm) / (2 * h)))
        result[name] = worst
    for layer in model.all_layers:
        layer._cache = None
    return result
