import numpy as np


def adam_step(params, grads, state, step, lr=1e-3, decay=1e-6, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update.

    ``params``/``grads`` are parallel lists of arrays, ``state`` a dict with
    lists ``m`` and ``v`` (created on first use). ``step`` counts from 1 and
    sets both bias correction and inverse-time decay ``lr/(1 + decay*step)``.
    """
    if "m" not in state:
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    lr_t = lr / (1.0 + decay * step)
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= (lr_t * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return params, state


class Adam:
    def __init__(self, params, lr=1e-3, decay=1e-6, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.decay, self.beta1, self.beta2, self.eps = lr, decay, beta1, beta2, eps
        self.state = {}
        self.iterations = 0

    def step(self, grads):
        self.iterations += 1
        adam_step(self.params, grads, self.state, self.iterations,
                  self.lr, self.decay, self.beta1, self.beta2, self.eps)
