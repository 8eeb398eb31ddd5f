"""Hybrid classification/regression network: a trunk plus three sigmoid heads."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..covariance import vector_to_image
from ..errors import ConfigurationError
from .layers import BatchNorm, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, ReLU, Sigmoid

LAYER_KINDS = ("dense", "relu", "dropout", "conv2d", "batchnorm", "maxpool", "sigmoid", "flatten")


@dataclass
class LayerSpec:
    kind: str
    units: int | None = None
    rate: float | None = None
    filters: int | None = None
    kernel: int | None = None
    pool: int | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")


@dataclass
class ModelSpec:
    name: str
    input_shape: tuple  # without batch axis
    trunk: list = field(default_factory=list)
    num_heads: int = 3

    def to_dict(self):
        return {"name": self.name, "input_shape": list(self.input_shape),
                "trunk": [{k: v for k, v in asdict(s).items() if v is not None} for s in self.trunk],
                "num_heads": self.num_heads}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], tuple(d["input_shape"]), [LayerSpec(**s) for s in d["trunk"]], d.get("num_heads", 3))


def fc_spec(num_elements=4, windows=8, dropout=0.2) -> ModelSpec:
    """Four ReLU dense layers (1024, 2048, 1024, 512), each followed by dropout."""
    trunk = []
    for units in (1024, 2048, 1024, 512):
        trunk += [LayerSpec("dense", units=units), LayerSpec("relu"), LayerSpec("dropout", rate=dropout)]
    return ModelSpec("fc", (num_elements * num_elements * windows,), trunk)


def cnn_spec(num_elements=4, windows=8, dropout=0.2) -> ModelSpec:
    """3x3 conv (512 filters) + batchnorm + ReLU + 2x2 max-pool, then dense 1024/1024/512."""
    trunk = [LayerSpec("conv2d", filters=512, kernel=3), LayerSpec("batchnorm"), LayerSpec("relu"),
             LayerSpec("maxpool", pool=2), LayerSpec("flatten")]
    for units in (1024, 1024, 512):
        trunk += [LayerSpec("dense", units=units), LayerSpec("relu"), LayerSpec("dropout", rate=dropout)]
    return ModelSpec("cnn", (num_elements, num_elements, windows), trunk)


def _make_layer(spec: LayerSpec, in_shape, rng, dtype) -> Layer:
    k = spec.kind
    if k == "dense":
        if len(in_shape) != 2:
            raise ConfigurationError(f"dense layer needs flat input, got {in_shape}")
        return Dense(in_shape[1], spec.units, rng, dtype)
    if k == "relu":
        return ReLU()
    if k == "sigmoid":
        return Sigmoid()
    if k == "dropout":
        return Dropout(spec.rate)
    if k == "flatten":
        return Flatten()
    if k == "conv2d":
        return Conv2D(in_shape[-1], spec.filters, spec.kernel, rng, dtype)
    if k == "batchnorm":
        return BatchNorm(in_shape[-1], dtype=dtype)
    if k == "maxpool":
        return MaxPool2D(spec.pool)
    raise ConfigurationError(k)


class HybridNet:
    """Trunk followed by a joint ``(B, 3)`` sigmoid output.

    Output column 0 is the two-source probability, columns 1 and 2 are the
    encoded angles. The three scalar heads share one weight matrix.
    """

    def __init__(self, spec: ModelSpec, seed=0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers: list[Layer] = []
        shape = (1, *spec.input_shape)
        self.shapes = [shape]
        for ls in spec.trunk:
            layer = _make_layer(ls, shape, rng, self.dtype)
            shape = layer.output_shape(shape)
            self.layers.append(layer)
            self.shapes.append(shape)
        if len(shape) != 2:
            raise ConfigurationError(f"trunk must end flat, ends with {shape}")
        self.head = Dense(shape[1], spec.num_heads, rng, self.dtype)
        self.head_act = Sigmoid()

    @property
    def all_layers(self):
        return [*self.layers, self.head, self.head_act]

    def forward(self, x, training=False, seed=None, rng=None, return_activations=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ConfigurationError(f"{self.spec.name} model expects input (B, {self.spec.input_shape}), "
                                     f"got {x.shape}")
        if training and rng is None:
            rng = np.random.default_rng(seed)
        acts = []
        for layer in self.all_layers:
            x = layer.forward(x, training, rng)
            acts.append(x.shape)
        if return_activations:
            return x, acts
        return x

    __call__ = forward

    def backward(self, grad_outputs):
        g = np.asarray(grad_outputs, dtype=self.dtype)
        for layer in reversed(self.all_layers):
            g = layer.backward(g)
        return g

    def parameters(self):
        """``[(name, array)]`` in a fixed order; arrays are live references."""
        out = []
        for i, layer in enumerate(self.all_layers):
            for k, v in layer.params.items():
                out.append((f"{i}.{k}", v))
        return out

    def gradients(self):
        out = []
        for layer in self.all_layers:
            for k in layer.params:
                out.append(layer.grads[k])
        return out

    def param_arrays(self):
        return [v for _, v in self.parameters()]

    def buffers(self):
        out = []
        for i, layer in enumerate(self.all_layers):
            for k, v in layer.buffers().items():
                out.append((f"{i}.{k}", v))
        return out

    def set_buffer(self, name, value):
        i, k = name.split(".", 1)
        setattr(self.all_layers[int(i)], k, value.astype(self.dtype))

    def num_parameters(self) -> int:
        return int(sum(v.size for _, v in self.parameters()))

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for layer in self.all_layers:
            layer.astype(self.dtype)
        return self

    def trunk_output_shapes(self, batch):
        """Output shape after every trunk layer for a given batch size."""
        return [(batch, *s[1:]) for s in self.shapes[1:]]


def build_model(kind: str, seed=0, dtype=np.float32, num_elements=4, windows=8) -> HybridNet:
    if kind == "fc":
        return HybridNet(fc_spec(num_elements, windows), seed, dtype)
    if kind == "cnn":
        return HybridNet(cnn_spec(num_elements, windows), seed, dtype)
    raise ConfigurationError(f"unknown model kind {kind!r} (expected 'fc' or 'cnn')")


def prepare_inputs(model: HybridNet, features) -> np.ndarray:
    """Feature vectors ``(B, C*M*M)`` in the layout the model consumes."""
    x = np.asarray(features, dtype=model.dtype)
    if len(model.spec.input_shape) == 3 and x.ndim == 2:
        x = vector_to_image(x, model.spec.input_shape[-1])
    return x
