"""A small numpy neural-network engine with manual backpropagation."""

from .model import HybridNet, build_model
from .train import TrainConfig, train

__all__ = ["HybridNet", "TrainConfig", "build_model", "train"]
