"""Angle-of-arrival estimation for small uniform linear arrays.

Covariance features from multichannel IQ frames feed a hybrid
classification/regression network that reports the number of sources
(one or two) and their bearings; MUSIC is provided as a baseline.
"""

from .array import ArrayConfig, steering_vector
from .covariance import serialize_features, stack_covariances
from .music import estimate_aoa_music
from .signals import IQFrame, SourceSpec, synthesize_frame

__version__ = "0.1.0"

__all__ = ["ArrayConfig", "IQFrame", "SourceSpec", "estimate_aoa_music", "serialize_features",
           "stack_covariances", "steering_vector", "synthesize_frame"]
