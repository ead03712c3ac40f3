"""Low-light image/video enhancement with row-column separated attention.

The package is self-contained: a numpy-backed autodiff engine, the
attention and U-Net modules, training objectives, evaluation metrics, an
Adam trainer and a CLI (train / enhance / eval / gradcheck).
"""

from .losses import FeatureExtractor, LossWeights
from .network import (
    ModelConfig,
    URCSANet,
    load_into_model,
    load_model,
    save_model,
)
from .tensor import Parameter, Tensor, grad_check
from .trainer import TrainConfig, train_images, train_video

__version__ = "0.1.0"

__all__ = [
    "FeatureExtractor",
    "LossWeights",
    "ModelConfig",
    "Parameter",
    "Tensor",
    "TrainConfig",
    "URCSANet",
    "grad_check",
    "load_into_model",
    "load_model",
    "save_model",
    "train_images",
    "train_video",
    "__version__",
]
