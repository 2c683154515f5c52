"""ASPEN dual-stream EEG decoder."""

from .dataset import EEGDataset
from .errors import AspenError, ConfigError, FormatError, ParameterError
from .fusion import STRATEGIES, build_fusion
from .model import AspenModel, ModelConfig, SpenModel, build_model
from .signal import StftConfig, generate_stft_search_space, spectral_tensor, stft
from .training import TrainConfig, train, train_and_evaluate

__version__ = "0.1.0"

__all__ = [
    "AspenError",
    "AspenModel",
    "ConfigError",
    "EEGDataset",
    "FormatError",
    "ModelConfig",
    "ParameterError",
    "STRATEGIES",
    "SpenModel",
    "StftConfig",
    "TrainConfig",
    "build_fusion",
    "build_model",
    "generate_stft_search_space",
    "spectral_tensor",
    "stft",
    "train",
    "train_and_evaluate",
]
