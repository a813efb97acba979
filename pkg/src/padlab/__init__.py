"""Desk-scale laboratory for phase/amplitude disentangled early stopping
under label noise."""

from ._kernels import BACKEND
from .autograd import Adam, SGD, Tensor, backward, no_grad, stop_gradient
from .errors import (
    ConfigurationError,
    DimensionError,
    InputError,
    NumericalIntegrityError,
    PadlabError,
    UsageError,
)
from .models import build_mlp, build_smallcnn
from .noise import NoisyDataset, make_noisy_dataset
from .spectral import GateMode, dft, disentangle, gated_forward, idft, recombine
from .training import PaddlesSchedule, run_paddles, select_confident, train_phase

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BACKEND",
    "ConfigurationError",
    "DimensionError",
    "GateMode",
    "InputError",
    "NoisyDataset",
    "NumericalIntegrityError",
    "PaddlesSchedule",
    "PadlabError",
    "SGD",
    "Tensor",
    "UsageError",
    "backward",
    "build_mlp",
    "build_smallcnn",
    "dft",
    "disentangle",
    "gated_forward",
    "idft",
    "make_noisy_dataset",
    "no_grad",
    "recombine",
    "run_paddles",
    "select_confident",
    "stop_gradient",
    "train_phase",
    "__version__",
]
