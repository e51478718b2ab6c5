"""Hybrid quantum-classical classification toolkit for 4-class kidney-CT
style data: statevector-simulated QCNN with a trainable classical head,
image preprocessing, class-balanced sampling, and full evaluation
reporting."""

from .circuit import QcnnConfig, QcnnParams, WirePlan, forward
from .errors import ConfigurationError, FormatError
from .qsim import Statevector, new_statevector
from .train import Metrics, TrainConfig, compute_metrics, evaluate, fit

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "FormatError",
    "Metrics",
    "QcnnConfig",
    "QcnnParams",
    "Statevector",
    "TrainConfig",
    "WirePlan",
    "compute_metrics",
    "evaluate",
    "fit",
    "forward",
    "new_statevector",
    "__version__",
]
