"""Coordinated sparse recovery for learning with noisy labels.

Small MLP classifiers on vector data, a per-sample sparse noise model with a
collaboration matrix and confidence weighting, sample-selection utilities, and
the diagnostics used to study how noise recovery tracks the classifier.
"""

from .errors import (
    ContractViolation,
    CsvFormatError,
    DegeneratePrediction,
    NormalizationDegenerate,
    TrainingDiverged,
)
from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "CsvFormatError",
    "DegeneratePrediction",
    "NormalizationDegenerate",
    "TrainingDiverged",
    "backend_name",
    "__version__",
]
