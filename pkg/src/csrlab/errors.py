"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition (shape, range, encoding)."""


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradient; carries the epoch and the last good state."""

    def __init__(self, message, epoch=None, snapshot=None):
        super().__init__(message)
        self.epoch = epoch
        self.snapshot = snapshot


class NormalizationDegenerate(RuntimeError):
    """gamma - min(M) fell below the safe divisor floor."""


class DegeneratePrediction(RuntimeError):
    """Every entry of a corrected prediction was at or below the clamp floor."""


class CsvFormatError(ValueError):
    """Malformed CSV input; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
