"""Exception types raised across the package."""


class BennsError(Exception):
    """Base class for all package errors."""

    kind = "error"


class InvalidArgumentError(BennsError, ValueError):
    kind = "invalid-argument"


class UnsupportedChainError(BennsError, ValueError):
    kind = "unsupported-chain"


class InvalidGenomeError(BennsError, ValueError):
    kind = "invalid-genome"


class NoPathError(BennsError):
    kind = "no-path"


class DegenerateColumnError(BennsError, ValueError):
    kind = "degenerate-column"


class UndefinedDemandError(BennsError):
    kind = "undefined-demand"


class EmptyDatasetError(BennsError, ValueError):
    kind = "empty-dataset"


class MissingPredictorError(BennsError, KeyError):
    kind = "missing-predictor"


class ModelFormatError(BennsError):
    kind = "model-format"


class UnsetFitnessError(BennsError):
    kind = "unset-fitness"


class UnknownExperimentError(BennsError, KeyError):
    kind = "unknown-experiment"
