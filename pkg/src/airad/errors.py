"""Exception types shared across the pipeline."""


class AiradError(Exception):
    """Base class for all pipeline errors."""


# --- I/O ---

class BadMagic(AiradError):
    pass


class UnsupportedDatatype(AiradError):
    pass


class TruncatedFile(AiradError):
    pass


class IoFailure(AiradError):
    pass


class EmptyInput(AiradError):
    pass


class UnsupportedTiffFeature(AiradError):
    pass


# --- preprocessing ---

class ObliqueAffine(AiradError):
    pass


class ConstantVolume(AiradError):
    pass


class ZeroVariance(AiradError):
    pass


class AlreadyPreprocessed(AiradError):
    pass


# --- inference ---

class ShapeMismatch(AiradError):
    pass


class MissingWeights(AiradError):
    pass


class ModelLoadError(AiradError):
    pass


# --- schedulers / folds ---

class StepOutOfRange(AiradError):
    pass


class TooFewRecords(AiradError):
    pass


# --- metrics ---

class EmptyGroundTruth(AiradError):
    pass


class EmptyMask(AiradError):
    pass


# --- mesh ---

class MalformedLine(AiradError):
    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


# --- phantom / service ---

class SpecOverlap(AiradError):
    pass


class BindFailure(AiradError):
    pass
