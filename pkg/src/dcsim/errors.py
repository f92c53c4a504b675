"""Exception types with stable machine-readable codes.

Every error that can surface through the CLI carries a ``code`` attribute;
the CLI maps error categories to exit codes (2 config, 3 engine, 4 analysis).
"""


class DcsimError(Exception):
    """Base class for all dcsim errors."""

    code = "Error"

    def __init__(self, message, **fields):
        super().__init__(message)
        self.fields = fields

    def report(self):
        return {"error_code": self.code, "message": str(self), **self.fields}


# --- configuration / model validation (CLI exit 2) ---

class ConfigError(DcsimError):
    code = "ConfigError"


class UnknownState(ConfigError):
    code = "UnknownState"


class DuplicateLabel(ConfigError):
    code = "DuplicateLabel"


class NegativeRate(ConfigError):
    code = "NegativeRate"


class ThresholdViolation(ConfigError):
    code = "ThresholdViolation"


class UnknownChannel(ConfigError):
    code = "UnknownChannel"


# --- engine (CLI exit 3) ---

class EngineError(DcsimError):
    code = "EngineError"


class StabilityViolation(EngineError):
    code = "StabilityViolation"


class NonConvergence(EngineError):
    code = "NonConvergence"


class StepOutOfBounds(EngineError):
    code = "StepOutOfBounds"


# --- analysis (CLI exit 4) ---

class AnalysisError(DcsimError):
    code = "AnalysisError"


class DegenerateInput(AnalysisError):
    code = "DegenerateInput"


class NoCrossing(AnalysisError):
    """The profile never crosses the threshold (torus not formed yet)."""

    code = "NoCrossing"


class EmptyAnnulus(AnalysisError):
    code = "EmptyAnnulus"


class ZeroVariance(AnalysisError):
    code = "ZeroVariance"


class InsufficientEvents(AnalysisError):
    code = "InsufficientEvents"


class MissingArtifact(AnalysisError):
    code = "MissingArtifact"
