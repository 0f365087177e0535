"""
Exception hierarchy for the monitoring pipeline.

Every error carries a ``stage`` tag, the way an HTTP error carries a status
code, so the command line can report where a run failed.
"""


class ShazamError(Exception):
    """Base error. ``detail`` is the human readable message."""

    stage: str = "shazam"

    def __init__(self, detail: str, stage: str | None = None):
        super().__init__(detail)
        self.detail = detail
        if stage is not None:
            self.stage = stage

    def __str__(self) -> str:
        return f"[{self.stage}] {self.detail}"


class SitsDataError(ShazamError):
    stage = "sits_data"


class EncodingError(ShazamError):
    stage = "encodings"


class ModelError(ShazamError):
    stage = "siu_net"


class TrainingError(ModelError):
    """Raised when optimisation diverges. ``batch_index`` names the offending batch."""

    def __init__(self, detail: str, batch_index: int | None = None, epoch: int | None = None):
        super().__init__(detail)
        self.batch_index = batch_index
        self.epoch = epoch


class ScoringError(ShazamError):
    stage = "scoring"


class ThresholdFitError(ShazamError):
    stage = "threshold"


class EvaluationError(ShazamError):
    stage = "evaluation"


class SceneConfigError(ShazamError):
    stage = "synthgen"


class ArtifactError(ShazamError):
    """Missing, corrupt or mismatched pipeline artifacts."""

    stage = "artifacts"


class StageError(ShazamError):
    """Raised by the services; wraps any failure with the command it happened in."""
