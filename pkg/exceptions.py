"""Error types raised across rssiforge. The CLI maps RSSIForgeError to a non-zero exit."""

from typing import Dict, Optional


class RSSIForgeError(Exception):
    """Base class for every error this package raises on purpose"""


class DatasetError(RSSIForgeError, ValueError):
    pass


class ShapeMismatchError(RSSIForgeError, ValueError):
    pass


class InsufficientSamplesError(RSSIForgeError, ValueError):
    """A class has too few windows for the requested operation"""

    def __init__(self, message: str, class_id: Optional[int] = None):
        super().__init__(message)
        self.class_id = class_id


class TrainingDivergenceError(RSSIForgeError):
    """Critic loss or gradients left the finite/bounded range"""

    def __init__(self, message: str, diagnostics: Optional[Dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CheckpointError(RSSIForgeError):
    pass


class TransferError(RSSIForgeError, ValueError):
    pass


class PipelineConfigError(RSSIForgeError, ValueError):
    pass


class StageError(RSSIForgeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
