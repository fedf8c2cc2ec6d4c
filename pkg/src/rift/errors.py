"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition (bad shapes,
    out-of-range labels, incomplete mappings, malformed manifests)."""


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss. Carries the
    path of the diagnostic snapshot written just before aborting."""

    def __init__(self, message: str, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path
