"""Exception types shared across the package.

Every exception carries a kebab-case ``code`` used by the CLI for its
machine-parseable error line (``error: <code>: <detail>``).
"""


class SnapSpecError(Exception):
    code = "error"


class UnsupportedOrder(SnapSpecError):
    """Requested coding-matrix order admits no known construction."""

    code = "unsupported-order"


class AllZeroIntensity(SnapSpecError):
    """Coded intensity is identically zero; no normalization possible."""

    code = "all-zero-intensity"


class SingularSnap(SnapSpecError):
    """Normalized measurement matrix is numerically non-invertible."""

    code = "singular-snap"


class PerturbationTooLarge(SnapSpecError):
    """Perturbation projection coefficient reached or exceeded 1."""

    code = "perturbation-too-large"


class FormatError(SnapSpecError):
    """Malformed or inconsistent data file."""

    code = "bad-format"


class ConfigError(SnapSpecError):
    """Invalid experiment configuration."""

    code = "bad-config"


class TrainingDiverged(SnapSpecError):
    """Training loss became non-finite."""

    code = "training-diverged"

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")
