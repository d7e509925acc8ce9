"""Exception hierarchy shared by all riesim modules."""


class RieError(Exception):
    """Base class for every error raised by riesim."""

    kind = "rie"


class GeometryError(RieError, ValueError):
    kind = "geometry"


class DegenerateDensityError(RieError, ValueError):
    kind = "degenerate-density"


class VanishingPosteriorError(RieError, ArithmeticError):
    """All accumulated likelihood mass is zero.

    Usually means sigma_B or P is too small for the grid, or that the
    transfer pushed every sample far outside the window.
    """

    kind = "vanishing-posterior"


class NotNormalizedError(RieError, ValueError):
    kind = "not-normalized"


class AcceptanceRateError(RieError, RuntimeError):
    kind = "acceptance-rate"


class ConfigError(RieError, ValueError):
    """Carries every problem found in a config, not just the first."""

    kind = "config"

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SnapshotFormatError(RieError, ValueError):
    kind = "snapshot-format"


class LockError(RieError, RuntimeError):
    kind = "lock"
