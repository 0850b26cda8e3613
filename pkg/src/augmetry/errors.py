"""Exception types shared across the package."""


class AugmetryError(Exception):
    """Base class for all package errors."""


class EmptyInput(AugmetryError):
    """An operation received an empty point cloud where points are required."""


class InvalidTolerance(AugmetryError):
    """A proximity tolerance was zero or negative."""


class DegenerateCloud(AugmetryError):
    """Too few points, or points of insufficient rank, for a 3D hull."""


class CalibrationFailed(AugmetryError):
    """No proximity threshold on the ladder reproduces the reference volume."""


class JointLimit(AugmetryError):
    """A joint angle is outside its configured limits."""


class EmptyConfiguration(AugmetryError):
    """An arm configuration with zero modules."""


class DegenerateHuman(AugmetryError):
    """Human workspace volume is zero; ratios are undefined."""


class DegenerateRobot(AugmetryError):
    """Robot workspace volume is zero; workspace ratios are undefined."""


class NotFeasible(AugmetryError):
    """Autonomy selection was asked about an infeasible task/configuration pair."""


class Malformed(AugmetryError):
    """A quadratic program with inconsistent or invalid matrices."""


class InfeasibleStart(AugmetryError):
    """The stabilization run could not assemble a feasible initial pose."""


class ConfigError(AugmetryError):
    """A run configuration file violates the schema."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
