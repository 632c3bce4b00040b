"""Enumerations shared by the sampling, analytics and Monte Carlo modules."""
import enum


class MeasureKind(enum.Enum):
    """Distribution of the unbiased random component."""

    GAUSSIAN = "gaussian"
    SPHERE = "sphere"


class PolarizationKind(enum.Enum):
    UNBIASED = "unbiased"
    SEPARABLE = "separable"
    MAX_ENTANGLED = "maxent"
    FIXED_STATE = "fixed"
