"""Polarized ensembles of bipartite random pure states."""
from .core_linalg import (
    Bipartition,
    DensityMatrix,
    DimensionError,
    DomainError,
    PureState,
    cross_operator,
    effective_dimension,
    partial_trace_b,
    purity,
    purity_decomposition,
    trace_product,
)
from .kinds import MeasureKind, PolarizationKind
from .sampling import (
    PolarizationSpec,
    RngStream,
    fixed_purity_sample,
    gaussian_state,
    haar_unitary,
    max_entangled_state,
    noisy_separable_sample,
    polarized_sample,
    separable_state,
    sphere_state,
    superpose,
)

__version__ = "0.1.0"
