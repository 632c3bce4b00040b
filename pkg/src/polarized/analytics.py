"""
Closed-form predictions for polarized ensembles.

All formulas take the dimensions as a :class:`Bipartition` ``(N, M)``.  The
Gaussian unbiased purity ``(M+N)/(MN)`` is the default throughout; the exact
sphere value ``(M+N)/(MN+1)`` enters only through :func:`predict` and
:func:`expected_moments` when the sphere measure is requested.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core_linalg import Bipartition, DomainError, partial_trace_b, purity
from .kinds import MeasureKind, PolarizationKind

__all__ = [
    "PurityPrediction",
    "ThresholdResult",
    "TailBound",
    "DeltaNetQuery",
    "MomentExpectations",
    "pi_unbiased",
    "pi_unbiased_exact",
    "pi_unbiased_for",
    "mean_purity",
    "mean_purity_separable",
    "mean_purity_maxent",
    "predict",
    "reference_purity",
    "epsilon_for_purity",
    "eta_star",
    "eta_star_asymptotic",
    "norm_tail_bound",
    "purity_tail_bound",
    "delta_net_log_cardinality",
    "expected_moments",
]


@dataclass(frozen=True)
class PurityPrediction:
    mean_purity: float
    pi0: float
    epsilon: float
    dims: Bipartition
    measure: MeasureKind


@dataclass(frozen=True)
class ThresholdResult:
    eta_star: float
    eta_star_squared: float
    pi_unb: float
    saturated: bool


@dataclass(frozen=True)
class TailBound:
    alpha: float
    bound: float
    dims: Bipartition
    epsilon: float
    kind: str


@dataclass(frozen=True)
class DeltaNetQuery:
    delta: float
    schmidt_rank: int
    dims: Bipartition


@dataclass(frozen=True)
class MomentExpectations:
    tr_sigma0_sq_coeff: float
    tr_sigma_sq: float
    tr_sigma0_sigma: float
    tr_S_sq: float
    cross_terms: float


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")


def pi_unbiased(dims: Bipartition) -> float:
    """Typical purity of the unbiased Gaussian ensemble, ``(M+N)/(MN)``.

    Exceeds one for ``N = 1``; callers that need a proper purity reject that case.
    """
    n, m = dims.n_a, dims.n_b
    return (m + n) / (m * n)


def pi_unbiased_exact(dims: Bipartition) -> float:
    """Lubkin's mean purity for uniform unit vectors, ``(M+N)/(MN+1)``."""
    n, m = dims.n_a, dims.n_b
    return (m + n) / (m * n + 1)


def pi_unbiased_for(dims: Bipartition, measure: MeasureKind) -> float:
    if MeasureKind(measure) is MeasureKind.SPHERE:
        return pi_unbiased_exact(dims)
    return pi_unbiased(dims)


def mean_purity(epsilon: float, pi0: float, dims: Bipartition) -> float:
    """``eps^4 pi0 + (1 - eps^4) (M+N)/(MN)``."""
    _check_epsilon(epsilon)
    if not 1.0 / dims.n_a <= pi0 <= 1.0:
        raise DomainError(f"pi0 must lie in [1/N, 1], got {pi0}")
    e4 = epsilon**4
    return e4 * pi0 + (1.0 - e4) * pi_unbiased(dims)


def mean_purity_separable(epsilon: float, dims: Bipartition) -> float:
    # (M+N)/MN + eps^4 (MN-M-N)/MN
    return mean_purity(epsilon, 1.0, dims)


def mean_purity_maxent(epsilon: float, dims: Bipartition) -> float:
    # (M+N)/MN - eps^4/M
    return mean_purity(epsilon, 1.0 / dims.n_a, dims)


def predict(epsilon: float, pi0: float, dims: Bipartition, measure: MeasureKind = MeasureKind.GAUSSIAN) -> PurityPrediction:
    """Ensemble mean purity for a given measure of the random component.

    For the Gaussian measure this is :func:`mean_purity`.  For the sphere
    measure only ``E[Tr sigma^2]`` changes, so the weight ``(1-eps^2)^2`` of that
    term picks up Lubkin's value while the cross terms keep ``1/N`` and ``2/M``.
    ``pi0`` is the (expected) purity of the reference state.
    """
    measure = MeasureKind(measure)
    _check_epsilon(epsilon)
    e4 = epsilon**4
    p_unb = pi_unbiased(dims)
    if measure is MeasureKind.GAUSSIAN:
        value = e4 * pi0 + (1.0 - e4) * p_unb
    else:
        e2 = epsilon * epsilon
        w = 1.0 - e2
        value = e4 * pi0 + w * w * pi_unbiased_exact(dims) + 2.0 * e2 * w * p_unb
    return PurityPrediction(value, pi0, epsilon, dims, measure)


def reference_purity(kind: PolarizationKind, dims: Bipartition, measure: MeasureKind = MeasureKind.GAUSSIAN, state=None) -> float:
    """Purity (or expected purity, for an unbiased reference) of the polarizing state."""
    kind = PolarizationKind(kind)
    if kind is PolarizationKind.SEPARABLE:
        return 1.0
    if kind is PolarizationKind.MAX_ENTANGLED:
        return 1.0 / dims.n_a
    if kind is PolarizationKind.UNBIASED:
        return pi_unbiased_for(dims, measure)
    if state is None:
        raise ValueError("fixed polarization needs the reference state")
    return purity(partial_trace_b(state))


def epsilon_for_purity(target_purity: float, dims: Bipartition) -> tuple[float, float, PolarizationKind]:
    """Invert the mean-purity law for a target value.

    Returns ``(epsilon, pi0, kind)``: a separable reference (``pi0 = 1``) above
    the unbiased purity, a maximally entangled one (``pi0 = 1/N``) below it, and
    ``epsilon = 0`` with an unbiased kind at the tie.
    """
    n = dims.n_a
    if n < 2:
        raise DomainError("N = 1 has purity identically 1; there is nothing to tune")
    target = float(target_purity)
    if not 1.0 / n <= target <= 1.0:
        raise DomainError(f"target purity must lie in [1/N, 1] = [{1.0 / n}, 1], got {target}")
    p_unb = pi_unbiased(dims)
    if target == p_unb:
        return 0.0, p_unb, PolarizationKind.UNBIASED
    if target > p_unb:
        pi0, kind = 1.0, PolarizationKind.SEPARABLE
    else:
        dims.require_a_smaller()
        pi0, kind = 1.0 / n, PolarizationKind.MAX_ENTANGLED
    ratio = (target - p_unb) / (pi0 - p_unb)
    # ratio is exactly 1 at the endpoints; clip guards against 1 + ulp
    eps = min(1.0, ratio ** 0.25)
    return eps, pi0, kind


def eta_star(dims: Bipartition) -> ThresholdResult:
    """Noise strength at which ``1 / E[purity]`` of the noisy product state reaches 2.

    ``eta*^2 = 1 - sqrt((1 - 2 pi_unb) / (2 - 2 pi_unb))``.  When ``pi_unb > 1/2``
    the mean purity never drops to 1/2 and the result is flagged ``saturated``
    with ``eta* = 1``.
    """
    p = pi_unbiased(dims)
    if p > 0.5:
        return ThresholdResult(1.0, 1.0, p, True)
    radicand = (1.0 - 2.0 * p) / (2.0 - 2.0 * p)
    eta2 = 1.0 - math.sqrt(radicand)
    return ThresholdResult(math.sqrt(eta2), eta2, p, False)


def eta_star_asymptotic() -> float:
    return math.sqrt(1.0 - 1.0 / math.sqrt(2.0))


def _tail(alpha: float, dims: Bipartition, epsilon: float, denom: float, kind: str) -> TailBound:
    if not alpha > 0.0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    _check_epsilon(epsilon)
    spread = 1.0 - epsilon * epsilon
    if spread == 0.0:
        bound = 0.0
    else:
        bound = 2.0 * math.exp(-dims.total * alpha * alpha / (denom * spread))
    return TailBound(alpha, bound, dims, epsilon, kind)


def norm_tail_bound(alpha: float, dims: Bipartition, epsilon: float) -> TailBound:
    """``Pr(| |psi|^2 - 1 | > alpha) <= 2 exp(-NM alpha^2 / (2 (1 - eps^2)))``.

    Not clamped to 1.  At ``epsilon = 1`` the state is deterministic and the
    bound is 0.
    """
    return _tail(alpha, dims, epsilon, 2.0, "norm")


def purity_tail_bound(alpha: float, dims: Bipartition, epsilon: float) -> TailBound:
    """``Pr(|pi - E pi| > alpha) <= 2 exp(-NM alpha^2 / (32 (1 - eps^2)))``."""
    return _tail(alpha, dims, epsilon, 32.0, "purity")


def delta_net_log_cardinality(q: DeltaNetQuery) -> float:
    """Natural log of ``(10/delta)^(2k(N+M))``, the delta-net size bound at Schmidt rank k."""
    if not 0.0 < q.delta <= 10.0:
        raise DomainError(f"delta must lie in (0, 10], got {q.delta}")
    if q.schmidt_rank < 1:
        raise DomainError(f"Schmidt rank must be >= 1, got {q.schmidt_rank}")
    return 2.0 * q.schmidt_rank * (q.dims.n_a + q.dims.n_b) * math.log(10.0 / q.delta)


def expected_moments(dims: Bipartition, measure: MeasureKind = MeasureKind.GAUSSIAN) -> MomentExpectations:
    """Expectations of the trace terms for a unit reference and random ``phi``.

    ``tr_sigma0_sq_coeff`` is the weight of ``pi0`` (it is not averaged), the
    two mixed terms ``Tr(sigma0 S)`` and ``Tr(sigma S)`` have zero mean.
    """
    n, m = dims.n_a, dims.n_b
    return MomentExpectations(
        tr_sigma0_sq_coeff=1.0,
        tr_sigma_sq=pi_unbiased_for(dims, measure),
        tr_sigma0_sigma=1.0 / n,
        tr_S_sq=2.0 / m,
        cross_terms=0.0,
    )
