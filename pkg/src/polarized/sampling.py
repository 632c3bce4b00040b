"""
Random state generators for polarized ensembles.

Every sampler takes an :class:`RngStream`, a ``(master_seed, stream_id)`` pair
that maps to a Philox generator keyed by both numbers.  Samplers that need two
independent draws (reference state and random component) split the stream into
sub-streams ``2*stream_id`` and ``2*stream_id + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .analytics import epsilon_for_purity
from .core_linalg import Bipartition, DimensionError, DomainError, PureState
from .kinds import MeasureKind, PolarizationKind

__all__ = [
    "RngStream",
    "StreamPool",
    "MeasureKind",
    "PolarizationKind",
    "PolarizationSpec",
    "FixedPuritySample",
    "gaussian_state",
    "sphere_state",
    "haar_unitary",
    "separable_state",
    "max_entangled_state",
    "superpose",
    "polarized_sample",
    "polarized_batch",
    "noisy_separable_sample",
    "fixed_purity_sample",
]

_U64 = 1 << 64
REFERENCE_SUBSTREAM = 0
RANDOM_SUBSTREAM = 1


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = int(getattr(self, name))
            if not 0 <= value < _U64:
                raise DomainError(f"{name} must fit in an unsigned 64-bit integer, got {value}")
            object.__setattr__(self, name, value)

    def substream(self, index: int) -> "RngStream":
        if index not in (0, 1):
            raise ValueError("substream index must be 0 or 1")
        return RngStream(self.master_seed, (2 * self.stream_id + index) % _U64)

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


class StreamPool:
    """Reuses one Philox instance, rekeying it per stream.

    Building a fresh Philox costs roughly ten times more than resetting its
    state, which dominates tight Monte Carlo loops over small systems.  The
    returned generator is only valid until the next call.
    """

    def __init__(self):
        self._bitgen = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def generator(self, stream: RngStream) -> np.random.Generator:
        return self.rekey(stream.master_seed, stream.stream_id)

    def rekey(self, master_seed: int, stream_id: int) -> np.random.Generator:
        """Generator for ``RngStream(master_seed, stream_id)`` without building the stream object."""
        st = self._state
        st["state"]["counter"][:] = 0
        st["state"]["key"][0] = master_seed
        st["state"]["key"][1] = stream_id % _U64
        st["buffer"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen


@dataclass(frozen=True)
class PolarizationSpec:
    kind: PolarizationKind
    epsilon: float = 0.0
    randomize_local: bool = True
    state: Optional[PureState] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", PolarizationKind(self.kind))
        eps = float(self.epsilon)
        if not 0.0 <= eps <= 1.0:
            raise DomainError(f"epsilon must lie in [0, 1], got {eps}")
        object.__setattr__(self, "epsilon", eps)
        if self.kind is PolarizationKind.FIXED_STATE:
            if self.state is None:
                raise ValueError("a fixed-state polarization needs a state")
            if abs(self.state.norm_sq - 1.0) > 1e-12:
                raise DomainError(
                    f"fixed polarizing state must be unit norm, got |phi0|^2 = {self.state.norm_sq!r}"
                )
        elif self.state is not None:
            raise ValueError(f"{self.kind.value} polarization does not take a state")

    def with_epsilon(self, epsilon: float) -> "PolarizationSpec":
        return PolarizationSpec(self.kind, epsilon, self.randomize_local, self.state)

    def check_dims(self, dims: Bipartition) -> None:
        if self.kind is PolarizationKind.MAX_ENTANGLED:
            dims.require_a_smaller()
        if self.state is not None and self.state.dims != dims:
            raise DimensionError(f"fixed state has dims {self.state.dims}, expected {dims}")


# -- array-level draws -------------------------------------------------------
# These return (N, M) coefficient matrices and are shared by the single-sample
# API and the batched Monte Carlo path, so both consume identical random bits.

def _complex_normal(gen: np.random.Generator, shape, variance: float) -> np.ndarray:
    # consecutive normals are (re, im) pairs
    re_im = gen.standard_normal(2 * math.prod(shape))
    z = re_im.view(np.complex128).reshape(shape)
    z *= math.sqrt(variance / 2.0)
    return z


def _gaussian_coeffs(dims: Bipartition, gen: np.random.Generator) -> np.ndarray:
    return _complex_normal(gen, (dims.n_a, dims.n_b), 1.0 / dims.total)


def _unit_vector(shape, gen: np.random.Generator) -> np.ndarray:
    # one resample on the (measure-zero) zero draw, then give up
    for _ in range(2):
        v = _complex_normal(gen, shape, 1.0)
        nrm = math.sqrt(np.vdot(v, v).real)
        if nrm > 0.0:
            v /= nrm
            return v
    raise FloatingPointError("Gaussian draw returned the zero vector twice")


def _haar(dim: int, gen: np.random.Generator) -> np.ndarray:
    z = _complex_normal(gen, (dim, dim), 1.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _draw_phi(dims: Bipartition, measure: MeasureKind, gen: np.random.Generator) -> np.ndarray:
    if measure is MeasureKind.GAUSSIAN:
        return _gaussian_coeffs(dims, gen)
    return _unit_vector((dims.n_a, dims.n_b), gen)


def _basis_product(dims: Bipartition) -> np.ndarray:
    c = np.zeros((dims.n_a, dims.n_b), dtype=np.complex128)
    c[0, 0] = 1.0
    return c


def _canonical_max_entangled(dims: Bipartition) -> np.ndarray:
    c = np.zeros((dims.n_a, dims.n_b), dtype=np.complex128)
    idx = np.arange(dims.n_a)
    c[idx, idx] = 1.0 / np.sqrt(dims.n_a)
    return c


def _local_rotate(coeffs: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    # (U_A x U_B)|phi> has coefficient matrix U_A C U_B^T
    n, m = coeffs.shape
    u_a = _haar(n, gen)
    u_b = _haar(m, gen)
    return u_a @ coeffs @ u_b.T


def _draw_phi0(
    spec: PolarizationSpec, dims: Bipartition, measure: MeasureKind, gen: np.random.Generator
) -> np.ndarray:
    kind = spec.kind
    if kind is PolarizationKind.UNBIASED:
        return _draw_phi(dims, measure, gen)
    if kind is PolarizationKind.SEPARABLE:
        if not spec.randomize_local:
            return _basis_product(dims)
        xi = _unit_vector((dims.n_a,), gen)
        chi = _unit_vector((dims.n_b,), gen)
        return np.outer(xi, chi)
    if kind is PolarizationKind.MAX_ENTANGLED:
        base = _canonical_max_entangled(dims)
    else:
        base = spec.state.matrix.copy()
    return _local_rotate(base, gen) if spec.randomize_local else base


def _combine(epsilon: float, phi0: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return epsilon * phi0 + np.sqrt(1.0 - epsilon * epsilon) * phi


# -- public samplers ---------------------------------------------------------

def gaussian_state(dims: Bipartition, rng: RngStream) -> PureState:
    """Amplitudes iid complex normal with ``E|X|^2 = 1/(NM)``, so ``E|psi|^2 = 1``."""
    return PureState(dims, _gaussian_coeffs(dims, rng.generator()).reshape(-1))


def sphere_state(dims: Bipartition, rng: RngStream) -> PureState:
    """Uniform random unit vector (normalized complex Gaussian)."""
    return PureState(dims, _unit_vector((dims.total,), rng.generator()))


def haar_unitary(dim: int, rng: RngStream) -> np.ndarray:
    """Haar-distributed ``dim x dim`` unitary.

    QR of a complex Ginibre matrix, with each column of ``Q`` multiplied by the
    phase of the matching diagonal entry of ``R`` so the result does not depend
    on the sign convention of the QR routine.
    """
    if dim < 1:
        raise DimensionError(f"dim must be >= 1, got {dim}")
    return _haar(int(dim), rng.generator())


def separable_state(
    dims: Bipartition,
    rng: Optional[RngStream] = None,
    factors: Optional[tuple[Sequence[complex], Sequence[complex]]] = None,
) -> PureState:
    """Product state ``xi (x) chi``.

    With ``factors`` the given vectors are normalized and multiplied; otherwise
    each factor is drawn uniformly from its unit sphere using ``rng``.
    """
    if factors is not None:
        xi = np.asarray(factors[0], dtype=np.complex128)
        chi = np.asarray(factors[1], dtype=np.complex128)
        if xi.shape != (dims.n_a,) or chi.shape != (dims.n_b,):
            raise DimensionError("factor lengths must match the bipartition")
        xi = xi / np.linalg.norm(xi)
        chi = chi / np.linalg.norm(chi)
    else:
        if rng is None:
            raise ValueError("separable_state needs either rng or factors")
        gen = rng.generator()
        xi = _unit_vector((dims.n_a,), gen)
        chi = _unit_vector((dims.n_b,), gen)
    return PureState(dims, np.outer(xi, chi).reshape(-1))


def max_entangled_state(
    dims: Bipartition, rng: Optional[RngStream] = None, randomize: bool = False
) -> PureState:
    """``sum_i |i>|i> / sqrt(N)``, optionally rotated by Haar ``U_A (x) U_B``."""
    dims.require_a_smaller()
    coeffs = _canonical_max_entangled(dims)
    if randomize:
        if rng is None:
            raise ValueError("randomize=True needs an rng")
        coeffs = _local_rotate(coeffs, rng.generator())
    return PureState(dims, coeffs.reshape(-1))


def superpose(epsilon: float, phi0: PureState, phi: PureState) -> PureState:
    """``epsilon*phi0 + sqrt(1-epsilon^2)*phi``, deliberately not renormalized."""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    if phi0.dims != phi.dims:
        raise DimensionError(f"dimension mismatch: {phi0.dims} vs {phi.dims}")
    return PureState(phi0.dims, _combine(epsilon, phi0.amplitudes, phi.amplitudes))


def polarized_sample(
    spec: PolarizationSpec,
    dims: Bipartition,
    measure: MeasureKind,
    rng: RngStream,
) -> PureState:
    """Draw ``epsilon*phi0 + sqrt(1-epsilon^2)*phi``.

    ``phi0`` follows ``spec`` (reference state, optionally hit by a Haar local
    unitary) and comes from sub-stream 0; ``phi`` follows ``measure`` and comes
    from sub-stream 1.  For an unbiased spec ``phi0`` is drawn from ``measure``
    as well.
    """
    spec.check_dims(dims)
    measure = MeasureKind(measure)
    phi0 = _draw_phi0(spec, dims, measure, rng.substream(REFERENCE_SUBSTREAM).generator())
    phi = _draw_phi(dims, measure, rng.substream(RANDOM_SUBSTREAM).generator())
    return PureState(dims, _combine(spec.epsilon, phi0, phi).reshape(-1))


def polarized_batch(
    spec: PolarizationSpec,
    dims: Bipartition,
    measure: MeasureKind,
    master_seed: int,
    stream_ids: Sequence[int],
    pool: Optional[StreamPool] = None,
) -> np.ndarray:
    """Coefficient matrices ``(T, N, M)`` for ``polarized_sample`` at each stream id.

    Row ``t`` holds exactly the amplitudes ``polarized_sample`` returns for
    ``RngStream(master_seed, stream_ids[t])``.
    """
    spec.check_dims(dims)
    measure = MeasureKind(measure)
    pool = pool or StreamPool()
    out = np.empty((len(stream_ids), dims.n_a, dims.n_b), dtype=np.complex128)
    eps = spec.epsilon
    # phi0 is deterministic for non-randomized references; skip its stream
    fixed_phi0 = None
    if spec.kind is not PolarizationKind.UNBIASED and not spec.randomize_local:
        fixed_phi0 = _draw_phi0(spec, dims, measure, None)
    RngStream(master_seed)  # validates the seed once
    for t, sid in enumerate(stream_ids):
        if fixed_phi0 is None:
            phi0 = _draw_phi0(spec, dims, measure, pool.rekey(master_seed, 2 * sid + REFERENCE_SUBSTREAM))
        else:
            phi0 = fixed_phi0
        phi = _draw_phi(dims, measure, pool.rekey(master_seed, 2 * sid + RANDOM_SUBSTREAM))
        out[t] = _combine(eps, phi0, phi)
    return out


def noisy_separable_sample(
    eta: float,
    dims: Bipartition,
    rng: RngStream,
    fixed_product: Optional[PureState] = None,
    measure: MeasureKind = MeasureKind.GAUSSIAN,
) -> PureState:
    """``sqrt(1-eta^2) xi0 (x) chi0 + eta phi`` with unbiased noise ``phi``.

    Same as :func:`polarized_sample` with ``epsilon = sqrt(1 - eta^2)``.  Without
    ``fixed_product`` the product state is drawn at random.
    """
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    return polarized_sample(noise_spec(eta, fixed_product), dims, measure, rng)


def noise_spec(eta: float, fixed_product: Optional[PureState] = None) -> PolarizationSpec:
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    eps = np.sqrt(1.0 - eta * eta)
    if fixed_product is None:
        return PolarizationSpec(PolarizationKind.SEPARABLE, eps, randomize_local=True)
    return PolarizationSpec(PolarizationKind.FIXED_STATE, eps, randomize_local=False, state=fixed_product)


class FixedPuritySample(NamedTuple):
    state: PureState
    epsilon: float
    pi0: float
    kind: PolarizationKind


def fixed_purity_spec(target_purity: float, dims: Bipartition) -> tuple[PolarizationSpec, float]:
    """Polarization whose ensemble mean purity equals ``target_purity``, plus its ``pi0``."""
    eps, pi0, kind = epsilon_for_purity(target_purity, dims)
    return PolarizationSpec(kind, eps, randomize_local=True), pi0


def fixed_purity_sample(
    target_purity: float,
    dims: Bipartition,
    rng: RngStream,
    measure: MeasureKind = MeasureKind.GAUSSIAN,
) -> FixedPuritySample:
    """Draw a state from the polarized ensemble whose typical purity is ``target_purity``.

    The reference state is a random product state when the target exceeds the
    unbiased purity and a locally rotated maximally entangled state otherwise.
    The mean law is exact for the Gaussian measure; with ``SPHERE`` the ensemble
    mean sits below the target by ``(1-eps^2)^2 (M+N) / (MN(MN+1))``.
    """
    spec, pi0 = fixed_purity_spec(target_purity, dims)
    state = polarized_sample(spec, dims, measure, rng)
    return FixedPuritySample(state, spec.epsilon, pi0, spec.kind)
