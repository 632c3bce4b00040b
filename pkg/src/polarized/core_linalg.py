"""
Dense kernels for bipartite pure states.

Amplitudes of a state on H_A (dim N) tensor H_B (dim M) are stored flat with the
B index running fastest, ``amp[i * M + mu] = <i, mu|psi>``.  Reshaping to
``(N, M)`` therefore gives the coefficient matrix ``C`` with
``Tr_B |psi><psi| = C C^dagger``.

States are not required to be normalized; every function here works with the
raw amplitudes and reports traces equal to the squared norm.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "DimensionError",
    "DomainError",
    "Bipartition",
    "PureState",
    "DensityMatrix",
    "partial_trace_b",
    "purity",
    "effective_dimension",
    "trace_product",
    "cross_operator",
    "purity_decomposition",
    "reduced_batch",
    "purity_batch",
    "load_state",
    "save_state",
]


class DimensionError(ValueError):
    """Array shapes disagree with the declared bipartition."""


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


@dataclass(frozen=True)
class Bipartition:
    n_a: int
    n_b: int

    def __post_init__(self):
        for name in ("n_a", "n_b"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise DimensionError(f"{name} must be >= 1, got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def total(self) -> int:
        return self.n_a * self.n_b

    def require_a_smaller(self) -> None:
        if self.n_a > self.n_b:
            raise DomainError(
                f"operation needs dim A <= dim B, got N={self.n_a}, M={self.n_b}"
            )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PureState:
    """Bipartite state vector with explicit subsystem dimensions."""

    dims: Bipartition
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != self.dims.total:
            raise DimensionError(
                f"expected {self.dims.total} amplitudes for dims "
                f"({self.dims.n_a}, {self.dims.n_b}), got {amps.size}"
            )
        if not np.all(np.isfinite(amps)):
            raise DomainError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_matrix(cls, coeffs) -> "PureState":
        coeffs = np.asarray(coeffs)
        if coeffs.ndim != 2:
            raise DimensionError(f"coefficient matrix must be 2-d, got shape {coeffs.shape}")
        return cls(Bipartition(*coeffs.shape), coeffs.reshape(-1))

    @property
    def matrix(self) -> np.ndarray:
        """Read-only ``(N, M)`` view of the amplitudes."""
        return self.amplitudes.reshape(self.dims.n_a, self.dims.n_b)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "PureState":
        nrm = np.sqrt(self.norm_sq)
        if nrm == 0.0:
            raise DomainError("cannot normalize the zero vector")
        return PureState(self.dims, self.amplitudes / nrm)

    def to_dict(self) -> dict:
        return {
            "n_a": self.dims.n_a,
            "n_b": self.dims.n_b,
            "amplitudes": [[float(z.real), float(z.imag)] for z in self.amplitudes],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PureState":
        try:
            n_a, n_b, raw = payload["n_a"], payload["n_b"], payload["amplitudes"]
        except (KeyError, TypeError) as exc:
            raise DimensionError(f"state object is missing field {exc}") from None
        extra = set(payload) - {"n_a", "n_b", "amplitudes"}
        if extra:
            raise DimensionError(f"unknown state fields: {sorted(extra)}")
        pairs = np.asarray(raw, dtype=np.float64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise DimensionError("amplitudes must be a list of [re, im] pairs")
        return cls(Bipartition(n_a, n_b), pairs[:, 0] + 1j * pairs[:, 1])


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        mat = np.array(self.entries, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"density matrix must be square, got shape {mat.shape}")
        object.__setattr__(self, "entries", _frozen(mat))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def hermiticity_residue(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))


MatrixLike = Union[DensityMatrix, np.ndarray]


def _entries(rho: MatrixLike) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.entries
    return DensityMatrix(rho).entries


def _check_same_dims(a: PureState, b: PureState) -> None:
    if a.dims != b.dims:
        raise DimensionError(f"dimension mismatch: {a.dims} vs {b.dims}")


def partial_trace_b(psi: PureState) -> DensityMatrix:
    """Reduced state ``rho_A = Tr_B |psi><psi|`` (not renormalized)."""
    c = psi.matrix
    return DensityMatrix(c @ c.conj().T)


def purity(rho: MatrixLike) -> float:
    """``Tr(rho^2)`` for Hermitian ``rho``, computed as the squared Frobenius norm."""
    m = _entries(rho)
    return float(np.sum(m.real**2 + m.imag**2))


def effective_dimension(rho: MatrixLike) -> float:
    """Participation ratio ``1 / Tr(rho_hat^2)`` of the trace-normalized matrix.

    Scale invariant, so an unnormalized reduced state may be passed directly.
    """
    m = _entries(rho)
    tr = float(np.trace(m).real)
    if tr <= 0.0:
        raise DomainError("effective dimension needs a matrix with positive trace")
    p = purity(m)
    return tr * tr / p


def trace_product(a: MatrixLike, b: MatrixLike) -> float:
    """``Tr(AB)`` for Hermitian ``A``, ``B``; the imaginary rounding residue is dropped."""
    ma, mb = _entries(a), _entries(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"dimension mismatch: {ma.shape} vs {mb.shape}")
    # Tr(AB) = sum_ij A_ij B_ji
    return float(np.sum(ma * mb.T).real)


def cross_operator(phi0: PureState, phi: PureState) -> DensityMatrix:
    """``Tr_B(|phi0><phi| + |phi><phi0|)``. Hermitian, generally indefinite."""
    _check_same_dims(phi0, phi)
    a, x = phi0.matrix, phi.matrix
    half = a @ x.conj().T
    return DensityMatrix(half + half.conj().T)


def purity_decomposition(phi0: PureState, phi: PureState, epsilon: float) -> float:
    """Purity of ``epsilon*phi0 + sqrt(1-epsilon^2)*phi`` assembled from six trace terms.

    Parameters
    ----------
    phi0, phi : PureState
        Reference and random component, same dimensions.
    epsilon : float
        Bias in ``[0, 1]``.

    Returns
    -------
    float
        ``e^4 Tr s0^2 + (1-e^2)^2 Tr s^2 + e^2(1-e^2) Tr S^2 + 2e^2(1-e^2) Tr(s0 s)
        + 2e^3 sqrt(1-e^2) Tr(s0 S) + 2e(1-e^2)^{3/2} Tr(s S)``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    _check_same_dims(phi0, phi)
    s0 = partial_trace_b(phi0)
    s = partial_trace_b(phi)
    cross = cross_operator(phi0, phi)
    e2 = epsilon * epsilon
    w = 1.0 - e2
    sw = np.sqrt(w)
    return (
        e2 * e2 * purity(s0)
        + w * w * purity(s)
        + e2 * w * purity(cross)
        + 2.0 * e2 * w * trace_product(s0, s)
        + 2.0 * e2 * epsilon * sw * trace_product(s0, cross)
        + 2.0 * epsilon * w * sw * trace_product(s, cross)
    )


def reduced_batch(coeffs: np.ndarray) -> np.ndarray:
    """Reduced states for a stack of ``(T, N, M)`` coefficient matrices."""
    return coeffs @ np.conj(np.swapaxes(coeffs, -1, -2))


def purity_batch(coeffs: np.ndarray) -> np.ndarray:
    """Purity of ``Tr_B`` for each coefficient matrix in a ``(T, N, M)`` stack."""
    rho = reduced_batch(coeffs)
    return np.sum(rho.real**2 + rho.imag**2, axis=(-2, -1))


def save_state(psi: PureState, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(psi.to_dict()) + "\n")


def load_state(path: Union[str, Path]) -> PureState:
    with open(path) as fh:
        return PureState.from_dict(json.load(fh))
