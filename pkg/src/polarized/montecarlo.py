"""
Deterministic Monte Carlo checks of the closed-form predictions.

Trial ``t`` of grid point ``g`` always uses stream ``g * trials + t`` under the
master seed, trials are evaluated in fixed-size chunks, and per-trial values
are reduced in trial order.  Results are therefore bit-identical for any
number of worker processes.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from . import analytics
from .core_linalg import Bipartition, DomainError, PureState, purity_batch
from .kinds import MeasureKind, PolarizationKind
from .sampling import (
    RANDOM_SUBSTREAM,
    PolarizationSpec,
    RngStream,
    StreamPool,
    _draw_phi,
    fixed_purity_spec,
    noise_spec,
    polarized_batch,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GridRow",
    "RunResult",
    "MomentEstimate",
    "FourthMoments",
    "TailRow",
    "ThresholdRow",
    "ThresholdScan",
    "FixedPurityRow",
    "run_purity_experiment",
    "estimate_moments",
    "fourth_moment_oracle",
    "tail_frequency",
    "threshold_scan",
    "fixed_purity_experiment",
    "z_score",
]

log = logging.getLogger(__name__)

CHUNK = 2048
# agreement below this relative level is rounding, not sampling error
EXACT_RTOL = 1e-12


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def z_score(mean: float, analytic: float, stderr: float) -> float:
    if abs(mean - analytic) <= EXACT_RTOL * max(1.0, abs(analytic)):
        return 0.0
    if stderr == 0.0:
        return math.copysign(math.inf, mean - analytic)
    return (mean - analytic) / stderr


def _summary(values: np.ndarray) -> tuple[float, float, float]:
    n = values.size
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return mean, std, std / math.sqrt(n)


def _map_trials(fn: Callable[[int, int], np.ndarray], n_trials: int, workers: int = 1) -> np.ndarray:
    """Evaluate ``fn(start, stop)`` over fixed chunks and stack the results in trial order."""
    starts = list(range(0, n_trials, CHUNK))
    stops = [min(s + CHUNK, n_trials) for s in starts]
    if workers > 1 and len(starts) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, starts, stops))
    else:
        parts = [fn(a, b) for a, b in zip(starts, stops)]
    out = np.concatenate(parts, axis=0)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(out).reshape(out.shape[0], -1).all(axis=1)))
        raise FloatingPointError(f"non-finite Monte Carlo value at trial {bad}")
    return out


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    dims: Bipartition
    spec: PolarizationSpec
    eps4_grid: tuple = tuple(round(0.1 * k, 10) for k in range(11))
    trials: int = 10_000
    master_seed: int = 0
    measure: MeasureKind = MeasureKind.GAUSSIAN
    normalize: bool = False

    def __post_init__(self):
        grid = tuple(float(x) for x in self.eps4_grid)
        if not grid:
            raise ConfigError("eps4_grid must not be empty")
        if any(not 0.0 <= x <= 1.0 for x in grid):
            raise ConfigError("eps4_grid values must lie in [0, 1]")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ConfigError("eps4_grid must be sorted ascending")
        if int(self.trials) < 2:
            raise ConfigError(f"trials must be >= 2, got {self.trials}")
        object.__setattr__(self, "eps4_grid", grid)
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "measure", MeasureKind(self.measure))
        self.spec.check_dims(self.dims)

    def to_dict(self) -> dict:
        spec = {
            "kind": self.spec.kind.value,
            "epsilon": self.spec.epsilon,
            "randomize_local": self.spec.randomize_local,
        }
        if self.spec.state is not None:
            spec["state"] = self.spec.state.to_dict()
        return {
            "dims": {"n_a": self.dims.n_a, "n_b": self.dims.n_b},
            "spec": spec,
            "eps4_grid": list(self.eps4_grid),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "measure": self.measure.value,
            "normalize": self.normalize,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        def fields_of(obj, where, required, optional=()):
            if not isinstance(obj, dict):
                raise ConfigError(f"{where}: expected an object")
            unknown = set(obj) - set(required) - set(optional)
            if unknown:
                raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
            missing = [k for k in required if k not in obj]
            if missing:
                raise ConfigError(f"{where}: missing field(s) {missing}")

        top_optional = ("eps4_grid", "trials", "master_seed", "measure", "normalize")
        fields_of(payload, "config", ("dims", "spec"), top_optional)
        fields_of(payload["dims"], "dims", ("n_a", "n_b"))
        fields_of(payload["spec"], "spec", ("kind",), ("epsilon", "randomize_local", "state"))
        raw = payload["spec"]
        try:
            dims = Bipartition(payload["dims"]["n_a"], payload["dims"]["n_b"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"dims: {exc}") from None
        try:
            state = PureState.from_dict(raw["state"]) if "state" in raw else None
            spec = PolarizationSpec(
                PolarizationKind(raw["kind"]),
                raw.get("epsilon", 0.0),
                bool(raw.get("randomize_local", True)),
                state,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"spec: {exc}") from None
        kwargs = {}
        for key in top_optional:
            if key in payload:
                kwargs[key] = payload[key]
        try:
            if "measure" in kwargs:
                kwargs["measure"] = MeasureKind(kwargs["measure"])
            if "master_seed" in kwargs:
                kwargs["master_seed"] = RngStream(kwargs["master_seed"]).master_seed
            if "normalize" in kwargs and not isinstance(kwargs["normalize"], bool):
                raise ConfigError("normalize: expected true or false")
            return cls(dims, spec, **kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(payload)


# -- purity vs epsilon -------------------------------------------------------

@dataclass(frozen=True)
class GridRow:
    eps4: float
    sample_mean: float
    sample_std: float
    stderr: float
    analytic_mean: float
    z_score: float


@dataclass
class RunResult:
    rows: list
    config: ExperimentConfig
    wall_time: float = 0.0

    @property
    def max_abs_z(self) -> float:
        return max(abs(r.z_score) for r in self.rows)


def _polarized_chunk(spec, dims, measure, seed, offset, start, stop) -> np.ndarray:
    coeffs = polarized_batch(spec, dims, measure, seed, range(offset + start, offset + stop))
    norm_sq = np.sum(coeffs.real**2 + coeffs.imag**2, axis=(1, 2))
    return np.stack([purity_batch(coeffs), norm_sq], axis=1)


def _polarized_values(spec, dims, measure, seed, offset, trials, workers) -> np.ndarray:
    fn = partial(_polarized_chunk, spec, dims, measure, seed, offset)
    return _map_trials(fn, trials, workers)


def run_purity_experiment(config: ExperimentConfig, workers: int = 1) -> RunResult:
    """Mean purity of the polarized ensemble at each grid value of ``eps^4``."""
    t0 = time.perf_counter()
    dims, measure = config.dims, config.measure
    pi0 = analytics.reference_purity(config.spec.kind, dims, measure, config.spec.state)
    rows = []
    for g, eps4 in enumerate(config.eps4_grid):
        eps = eps4**0.25
        spec = config.spec.with_epsilon(eps)
        vals = _polarized_values(spec, dims, measure, config.master_seed, g * config.trials, config.trials, workers)
        pur = vals[:, 0]
        if config.normalize:
            pur = pur / vals[:, 1] ** 2
        mean, std, se = _summary(pur)
        analytic = analytics.predict(eps, pi0, dims, measure).mean_purity
        rows.append(GridRow(eps4, mean, std, se, analytic, z_score(mean, analytic, se)))
        log.debug("eps4=%.4g mean=%.6g analytic=%.6g", eps4, mean, analytic)
    return RunResult(rows, config, time.perf_counter() - t0)


# -- moment identities -------------------------------------------------------

@dataclass(frozen=True)
class MomentEstimate:
    name: str
    value: float
    stderr: float
    n: int
    analytic: float

    @property
    def z_score(self) -> float:
        return z_score(self.value, self.analytic, self.stderr)


MOMENT_NAMES = ("TrSigmaSq", "TrSigma0Sigma", "TrSSq", "TrSigma0S", "TrSigmaS")


def _phi_batch(dims, measure, seed, start, stop, pool) -> np.ndarray:
    out = np.empty((stop - start, dims.n_a, dims.n_b), dtype=np.complex128)
    for t in range(start, stop):
        gen = pool.rekey(seed, 2 * t + RANDOM_SUBSTREAM)
        out[t - start] = _draw_phi(dims, measure, gen)
    return out


def _tr_prod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Tr(AB) for stacks of Hermitian matrices
    return np.einsum("...ij,...ji->...", a, b).real


def _moment_chunk(dims, measure, seed, start, stop) -> np.ndarray:
    x = _phi_batch(dims, measure, seed, start, stop, StreamPool())
    a = np.zeros((dims.n_a, dims.n_b), dtype=np.complex128)
    a[0, 0] = 1.0
    sigma0 = a @ a.conj().T
    sigma = x @ np.conj(np.swapaxes(x, 1, 2))
    half = a @ np.conj(np.swapaxes(x, 1, 2))
    s = half + np.conj(np.swapaxes(half, 1, 2))
    return np.stack(
        [
            np.sum(np.abs(sigma) ** 2, axis=(1, 2)),
            _tr_prod(sigma0, sigma),
            np.sum(np.abs(s) ** 2, axis=(1, 2)),
            _tr_prod(sigma0, s),
            _tr_prod(sigma, s),
        ],
        axis=1,
    )


def estimate_moments(
    dims: Bipartition, trials: int, master_seed: int, measure: MeasureKind = MeasureKind.GAUSSIAN, workers: int = 1
) -> list:
    """Sample the trace terms of the purity expansion for the reference ``|0>|0>``.

    Returns one :class:`MomentEstimate` per entry of ``MOMENT_NAMES``.
    """
    if trials < 100:
        raise DomainError(f"estimate_moments needs at least 100 trials, got {trials}")
    measure = MeasureKind(measure)
    vals = _map_trials(partial(_moment_chunk, dims, measure, master_seed), trials, workers)
    exp = analytics.expected_moments(dims, measure)
    analytic = (exp.tr_sigma_sq, exp.tr_sigma0_sigma, exp.tr_S_sq, exp.cross_terms, exp.cross_terms)
    out = []
    for k, name in enumerate(MOMENT_NAMES):
        mean, _, se = _summary(vals[:, k])
        out.append(MomentEstimate(name, mean, se, trials, analytic[k]))
    return out


@dataclass(frozen=True)
class FourthMoments:
    """Index-class averages of ``E[X_{i mu} X*_{j mu} X_{j nu} X*_{i nu}]``.

    ``delta_ij_coeff`` averages the ``i = j, mu != nu`` class, ``delta_munu_coeff``
    the ``i != j, mu = nu`` class, ``coincident`` the ``E|X|^4`` diagonal (twice
    the coefficient) and ``unpaired`` the ``i != j, mu != nu`` class, which has
    zero mean.  Classes that are empty for the given dimensions are ``None``.
    """

    delta_ij_coeff: Optional[MomentEstimate]
    delta_munu_coeff: Optional[MomentEstimate]
    coincident: MomentEstimate
    unpaired: Optional[MomentEstimate]


def _fourth_chunk(dims, measure, seed, start, stop) -> np.ndarray:
    n, m = dims.n_a, dims.n_b
    x = _phi_batch(dims, measure, seed, start, stop, StreamPool())
    p = x.real**2 + x.imag**2
    diag = np.sum(p**2, axis=(1, 2))
    rows = np.sum(np.sum(p, axis=2) ** 2, axis=1)  # sum_i (sum_mu P)^2
    cols = np.sum(np.sum(p, axis=1) ** 2, axis=1)  # sum_mu (sum_i P)^2
    sigma = x @ np.conj(np.swapaxes(x, 1, 2))
    total = np.sum(np.abs(sigma) ** 2, axis=(1, 2))  # all (i, j, mu, nu)
    # empty classes (n or m == 1) come out as 0/1 and are dropped by the caller
    same_i = (rows - diag) / max(1, n * m * (m - 1))
    same_mu = (cols - diag) / max(1, m * n * (n - 1))
    unpaired = (total - rows - cols + diag) / max(1, n * (n - 1) * m * (m - 1))
    return np.stack([same_i, same_mu, diag / (n * m), unpaired], axis=1)


def fourth_moment_oracle(
    dims: Bipartition, trials: int, master_seed: int, measure: MeasureKind = MeasureKind.GAUSSIAN, workers: int = 1
) -> FourthMoments:
    """Estimate the fourth-moment coefficients of the random component.

    Wick pairing gives ``1/(NM)^2`` for Gaussian amplitudes; uniform unit vectors
    give ``1/(NM(NM+1))``.
    """
    measure = MeasureKind(measure)
    vals = _map_trials(partial(_fourth_chunk, dims, measure, master_seed), trials, workers)
    n, m = dims.n_a, dims.n_b
    present = (m > 1, n > 1, True, n > 1 and m > 1)
    nm = dims.total
    coeff = 1.0 / nm**2 if measure is MeasureKind.GAUSSIAN else 1.0 / (nm * (nm + 1))
    analytic = (coeff, coeff, 2.0 * coeff, 0.0)
    names = ("delta_ij", "delta_munu", "coincident", "unpaired")
    est = []
    for k, name in enumerate(names):
        if not present[k]:
            est.append(None)
            continue
        mean, _, se = _summary(vals[:, k])
        est.append(MomentEstimate(name, mean, se, trials, analytic[k]))
    return FourthMoments(*est)


# -- concentration -----------------------------------------------------------

@dataclass(frozen=True)
class TailRow:
    alpha: float
    empirical_norm_tail: float
    norm_tail_stderr: float
    norm_bound: float
    empirical_purity_tail: float
    purity_tail_stderr: float
    purity_bound: float

    def within_bounds(self, k: float = 3.0) -> bool:
        return (
            self.empirical_norm_tail <= self.norm_bound + k * self.norm_tail_stderr
            and self.empirical_purity_tail <= self.purity_bound + k * self.purity_tail_stderr
        )


def _binomial(hits: np.ndarray) -> tuple[float, float]:
    n = hits.size
    p = float(np.count_nonzero(hits)) / n
    return p, math.sqrt(p * (1.0 - p) / n)


def tail_frequency(config: ExperimentConfig, alpha_grid: Sequence[float], workers: int = 1) -> list:
    """Empirical tail frequencies of the norm and purity against the Gaussian bounds.

    Uses the bias ``config.spec.epsilon`` (the ``eps4_grid`` is not scanned).
    Norm deviations are measured from 1, purity deviations from the sample mean.
    """
    dims, eps = config.dims, config.spec.epsilon
    vals = _polarized_values(config.spec, dims, config.measure, config.master_seed, 0, config.trials, workers)
    pur, norm_sq = vals[:, 0], vals[:, 1]
    if config.normalize:
        pur = pur / norm_sq**2
    pur_dev = np.abs(pur - np.mean(pur))
    norm_dev = np.abs(norm_sq - 1.0)
    rows = []
    for alpha in alpha_grid:
        nb = analytics.norm_tail_bound(alpha, dims, eps).bound
        pb = analytics.purity_tail_bound(alpha, dims, eps).bound
        pn, sn = _binomial(norm_dev > alpha)
        pp, sp = _binomial(pur_dev > alpha)
        rows.append(TailRow(float(alpha), pn, sn, nb, pp, sp, pb))
    return rows


# -- separability threshold --------------------------------------------------

@dataclass(frozen=True)
class ThresholdRow:
    eta: float
    mean_purity: float
    stderr: float
    inv_mean_purity: float
    analytic_d_eff: float


@dataclass
class ThresholdScan:
    rows: list
    crossing: Optional[float]
    eta_star: analytics.ThresholdResult


def _crossing(etas: Sequence[float], d_eff: Sequence[float], level: float = 2.0) -> Optional[float]:
    for k in range(1, len(etas)):
        lo, hi = d_eff[k - 1], d_eff[k]
        if lo < level <= hi:
            return etas[k - 1] + (level - lo) * (etas[k] - etas[k - 1]) / (hi - lo)
    return None


def threshold_scan(
    dims: Bipartition,
    eta_grid: Sequence[float],
    trials: int,
    master_seed: int,
    workers: int = 1,
    fixed_product: Optional[PureState] = None,
) -> ThresholdScan:
    """Monte Carlo ``1 / E[purity]`` of the noisy product state across noise strengths.

    The crossing of ``d_eff = 2`` is located by linear interpolation between
    neighbouring grid points.  The default product state is ``|0>|0>``.
    """
    if fixed_product is None:
        coeffs = np.zeros(dims.total, dtype=np.complex128)
        coeffs[0] = 1.0
        fixed_product = PureState(dims, coeffs)
    rows = []
    for g, eta in enumerate(eta_grid):
        spec = noise_spec(eta, fixed_product)
        vals = _polarized_values(spec, dims, MeasureKind.GAUSSIAN, master_seed, g * trials, trials, workers)
        mean, _, se = _summary(vals[:, 0])
        analytic = analytics.mean_purity_separable(spec.epsilon, dims)
        rows.append(ThresholdRow(float(eta), mean, se, 1.0 / mean, 1.0 / analytic))
    crossing = _crossing([r.eta for r in rows], [r.inv_mean_purity for r in rows])
    return ThresholdScan(rows, crossing, analytics.eta_star(dims))


# -- fixed-purity sampler ----------------------------------------------------

@dataclass(frozen=True)
class FixedPurityRow:
    target: float
    epsilon: float
    pi0: float
    kind: str
    sample_mean: float
    sample_std: float
    stderr: float
    analytic_mean: float
    z_score: float


def fixed_purity_experiment(
    targets: Sequence[float],
    dims: Bipartition,
    trials: int,
    master_seed: int,
    measure: MeasureKind = MeasureKind.GAUSSIAN,
    workers: int = 1,
) -> list:
    """Ensemble mean purity of the fixed-purity sampler for each target.

    ``z_score`` compares the sample mean with the target itself; ``analytic_mean``
    is the measure-aware prediction, which equals the target for the Gaussian
    measure.
    """
    measure = MeasureKind(measure)
    rows = []
    for k, target in enumerate(targets):
        spec, pi0 = fixed_purity_spec(target, dims)
        vals = _polarized_values(spec, dims, measure, master_seed, k * trials, trials, workers)
        mean, std, se = _summary(vals[:, 0])
        analytic = analytics.predict(spec.epsilon, pi0, dims, measure).mean_purity
        rows.append(
            FixedPurityRow(float(target), spec.epsilon, pi0, spec.kind.value, mean, std, se, analytic, z_score(mean, target, se))
        )
    return rows


def rows_as_dicts(rows: Sequence) -> list:
    return [asdict(r) for r in rows]
