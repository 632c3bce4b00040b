"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``[ACCEPT n] PASS|FAIL ...`` line.  Run on its own with
``pytest tests/test_acceptance.py -s -v``.  Seeds are fixed, so results are
deterministic; the whole module takes a few minutes on one core.
"""
import math

import numpy as np
import pytest

from polarized import (
    Bipartition,
    MeasureKind,
    PolarizationSpec,
    PureState,
    RngStream,
    haar_unitary,
    partial_trace_b,
    purity,
    purity_decomposition,
    superpose,
)
from polarized import analytics as an
from polarized import montecarlo as mc

Z_TOL = 4.0
N_FIG = 10_000
N_MOMENTS = 1_000_000
GAUSS, SPHERE = MeasureKind.GAUSSIAN, MeasureKind.SPHERE


def report(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[ACCEPT {number}] {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="module")
def gaussian_moments_22():
    return mc.estimate_moments(Bipartition(2, 2), N_MOMENTS, 202, GAUSS)


def test_1_purity_curves(capsys):
    worst = []
    for n in (30, 8):
        for kind in ("separable", "maxent"):
            cfg = mc.ExperimentConfig(Bipartition(n, n), PolarizationSpec(kind), trials=N_FIG, master_seed=101)
            result = mc.run_purity_experiment(cfg)
            assert len(result.rows) == 11
            worst.append((result.max_abs_z, n, kind))
    z, n, kind = max(worst)
    ok = z <= Z_TOL
    report(capsys, 1, ok, f"max |z| = {z:.2f} (N=M={n}, {kind}) over 4 curves x 11 points, n={N_FIG}")
    assert ok


def test_2_moment_identities(capsys, gaussian_moments_22):
    est = list(gaussian_moments_22) + mc.estimate_moments(Bipartition(4, 8), N_MOMENTS, 204, GAUSS)
    expected = {
        (2, "TrSigmaSq"): 1.0, (2, "TrSigma0Sigma"): 0.5, (2, "TrSSq"): 1.0,
        (4, "TrSigmaSq"): 12 / 32, (4, "TrSigma0Sigma"): 0.25, (4, "TrSSq"): 0.25,
    }
    for k, e in enumerate(est):
        n_a = 2 if k < 5 else 4
        assert e.analytic == pytest.approx(expected.get((n_a, e.name), 0.0), rel=1e-15)
    z = max(abs(e.z_score) for e in est)
    ok = z <= Z_TOL
    report(capsys, 2, ok, f"max |z| = {z:.2f} over 5 moments at (2,2) and (4,8), n={N_MOMENTS}")
    assert ok


def test_3_measure_discrimination(capsys, gaussian_moments_22):
    g = gaussian_moments_22[0]
    s = mc.estimate_moments(Bipartition(2, 2), N_MOMENTS, 303, SPHERE)[0]
    assert g.name == s.name == "TrSigmaSq"
    assert (g.analytic, s.analytic) == (1.0, pytest.approx(0.8, rel=1e-15))
    separation = (g.value - s.value) / math.hypot(g.stderr, s.stderr)
    ok = abs(g.z_score) <= Z_TOL and abs(s.z_score) <= Z_TOL
    report(capsys, 3, ok, f"Gaussian {g.value:.5f} (z={g.z_score:.2f}), sphere {s.value:.5f} (z={s.z_score:.2f}), "
           f"gap = {separation:.0f} combined stderr")
    assert ok


def test_4_fourth_moment(capsys):
    g = mc.fourth_moment_oracle(Bipartition(2, 2), N_MOMENTS, 404, GAUSS)
    s = mc.fourth_moment_oracle(Bipartition(2, 2), N_MOMENTS, 405, SPHERE)
    assert g.delta_ij_coeff.analytic == 1 / 16 and s.delta_ij_coeff.analytic == pytest.approx(1 / 20, rel=1e-15)
    coeffs = [g.delta_ij_coeff, g.delta_munu_coeff, s.delta_ij_coeff, s.delta_munu_coeff]
    z = max(abs(e.z_score) for e in coeffs)
    ok = z <= Z_TOL
    report(capsys, 4, ok, f"Gaussian {g.delta_ij_coeff.value:.5f}/{g.delta_munu_coeff.value:.5f} vs 0.0625, "
           f"sphere {s.delta_ij_coeff.value:.5f}/{s.delta_munu_coeff.value:.5f} vs 0.05, max |z| = {z:.2f}")
    assert ok


def test_5_fixed_purity(capsys):
    d = Bipartition(8, 8)
    targets = [0.15, 0.2, 0.4, 0.625, 0.9]
    rows = mc.fixed_purity_experiment(targets, d, N_FIG, 505, GAUSS)
    assert {r.kind for r in rows} == {"maxent", "separable"}
    z = max(abs(r.z_score) for r in rows)
    ok = z <= Z_TOL
    report(capsys, 5, ok, f"max |z| = {z:.2f} over targets {targets} at N=M=8, n={N_FIG}")
    assert ok


def test_6_threshold(capsys):
    grid = [round(0.02 * k, 12) for k in range(51)]
    scan = mc.threshold_scan(Bipartition(30, 30), grid, N_FIG, 606)
    gap = abs(scan.crossing - scan.eta_star.eta_star)
    large = abs(an.eta_star(Bipartition(1000, 1000)).eta_star - an.eta_star_asymptotic())
    ok = gap <= 0.02 and large <= 1e-3
    report(capsys, 6, ok, f"MC crossing {scan.crossing:.4f} vs eta* {scan.eta_star.eta_star:.4f} (|diff|={gap:.4f}); "
           f"|eta*(1000) - 0.541196| = {large:.2e}")
    assert ok


def test_7_concentration(capsys):
    alphas = [0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.8]
    failures, checked = [], 0
    for n in (8, 30):
        for eps in (0.0, 0.6):
            cfg = mc.ExperimentConfig(Bipartition(n, n), PolarizationSpec("separable", eps), trials=N_FIG, master_seed=707)
            for row in mc.tail_frequency(cfg, alphas):
                checked += 1
                if not row.within_bounds(3.0):
                    failures.append((n, eps, row.alpha))
    ok = not failures
    report(capsys, 7, ok, f"{checked - len(failures)}/{checked} (N, eps, alpha) cells within bound + 3 binomial stderr")
    assert ok, failures


def test_8_exact_invariants(capsys):
    rng = np.random.default_rng(808)
    worst = {}

    def track(name, value):
        worst[name] = max(worst.get(name, 0.0), value)

    for _ in range(100):
        dims = Bipartition(int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        phi0, phi = (PureState(dims, rng.standard_normal(dims.total) + 1j * rng.standard_normal(dims.total)) for _ in "ab")
        eps = float(rng.uniform())
        psi = superpose(eps, phi0, phi)
        rho = partial_trace_b(psi)
        tr = rho.trace
        track("trace", abs(tr - psi.norm_sq) / psi.norm_sq)
        track("hermitian", rho.hermiticity_residue() / tr)
        track("psd", max(0.0, -np.linalg.eigvalsh(rho.entries).min() / tr))
        direct = purity(rho)
        track("decomposition", abs(purity_decomposition(phi0, phi, eps) - direct) / direct)
    for dims in (Bipartition(2, 2), Bipartition(8, 8), Bipartition(30, 30), Bipartition(3, 11)):
        for target in np.linspace(1.0 / dims.n_a, 1.0, 1000):
            e, pi0, _ = an.epsilon_for_purity(float(target), dims)
            track("round_trip", abs(an.mean_purity(e, pi0, dims) - target))
    for n in range(5, 200):
        th = an.eta_star(Bipartition(n, n + 3))
        track("threshold", abs(an.mean_purity_separable(math.sqrt(1 - th.eta_star_squared), Bipartition(n, n + 3)) - 0.5))
    for k in range(200):
        u = haar_unitary(1 + k % 16, RngStream(808, k))
        track("unitarity", float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()))

    cfg = mc.ExperimentConfig(Bipartition(5, 5), PolarizationSpec("maxent"), eps4_grid=(0.0, 0.5, 1.0), trials=5000, master_seed=808)
    runs = [mc.run_purity_experiment(cfg, workers=w).rows for w in (1, 2, 3)]
    reproducible = runs[0] == runs[1] == runs[2]

    limits = {"trace": 1e-12, "hermitian": 1e-12, "psd": 1e-10, "decomposition": 1e-10,
              "round_trip": 1e-12, "threshold": 1e-12, "unitarity": 1e-12}
    ok = reproducible and all(worst[k] <= v for k, v in limits.items())
    detail = ", ".join(f"{k} {worst[k]:.1e}" for k in limits)
    report(capsys, 8, ok, f"{detail}; worker counts 1/2/3 bit-identical: {reproducible}")
    assert ok
