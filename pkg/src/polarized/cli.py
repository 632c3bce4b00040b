"""
Command-line entry point.

Exit status is 0 on success, 2 for usage or domain errors and 1 for anything
unexpected.  Every subcommand writes one table to stdout (CSV by default, with
the resolved configuration on a leading ``# config:`` line).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import analytics
from . import montecarlo as mc
from .core_linalg import (
    Bipartition,
    DimensionError,
    DomainError,
    effective_dimension,
    load_state,
    partial_trace_b,
    purity,
    save_state,
)
from .kinds import MeasureKind, PolarizationKind
from .reporting import emit, write_csv
from .sampling import PolarizationSpec, RngStream, fixed_purity_sample, polarized_sample

log = logging.getLogger("polarized")

DEFAULT_TRIALS = 10_000
DEFAULT_EPS4_GRID = "0:1:0.1"
DEFAULT_ETA_GRID = "0:1:0.02"
DEFAULT_ALPHAS = "0.05,0.1,0.15,0.2,0.3,0.5"


class UsageError(ValueError):
    pass


# -- flag parsing helpers ----------------------------------------------------

def parse_grid(text: str) -> list:
    """``a:b:step`` (inclusive of both ends) or a comma separated list."""
    if ":" not in text:
        try:
            return [float(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise UsageError(f"grid must be a comma separated list of numbers, got {text!r}") from None
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must look like a:b:step, got {text!r}") from None
    if step <= 0 or b < a:
        raise UsageError(f"grid {text!r} needs step > 0 and a <= b")
    count = round((b - a) / step)
    if abs(a + count * step - b) > 1e-9 * max(1.0, abs(b)):
        raise UsageError(f"grid {text!r}: (b - a) is not a multiple of step")
    return [round(a + k * step, 12) for k in range(count + 1)]


def _dims(args) -> Bipartition:
    if args.dim_a is None or args.dim_b is None:
        raise UsageError("--dim-a and --dim-b are required")
    return Bipartition(args.dim_a, args.dim_b)


def _epsilon(args, default: Optional[float] = None) -> float:
    if args.epsilon is not None and args.eps4 is not None:
        raise UsageError("give exactly one of --epsilon / --eps4")
    if args.epsilon is not None:
        eps = args.epsilon
    elif args.eps4 is not None:
        if not 0.0 <= args.eps4 <= 1.0:
            raise DomainError(f"eps4 must lie in [0, 1], got {args.eps4}")
        eps = args.eps4**0.25
    elif default is not None:
        eps = default
    else:
        raise UsageError("give exactly one of --epsilon / --eps4")
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {eps}")
    return eps


def _polarization(text: str, randomize: bool, dims: Bipartition) -> PolarizationSpec:
    if text.startswith("fixed:"):
        state = load_state(text[len("fixed:"):])
        if state.dims != dims:
            raise DimensionError(f"state file has dims {state.dims}, expected {dims}")
        return PolarizationSpec(PolarizationKind.FIXED_STATE, 0.0, randomize, state)
    try:
        kind = PolarizationKind(text)
    except ValueError:
        raise UsageError(f"unknown polarization {text!r}") from None
    if kind is PolarizationKind.FIXED_STATE:
        raise UsageError("use fixed:<path> for a fixed polarizing state")
    return PolarizationSpec(kind, 0.0, randomize)


def _spec_meta(spec: PolarizationSpec) -> dict:
    meta = {"kind": spec.kind.value, "epsilon": spec.epsilon, "randomize_local": spec.randomize_local}
    if spec.state is not None:
        meta["state_dims"] = [spec.state.dims.n_a, spec.state.dims.n_b]
    return meta


# -- subcommands -------------------------------------------------------------

def cmd_predict(args) -> None:
    dims = _dims(args)
    eps = _epsilon(args)
    measure = MeasureKind(args.measure)
    text = args.polarization
    if text.startswith("pi0="):
        try:
            pi0 = float(text[4:])
        except ValueError:
            raise UsageError(f"bad pi0 value in {text!r}") from None
        if not 1.0 / dims.n_a <= pi0 <= 1.0:
            raise DomainError(f"pi0 must lie in [1/N, 1], got {pi0}")
        kind = "pi0"
    else:
        spec = _polarization(text, True, dims)
        spec.check_dims(dims)
        pi0 = analytics.reference_purity(spec.kind, dims, measure, spec.state)
        kind = spec.kind.value
    pred = analytics.predict(eps, pi0, dims, measure)
    row = {
        "dim_a": dims.n_a,
        "dim_b": dims.n_b,
        "measure": measure.value,
        "polarization": kind,
        "epsilon": eps,
        "eps4": eps**4,
        "pi0": pi0,
        "pi_unb": analytics.pi_unbiased(dims),
        "pi_unb_exact": analytics.pi_unbiased_exact(dims),
        "mean_purity": pred.mean_purity,
    }
    columns = list(row)
    if args.eta_star:
        th = analytics.eta_star(dims)
        row.update(eta_star=th.eta_star, eta_star_saturated=th.saturated)
        columns += ["eta_star", "eta_star_saturated"]
    meta = {"command": "predict", **{k: row[k] for k in ("dim_a", "dim_b", "measure", "polarization", "epsilon")}}
    emit(sys.stdout, args.output, columns, [row], meta)


def cmd_sample(args) -> None:
    dims = _dims(args)
    eps = _epsilon(args, default=0.0)
    measure = MeasureKind(args.measure)
    spec = _polarization(args.polarization, not args.no_randomize_local, dims).with_epsilon(eps)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    if args.emit_state and args.count != 1:
        raise UsageError("--emit-state writes a single state; use --count 1")
    rows = []
    for k in range(args.count):
        stream = RngStream(args.seed, args.stream + k)
        psi = polarized_sample(spec, dims, measure, stream)
        rho = partial_trace_b(psi)
        p = purity(rho)
        rows.append(
            {
                "stream": stream.stream_id,
                "norm_sq": psi.norm_sq,
                "purity": p,
                "normalized_purity": p / psi.norm_sq**2,
                "effective_dimension": effective_dimension(rho),
            }
        )
        if args.emit_state:
            save_state(psi, args.emit_state)
    meta = {
        "command": "sample",
        "dim_a": dims.n_a,
        "dim_b": dims.n_b,
        "spec": _spec_meta(spec),
        "measure": measure.value,
        "seed": args.seed,
        "stream": args.stream,
        "count": args.count,
    }
    emit(sys.stdout, args.output, list(rows[0]), rows, meta)


def cmd_fixed_purity(args) -> None:
    dims = _dims(args)
    if args.target_purity is None:
        raise UsageError("--target-purity is required")
    measure = MeasureKind(args.measure)
    drawn = fixed_purity_sample(args.target_purity, dims, RngStream(args.seed, args.stream), measure)
    p = purity(partial_trace_b(drawn.state))
    row = {
        "target_purity": args.target_purity,
        "epsilon": drawn.epsilon,
        "eps4": drawn.epsilon**4,
        "pi0": drawn.pi0,
        "kind": drawn.kind.value,
        "norm_sq": drawn.state.norm_sq,
        "purity": p,
    }
    columns = list(row)
    if args.trials:
        (check,) = mc.fixed_purity_experiment([args.target_purity], dims, args.trials, args.seed, measure, args.workers)
        row.update(sample_mean=check.sample_mean, stderr=check.stderr, z_score=check.z_score)
        columns += ["sample_mean", "stderr", "z_score"]
    if args.emit_state:
        save_state(drawn.state, args.emit_state)
    meta = {
        "command": "fixed-purity",
        "dim_a": dims.n_a,
        "dim_b": dims.n_b,
        "target_purity": args.target_purity,
        "measure": measure.value,
        "seed": args.seed,
        "stream": args.stream,
        "trials": args.trials,
    }
    emit(sys.stdout, args.output, columns, [row], meta)


_EXPERIMENT_FLAGS = ("dim_a", "dim_b", "eps4_grid", "trials", "seed", "polarization", "measure")


def experiment_config(args) -> mc.ExperimentConfig:
    if args.config:
        clashes = [f for f in _EXPERIMENT_FLAGS if getattr(args, f) is not None]
        if clashes or args.normalize or args.no_randomize_local:
            raise UsageError("--config cannot be combined with experiment flags")
        return mc.ExperimentConfig.from_json(Path(args.config).read_text())
    dims = _dims(args)
    spec = _polarization(args.polarization or "separable", not args.no_randomize_local, dims)
    return mc.ExperimentConfig(
        dims=dims,
        spec=spec,
        eps4_grid=parse_grid(args.eps4_grid or DEFAULT_EPS4_GRID),
        trials=args.trials if args.trials is not None else DEFAULT_TRIALS,
        master_seed=args.seed if args.seed is not None else 0,
        measure=MeasureKind(args.measure or "gaussian"),
        normalize=args.normalize,
    )


def cmd_experiment(args) -> None:
    cfg = experiment_config(args)
    result = mc.run_purity_experiment(cfg, workers=args.workers)
    log.info("experiment finished in %.2f s", result.wall_time)
    columns = ["eps4", "sample_mean", "sample_std", "stderr", "analytic_mean", "z_score"]
    emit(sys.stdout, args.output, columns, mc.rows_as_dicts(result.rows), {"command": "experiment", **cfg.to_dict()})


def cmd_moments(args) -> None:
    dims = _dims(args)
    measure = MeasureKind(args.measure)
    estimates = mc.estimate_moments(dims, args.trials, args.seed, measure, args.workers)
    if args.fourth:
        fm = mc.fourth_moment_oracle(dims, args.trials, args.seed, measure, args.workers)
        estimates += [e for e in (fm.delta_ij_coeff, fm.delta_munu_coeff, fm.coincident, fm.unpaired) if e is not None]
    rows = [
        {"name": e.name, "value": e.value, "stderr": e.stderr, "n": e.n, "analytic": e.analytic, "z_score": e.z_score}
        for e in estimates
    ]
    meta = {
        "command": "moments",
        "dim_a": dims.n_a,
        "dim_b": dims.n_b,
        "measure": measure.value,
        "trials": args.trials,
        "seed": args.seed,
        "fourth": args.fourth,
    }
    emit(sys.stdout, args.output, ["name", "value", "stderr", "n", "analytic", "z_score"], rows, meta)


def cmd_threshold(args) -> None:
    dims = _dims(args)
    th = analytics.eta_star(dims)
    crossing = None
    meta = {"command": "threshold", "dim_a": dims.n_a, "dim_b": dims.n_b, "scan": args.scan}
    if args.scan:
        grid = parse_grid(args.eta_grid)
        scan = mc.threshold_scan(dims, grid, args.trials, args.seed, args.workers)
        crossing = scan.crossing
        meta.update(eta_grid=grid, trials=args.trials, seed=args.seed)
        if args.scan_csv:
            cols = ["eta", "mean_purity", "stderr", "inv_mean_purity", "analytic_d_eff"]
            with open(args.scan_csv, "w") as fh:
                write_csv(fh, cols, mc.rows_as_dicts(scan.rows), meta)
    asym = analytics.eta_star_asymptotic()
    rows = [
        {
            "label": "finite",
            "dim_a": dims.n_a,
            "dim_b": dims.n_b,
            "pi_unb": th.pi_unb,
            "eta_star": th.eta_star,
            "eta_star_squared": th.eta_star_squared,
            "saturated": th.saturated,
            "mc_crossing": crossing,
        },
        {"label": "asymptotic", "eta_star": asym, "eta_star_squared": asym * asym, "saturated": False},
    ]
    columns = ["label", "dim_a", "dim_b", "pi_unb", "eta_star", "eta_star_squared", "saturated", "mc_crossing"]
    emit(sys.stdout, args.output, columns, rows, meta)


def cmd_concentration(args) -> None:
    dims = _dims(args)
    eps = _epsilon(args, default=0.0)
    alphas = parse_grid(args.alpha)
    if not alphas or any(a <= 0 for a in alphas):
        raise DomainError("alpha values must be positive")
    spec = _polarization(args.polarization, not args.no_randomize_local, dims).with_epsilon(eps)
    cfg = mc.ExperimentConfig(
        dims=dims,
        spec=spec,
        eps4_grid=(eps**4,),
        trials=args.trials,
        master_seed=args.seed,
        measure=MeasureKind(args.measure),
    )
    rows = []
    for r in mc.tail_frequency(cfg, alphas, args.workers):
        d = mc.rows_as_dicts([r])[0]
        d["within_bounds"] = r.within_bounds()
        rows.append(d)
    columns = list(rows[0])
    emit(sys.stdout, args.output, columns, rows, {"command": "concentration", **cfg.to_dict(), "alpha": alphas})


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--dim-a", type=int, help="dimension N of subsystem A")
    shared.add_argument("--dim-b", type=int, help="dimension M of subsystem B")
    shared.add_argument("--output", choices=("csv", "json"), default="csv")
    shared.add_argument("-v", "--verbose", action="store_true")

    def eps_flags(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--epsilon", type=float)
        g.add_argument("--eps4", type=float)

    def mc_flags(p, trials=DEFAULT_TRIALS):
        p.add_argument("--trials", type=int, default=trials)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="polarized", description="Polarized ensembles of random pure states.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", parents=[shared], help="closed-form typical purity")
    eps_flags(p)
    p.add_argument("--polarization", default="separable", help="unbiased|separable|maxent|pi0=<v>|fixed:<path>")
    p.add_argument("--measure", choices=("gaussian", "sphere"), default="gaussian")
    p.add_argument("--eta-star", action="store_true", help="also report the separability threshold")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sample", parents=[shared], help="draw polarized states")
    eps_flags(p)
    p.add_argument("--polarization", default="separable")
    p.add_argument("--measure", choices=("gaussian", "sphere"), default="gaussian")
    p.add_argument("--no-randomize-local", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--emit-state", metavar="PATH")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fixed-purity", parents=[shared], help="sample at a prescribed typical purity")
    p.add_argument("--target-purity", type=float)
    p.add_argument("--measure", choices=("gaussian", "sphere"), default="gaussian")
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--emit-state", metavar="PATH")
    mc_flags(p, trials=0)
    p.set_defaults(func=cmd_fixed_purity)

    p = sub.add_parser("experiment", parents=[shared], help="purity vs eps^4 Monte Carlo")
    p.add_argument("--config", metavar="PATH", help="ExperimentConfig JSON file")
    p.add_argument("--polarization")
    p.add_argument("--eps4-grid", help=f"a:b:step or list (default {DEFAULT_EPS4_GRID})")
    p.add_argument("--measure", choices=("gaussian", "sphere"))
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--no-randomize-local", action="store_true")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("moments", parents=[shared], help="Monte Carlo moment identities")
    p.add_argument("--measure", choices=("gaussian", "sphere"), default="gaussian")
    p.add_argument("--fourth", action="store_true", help="add fourth-moment coefficient rows")
    mc_flags(p)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("threshold", parents=[shared], help="separability threshold")
    p.add_argument("--scan", action="store_true", help="locate the d_eff = 2 crossing by Monte Carlo")
    p.add_argument("--eta-grid", default=DEFAULT_ETA_GRID)
    p.add_argument("--scan-csv", metavar="PATH", help="write the per-eta scan table here")
    mc_flags(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("concentration", parents=[shared], help="tail frequencies vs Gaussian bounds")
    eps_flags(p)
    p.add_argument("--alpha", default=DEFAULT_ALPHAS, help="comma list or a:b:step")
    p.add_argument("--polarization", default="separable")
    p.add_argument("--measure", choices=("gaussian", "sphere"), default="gaussian")
    p.add_argument("--no-randomize-local", action="store_true")
    mc_flags(p)
    p.set_defaults(func=cmd_concentration)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        args.func(args)
    except (UsageError, DomainError, DimensionError, mc.ConfigError, json.JSONDecodeError) as exc:
        print(f"polarized {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"polarized {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal failure")
        print(f"polarized {args.command}: internal error: {exc}", file=sys.stderr)
        return 1
    log.info("%s done in %.2f s", args.command, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
