"""Command-line driver: config ingestion, subcommand dispatch, artifact emission.

Usage::

    foliage <subcommand> --config <path> [--out <dir>] [--seed <n>]

Subcommands: ``eigen`` (spectrum CSV plus the semigroup bound report),
``simulate`` (trajectory and noise CSVs), ``gap`` (gap report JSON),
``fiber`` (fiber sweep CSV), ``approx`` (expansion report JSON),
``verify`` (all claim reports).  Exit status 0 means every invoked check
passed, 1 a failed check or solver error, 2 a usage error.  The environment
variable ``FOLIAGE_THREADS`` caps per-seed worker parallelism.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, manifest_hash, manifest_text, normalize
from .dynamics import DynamicsError, integrate
from .expansion import first_order_fd_check, remainder_study
from .experiments import (
    ExperimentConfig,
    approach_rate_claim,
    invariance_claim,
    lipschitz_claim,
)
from .foliation import FiberQuery, GapConditionError, PicardConvergenceError, lyapunov_perron
from .noise import NoiseError
from .reporting import write_csv, write_json
from .scenarios import Problem, build_problem
from .spectral import SpectralError, semigroup_bounds_report

_SUBCOMMANDS = ("eigen", "simulate", "gap", "fiber", "approx", "verify")


def _cmd_eigen(problem: Problem, out: Path, cfg: RunConfig, sha: str) -> bool:
    model = problem.model
    write_csv(out / "spectrum.csv", ["k", "lambda_k"],
              [(k + 1, lam) for k, lam in enumerate(model.lambdas)])
    times = list(cfg.check_times) + [0.0] + [-t for t in cfg.check_times]
    reports = {}
    ok = True
    for alpha in cfg.check_alphas:
        rep = semigroup_bounds_report(model, alpha, times)
        reports[f"alpha_{alpha}"] = rep.as_dict()
        ok = ok and rep.passed
    write_json(out / "semigroup_bounds.json", {"passed": ok, "reports": reports}, sha)
    return ok


def _cmd_simulate(problem: Problem, out: Path, cfg: RunConfig, sha: str) -> bool:
    seed = cfg.seeds[0]
    path = problem.path(seed)
    traj = integrate(problem.x0, path, cfg.eps, cfg.sim_t, cfg.h, problem.model, problem.nl)
    names = [f"c_{k+1}" for k in range(problem.model.dof)] if cfg.output_basis == "coords" \
        else [f"u_{k}" for k in range(problem.model.dof)]
    write_csv(out / "trajectory.csv", ["t"] + names,
              traj.csv_rows(problem.model, cfg.output_basis))
    write_csv(out / "noise.csv",
              ["t"] + [f"z_{k+1}" for k in range(path.samples.shape[0])],
              path.csv_rows())
    return True


def _cmd_gap(problem: Problem, out: Path, cfg: RunConfig, sha: str) -> bool:
    payload = {"gap": problem.gap.as_dict(), "gap_linear": problem.gap_linear.as_dict()}
    write_json(out / "gap.json", payload, sha)
    return problem.gap.admissible


def _cmd_fiber(problem: Problem, out: Path, cfg: RunConfig, sha: str) -> bool:
    model = problem.model
    seed = cfg.seeds[0]
    path = problem.path(seed)
    base = integrate(problem.x0, path, cfg.eps, cfg.fiber_t, cfg.h, model, problem.nl)
    offsets = np.linspace(-cfg.sweep_scale, cfg.sweep_scale, cfg.sweep_count)
    rows = []
    for off in offsets:
        zeta = np.zeros(model.dof)
        zeta[model.stable] = problem.x0[model.stable]
        zeta[model.N] += off
        query = FiberQuery(problem.x0, zeta, path, cfg.eps, cfg.fiber_t, cfg.h,
                           cfg.tol, cfg.max_iter, cfg.alpha, problem.gap)
        sol = lyapunov_perron(query, base, model, problem.nl)
        rows.append(tuple(zeta[model.stable]) + tuple(sol.fiber_value[model.slow])
                    + (sol.iterations, sol.final_residual))
    header = [f"zeta_{k+1}" for k in range(model.N, model.dof)] \
        + [f"f_{k+1}" for k in range(model.N)] + ["iterations", "residual"]
    write_csv(out / "fiber_sweep.csv", header, rows)
    return True


def _cmd_approx(problem: Problem, out: Path, cfg: RunConfig, sha: str) -> bool:
    model = problem.model
    seed = cfg.seeds[0]
    path = problem.path(seed)
    rng = np.random.default_rng([seed, 505])
    zeta = problem.sample_zeta(rng)
    study = remainder_study(zeta, problem.x0, path, cfg.eps_list, cfg.fiber_t, cfg.h,
                            cfg.approx_tol, cfg.max_iter, cfg.alpha, model, problem.nl)
    fd = first_order_fd_check(zeta, problem.x0, path, cfg.fd_eps, cfg.fiber_t, cfg.h,
                              cfg.approx_tol, cfg.max_iter, cfg.alpha, model, problem.nl,
                              gap=problem.gap, f_1=study.results[0].f_1)
    ref = study.results[0]
    linear_like = study.slope is None
    if linear_like:
        ok = all(r.R2_norm <= 10.0 * cfg.approx_tol for r in study.results)
    else:
        ok = 1.8 <= study.slope <= 2.2 and fd["rel_error"] <= 1e-3
    payload = {
        "eps": cfg.eps,
        "f_d": ref.f_d[model.slow],
        "f_1": ref.f_1[model.slow],
        "f_eps": [
            {"eps": r.eps, "f_eps": r.f_eps[model.slow]} for r in study.results
        ],
        "R2_norm": [{"eps": r.eps, "R2_norm": r.R2_norm} for r in study.results],
        "slope": study.slope,
        "c_omega": study.c_omega,
        "fd_check": {"fd_eps": fd["fd_eps"], "rel_error": fd["rel_error"]},
        "passed": ok,
    }
    write_json(out / "expansion.json", payload, sha)
    return ok


def _cmd_verify(problem: Problem, out: Path, cfg: RunConfig, sha: str) -> bool:
    excfg = ExperimentConfig(scenario=cfg.nonlinearity, problem=problem, seeds=cfg.seeds)
    reports = []

    rep = approach_rate_claim(excfg)
    traces = rep.details.pop("traces")
    for seed_str, (times, dvals) in traces.items():
        rel = f"approach_trace_seed{seed_str}.csv"
        write_csv(out / rel, ["t", "distance"], zip(times, dvals))
        rep.artifacts[f"trace_seed_{seed_str}"] = rel
    reports.append(rep)

    reports.append(invariance_claim(excfg))
    reports.append(lipschitz_claim(excfg))

    for rep in reports:
        write_json(out / f"claim_{rep.claim}.json", rep.as_dict(), sha)
    summary = {
        "passed": all(r.passed for r in reports),
        "claims": {r.claim: r.passed for r in reports},
    }
    write_json(out / "verify.json", summary, sha)
    return summary["passed"]


_DISPATCH = {
    "eigen": _cmd_eigen,
    "simulate": _cmd_simulate,
    "gap": _cmd_gap,
    "fiber": _cmd_fiber,
    "approx": _cmd_approx,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="foliage",
        description="Stable fibers of a stochastic heat equation with dynamic boundary values.",
    )
    parser.add_argument("subcommand", choices=_SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--out", default="foliage_out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="replace the seed list by one seed")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else normalize(RunConfig())
        if args.seed is not None:
            cfg = normalize(replace(cfg, seeds=(args.seed,)))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        text = manifest_text(cfg, __version__)
        sha = manifest_hash(text)
        (out / "manifest.txt").write_text(text, encoding="utf-8")
        problem = build_problem(cfg)
        passed = _DISPATCH[args.subcommand](problem, out, cfg, sha)
    except (ConfigError, GapConditionError, PicardConvergenceError, DynamicsError,
            NoiseError, SpectralError, ValueError) as exc:
        print(f"foliage: error: {exc}", file=sys.stderr)
        return 1
    if not passed:
        print(f"foliage: {args.subcommand}: checks FAILED (see {args.out})", file=sys.stderr)
        return 1
    print(f"foliage: {args.subcommand}: ok ({args.out})")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
