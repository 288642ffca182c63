"""Command-line entry point: ``gcconsensus {synthesize,simulate,mincost,verify} CONFIG``.

Exit codes
----------
0  success
1  unexpected library error
2  (A, B) not stabilizable
3  Riccati equation has no stabilizing positive definite solution
4  configuration or cost-matrix error
5  simulation left the finite-state box
6  minimum-cost LMIs infeasible
7  at least one verified property failed
"""

import argparse
import json
import sys
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import verify as verify_mod
from .config import load_json, parse_config
from .errors import (
    BadCostMatrix,
    ConsensusError,
    Disconnected,
    DwellViolation,
    EmptySet,
    Infeasible,
    NoStabilizingSolution,
    NonFiniteState,
    NotPositiveDefinite,
    NotStabilizable,
    ParseError,
    SizeMismatch,
    ValidationError,
)
from .mincost import LmiProblem, barrier_solve
from .sim import convergence_report, generate_signal, integrate, write_csv
from .synthesis import guaranteed_cost, synthesize

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_NOT_STABILIZABLE = 2
EXIT_NO_CARE = 3
EXIT_CONFIG = 4
EXIT_NONFINITE = 5
EXIT_INFEASIBLE = 6
EXIT_VERIFY = 7

# first match wins, so subclasses must precede their bases
ERROR_CODES = (
    (NotStabilizable, EXIT_NOT_STABILIZABLE),
    ((NoStabilizingSolution, NotPositiveDefinite), EXIT_NO_CARE),
    ((ParseError, ValidationError, BadCostMatrix, Disconnected, EmptySet, SizeMismatch,
      DwellViolation), EXIT_CONFIG),
    (NonFiniteState, EXIT_NONFINITE),
    (Infeasible, EXIT_INFEASIBLE),
)


def exit_code_for(exc):
    for types, code in ERROR_CODES:
        if isinstance(exc, types):
            return code
    return EXIT_OTHER


@dataclass
class ReportSummary:
    lambda_min: float
    lambda_max: float
    K: list
    beta: Optional[float] = None
    beta_star: Optional[float] = None
    residual: Optional[float] = None
    margins: Optional[list] = None
    consensus_time: Optional[float] = None
    J_T_final: Optional[float] = None
    bound_satisfied: Optional[bool] = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _emit(summary):
    print(json.dumps(summary.to_dict(), indent=2))


def cmd_synthesize(cfg, out_dir):
    res = synthesize(cfg.model, cfg.cost, cfg.topology, cfg.mode)
    beta = guaranteed_cost(res, cfg.sim.x0, cfg.N)
    _write_json(out_dir / "synthesis.json", res.to_dict(beta))
    topo = cfg.topology
    _emit(ReportSummary(topo.lambda_min, topo.lambda_max, res.K.tolist(), beta=beta,
                        residual=res.residual))
    return EXIT_OK


def _load_gain(path, cfg):
    data = load_json(path)
    if "K" not in data:
        raise ValidationError("gain.K", "missing")
    K = np.atleast_2d(np.asarray(data["K"], dtype=float))
    if K.shape != (cfg.model.p, cfg.model.d):
        raise ValidationError("gain.K", f"shape {K.shape}, expected {(cfg.model.p, cfg.model.d)}")
    P = np.asarray(data["P"], dtype=float) if data.get("P") is not None else None
    return K, P


def cmd_simulate(cfg, out_dir, gain=None):
    if gain is None:
        res = synthesize(cfg.model, cfg.cost, cfg.topology, cfg.mode)
        K, P = res.K, res.P
    else:
        K, P = _load_gain(gain, cfg)
    beta = guaranteed_cost(P, cfg.sim.x0, cfg.N) if P is not None else float("inf")
    sig = generate_signal(dict(cfg.switching, t_end=cfg.sim.t_end), cfg.topology)
    try:
        traj = integrate(cfg.model, K, cfg.topology, sig, cfg.sim.x0, cfg.sim.t_end, cfg.sim.dt,
                         P=P, cost=cfg.cost)
    except NonFiniteState as exc:
        if exc.trajectory is not None:
            write_csv(exc.trajectory, out_dir / "trajectory.csv")
        raise
    write_csv(traj, out_dir / "trajectory.csv")
    rep = convergence_report(traj, beta)
    topo = cfg.topology
    summary = ReportSummary(topo.lambda_min, topo.lambda_max, K.tolist(),
                            beta=beta if P is not None else None,
                            consensus_time=rep.consensus_time, J_T_final=rep.J_T_final,
                            bound_satisfied=rep.bound_satisfied if P is not None else None)
    payload = summary.to_dict()
    payload["V_monotone"] = rep.V_monotone
    payload["cost_form_max_relative_gap"] = traj.cost_check
    _write_json(out_dir / "summary.json", payload)
    _emit(summary)
    return EXIT_OK


def cmd_mincost(cfg, out_dir):
    prob = LmiProblem.from_problem(cfg.model, cfg.cost, cfg.topology, cfg.mode,
                                   cfg.paper_literal_lmi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = barrier_solve(prob, cfg.N)
    payload = res.to_dict()
    payload["mu_final"] = res.mu_final
    payload["gap_bound"] = res.gap_bound
    payload["stalled"] = res.stalled
    try:
        care = synthesize(cfg.model, cfg.cost, cfg.topology, cfg.mode)
        payload["beta_care"] = 0.5 * cfg.N * float(np.trace(care.P))
    except ConsensusError:
        payload["beta_care"] = None
    _write_json(out_dir / "mincost.json", payload)
    topo = cfg.topology
    _emit(ReportSummary(topo.lambda_min, topo.lambda_max, res.K.tolist(),
                        beta_star=res.beta_star, margins=list(res.margins)))
    return EXIT_OK


def cmd_verify(cfg, out_dir, seed=None):
    results = verify_mod.run_suite(cfg, seed)
    payload = verify_mod.to_dict(results)
    _write_json(out_dir / "verify.json", payload)
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        if r.informational:
            tag = f"INFO-{tag}"
        print(f"{tag:10s} {r.name:32s} {r.detail}")
    return EXIT_OK if payload["all_passed"] else EXIT_VERIFY


def build_parser():
    parser = argparse.ArgumentParser(prog="gcconsensus",
                                     description="Guaranteed-cost consensus synthesis and simulation.")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="directory for artifacts")
    parser.add_argument("--dt", type=float, default=None, help="override the integration step")
    parser.add_argument("--seed", type=int, default=None, help="override the random seed")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synthesize", "mincost", "verify"):
        sub.add_parser(name).add_argument("config", type=Path)
    sim = sub.add_parser("simulate")
    sim.add_argument("config", type=Path)
    sim.add_argument("--gain", type=Path, default=None, help="JSON file with K (and optionally P)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config).with_overrides(dt=args.dt, seed=args.seed)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, args.out_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out_dir, args.gain)
        if args.command == "mincost":
            return cmd_mincost(cfg, args.out_dir)
        return cmd_verify(cfg, args.out_dir, args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConsensusError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
