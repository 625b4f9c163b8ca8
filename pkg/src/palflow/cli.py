"""Command-line front end: ``palflow list | run | validate``.

Exit codes: 0 converged, 2 user error, 3 numeric fault, 4 time limit
reached without convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from palflow.dynamics import DynamicsParams, PrimalDualState, StateLayout
from palflow.engine import (
    IntegratorConfig,
    Method,
    StopReason,
    Trajectory,
    continuation,
    solve,
)
from palflow.errors import IntegrationError, PalflowError, ProblemFileError
from palflow.io import load_problem_file
from palflow.network import (
    W_INIT_MODES,
    NetworkLayout,
    NetworkSpec,
    NetworkState,
    node_to_edge_multiplier,
    simulate,
    simulate_continuation,
    stacked_problem,
    stacked_state,
)
from palflow.problem import ProblemSpec, oracle_gradient_error
from palflow.problems import REGISTRY, get_entry, list_problems

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER = 2
EXIT_NUMERIC = 3
EXIT_TIME_LIMIT = 4

MODES = ("centralized", "distributed")
FORMATS = ("csv", "json", "both")
DEFAULT_OUT = "palflow_out"
DEFAULT_T_END = 100.0
SUMMARY_VERSION = 1


class UsageError(PalflowError):
    """Bad command-line input; reported with exit code 2."""


@dataclass(frozen=True, eq=False)
class RunConfig:
    problem: str
    mu: float = 0.1
    eta: float | list[float] | None = None
    dt: float = 1e-3
    t_end: float | None = None
    kkt_tol: float = 1e-6
    method: str = "rk4"
    mu_schedule: list[float] | None = None
    out_dir: str = DEFAULT_OUT
    format: str = "csv"
    mode: str | None = None
    record_every: int = 10
    w_init: str | None = None


@dataclass(eq=False)
class _Resolved:
    name: str
    problem: ProblemSpec | NetworkSpec
    initial: Any
    eta: Any
    t_end: float


def _resolve(cfg: RunConfig) -> _Resolved:
    """Look up a registry name, or else treat ``cfg.problem`` as a file path."""
    if cfg.problem in REGISTRY:
        entry = get_entry(cfg.problem)
        if entry.mode == "distributed":
            net, state = entry.build(w_init=cfg.w_init or "uniform")
            return _Resolved(entry.name, net, state, None, entry.t_end)
        if cfg.w_init is not None:
            raise UsageError("--w-init only applies to distributed problems")
        spec = entry.build()
        initial = entry.initial(spec) if entry.initial else None
        return _Resolved(entry.name, spec, initial, None, entry.t_end)
    path = Path(cfg.problem)
    if not path.exists():
        raise UsageError(f"unknown problem {cfg.problem!r}: not a registry name "
                         f"({', '.join(sorted(REGISTRY))}) and no such file")
    if cfg.w_init is not None:
        raise UsageError("--w-init only applies to registry problems")
    pf = load_problem_file(path)
    return _Resolved(pf.problem.name, pf.problem, pf.initial, pf.eta, DEFAULT_T_END)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _header(problem, mode: str) -> list[str]:
    if mode == "distributed":
        lay = NetworkLayout(problem)
        cols = [f"x{i + 1}_{j + 1}" for i in range(lay.N) for j in range(lay.n)]
        cols += [f"lambda{i + 1}_{k + 1}" for i, r in enumerate(lay.r_sizes) for k in range(r)]
        cols += [f"nu{i + 1}_{k + 1}" for i, s in enumerate(lay.s_sizes) for k in range(s)]
        cols += [f"w{i + 1}_{j + 1}" for i in range(lay.N) for j in range(lay.n)]
        return ["t", *cols, "kkt_total", "consensus_error"]
    lay = StateLayout.of(problem)
    cols = [f"x{j + 1}" for j in range(lay.n)]
    cols += [f"lambda{k + 1}" for k in range(lay.r)]
    cols += [f"nu{k + 1}" for k in range(lay.s)]
    cols += [f"w{k + 1}" for k in range(lay.m)]
    return ["t", *cols, "kkt_total"]


def _rows(trajs: Sequence[Trajectory], mode: str):
    """Sample rows across (possibly several) trajectories, dropping repeated boundaries."""
    last_t = -math.inf
    for traj in trajs:
        cons = traj.extras.get("consensus_error")
        for k, t in enumerate(traj.times):
            if t <= last_t:
                continue
            last_t = t
            row = [t, *traj.states[k], traj.kkt_total[k]]
            if mode == "distributed":
                row.append(cons[k])
            yield row


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(float(v))


def write_trajectory_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            # repr of a float is the shortest string that round-trips, at most 17 digits
            wr.writerow([_fmt(v) for v in row])


def write_trajectory_json(path: Path, header: list[str], rows) -> None:
    doc = {"columns": header, "rows": [[_jsonable(float(v)) for v in row] for row in rows]}
    path.write_text(json.dumps(doc) + "\n", encoding="utf-8")


def _multipliers(state, mode: str) -> dict:
    if mode == "distributed":
        return {"lambda": [l.tolist() for l in state.lam], "nu": [v.tolist() for v in state.nu],
                "w": state.w.tolist()}
    return {"lambda": state.lam.tolist(), "nu": state.nu.tolist(), "w": state.w.tolist()}


def _round_dict(r) -> dict:
    return {"mu": r.mu, "converged": r.converged, "stop_reason": r.stop_reason.value,
            "kkt_total": _jsonable(r.kkt_total), "t_final": r.t_final}


def _central_state(res: _Resolved, mode: str):
    """Problem and initial state for a centralized run (stacking networks if asked)."""
    if isinstance(res.problem, NetworkSpec):
        net = res.problem
        spec = stacked_problem(net)
        st: NetworkState = res.initial
        if st is None:
            return spec, None
        return spec, stacked_state(net, st, node_to_edge_multiplier(net, st.w))
    return res.problem, res.initial


def execute(cfg: RunConfig) -> tuple[int, dict]:
    """Run one configuration, write its files and return ``(exit code, summary)``."""
    if cfg.format not in FORMATS:
        raise UsageError(f"format must be one of {FORMATS}")
    res = _resolve(cfg)
    is_net = isinstance(res.problem, NetworkSpec)
    mode = cfg.mode or ("distributed" if is_net else "centralized")
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    if mode == "distributed" and not is_net:
        raise UsageError("distributed mode needs a problem with agents and edges")
    if is_net and res.initial is None:
        # zero primal start, unit multipliers
        net = res.problem
        res.initial = NetworkState(np.zeros((net.N, net.n)),
                                   tuple(np.ones(r) for r in net.r_sizes),
                                   tuple(np.zeros(s) for s in net.s_sizes),
                                   np.zeros((net.N, net.n)))
    eta = cfg.eta if cfg.eta is not None else (res.eta if res.eta is not None else 1.0)
    params = DynamicsParams(cfg.mu, eta)
    t_end = cfg.t_end if cfg.t_end is not None else res.t_end
    icfg = IntegratorConfig(method=Method(cfg.method), dt=cfg.dt, t_end=t_end,
                            record_every=cfg.record_every)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    rounds = []
    if mode == "distributed":
        net: NetworkSpec = res.problem
        if cfg.mu_schedule:
            sol, rounds = simulate_continuation(net, cfg.mu_schedule, params, icfg,
                                                cfg.kkt_tol, res.initial)
            trajs = [r.trajectory for r in rounds]
        else:
            sol = simulate(net, res.initial, params, icfg, cfg.kkt_tol)
            trajs = [sol.trajectory]
        header = _header(net, mode)
        final = sol.state
        x_star, cons = final.x.tolist(), sol.consensus_error
        extra = {"x_mean": final.x.mean(axis=0).tolist()}
    else:
        spec, state0 = _central_state(res, mode)
        state0 = state0 if state0 is not None else PrimalDualState.initial(spec)
        if cfg.mu_schedule:
            sol = continuation(spec, cfg.mu_schedule, params, icfg, cfg.kkt_tol, state0)
            rounds = sol.rounds
            trajs = [r.trajectory for r in rounds]
        else:
            sol = solve(spec, params, icfg, cfg.kkt_tol, state0)
            trajs = [sol.trajectory]
        header = _header(spec, mode)
        final = sol.final_state
        x_star, cons, extra = final.x.tolist(), None, {}
    wall = time.perf_counter() - start

    if cfg.format in ("csv", "both"):
        write_trajectory_csv(out / "trajectory.csv", header, _rows(trajs, mode))
    if cfg.format in ("json", "both"):
        write_trajectory_json(out / "trajectory.json", header, _rows(trajs, mode))

    last = trajs[-1]
    summary = {
        "schema_version": SUMMARY_VERSION,
        "problem": res.name,
        "mode": mode,
        "converged": bool(sol.converged),
        "stop_reason": sol.stop_reason.value,
        "final_kkt": {k: _jsonable(v) for k, v in sol.kkt.as_dict().items()},
        "x_star": x_star,
        **extra,
        "multipliers": _multipliers(final, mode),
        "rate_estimate": None if sol.rate_estimate is None else sol.rate_estimate.as_dict(),
        "wall_time": wall,
        "t_final": float(last.times[-1]),
        "steps": int(sum(t.steps for t in trajs)),
        "min_lambda": _jsonable(min(t.min_lambda for t in trajs)),
        "clamp_events": int(sum(t.clamp_events for t in trajs)),
        "consensus_error": cons,
        "continuation_rounds": [_round_dict(r) for r in rounds],
        "config": {
            "problem": cfg.problem, "mode": mode, "mu": params.mu,
            "eta": _jsonable(params.eta) if params.eta.ndim else float(params.eta),
            "dt": icfg.dt, "t_end": icfg.t_end, "kkt_tol": cfg.kkt_tol,
            "method": icfg.method.value,
            "mu_schedule": None if not cfg.mu_schedule else [float(m) for m in cfg.mu_schedule],
            "record_every": icfg.record_every, "format": cfg.format, "out_dir": str(out),
            "w_init": cfg.w_init,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if sol.converged:
        code = EXIT_OK
    elif sol.stop_reason is StopReason.NON_FINITE:
        code = EXIT_NUMERIC
    else:
        code = EXIT_TIME_LIMIT
    return code, summary


def validate(path: str, points: int = 5, seed: int = 0) -> dict:
    """Parse a problem file and compare its gradients with finite differences."""
    pf = load_problem_file(path)
    rng = np.random.default_rng(seed)
    if pf.is_network:
        net: NetworkSpec = pf.problem
        oracles = [o for lp in net.local_problems for o in (lp.f, *lp.g, *lp.h)]
        n = net.n
    else:
        spec: ProblemSpec = pf.problem
        oracles = [spec.f, *spec.g, *spec.h]
        n = spec.n
    worst = 0.0
    for _ in range(points):
        x = rng.standard_normal(n)
        worst = max(worst, max(oracle_gradient_error(o, x) for o in oracles))
    info = {"path": str(path), "name": pf.problem.name, "kind": "network" if pf.is_network
            else "centralized", "n": n, "oracles": len(oracles), "max_gradient_error": worst}
    if pf.is_network:
        info.update(N=net.N, edges=[list(e) for e in net.graph.edges])
    else:
        info.update(r=spec.r, s=spec.s, m=spec.m, phi=spec.phi.kind.value)
    return info


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _eta(text: str) -> float | list[float]:
    vals = _float_list(text)
    return vals[0] if len(vals) == 1 and "," not in text else vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="palflow", description="Proximal augmented Lagrangian "
                                "primal-dual flows for constrained convex problems.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list registry problems as JSON")

    run = sub.add_parser("run", help="integrate a problem and write results")
    run.add_argument("--problem", required=True, help="registry name or path to a JSON file")
    run.add_argument("--mu", type=float, default=0.1, help="smoothing parameter (default 0.1)")
    run.add_argument("--eta", type=_eta, default=None,
                     help="mirror weight, a scalar or a comma-separated list (default 1.0)")
    run.add_argument("--dt", type=float, default=1e-3, help="step size (default 1e-3)")
    run.add_argument("--t-end", type=float, default=None,
                     help="horizon (default: per problem, 100 for files)")
    run.add_argument("--kkt-tol", type=float, default=1e-6, help="stopping tolerance")
    run.add_argument("--method", choices=[m.value for m in Method], default="rk4")
    run.add_argument("--mu-schedule", type=_float_list, default=None,
                     help="decreasing comma-separated mu values for continuation")
    run.add_argument("--mode", choices=MODES, default=None,
                     help="default: distributed for network problems, else centralized")
    run.add_argument("--out", default=DEFAULT_OUT,
                     help=f"output directory (default {DEFAULT_OUT}; PALFLOW_OUT overrides)")
    run.add_argument("--format", choices=FORMATS, default="csv", help="trajectory format")
    run.add_argument("--record-every", type=int, default=10, help="keep every k-th step")
    run.add_argument("--w-init", choices=W_INIT_MODES, default=None,
                     help="initial consensus multiplier for rosen-suzuki-distributed")

    val = sub.add_parser("validate", help="parse a problem file and check its gradients")
    val.add_argument("path")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USER
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list":
            print(json.dumps(list_problems(), indent=2))
            return EXIT_OK
        if args.command == "validate":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                print(json.dumps(validate(args.path), indent=2))
            return EXIT_OK
        cfg = RunConfig(
            problem=args.problem, mu=args.mu, eta=args.eta, dt=args.dt, t_end=args.t_end,
            kkt_tol=args.kkt_tol, method=args.method, mu_schedule=args.mu_schedule,
            out_dir=os.environ.get("PALFLOW_OUT") or args.out, format=args.format,
            mode=args.mode, record_every=args.record_every, w_init=args.w_init)
        code, summary = execute(cfg)
        print(json.dumps({k: summary[k] for k in ("problem", "converged", "stop_reason",
                                                   "t_final", "wall_time")}))
        print(f"final kkt_total {summary['final_kkt']['total']:.3e}; "
              f"results in {cfg.out_dir}", file=sys.stderr)
        return code
    except IntegrationError as exc:
        print(f"palflow: numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ProblemFileError, UsageError, PalflowError, ValueError) as exc:
        print(f"palflow: error: {exc}", file=sys.stderr)
        return EXIT_USER


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
