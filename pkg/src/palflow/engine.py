"""Integrators, convergence detection, rate fitting and mu-continuation."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Protocol, Sequence

import numpy as np
from scipy.integrate import RK45

from palflow.dynamics import (
    DynamicsParams,
    PrimalDualState,
    StateLayout,
    field_flat,
    lyapunov_value,
)
from palflow.errors import ContractError, EstimationError, IntegrationError, ParameterError
from palflow.problem import KktPoint, ProblemSpec, ResidualReport, kkt_residual, recover_multipliers

log = logging.getLogger(__name__)

NEG_LAMBDA_TOL = 1e-12
MIN_ADAPTIVE_STEP = 1e-14


class Method(str, enum.Enum):
    RK4_FIXED = "rk4"
    RK45_ADAPTIVE = "rk45"


class StopReason(str, enum.Enum):
    KKT_TOL = "kkt_tol"
    TIME_LIMIT = "time_limit"
    NON_FINITE = "non_finite"


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.RK4_FIXED
    dt: float = 1e-3
    t_end: float = 100.0
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    record_every: int = 10

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        for name in ("dt", "t_end", "abs_tol", "rel_tol"):
            val = float(getattr(self, name))
            if not (val > 0 and math.isfinite(val)):
                raise ParameterError(f"{name} must be finite and > 0, got {val}")
        if int(self.record_every) < 1:
            raise ParameterError("record_every must be a positive integer")


class Flow(Protocol):
    """What the step loop needs to know about a system."""

    size: int
    lam_index: np.ndarray

    def field(self, z: np.ndarray) -> np.ndarray: ...

    def kkt(self, z: np.ndarray) -> ResidualReport: ...

    def unpack(self, z: np.ndarray, t: float) -> Any: ...

    def extras(self, z: np.ndarray) -> dict[str, float]: ...


class CentralFlow:
    """The centralized PAL flow on a flattened ``(x, lam, nu, w)`` vector."""

    def __init__(self, spec: ProblemSpec, params: DynamicsParams):
        self.spec = spec
        self.params = params
        self.layout = StateLayout.of(spec)
        self.size = self.layout.size
        self.lam_index = np.arange(self.layout.n, self.layout.n + self.layout.r)
        params.eta_for(spec.r)

    def field(self, z):
        return field_flat(self.spec, self.params, self.layout, z)

    def kkt(self, z):
        x, lam, nu, w = self.layout.split(z)
        pt = KktPoint(x, np.maximum(lam, 0.0), nu, w)
        return kkt_residual(self.spec, pt, self.params.mu)

    def unpack(self, z, t=0.0):
        return self.layout.unpack(z, t)

    def extras(self, z):
        return {}


@dataclass(eq=False)
class Trajectory:
    """Recorded samples of one integration run.

    ``states`` holds flattened states row by row; :attr:`samples` unpacks
    them. ``lyapunov_max_increase`` and ``min_lambda`` are tracked over
    every accepted step, not only the recorded ones.
    """

    flow: Any = field(repr=False)
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    kkt_total: np.ndarray = field(repr=False)
    field_norm: np.ndarray = field(repr=False)
    lyapunov: np.ndarray | None = field(default=None, repr=False)
    extras: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    stop_reason: StopReason = StopReason.TIME_LIMIT
    steps: int = 0
    min_lambda: float = math.inf
    clamp_events: int = 0
    lyapunov_max_increase: float | None = None
    final_kkt: ResidualReport | None = None

    def __len__(self) -> int:
        return len(self.times)

    def state(self, k: int):
        return self.flow.unpack(self.states[k].copy(), float(self.times[k]))

    @property
    def samples(self) -> list:
        return [(float(t), self.state(k)) for k, t in enumerate(self.times)]

    @property
    def final_state(self):
        return self.state(-1)


class _Recorder:
    def __init__(self, flow: Flow, lyap: Callable[[np.ndarray], float] | None):
        self.flow = flow
        self.lyap = lyap
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.kkt: list[float] = []
        self.fnorm: list[float] = []
        self.lyap_vals: list[float] = []
        self.extras: dict[str, list[float]] = {}
        self.last_report: ResidualReport | None = None

    def record(self, t: float, z: np.ndarray) -> float:
        report = self.flow.kkt(z)
        self.last_report = report
        self.times.append(t)
        self.states.append(z.copy())
        self.kkt.append(report.total)
        self.fnorm.append(float(np.linalg.norm(self.flow.field(z))))
        if self.lyap is not None:
            self.lyap_vals.append(self.lyap(z))
        for key, val in self.flow.extras(z).items():
            self.extras.setdefault(key, []).append(val)
        return report.total


def _rk4_step(fun, z, h):
    k1 = fun(z)
    k2 = fun(z + 0.5 * h * k1)
    k3 = fun(z + 0.5 * h * k2)
    k4 = fun(z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_flow(flow: Flow, z0: np.ndarray, cfg: IntegratorConfig, *,
             stop_tol: float | None = None,
             lyapunov: Callable[[np.ndarray], float] | None = None,
             t0: float = 0.0) -> Trajectory:
    """Integrate ``flow`` from ``z0`` and collect diagnostics.

    Every accepted step is checked for finiteness and multiplier sign.
    Entries of ``lam`` in ``[-1e-12, 0)`` are clamped to zero and counted;
    anything more negative raises :class:`IntegrationError`. When
    ``stop_tol`` is given the run ends at the first recorded sample whose
    KKT total is at most ``stop_tol``.
    """
    z = np.array(z0, dtype=float)
    if z.shape != (flow.size,):
        raise ContractError(f"initial state has shape {z.shape}, expected ({flow.size},)")
    lam_idx = flow.lam_index
    if lam_idx.size and np.any(z[lam_idx] <= 0):
        bad = [int(i) for i in np.flatnonzero(z[lam_idx] <= 0)]
        raise ContractError(
            f"initial inequality multipliers must be strictly positive; entries {bad} "
            "are not (a zero multiplier stays zero forever under the mirror flow)")
    if not np.all(np.isfinite(z)):
        raise ContractError("initial state is not finite")

    rec = _Recorder(flow, lyapunov)
    t_end = t0 + cfg.t_end
    stop = StopReason.TIME_LIMIT
    steps = 0
    min_lam = float(np.min(z[lam_idx])) if lam_idx.size else math.inf
    clamps = 0
    v_prev = lyapunov(z) if lyapunov is not None else None
    v_inc = -math.inf if lyapunov is not None else None

    total = rec.record(t0, z)
    if stop_tol is not None and total <= stop_tol:
        stop = StopReason.KKT_TOL
        return _finish(rec, stop, steps, min_lam, clamps, v_inc)

    def accept(z_new):
        nonlocal min_lam, clamps, v_prev, v_inc
        if lam_idx.size:
            lam = z_new[lam_idx]
            low = float(np.min(lam))
            min_lam = min(min_lam, low)
            if low < -NEG_LAMBDA_TOL:
                raise IntegrationError(
                    f"multiplier went negative ({low:.3e}); step size too large")
            neg = lam < 0
            if np.any(neg):
                clamps += int(np.count_nonzero(neg))
                z_new[lam_idx[neg]] = 0.0
        if lyapunov is not None:
            v = lyapunov(z_new)
            v_inc = max(v_inc, v - v_prev)
            v_prev = v

    if cfg.method is Method.RK4_FIXED:
        n_steps = max(1, int(math.ceil(cfg.t_end / cfg.dt - 1e-9)))
        t = t0
        for k in range(1, n_steps + 1):
            t_next = t_end if k == n_steps else t0 + k * cfg.dt
            # overflow is reported through the NON_FINITE stop, not as a warning
            with np.errstate(over="ignore", invalid="ignore"):
                z_new = _rk4_step(flow.field, z, t_next - t)
            if not np.all(np.isfinite(z_new)):
                stop = StopReason.NON_FINITE
                break
            accept(z_new)
            z, t = z_new, t_next
            steps += 1
            if steps % cfg.record_every == 0 or k == n_steps:
                total = rec.record(t, z)
                if stop_tol is not None and total <= stop_tol:
                    stop = StopReason.KKT_TOL
                    break
    else:
        solver = RK45(lambda _t, y: flow.field(y), t0, z, t_end,
                      first_step=min(cfg.dt, cfg.t_end), rtol=cfg.rel_tol, atol=cfg.abs_tol)
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise IntegrationError(f"adaptive integrator failed: {msg}")
            y = solver.y
            if not np.all(np.isfinite(y)):
                stop = StopReason.NON_FINITE
                break
            if solver.step_size is not None and solver.step_size < MIN_ADAPTIVE_STEP \
                    and solver.status == "running":
                raise IntegrationError(f"adaptive step underflow (h={solver.step_size:.2e})")
            accept(y)  # clamps in place so the solver continues from the clamped state
            steps += 1
            finished = solver.status == "finished"
            if steps % cfg.record_every == 0 or finished:
                total = rec.record(float(solver.t), y)
                if stop_tol is not None and total <= stop_tol:
                    stop = StopReason.KKT_TOL
                    break
    return _finish(rec, stop, steps, min_lam, clamps, v_inc)


def _finish(rec: _Recorder, stop, steps, min_lam, clamps, v_inc) -> Trajectory:
    return Trajectory(
        flow=rec.flow,
        times=np.array(rec.times),
        states=np.array(rec.states),
        kkt_total=np.array(rec.kkt),
        field_norm=np.array(rec.fnorm),
        lyapunov=np.array(rec.lyap_vals) if rec.lyap is not None else None,
        extras={k: np.array(v) for k, v in rec.extras.items()},
        stop_reason=stop,
        steps=steps,
        min_lambda=min_lam,
        clamp_events=clamps,
        lyapunov_max_increase=(None if v_inc is None else (0.0 if steps == 0 else v_inc)),
        final_kkt=rec.last_report,
    )


def integrate(spec: ProblemSpec, state0: PrimalDualState, params: DynamicsParams,
              cfg: IntegratorConfig | None = None, *,
              reference: PrimalDualState | None = None,
              stop_tol: float | None = None,
              lyapunov_form: str = "flow") -> Trajectory:
    """Integrate the PAL flow of ``spec`` from ``state0``.

    With ``reference`` (a saddle point) the Lyapunov value is tracked at
    every accepted step.
    """
    cfg = cfg or IntegratorConfig()
    state0.check_shapes(spec)
    flow = CentralFlow(spec, params)
    lyap = None
    if reference is not None:
        reference.check_shapes(spec)
        layout = flow.layout

        def lyap(z):
            return lyapunov_value(layout.unpack(z), reference, params, lyapunov_form).V

    return run_flow(flow, state0.flat(), cfg, stop_tol=stop_tol, lyapunov=lyap, t0=state0.t)


@dataclass(frozen=True)
class RateEstimate:
    slope: float
    r_squared: float

    def as_dict(self) -> dict[str, float]:
        return {"slope": self.slope, "r_squared": self.r_squared}


def estimate_rate(traj: Trajectory, reference=None,
                  window: tuple[float, float] = (0.3, 0.9)) -> RateEstimate:
    """Least-squares fit of ``ln ||z(t) - z_ref||`` against ``t``.

    ``window`` selects a fraction of the time span. Without a reference the
    final sample is used and the last 5% of the span is excluded.
    """
    start, end = window
    if not (0 <= start < end <= 1):
        raise ParameterError(f"window must satisfy 0 <= start < end <= 1, got {window}")
    states = traj.states
    if reference is None:
        ref = states[-1]
        end = min(end, 0.95)
    else:
        ref = (reference.flat() if isinstance(reference, PrimalDualState)
               else np.asarray(reference, dtype=float))
    if ref.shape != states.shape[1:]:
        raise ContractError("reference does not match the trajectory's state size")
    t = traj.times
    t0, t1 = t[0], t[-1]
    lo, hi = t0 + start * (t1 - t0), t0 + end * (t1 - t0)
    dist = np.linalg.norm(states - ref, axis=1)
    mask = (t >= lo) & (t <= hi) & (dist > 1e-12)
    if np.count_nonzero(mask) < 5:
        raise EstimationError(
            f"only {int(np.count_nonzero(mask))} usable samples in window {window}")
    tt = t[mask]
    yy = np.log(dist[mask])
    slope, intercept = np.polyfit(tt, yy, 1)
    resid = yy - (slope * tt + intercept)
    ss_tot = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return RateEstimate(float(slope), float(r2))


@dataclass(frozen=True)
class ContinuationRound:
    mu: float
    converged: bool
    stop_reason: StopReason
    kkt_total: float
    t_final: float
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)


@dataclass(eq=False)
class Solution:
    x_star: np.ndarray
    multipliers: KktPoint
    converged: bool
    stop_reason: StopReason
    kkt: ResidualReport
    trajectory: Trajectory = field(repr=False)
    rate_estimate: RateEstimate | None = None
    rounds: list[ContinuationRound] = field(default_factory=list)

    @property
    def kkt_total(self) -> float:
        return self.kkt.total

    @property
    def final_state(self) -> PrimalDualState:
        return self.trajectory.final_state


def reference_point(spec: ProblemSpec) -> PrimalDualState | None:
    """Saddle point built from ``spec.known_optimum`` and least-squares multipliers."""
    if spec.known_optimum is None:
        return None
    try:
        return PrimalDualState.from_kkt(recover_multipliers(spec, spec.known_optimum))
    except ContractError:
        return None


def solve(spec: ProblemSpec, params: DynamicsParams, cfg: IntegratorConfig | None = None,
          kkt_tol: float = 1e-6, state0: PrimalDualState | None = None, *,
          fit_rate: bool = True) -> Solution:
    """Integrate until the KKT total drops to ``kkt_tol`` or time runs out."""
    if not kkt_tol > 0:
        raise ParameterError("kkt_tol must be positive")
    cfg = cfg or IntegratorConfig()
    state0 = state0 if state0 is not None else PrimalDualState.initial(spec)
    traj = integrate(spec, state0, params, cfg, stop_tol=kkt_tol)
    final = traj.final_state
    report = traj.final_kkt
    rate = None
    if fit_rate:
        try:
            rate = estimate_rate(traj, reference_point(spec))
        except (EstimationError, ContractError):
            rate = None
    converged = traj.stop_reason is StopReason.KKT_TOL
    log.debug("solve %s: %s after %d steps, kkt=%.3e", spec.name, traj.stop_reason.value,
              traj.steps, report.total)
    return Solution(
        x_star=final.x.copy(),
        multipliers=final.to_kkt(),
        converged=converged,
        stop_reason=traj.stop_reason,
        kkt=report,
        trajectory=traj,
        rate_estimate=rate,
    )


LAMBDA_FLOOR = 1e-12


def check_schedule(mu_schedule: Sequence[float]) -> list[float]:
    """Validate a continuation schedule: nonempty, positive, strictly decreasing."""
    schedule = [float(m) for m in mu_schedule]
    if not schedule:
        raise ParameterError("mu_schedule is empty")
    if any(not (m > 0 and math.isfinite(m)) for m in schedule):
        raise ParameterError("mu_schedule entries must be positive and finite")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ParameterError("mu_schedule must be strictly decreasing")
    return schedule


def continuation(spec: ProblemSpec, mu_schedule: Sequence[float],
                 params_template: DynamicsParams, cfg: IntegratorConfig | None = None,
                 kkt_tol: float = 1e-6, state0: PrimalDualState | None = None) -> Solution:
    """Solve for each ``mu`` in a decreasing schedule, warm-starting each round.

    ``cfg.t_end`` is the horizon of every round, so the total budget is
    ``len(mu_schedule) * cfg.t_end``. Time keeps running across rounds.
    Multipliers that reached zero are lifted to a tiny positive floor
    before the next round, since the flow needs ``lam > 0`` at its start.
    """
    schedule = check_schedule(mu_schedule)
    cfg = cfg or IntegratorConfig()
    rounds = []
    state = state0 if state0 is not None else PrimalDualState.initial(spec)
    sol = None
    for mu in schedule:
        sol = solve(spec, params_template.with_mu(mu), cfg, kkt_tol, state)
        rounds.append(ContinuationRound(mu, sol.converged, sol.stop_reason, sol.kkt_total,
                                        float(sol.trajectory.times[-1]), sol.trajectory))
        final = sol.final_state
        state = replace(final, lam=np.maximum(final.lam, LAMBDA_FLOOR))
    sol.rounds = rounds
    return sol
