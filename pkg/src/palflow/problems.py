"""Named problem fixtures available from the command line."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from palflow import rosen_suzuki as rs
from palflow.dynamics import PrimalDualState
from palflow.network import NetworkSpec, NetworkState, rosen_suzuki_network
from palflow.problem import ProblemSpec, affine, quadratic
from palflow.prox import ProxFunction

INEQ_QP_CENTER = np.array([2.0, -1.0, 0.5])
EQ_QP_CENTER = np.array([1.0, 2.0, -1.0, 0.5])
LASSO_SCALES = np.array([1.0, 2.0, 0.5])
LASSO_TARGET = np.array([3.0, 0.2, 4.0])


def project_onto_disk(c: np.ndarray) -> np.ndarray:
    """Closest point to ``c`` in ``{x : sum(x) = 1, ||x|| <= 1}``.

    The set is a disk of radius ``sqrt(1 - 1/n)`` centred at ``1/n`` inside
    the hyperplane, so the projection is a hyperplane projection followed
    by a radial clip.
    """
    n = c.size
    center = np.full(n, 1.0 / n)
    ch = c - (c.sum() - 1.0) / n
    radius = np.sqrt(1.0 - 1.0 / n)
    d = ch - center
    dist = np.linalg.norm(d)
    return ch if dist <= radius else center + radius * d / dist


def ball_constraint(n: int):
    """``||x||^2 - 1 <= 0``."""
    return quadratic(2.0 * np.eye(n), None, -1.0, name="ball")


def sum_constraint(n: int):
    """``sum(x) - 1 = 0``."""
    return affine(np.ones(n), -1.0, name="sum")


def eq_qp() -> ProblemSpec:
    """``min ||x - c||^2  s.t.  sum(x) = 1``."""
    c = EQ_QP_CENTER
    n = c.size
    x_star = c - (c.sum() - 1.0) / n
    return ProblemSpec(
        n=n, f=quadratic(2.0 * np.eye(n), -2.0 * c, float(c @ c), name="dist2"),
        h=(sum_constraint(n),), strong_convexity_alpha=2.0,
        known_optimum=x_star, name="eq-qp")


def ineq_qp() -> ProblemSpec:
    """``min ||x - c||^2 / 2  s.t.  ||x||^2 <= 1, sum(x) = 1`` with the ball active."""
    c = INEQ_QP_CENTER
    n = c.size
    return ProblemSpec(
        n=n, f=quadratic(np.eye(n), -c, 0.5 * float(c @ c), name="dist2"),
        g=(ball_constraint(n),), h=(sum_constraint(n),), strong_convexity_alpha=1.0,
        known_optimum=project_onto_disk(c), name="ineq-qp")


def ineq_qp_flat() -> ProblemSpec:
    """Same constraints as :func:`ineq_qp` but with a rank-deficient quadratic objective.

    ``f(x) = ((x1 - 2)^2 + (x2 + 1)^2) / 2 + x3 / 2`` is convex, not strongly
    convex. The optimum is unique because the feasible disk is strictly
    convex; it is not known in closed form.
    """
    n = 3
    Q = np.diag([1.0, 1.0, 0.0])
    return ProblemSpec(
        n=n, f=quadratic(Q, np.array([-2.0, 1.0, 0.5]), 2.5, name="flat"),
        g=(ball_constraint(n),), h=(sum_constraint(n),), strong_convexity_alpha=0.0,
        name="ineq-qp-flat")


def lasso_toy() -> ProblemSpec:
    """``min ||A x - b||^2 / 2 + ||x||_1`` with diagonal ``A``; separable closed form."""
    a, b = LASSO_SCALES, LASSO_TARGET
    x_star = np.sign(a * b) * np.maximum(np.abs(a * b) - 1.0, 0.0) / a**2
    A = np.diag(a)
    return ProblemSpec(
        n=3, f=quadratic(A.T @ A, -A.T @ b, 0.5 * float(b @ b), name="lsq"),
        phi=ProxFunction.l1(3), strong_convexity_alpha=float(np.min(a**2)),
        known_optimum=x_star, name="lasso-toy")


def rosen_suzuki_central() -> ProblemSpec:
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ProblemSpec(
            n=4, f=rs.objective(), g=(rs.g1(), rs.g2()), h=(rs.h1(),),
            known_optimum=rs.OPTIMUM.copy(), name="rosen-suzuki-central")


def rosen_suzuki_central_initial(spec: ProblemSpec) -> PrimalDualState:
    """Agent 1's reference start, with the reference multiplier values."""
    return PrimalDualState.initial(spec, x=rs.AGENT_X0[0], lam=rs.LAMBDA0, nu=[rs.NU0])


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    mode: str  # "centralized" or "distributed"
    description: str
    build: Callable[..., object]
    initial: Callable[..., object] | None = None
    t_end: float = 100.0

    def problem(self, **options):
        return self.build(**options)

    def listing(self) -> dict:
        if self.mode == "distributed":
            net, _ = self.build()
            return {
                "name": self.name, "mode": self.mode, "description": self.description,
                "N": net.N, "n": net.n, "edges": [list(e) for e in net.graph.edges],
                "r": net.r_sizes, "s": net.s_sizes, "phi": "indicator_zero",
                "known_optimum": None if net.known_optimum is None else net.known_optimum.tolist(),
                "t_end": self.t_end,
            }
        spec = self.build()
        return {
            "name": self.name, "mode": self.mode, "description": self.description,
            "n": spec.n, "m": spec.m, "r": spec.r, "s": spec.s, "phi": spec.phi.kind.value,
            "known_optimum": None if spec.known_optimum is None else spec.known_optimum.tolist(),
            "t_end": self.t_end,
        }


def _rs_network(w_init: str = "uniform", graph=None) -> tuple[NetworkSpec, NetworkState]:
    return rosen_suzuki_network(graph=graph, w_init=w_init)


REGISTRY: dict[str, RegistryEntry] = {
    e.name: e for e in [
        RegistryEntry("eq-qp", "centralized",
                      "distance to a point on the hyperplane sum(x) = 1", eq_qp, t_end=50.0),
        RegistryEntry("ineq-qp", "centralized",
                      "strongly convex QP with an active ball constraint and an affine equality",
                      ineq_qp, t_end=100.0),
        RegistryEntry("ineq-qp-flat", "centralized",
                      "merely convex variant of ineq-qp (rank-deficient Hessian)",
                      ineq_qp_flat, t_end=500.0),
        RegistryEntry("lasso-toy", "centralized",
                      "separable lasso with an l1 term handled through its prox",
                      lasso_toy, t_end=100.0),
        RegistryEntry("rosen-suzuki-central", "centralized",
                      "Rosen-Suzuki problem solved by one agent",
                      rosen_suzuki_central, rosen_suzuki_central_initial, t_end=100.0),
        RegistryEntry("rosen-suzuki-distributed", "distributed",
                      "Rosen-Suzuki problem split over five agents",
                      _rs_network, t_end=300.0),
    ]
}


def list_problems() -> list[dict]:
    """Registry listing sorted by name."""
    return [REGISTRY[k].listing() for k in sorted(REGISTRY)]


def get_entry(name: str) -> RegistryEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
