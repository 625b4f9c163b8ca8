"""Constrained composite programs and their optimality diagnostics.

A :class:`ProblemSpec` describes::

    minimize    f(x) + phi(T x)
    subject to  g_i(x) <= 0,  i = 1..r
                h_j(x)  = 0,  j = 1..s

with ``f`` and ``g_i`` smooth and convex, ``phi`` one of the closed-form
functions in :mod:`palflow.prox`, and ``T`` of full column rank.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from palflow.errors import ContractError
from palflow.prox import ProxFunction, moreau_grad, prox

DEFAULT_ACTIVE_TOL = 1e-6
DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Oracle:
    """A smooth scalar function with its gradient.

    ``is_affine`` may be set by constructors that know the answer; when it
    is ``None`` affinity is probed numerically where it matters.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    is_affine: bool | None = None

    def __call__(self, x) -> float:
        return float(self.value(x))


def quadratic(Q, c=None, const: float = 0.0, name: str = "") -> Oracle:
    """``0.5 x'Qx + c'x + const`` with ``Q`` symmetrized."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    c = np.zeros(Q.shape[0]) if c is None else np.asarray(c, dtype=float)
    affine = not np.any(Q)
    return Oracle(
        value=lambda x: 0.5 * float(x @ Q @ x) + float(c @ x) + const,
        grad=lambda x: Q @ x + c,
        name=name,
        is_affine=affine,
    )


def affine(a, const: float = 0.0, name: str = "") -> Oracle:
    """``a'x + const``."""
    a = np.asarray(a, dtype=float)
    return Oracle(
        value=lambda x: float(a @ x) + const,
        grad=lambda x: a.copy(),
        name=name,
        is_affine=True,
    )


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    n: int
    f: Oracle
    g: tuple[Oracle, ...] = ()
    h: tuple[Oracle, ...] = ()
    T: np.ndarray | None = None
    phi: ProxFunction | None = None
    strong_convexity_alpha: float | None = None
    known_optimum: np.ndarray | None = None
    name: str = ""
    check_rank: bool = field(default=True, repr=False)
    rank_tol: float = field(default=DEFAULT_RANK_TOL, repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n <= 0:
            raise ContractError(f"n must be positive, got {self.n}")
        object.__setattr__(self, "g", tuple(self.g))
        object.__setattr__(self, "h", tuple(self.h))
        T = np.eye(n) if self.T is None else np.atleast_2d(np.asarray(self.T, dtype=float))
        if T.shape[1] != n:
            raise ContractError(f"T must have {n} columns, got shape {T.shape}")
        object.__setattr__(self, "T", T)
        phi = ProxFunction.zero(T.shape[0]) if self.phi is None else self.phi
        if phi.dimension != T.shape[0]:
            raise ContractError(
                f"phi has dimension {phi.dimension} but T has {T.shape[0]} rows")
        object.__setattr__(self, "phi", phi)
        if self.check_rank:
            sv = np.linalg.svd(T, compute_uv=False)
            if T.shape[0] < n or sv[-1] <= self.rank_tol * sv[0]:
                raise ContractError("T must have full column rank")
        if self.known_optimum is not None:
            xs = np.asarray(self.known_optimum, dtype=float)
            if xs.shape != (n,):
                raise ContractError("known_optimum has the wrong shape")
            object.__setattr__(self, "known_optimum", xs)
        if self.strong_convexity_alpha is not None and self.strong_convexity_alpha < 0:
            raise ContractError("strong_convexity_alpha must be nonnegative")
        self._check_oracle_shapes()
        if self.h and not all(_probably_affine(o, n) for o in self.h):
            warnings.warn(
                f"problem {self.name or '<unnamed>'!s}: equality constraints are not "
                "affine; convergence guarantees do not apply",
                stacklevel=3,
            )

    def _check_oracle_shapes(self):
        x = np.zeros(self.n)
        for o in (self.f, *self.g, *self.h):
            gr = np.asarray(o.grad(x))
            if gr.shape != (self.n,):
                raise ContractError(
                    f"oracle {o.name or '?'} gradient has shape {gr.shape}, expected ({self.n},)")

    @property
    def r(self) -> int:
        return len(self.g)

    @property
    def s(self) -> int:
        return len(self.h)

    @property
    def m(self) -> int:
        return self.T.shape[0]

    def g_values(self, x) -> np.ndarray:
        return np.array([o.value(x) for o in self.g], dtype=float)

    def h_values(self, x) -> np.ndarray:
        return np.array([o.value(x) for o in self.h], dtype=float)

    def g_jacobian(self, x) -> np.ndarray:
        if not self.g:
            return np.zeros((0, self.n))
        return np.array([o.grad(x) for o in self.g], dtype=float)

    def h_jacobian(self, x) -> np.ndarray:
        if not self.h:
            return np.zeros((0, self.n))
        return np.array([o.grad(x) for o in self.h], dtype=float)

    def objective(self, x) -> float:
        """``f(x) + phi(Tx)``, possibly ``inf`` for indicator kinds."""
        x = np.asarray(x, dtype=float)
        return self.f.value(x) + self.phi.value(self.T @ x)


def _probably_affine(o: Oracle, n: int) -> bool:
    if o.is_affine is not None:
        return o.is_affine
    rng = np.random.default_rng(0)
    g0 = np.asarray(o.grad(np.zeros(n)), dtype=float)
    for _ in range(3):
        g1 = np.asarray(o.grad(rng.normal(size=n)), dtype=float)
        if not np.allclose(g0, g1, rtol=1e-9, atol=1e-12):
            return False
    return True


@dataclass(frozen=True, eq=False)
class KktPoint:
    """Primal point with multipliers for inequality, equality and splitting."""

    x: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("x", "lam", "nu", "w"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.lam < 0):
            raise ContractError("inequality multipliers must be nonnegative")

    @classmethod
    def zeros(cls, spec: ProblemSpec, x=None) -> KktPoint:
        x = np.zeros(spec.n) if x is None else x
        return cls(x, np.zeros(spec.r), np.zeros(spec.s), np.zeros(spec.m))


@dataclass(frozen=True)
class ResidualReport:
    stationarity: float
    primal_ineq: float
    primal_eq: float
    complementarity: float
    splitting: float

    @property
    def total(self) -> float:
        return max(self.stationarity, self.primal_ineq, self.primal_eq,
                   self.complementarity, self.splitting)

    def as_dict(self) -> dict[str, float]:
        return {
            "stationarity": self.stationarity,
            "primal_ineq": self.primal_ineq,
            "primal_eq": self.primal_eq,
            "complementarity": self.complementarity,
            "splitting": self.splitting,
            "total": self.total,
        }


def _check_point(spec: ProblemSpec, pt: KktPoint):
    shapes = {"x": spec.n, "lam": spec.r, "nu": spec.s, "w": spec.m}
    for name, size in shapes.items():
        if getattr(pt, name).shape != (size,):
            raise ContractError(
                f"{name} has shape {getattr(pt, name).shape}, expected ({size},)")


def kkt_residual(spec: ProblemSpec, pt: KktPoint, mu: float) -> ResidualReport:
    """Residuals of the smoothed KKT system at ``pt``.

    The subgradient of ``phi`` is replaced by its smooth surrogate
    ``moreau_grad(phi, Tx + mu w)``. Besides stationarity, feasibility and
    complementarity, the report carries the splitting residual
    ``||Tx - prox(Tx + mu w)||``, which vanishes exactly when the surrogate
    is a subgradient of ``phi`` at ``Tx``.
    """
    _check_point(spec, pt)
    x = pt.x
    v = spec.T @ x + mu * pt.w
    w_s = moreau_grad(spec.phi, v, mu)
    grad = np.asarray(spec.f.grad(x), dtype=float) + spec.T.T @ w_s
    gx = spec.g_values(x)
    hx = spec.h_values(x)
    if spec.r:
        grad = grad + spec.g_jacobian(x).T @ pt.lam
    if spec.s:
        grad = grad + spec.h_jacobian(x).T @ pt.nu
    split = spec.T @ x - prox(spec.phi, v, mu)
    return ResidualReport(
        stationarity=float(np.linalg.norm(grad)),
        primal_ineq=float(np.linalg.norm(np.maximum(gx, 0.0))),
        primal_eq=float(np.linalg.norm(hx)),
        complementarity=float(np.linalg.norm(pt.lam * gx)),
        splitting=float(np.linalg.norm(split)),
    )


@dataclass(frozen=True)
class LicqReport:
    satisfied: bool
    active_set: list[int]
    rank: int


def check_licq(spec: ProblemSpec, x, active_tol: float = DEFAULT_ACTIVE_TOL,
               rank_tol: float = DEFAULT_RANK_TOL) -> LicqReport:
    """Linear independence of equality and active inequality gradients."""
    if not active_tol > 0:
        raise ContractError("active_tol must be positive")
    x = np.asarray(x, dtype=float)
    gx = spec.g_values(x)
    active = [i for i in range(spec.r) if abs(gx[i]) <= active_tol]
    rows = np.vstack([spec.h_jacobian(x), spec.g_jacobian(x)[active]])
    if rows.shape[0] == 0:
        return LicqReport(True, active, 0)
    rank = _numerical_rank(rows, rank_tol)
    return LicqReport(rank == spec.s + len(active), active, rank)


def _numerical_rank(A: np.ndarray, rank_tol: float) -> int:
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


def check_slater(spec: ProblemSpec, candidate, tol: float) -> bool:
    """Strict inequality feasibility plus equality feasibility at ``candidate``."""
    x = np.asarray(candidate, dtype=float)
    if x.shape != (spec.n,):
        raise ContractError(f"candidate must have shape ({spec.n},)")
    gx = spec.g_values(x)
    return bool(np.all(gx < -tol) and np.linalg.norm(spec.h_values(x)) <= tol)


def fd_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central differences with step ``max(1e-6, 1e-6 |x_i|)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        step = max(1e-6, 1e-6 * abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        out[i] = (fun(xp) - fun(xm)) / (2.0 * step)
    return out


def oracle_gradient_error(o, x) -> float:
    """Relative error of one oracle's gradient against finite differences."""
    x = np.asarray(x, dtype=float)
    supplied = np.asarray(o.grad(x), dtype=float)
    approx = fd_gradient(o.value, x)
    scale = max(np.linalg.norm(supplied), np.linalg.norm(approx), 1e-8)
    return float(np.linalg.norm(supplied - approx) / scale)


def verify_gradients(spec: ProblemSpec, x) -> float:
    """Worst relative error of supplied gradients against finite differences."""
    return max(oracle_gradient_error(o, x) for o in (spec.f, *spec.g, *spec.h))


def recover_multipliers(spec: ProblemSpec, x, active_tol: float = DEFAULT_ACTIVE_TOL,
                        subgrad_tol: float = 1e-9) -> KktPoint:
    """Least-squares multipliers for the stationarity equation at ``x``.

    Inactive inequalities get a zero multiplier. Entries of the splitting
    multiplier that ``∂phi(Tx)`` pins down are fixed; the rest are unknowns.
    Under LICQ (and full column rank of the unknown block) the solution is
    unique.
    """
    x = np.asarray(x, dtype=float)
    gx = spec.g_values(x)
    active = [i for i in range(spec.r) if abs(gx[i]) <= active_tol]
    fixed, free = spec.phi.subgradient_split(spec.T @ x, subgrad_tol)
    rhs = -(np.asarray(spec.f.grad(x), dtype=float) + spec.T.T @ fixed)
    blocks = [spec.g_jacobian(x)[active].T, spec.h_jacobian(x).T, spec.T.T[:, free]]
    A = np.hstack([b.reshape(spec.n, -1) for b in blocks])
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0] if A.shape[1] else np.zeros(0)
    k = len(active)
    lam = np.zeros(spec.r)
    lam[active] = sol[:k]
    nu = sol[k:k + spec.s]
    w = fixed.copy()
    w[free] = sol[k + spec.s:]
    # roundoff can leave an active multiplier at -1e-17
    lam = np.where((lam < 0) & (lam > -1e-10), 0.0, lam)
    return KktPoint(x, lam, nu, w)


def constraint_permutation(spec: ProblemSpec, g_order: Sequence[int],
                           h_order: Sequence[int]) -> ProblemSpec:
    """Copy of ``spec`` with inequality and equality constraints reordered."""
    return ProblemSpec(
        n=spec.n, f=spec.f,
        g=tuple(spec.g[i] for i in g_order),
        h=tuple(spec.h[i] for i in h_order),
        T=spec.T, phi=spec.phi,
        strong_convexity_alpha=spec.strong_convexity_alpha,
        known_optimum=spec.known_optimum, name=spec.name,
        check_rank=spec.check_rank, rank_tol=spec.rank_tol,
    )
