"""Proximal augmented Lagrangian and the projection-free primal-dual field.

For a problem ``min f(x) + phi(Tx)  s.t.  g(x) <= 0, h(x) = 0`` the PAL is::

    L(x; lam, nu, w) = f(x) + phi_mu(Tx + mu w) + lam'g(x) + nu'h(x) - (mu/2)||w||^2

The flow descends in ``x``, ascends in ``nu`` and ``w``, and runs a mirror
ascent in ``lam`` whose potential ``(eta/2) y^2 + y ln y`` keeps the
multipliers positive without any projection::

    x'   = -grad f - T' grad phi_mu(Tx + mu w) - Jg' lam - Jh' nu
    lam' = lam / (1 + eta lam) * g(x)
    nu'  = h(x)
    w'   = mu grad phi_mu(Tx + mu w) - mu w
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from palflow.errors import ContractError, ParameterError
from palflow.problem import KktPoint, ProblemSpec
from palflow.prox import _moreau_grad, moreau_grad, moreau_value

OMEGA_THRESHOLD = 1e-9


@dataclass(frozen=True, eq=False)
class PrimalDualState:
    x: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("x", "lam", "nu", "w"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            object.__setattr__(self, name, arr)
        if np.any(self.lam < 0):
            raise ContractError("inequality multipliers must be nonnegative")

    @classmethod
    def initial(cls, spec: ProblemSpec, x=None, lam: float | np.ndarray = 1.0,
                nu=None, w=None) -> PrimalDualState:
        """Default starting point: ``x = 0``, ``lam = 1``, ``nu = 0``, ``w = 0``."""
        x = np.zeros(spec.n) if x is None else x
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (spec.r,))
        nu = np.zeros(spec.s) if nu is None else nu
        w = np.zeros(spec.m) if w is None else w
        return cls(x, lam, nu, w)

    @classmethod
    def from_kkt(cls, pt: KktPoint, t: float = 0.0) -> PrimalDualState:
        return cls(pt.x, pt.lam, pt.nu, pt.w, t)

    def to_kkt(self) -> KktPoint:
        return KktPoint(self.x, self.lam, self.nu, self.w)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam, self.nu, self.w])

    def check_shapes(self, spec: ProblemSpec):
        want = {"x": spec.n, "lam": spec.r, "nu": spec.s, "w": spec.m}
        for name, size in want.items():
            if getattr(self, name).shape != (size,):
                raise ContractError(
                    f"state.{name} has shape {getattr(self, name).shape}, expected ({size},)")


@dataclass(frozen=True, eq=False)
class StateDerivative:
    x: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    w: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam, self.nu, self.w])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


@dataclass(frozen=True)
class StateLayout:
    """Offsets of the blocks of a flattened state ``(x, lam, nu, w)``."""

    n: int
    r: int
    s: int
    m: int

    @classmethod
    def of(cls, spec: ProblemSpec) -> StateLayout:
        return cls(spec.n, spec.r, spec.s, spec.m)

    @property
    def size(self) -> int:
        return self.n + self.r + self.s + self.m

    @property
    def lam_slice(self) -> slice:
        return slice(self.n, self.n + self.r)

    def split(self, z: np.ndarray):
        n, r, s = self.n, self.r, self.s
        return z[:n], z[n:n + r], z[n + r:n + r + s], z[n + r + s:]

    def unpack(self, z: np.ndarray, t: float = 0.0) -> PrimalDualState:
        x, lam, nu, w = self.split(z)
        return PrimalDualState(x.copy(), lam.copy(), nu.copy(), w.copy(), t)


@dataclass(frozen=True, eq=False)
class DynamicsParams:
    """Smoothing ``mu`` and mirror weights ``eta`` (scalar or one per constraint)."""

    mu: float
    eta: np.ndarray | float = 1.0

    def __post_init__(self):
        mu = float(self.mu)
        if not (mu > 0 and math.isfinite(mu)):
            raise ParameterError(f"mu must be finite and > 0, got {self.mu}")
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim > 1 or np.any(~(eta > 0)) or not np.all(np.isfinite(eta)):
            raise ParameterError("eta must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "eta", eta)

    def eta_for(self, r: int) -> np.ndarray:
        if self.eta.ndim == 0:
            return np.full(r, float(self.eta))
        if self.eta.shape != (r,):
            raise ParameterError(f"eta has {self.eta.size} entries for {r} constraints")
        return self.eta

    def with_mu(self, mu: float) -> DynamicsParams:
        return DynamicsParams(mu, self.eta)


def pal_value(spec: ProblemSpec, state: PrimalDualState, mu: float) -> float:
    """Proximal augmented Lagrangian at ``state``."""
    state.check_shapes(spec)
    x, w = state.x, state.w
    out = spec.f.value(x) + moreau_value(spec.phi, spec.T @ x + mu * w, mu)
    if spec.r:
        out += float(state.lam @ spec.g_values(x))
    if spec.s:
        out += float(state.nu @ spec.h_values(x))
    return float(out - 0.5 * mu * float(w @ w))


def pal_gradient(spec: ProblemSpec, state: PrimalDualState, mu: float) -> StateDerivative:
    """Gradient of the PAL with respect to every block (not the flow)."""
    state.check_shapes(spec)
    x, w = state.x, state.w
    ms = moreau_grad(spec.phi, spec.T @ x + mu * w, mu)
    gx = np.asarray(spec.f.grad(x), dtype=float) + spec.T.T @ ms
    if spec.r:
        gx = gx + spec.g_jacobian(x).T @ state.lam
    if spec.s:
        gx = gx + spec.h_jacobian(x).T @ state.nu
    return StateDerivative(
        x=gx,
        lam=spec.g_values(x),
        nu=spec.h_values(x),
        w=mu * ms - mu * w,
    )


def field_flat(spec: ProblemSpec, params: DynamicsParams, layout: StateLayout,
               z: np.ndarray) -> np.ndarray:
    """The vector field on a flattened state; used by the integrators."""
    x, lam, nu, w = layout.split(z)
    mu = params.mu
    ms = _moreau_grad(spec.phi, spec.T @ x + mu * w, mu)
    dx = -np.asarray(spec.f.grad(x), dtype=float) - spec.T.T @ ms
    out = np.empty_like(z)
    n, r, s = layout.n, layout.r, layout.s
    if r:
        dx -= spec.g_jacobian(x).T @ lam
        eta = params.eta if params.eta.ndim == 0 else params.eta_for(r)
        out[n:n + r] = lam / (1.0 + eta * lam) * spec.g_values(x)
    if s:
        dx -= spec.h_jacobian(x).T @ nu
        out[n + r:n + r + s] = spec.h_values(x)
    out[:n] = dx
    out[n + r + s:] = mu * ms - mu * w
    return out


def vector_field(spec: ProblemSpec, state: PrimalDualState,
                 params: DynamicsParams) -> StateDerivative:
    """Time derivative of every block at ``state``."""
    state.check_shapes(spec)
    layout = StateLayout.of(spec)
    dz = field_flat(spec, params, layout, state.flat())
    return StateDerivative(*(b.copy() for b in layout.split(dz)))


def bregman_entropy(a, b):
    """Bregman divergence of ``t ln t``: ``a ln(a/b) - a + b`` (with ``0 ln 0 = 0``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0) or np.any(a < 0):
        raise ContractError("Bregman divergence of t ln t needs a >= 0 and b > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        # log a - log b rather than log(a / b), which underflows for subnormal a
        xlogx = np.where(a > 0, a * (np.log(np.where(a > 0, a, 1.0)) - np.log(b)), 0.0)
    return xlogx - a + b


@dataclass(frozen=True)
class LyapunovReport:
    V1: float
    V2: float
    V3: float
    V4: float
    omega: tuple[int, ...]

    @property
    def V(self) -> float:
        return self.V1 + self.V2 + self.V3 + self.V4


LYAPUNOV_FORMS = ("flow", "forward")


def lyapunov_value(state: PrimalDualState, star: PrimalDualState,
                   params: DynamicsParams, form: str = "flow") -> LyapunovReport:
    """Lyapunov candidate measuring the distance of ``state`` to ``star``.

    ``V1 = ||x - x*||^2 / 2``, ``V2 = sum eta_i (lam_i - lam*_i)^2 / 2`` and
    ``V4 = (||nu - nu*||^2 + ||w - w*||^2) / 2`` in both forms. The
    multiplier term ``V3`` over ``Omega = {i : lam*_i > 0}`` differs:

    ``form="flow"``
        ``sum_i D(lam*_i, lam_i)`` over all ``i`` with ``D`` the entropy
        Bregman divergence, so that ``V2 + V3`` differentiates to
        ``(lam - lam*)' g(x)`` along the mirror flow. Outside ``Omega`` this
        is simply ``lam_i``. This form is non-increasing along trajectories.
    ``form="forward"``
        ``sum_{Omega} D(lam_i, lam*_i) + sum_{not Omega} (lam_i - lam*_i)^2``,
        kept for comparison; it is not monotone in general.
    """
    if form not in LYAPUNOV_FORMS:
        raise ParameterError(f"unknown Lyapunov form {form!r}")
    if np.any(star.lam < 0):
        raise ContractError("reference multipliers must be nonnegative")
    eta = params.eta_for(star.lam.size)
    omega = np.flatnonzero(star.lam > OMEGA_THRESHOLD)
    rest = np.flatnonzero(star.lam <= OMEGA_THRESHOLD)
    dx = state.x - star.x
    dl = state.lam - star.lam
    V1 = 0.5 * float(dx @ dx)
    V2 = 0.5 * float(np.sum(eta * dl * dl))
    if form == "flow":
        if np.any(state.lam[omega] <= 0):
            raise ContractError("multiplier in Omega must stay positive (log undefined)")
        V3 = float(np.sum(bregman_entropy(star.lam[omega], state.lam[omega])))
        V3 += float(np.sum(state.lam[rest] - star.lam[rest]))
    else:
        if np.any(state.lam[omega] <= 0):
            raise ContractError("multiplier in Omega must stay positive (log undefined)")
        V3 = float(np.sum(bregman_entropy(state.lam[omega], star.lam[omega])))
        V3 += float(np.sum(dl[rest] ** 2))
    dn = state.nu - star.nu
    dw = state.w - star.w
    V4 = 0.5 * float(dn @ dn) + 0.5 * float(dw @ dw)
    return LyapunovReport(V1, V2, V3, V4, tuple(int(i) for i in omega))


def concavity_modulus(mu: float, ell: float) -> float:
    """``mu l / (mu + l) + 2 mu``; ``ell = inf`` gives ``3 mu``."""
    mu = float(mu)
    ell = float(ell)
    if not mu > 0 or not ell > 0:
        raise ParameterError("mu and ell must be positive")
    if math.isinf(ell):
        return 3.0 * mu
    return mu * ell / (mu + ell) + 2.0 * mu


def w_concavity_modulus(mu: float, ell: float) -> float:
    """Strong-concavity modulus of the PAL in ``w`` alone: ``mu l / (mu + l)``.

    The PAL is affine in ``lam`` and ``nu``, so no positive modulus holds
    jointly in all multipliers; this is the part that does hold.
    """
    mu = float(mu)
    ell = float(ell)
    if not mu > 0 or not ell > 0:
        raise ParameterError("mu and ell must be positive")
    if math.isinf(ell):
        return mu
    return mu * ell / (mu + ell)
