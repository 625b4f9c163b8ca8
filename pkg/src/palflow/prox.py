"""Closed-form proximal operators and Moreau envelopes.

Every function here is evaluated in closed form; there is no inner numeric
minimization. For a registered function ``phi`` and smoothing ``mu > 0``::

    prox(v)           = argmin_y  phi(y) + ||y - v||^2 / (2 mu)
    moreau_value(v)   = phi(prox(v)) + ||prox(v) - v||^2 / (2 mu)
    moreau_grad(v)    = (v - prox(v)) / mu
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from palflow.errors import ContractError, ParameterError

INF = math.inf


class ProxKind(str, enum.Enum):
    L1_NORM = "l1"
    INDICATOR_ZERO = "indicator_zero"
    INDICATOR_BOX = "box"
    QUADRATIC = "quadratic"
    ZERO = "zero"


@dataclass(frozen=True, eq=False)
class ProxFunction:
    """A nonsmooth convex function with a closed-form prox.

    Use the constructors (:meth:`l1`, :meth:`indicator_zero`, :meth:`box`,
    :meth:`quadratic`, :meth:`zero`) rather than building instances by hand.
    """

    kind: ProxKind
    dimension: int
    lower: np.ndarray | None = field(default=None, repr=False)
    upper: np.ndarray | None = field(default=None, repr=False)
    weight: float = 0.0

    def __post_init__(self):
        if int(self.dimension) <= 0:
            raise ContractError(f"dimension must be positive, got {self.dimension}")
        if self.kind is ProxKind.INDICATOR_BOX:
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            if lo.shape != (self.dimension,) or hi.shape != (self.dimension,):
                raise ContractError("box bounds must both have shape (dimension,)")
            if np.any(lo > hi):
                raise ContractError("box requires lower <= upper componentwise")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        if self.kind is ProxKind.QUADRATIC and not self.weight >= 0:
            raise ContractError(f"quadratic weight must be nonnegative, got {self.weight}")

    @classmethod
    def l1(cls, dimension: int) -> ProxFunction:
        return cls(ProxKind.L1_NORM, dimension)

    @classmethod
    def indicator_zero(cls, dimension: int) -> ProxFunction:
        return cls(ProxKind.INDICATOR_ZERO, dimension)

    @classmethod
    def box(cls, lower, upper) -> ProxFunction:
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        return cls(ProxKind.INDICATOR_BOX, lower.size, lower=lower, upper=upper)

    @classmethod
    def quadratic(cls, dimension: int, weight: float) -> ProxFunction:
        """``phi(y) = (weight / 2) ||y||^2``."""
        return cls(ProxKind.QUADRATIC, dimension, weight=float(weight))

    @classmethod
    def zero(cls, dimension: int) -> ProxFunction:
        return cls(ProxKind.ZERO, dimension)

    @property
    def is_indicator(self) -> bool:
        return self.kind in (ProxKind.INDICATOR_ZERO, ProxKind.INDICATOR_BOX)

    @property
    def ell(self) -> float | None:
        """Inverse Lipschitz constant ``l`` of the subgradient, if it exists.

        Returns ``None`` for kinds whose subdifferential is not single-valued
        and Lipschitz (the indicators and the l1 norm).
        """
        if self.kind is ProxKind.ZERO:
            return INF
        if self.kind is ProxKind.QUADRATIC:
            return INF if self.weight == 0 else 1.0 / self.weight
        return None

    def value(self, y) -> float:
        """phi(y); indicator kinds return ``math.inf`` outside their set."""
        y = _check_vector(self, y)
        if self.kind is ProxKind.L1_NORM:
            return float(np.sum(np.abs(y)))
        if self.kind is ProxKind.INDICATOR_ZERO:
            return 0.0 if not np.any(y) else INF
        if self.kind is ProxKind.INDICATOR_BOX:
            inside = np.all(y >= self.lower) and np.all(y <= self.upper)
            return 0.0 if inside else INF
        if self.kind is ProxKind.QUADRATIC:
            return 0.5 * self.weight * float(y @ y)
        return 0.0

    def subgradient_split(self, y, tol: float = 1e-9):
        """Describe ``∂phi(y)`` as fixed entries plus free entries.

        Returns ``(fixed, free)`` where ``free`` is a boolean mask of the
        components whose subgradient entry is not pinned down by ``y`` and
        ``fixed`` holds the pinned values (zero where free). Used when
        multipliers are recovered by least squares.
        """
        y = _check_vector(self, y)
        fixed = np.zeros_like(y)
        free = np.zeros(y.shape, dtype=bool)
        if self.kind is ProxKind.L1_NORM:
            free = np.abs(y) <= tol
            fixed = np.where(free, 0.0, np.sign(y))
        elif self.kind is ProxKind.INDICATOR_ZERO:
            free[:] = True
        elif self.kind is ProxKind.INDICATOR_BOX:
            free = (np.abs(y - self.lower) <= tol) | (np.abs(y - self.upper) <= tol)
        elif self.kind is ProxKind.QUADRATIC:
            fixed = self.weight * y
        return fixed, free


def _check_vector(phi: ProxFunction, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != phi.dimension:
        raise ContractError(
            f"expected a vector of length {phi.dimension}, got shape {v.shape}")
    return v


def _check_mu(mu) -> float:
    mu = float(mu)
    if not mu > 0 or not math.isfinite(mu):
        raise ParameterError(f"smoothing parameter mu must be finite and > 0, got {mu}")
    return mu


def soft_threshold(v, kappa: float) -> np.ndarray:
    """Componentwise ``sign(v) * max(|v| - kappa, 0)``."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def prox(phi: ProxFunction, v, mu) -> np.ndarray:
    """Proximal operator of ``mu * phi`` at ``v``."""
    return _prox(phi, _check_vector(phi, v), _check_mu(mu))


def _prox(phi: ProxFunction, v: np.ndarray, mu: float) -> np.ndarray:
    kind = phi.kind
    if kind is ProxKind.L1_NORM:
        return soft_threshold(v, mu)
    if kind is ProxKind.INDICATOR_ZERO:
        return np.zeros_like(v)
    if kind is ProxKind.INDICATOR_BOX:
        return np.clip(v, phi.lower, phi.upper)
    if kind is ProxKind.QUADRATIC:
        return v / (1.0 + mu * phi.weight)
    return v.copy()


def moreau_value(phi: ProxFunction, v, mu) -> float:
    """Moreau envelope ``phi_mu(v)``; finite for every ``v``."""
    v = _check_vector(phi, v)
    mu = _check_mu(mu)
    p = prox(phi, v, mu)
    d = p - v
    # p lies in dom(phi) by construction, so indicator kinds contribute 0
    base = 0.0 if phi.is_indicator else phi.value(p)
    return base + float(d @ d) / (2.0 * mu)


def moreau_grad(phi: ProxFunction, v, mu) -> np.ndarray:
    """Gradient of the Moreau envelope, ``(v - prox(v)) / mu``."""
    return _moreau_grad(phi, _check_vector(phi, v), _check_mu(mu))


def _moreau_grad(phi: ProxFunction, v: np.ndarray, mu: float) -> np.ndarray:
    # unchecked fast path for the integrators
    if phi.kind is ProxKind.INDICATOR_ZERO:
        return v / mu
    return (v - _prox(phi, v, mu)) / mu
