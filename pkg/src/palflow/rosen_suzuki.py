"""The Rosen-Suzuki test problem in four variables.

    min   x1^2 + x2^2 + 2 x3^2 + x4^2 - 5 x1 - 5 x2 - 21 x3 + 7 x4
    s.t.  -8 + x1 - x2 + x3 - x4 + x1^2 + x2^2 + x3^2 + x4^2 <= 0
          -10 - x1 - x4 + x1^2 + 2 x2^2 + x3^2 + 2 x4^2     <= 0
          -5 + 2 x1 - x2 - x4 + 2 x1^2 + x2^2 + x3^2         = 0

The optimum is ``(0, 1, 2, -1)``. The equality is not affine.
"""
from __future__ import annotations

import numpy as np

from palflow.polynomial import Polynomial, monomial as _m

N_VARS = 4
OPTIMUM = np.array([0.0, 1.0, 2.0, -1.0])


def _poly(name, *terms):
    return Polynomial(N_VARS, terms, name=name)


def _const(c):
    return c, (0, 0, 0, 0)


def local_objectives() -> list[Polynomial]:
    """The five per-agent pieces whose sum is the objective."""
    return [
        _poly("f1", _m(4, 1.0, x1=2), _m(4, 1.0, x2=2)),
        _poly("f2", _m(4, 2.0, x3=2), _m(4, 1.0, x4=2)),
        _poly("f3", _m(4, -5.0, x1=1), _m(4, -5.0, x2=1)),
        _poly("f4", _m(4, -21.0, x3=1)),
        _poly("f5", _m(4, 7.0, x4=1)),
    ]


def objective() -> Polynomial:
    terms = [t for p in local_objectives() for t in p.terms]
    return Polynomial(N_VARS, terms, name="f")


def g1() -> Polynomial:
    return _poly(
        "g1", _const(-8.0), _m(4, 1.0, x1=1), _m(4, -1.0, x2=1), _m(4, 1.0, x3=1),
        _m(4, -1.0, x4=1), _m(4, 1.0, x1=2), _m(4, 1.0, x2=2), _m(4, 1.0, x3=2),
        _m(4, 1.0, x4=2))


def g2() -> Polynomial:
    return _poly(
        "g2", _const(-10.0), _m(4, -1.0, x1=1), _m(4, -1.0, x4=1), _m(4, 1.0, x1=2),
        _m(4, 2.0, x2=2), _m(4, 1.0, x3=2), _m(4, 2.0, x4=2))


def h1() -> Polynomial:
    return _poly(
        "h1", _const(-5.0), _m(4, 2.0, x1=1), _m(4, -1.0, x2=1), _m(4, -1.0, x4=1),
        _m(4, 2.0, x1=2), _m(4, 1.0, x2=2), _m(4, 1.0, x3=2))


# initial conditions used for the five-agent experiment
AGENT_X0 = np.array([
    [3.0, 4.0, -3.0, 4.0],
    [1.0, -2.0, 4.0, 2.0],
    [-3.0, -4.0, 3.0, 3.0],
    [3.0, 1.0, 2.0, -3.0],
    [4.0, -2.0, -4.0, 1.0],
])
LAMBDA0 = 3.0
NU0 = 3.0
W0 = np.array([1.0, 2.0, 3.0, 4.0])
ETA = 1.0
