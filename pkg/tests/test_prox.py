import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from palflow.errors import ContractError, ParameterError
from palflow.prox import (
    ProxFunction,
    ProxKind,
    moreau_grad,
    moreau_value,
    prox,
    soft_threshold,
)

EXAMPLES = 1000
KINDS = ["l1", "indicator_zero", "box", "quadratic", "zero"]


def grid_envelope(phi_1d, v, mu, step=1e-4, half_width=11.0):
    """Brute-force 1-D Moreau envelope: minimize over a uniform grid."""
    k = int(round(half_width / step))
    y = v + step * np.arange(-k, k + 1)
    with np.errstate(invalid="ignore"):
        return float(np.min(phi_1d(y) + (y - v) ** 2 / (2 * mu)))


def make(kind, dim, draw=None):
    if kind == "l1":
        return ProxFunction.l1(dim)
    if kind == "indicator_zero":
        return ProxFunction.indicator_zero(dim)
    if kind == "box":
        return ProxFunction.box(-np.linspace(0.5, 1.5, dim), np.linspace(0.25, 2.0, dim))
    if kind == "quadratic":
        return ProxFunction.quadratic(dim, 1.7)
    return ProxFunction.zero(dim)


def kinks(phi, v, mu):
    """Points where the prox map is not differentiable, per component."""
    if phi.kind is ProxKind.L1_NORM:
        return np.stack([np.full_like(v, mu), np.full_like(v, -mu)])
    if phi.kind is ProxKind.INDICATOR_BOX:
        return np.stack([phi.lower, phi.upper])
    return np.empty((0, v.size))


vectors = st.integers(1, 4).flatmap(
    lambda d: st.lists(st.floats(-5, 5, allow_nan=False), min_size=d, max_size=d))
mus = st.floats(0.05, 5.0)


# --- closed forms -------------------------------------------------------

@pytest.mark.parametrize("v, mu, expected", [
    ([2.0], 0.5, [1.5]),
    ([-0.3], 0.5, [0.0]),
])
def test_l1_prox_examples(v, mu, expected):
    assert prox(ProxFunction.l1(1), v, mu) == pytest.approx(expected)


def test_indicator_zero_prox_is_origin():
    assert prox(ProxFunction.indicator_zero(2), [1.0, -4.0], 0.7).tolist() == [0.0, 0.0]


def test_zero_prox_is_identity():
    v = np.array([0.3, -2.0, 7.0])
    assert np.array_equal(prox(ProxFunction.zero(3), v, 0.9), v)


def test_box_prox_clips():
    phi = ProxFunction.box([-1.0, 0.0], [1.0, 2.0])
    assert prox(phi, [3.0, -1.0], 0.1).tolist() == [1.0, 0.0]


def test_quadratic_prox_shrinks():
    phi = ProxFunction.quadratic(2, 3.0)
    assert prox(phi, [2.2, -1.1], 0.4) == pytest.approx([1.0, -0.5])


def test_soft_threshold_is_odd():
    v = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    assert np.array_equal(soft_threshold(-v, 1.0), -soft_threshold(v, 1.0))


# Values below were frozen from a dense-grid minimization (step 1e-5).
@pytest.mark.parametrize("phi, v, mu, expected", [
    (ProxFunction.l1(1), [0.5], 1.0, 0.125),
    (ProxFunction.l1(1), [2.0], 1.0, 1.5),
    (ProxFunction.l1(1), [-0.3], 0.5, 0.09),
    (ProxFunction.l1(1), [2.0], 0.5, 1.75),
    (ProxFunction.indicator_zero(1), [3.0], 1.0, 4.5),
    (ProxFunction.quadratic(1, 3.0), [0.8], 0.4, 0.43636363636363634),
    (ProxFunction.box([-1.0], [0.5]), [2.0], 0.5, 2.25),
    (ProxFunction.box([-1.0], [0.5]), [-0.2], 0.5, 0.0),
])
def test_moreau_value_frozen(phi, v, mu, expected):
    assert moreau_value(phi, v, mu) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("phi, v, mu, expected", [
    (ProxFunction.l1(1), [2.0], 1.0, [1.0]),
    (ProxFunction.l1(1), [0.0], 1.0, [0.0]),
    (ProxFunction.indicator_zero(2), [4.0, -2.0], 2.0, [2.0, -1.0]),
])
def test_moreau_grad_examples(phi, v, mu, expected):
    assert moreau_grad(phi, v, mu) == pytest.approx(expected)


# --- contract errors ----------------------------------------------------

def test_box_rejects_crossed_bounds():
    with pytest.raises(ContractError):
        ProxFunction.box([1.0], [0.0])


@pytest.mark.parametrize("mu", [0.0, -1.0, math.inf, math.nan])
def test_bad_mu_rejected(mu):
    with pytest.raises(ParameterError):
        prox(ProxFunction.l1(1), [1.0], mu)


def test_dimension_mismatch_rejected():
    with pytest.raises(ContractError):
        moreau_grad(ProxFunction.l1(2), [1.0, 2.0, 3.0], 1.0)


def test_indicator_value_is_infinite_outside():
    assert ProxFunction.indicator_zero(2).value([0.0, 1e-300]) == math.inf
    assert ProxFunction.box([0.0], [1.0]).value([1.5]) == math.inf


@pytest.mark.parametrize("kind, ell", [("zero", math.inf), ("l1", None), ("indicator_zero", None)])
def test_ell(kind, ell):
    assert make(kind, 2).ell == ell


def test_quadratic_ell_is_inverse_weight():
    assert ProxFunction.quadratic(2, 4.0).ell == 0.25


# --- randomized properties ---------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=EXAMPLES)
@given(v=vectors, mu=mus, data=st.data())
def test_prox_minimizes_its_objective(kind, v, mu, data):
    v = np.array(v)
    phi = make(kind, v.size)
    p = prox(phi, v, mu)
    obj = lambda y: phi.value(y) + float((y - v) @ (y - v)) / (2 * mu)
    base = obj(p)
    assert math.isfinite(base)
    for _ in range(3):
        d = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=v.size, max_size=v.size)))
        assert obj(p + d) >= base - 1e-12


@settings(max_examples=EXAMPLES)
@given(v=vectors, mu=mus)
def test_l1_prox_subgradient_condition(v, mu):
    v = np.array(v)
    p = prox(ProxFunction.l1(v.size), v, mu)
    r = v - p
    zero = p == 0
    assert np.all(np.abs(r[zero]) <= mu + 1e-12)
    assert np.allclose(r[~zero], mu * np.sign(p[~zero]), atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=EXAMPLES)
@given(data=st.data(), mu=mus)
def test_prox_is_nonexpansive(kind, data, mu):
    dim = data.draw(st.integers(1, 4))
    pair = st.lists(st.floats(-5, 5), min_size=dim, max_size=dim)
    u, v = np.array(data.draw(pair)), np.array(data.draw(pair))
    phi = make(kind, dim)
    pu, pv = prox(phi, u, mu), prox(phi, v, mu)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) * (1 + 1e-12) + 1e-15
    # firm nonexpansiveness
    assert float((pu - pv) @ (u - v)) >= float((pu - pv) @ (pu - pv)) - 1e-12


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=EXAMPLES)
@given(v=vectors, mu=mus)
def test_envelope_bounds(kind, v, mu):
    v = np.array(v)
    phi = make(kind, v.size)
    env = moreau_value(phi, v, mu)
    assert math.isfinite(env)
    if math.isfinite(phi.value(v)):
        assert env <= phi.value(v) + 1e-12
    # the envelope never drops below phi at the prox point
    assert env >= phi.value(prox(phi, v, mu)) - 1e-12


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=EXAMPLES)
@given(v=vectors, mu=mus)
def test_moreau_grad_matches_finite_differences(kind, v, mu):
    v = np.array(v)
    phi = make(kind, v.size)
    h = np.maximum(1e-6, 1e-6 * np.abs(v))
    k = kinks(phi, v, mu)
    # central differences are not a valid oracle across a kink of the prox map
    assume(k.size == 0 or np.min(np.abs(k - v)) > 1e3 * h.max())
    fd = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h[i]
        fd[i] = (moreau_value(phi, v + e, mu) - moreau_value(phi, v - e, mu)) / (2 * h[i])
    g = moreau_grad(phi, v, mu)
    scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
    assert np.linalg.norm(g - fd) / scale <= 1e-6 or np.linalg.norm(g - fd) <= 1e-12


@pytest.mark.parametrize("kind, phi_1d", [
    ("l1", np.abs),
    ("indicator_zero", lambda y: np.where(y == 0, 0.0, np.inf)),
    ("quadratic", lambda y: 0.5 * 1.7 * y * y),
    ("zero", np.zeros_like),
])
@settings(max_examples=100)
@given(v=st.floats(-5, 5), mu=mus)
def test_envelope_matches_grid_minimization(kind, phi_1d, v, mu):
    phi = make(kind, 1)
    # snap v to the grid so that kinks and the indicator's feasible point are sampled
    v = round(v, 4)
    if kind == "indicator_zero":
        expected = float(v * v / (2 * mu))
        assert grid_envelope(lambda t: np.where(np.abs(t) < 5e-5, 0.0, np.inf), v, mu) \
            == pytest.approx(expected, abs=1e-6)
        assert moreau_value(phi, [v], mu) == pytest.approx(expected, abs=1e-12)
        return
    assert moreau_value(phi, [v], mu) == pytest.approx(grid_envelope(phi_1d, v, mu), abs=1e-6)


@settings(max_examples=100)
@given(v=st.floats(-5, 5), mu=mus)
def test_box_envelope_matches_grid_minimization(v, mu):
    v = round(v, 4)
    phi = ProxFunction.box([-1.0], [0.5])
    # grid points carry ~1e-15 drift, so the bounds get a little slack
    box = lambda y: np.where((y >= -1.0 - 1e-9) & (y <= 0.5 + 1e-9), 0.0, np.inf)
    assert moreau_value(phi, [v], mu) == pytest.approx(grid_envelope(box, v, mu), abs=1e-6)
