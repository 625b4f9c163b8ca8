import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palflow import rosen_suzuki as rs
from palflow.dynamics import PrimalDualState, pal_gradient, pal_value
from palflow.errors import ContractError
from palflow.problem import (
    KktPoint,
    Oracle,
    ProblemSpec,
    affine,
    check_licq,
    check_slater,
    constraint_permutation,
    kkt_residual,
    quadratic,
    recover_multipliers,
    verify_gradients,
)
from palflow.problems import INEQ_QP_CENTER, ineq_qp, lasso_toy, rosen_suzuki_central
from palflow.prox import ProxFunction

RS_OPT = np.array([0.0, 1.0, 2.0, -1.0])


def sq_norm(n):
    return quadratic(2 * np.eye(n), name="sq")


# --- construction -------------------------------------------------------

def test_rank_deficient_T_rejected():
    with pytest.raises(ContractError, match="full column rank"):
        ProblemSpec(n=2, f=sq_norm(2), T=[[1.0, 1.0], [2.0, 2.0]])


def test_short_T_rejected():
    with pytest.raises(ContractError):
        ProblemSpec(n=2, f=sq_norm(2), T=[[1.0, 0.0]])


def test_phi_dimension_must_match_T():
    with pytest.raises(ContractError, match="rows"):
        ProblemSpec(n=2, f=sq_norm(2), phi=ProxFunction.l1(3))


def test_bad_gradient_shape_rejected():
    bad = Oracle(value=lambda x: 0.0, grad=lambda x: np.zeros(3))
    with pytest.raises(ContractError, match="gradient"):
        ProblemSpec(n=2, f=bad)


def test_nonaffine_equality_warns():
    with pytest.warns(UserWarning, match="not affine"):
        ProblemSpec(n=4, f=rs.objective(), h=(rs.h1(),))


def test_affine_equality_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ProblemSpec(n=2, f=sq_norm(2), h=(affine([1.0, 1.0], -1.0),))


def test_defaults_are_identity_and_zero():
    spec = ProblemSpec(n=3, f=sq_norm(3))
    assert np.array_equal(spec.T, np.eye(3))
    assert spec.phi.kind.value == "zero"
    assert (spec.r, spec.s, spec.m) == (0, 0, 3)


def test_negative_multiplier_rejected():
    with pytest.raises(ContractError):
        KktPoint([0.0], [-1.0], [], [0.0])


# --- KKT residual -------------------------------------------------------

def test_residual_zero_at_unconstrained_minimum():
    spec = ProblemSpec(n=2, f=sq_norm(2))
    assert kkt_residual(spec, KktPoint.zeros(spec), 0.1).total == 0.0


def test_residual_is_gradient_norm_off_minimum():
    spec = ProblemSpec(n=1, f=sq_norm(1))
    rep = kkt_residual(spec, KktPoint([1.0], [], [], [0.0]), 0.1)
    assert rep.total == pytest.approx(2.0)
    assert rep.stationarity == pytest.approx(2.0)


def test_rosen_suzuki_residual_at_optimum():
    spec = rosen_suzuki_central()
    pt = recover_multipliers(spec, RS_OPT)
    # multipliers derived by hand from the stationarity system at (0, 1, 2, -1)
    assert pt.lam == pytest.approx([1.0, 0.0], abs=1e-12)
    assert pt.nu == pytest.approx([2.0], abs=1e-12)
    assert kkt_residual(spec, pt, 0.1).total <= 1e-6


def test_ineq_qp_multipliers_match_closed_form():
    # the ball multiplier is (|d| - R) / (2R) with d the in-plane offset of c
    c = INEQ_QP_CENTER
    n = c.size
    d = c - (c.sum() - 1) / n - 1 / n
    R = np.sqrt(1 - 1 / n)
    lam = (np.linalg.norm(d) - R) / (2 * R)
    nu = (c.sum() - 1 - 2 * lam) / n
    spec = ineq_qp()
    pt = recover_multipliers(spec, spec.known_optimum)
    assert pt.lam == pytest.approx([lam], abs=1e-12)
    assert pt.nu == pytest.approx([nu], abs=1e-12)
    assert lam == pytest.approx(0.799, abs=1e-3)


def test_lasso_multiplier_is_a_subgradient():
    spec = lasso_toy()
    pt = recover_multipliers(spec, spec.known_optimum)
    x = spec.known_optimum
    nz = x != 0
    assert np.array_equal(pt.w[nz], np.sign(x[nz]))
    assert np.all(np.abs(pt.w[~nz]) <= 1 + 1e-12)
    assert kkt_residual(spec, pt, 0.1).total <= 1e-12


def test_splitting_residual_catches_smoothed_stationary_point():
    spec = lasso_toy()
    mu = 0.1
    x = np.array([2.5, 0.0, 4.0])  # not the optimum (2, 0, 4)
    target = -spec.f.grad(x)  # (0.5, 0.4, 1.0), inside [-1, 1]
    # choose w so that moreau_grad(x + mu w) equals target exactly
    w = (mu * target - x) / mu
    rep = kkt_residual(spec, KktPoint(x, [], [], w), mu)
    assert rep.stationarity <= 1e-12
    assert rep.splitting > 1.0
    assert rep.total == rep.splitting


@pytest.mark.filterwarnings("ignore:problem .* not affine")
def test_residual_invariant_under_constraint_permutation(rng):
    spec = rosen_suzuki_central()
    perm = constraint_permutation(spec, [1, 0], [0])
    for _ in range(10):
        x = rng.standard_normal(4)
        lam = rng.random(2)
        nu = rng.standard_normal(1)
        w = rng.standard_normal(4)
        a = kkt_residual(spec, KktPoint(x, lam, nu, w), 0.3)
        b = kkt_residual(perm, KktPoint(x, lam[::-1], nu, w), 0.3)
        assert a.total == pytest.approx(b.total, rel=1e-14)


# --- LICQ and Slater ----------------------------------------------------

def test_licq_single_constraint():
    g = quadratic(np.diag([2.0, 0.0]), None, -1.0)
    spec = ProblemSpec(n=2, f=sq_norm(2), g=(g,))
    rep = check_licq(spec, [1.0, 0.0], active_tol=1e-8)
    assert rep.satisfied and rep.rank == 1 and rep.active_set == [0]


def test_licq_duplicated_constraint_fails():
    g = affine([1.0, 0.0])
    spec = ProblemSpec(n=2, f=sq_norm(2), g=(g, g))
    assert not check_licq(spec, [0.0, 0.0]).satisfied


def test_licq_rosen_suzuki():
    rep = check_licq(rosen_suzuki_central(), RS_OPT)
    assert rep.satisfied and rep.active_set == [0] and rep.rank == 2


def test_slater_examples():
    spec = ProblemSpec(n=1, f=sq_norm(1), g=(affine([1.0], -1.0),))
    assert check_slater(spec, [0.0], 1e-9)
    assert not check_slater(spec, [1.0], 1e-9)


def test_slater_rosen_suzuki_inequalities_at_origin():
    spec = rosen_suzuki_central()
    assert spec.g_values(np.zeros(4)).tolist() == [-8.0, -10.0]
    ineq_only = ProblemSpec(n=4, f=spec.f, g=spec.g)
    assert check_slater(ineq_only, np.zeros(4), 1e-9)


def test_slater_implies_small_feasibility_residuals(rng):
    spec = ineq_qp()
    for _ in range(50):
        x = rng.standard_normal(3)
        x = x - (x.sum() - 1) / 3
        if check_slater(spec, x, 1e-9):
            rep = kkt_residual(spec, KktPoint.zeros(spec, x), 0.1)
            assert rep.primal_ineq <= 1e-9 and rep.primal_eq <= 1e-9


# --- gradients ----------------------------------------------------------

def test_exact_gradient_passes(rng):
    spec = ProblemSpec(n=3, f=sq_norm(3))
    assert verify_gradients(spec, rng.standard_normal(3)) <= 1e-7


def test_wrong_gradient_is_caught(rng):
    bad = Oracle(value=lambda x: float(x @ x), grad=lambda x: 4 * x)
    spec = ProblemSpec(n=3, f=bad)
    assert verify_gradients(spec, rng.standard_normal(3)) == pytest.approx(0.5, abs=1e-6)


def test_rosen_suzuki_gradients(rng):
    spec = rosen_suzuki_central()
    for _ in range(10):
        assert verify_gradients(spec, 3 * rng.standard_normal(4)) <= 1e-6


# --- saddle inequalities ------------------------------------------------

def test_saddle_inequalities_at_ineq_qp_optimum(rng):
    spec = ineq_qp()
    mu = 0.2
    star = PrimalDualState.from_kkt(recover_multipliers(spec, spec.known_optimum))
    L_star = pal_value(spec, star, mu)
    for _ in range(100):
        x = star.x + rng.standard_normal(3)
        other = PrimalDualState(star.x, rng.random(1) * 3, rng.standard_normal(1),
                                rng.standard_normal(3))
        assert pal_value(spec, other, mu) <= L_star + 1e-12
        moved = PrimalDualState(x, star.lam, star.nu, star.w)
        assert L_star <= pal_value(spec, moved, mu) + 1e-12


@settings(max_examples=200)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_pal_strongly_convex_in_x(a, b):
    spec = ineq_qp()
    mu = 0.3
    lam, nu, w = np.array([0.7]), np.array([-0.2]), np.array([0.4, -1.0, 2.0])
    x1, x2 = np.array(a), np.array(b)
    s1 = PrimalDualState(x1, lam, nu, w)
    s2 = PrimalDualState(x2, lam, nu, w)
    g1 = pal_gradient(spec, s1, mu).x
    d = x2 - x1
    alpha = spec.strong_convexity_alpha
    lhs = pal_value(spec, s2, mu)
    rhs = pal_value(spec, s1, mu) + g1 @ d + 0.5 * alpha * d @ d
    assert lhs >= rhs - 1e-9 * max(1.0, abs(lhs))
