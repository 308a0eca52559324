import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcisac.solvers import EllipsoidState, SdpProblem, bmat, ellipsoid_minimize, solve_sdp, trace
from mcisac.solvers.ellipsoid import default_max_iter


# -- affine expressions ----------------------------------------------------------------

def _random_y(p, seed=0):
    return np.random.default_rng(seed).standard_normal(p.nvar)


def test_affine_algebra_matches_numpy():
    p = SdpProblem()
    X = p.hermitian(3)
    w = p.complex_vector(3)
    y = _random_y(p)
    Xv, wv = X.value(y), w.value(y)
    np.testing.assert_allclose(Xv, Xv.conj().T)
    A = np.arange(9.0).reshape(3, 3) + 1j
    h = np.array([1.0, -1j, 2.0])
    np.testing.assert_allclose((A @ X @ A.conj().T).value(y), A @ Xv @ A.conj().T)
    np.testing.assert_allclose((h.conj() @ X @ h).value(y), h.conj() @ Xv @ h)
    np.testing.assert_allclose(trace(X).real.value(y), np.trace(Xv).real)
    np.testing.assert_allclose((2.0 * X - X.T + 1.0).value(y), 2 * Xv - Xv.T + 1)
    np.testing.assert_allclose((h.conj() @ w).value(y), h.conj() @ wv)
    np.testing.assert_allclose(X[1:, :2].value(y), Xv[1:, :2])
    np.testing.assert_allclose(X.H.value(y), Xv.conj().T)
    M = bmat([[X, w.reshape(3, 1)], [w.conj().reshape(1, 3), 1.0]])
    np.testing.assert_allclose(M.value(y), np.block([[Xv, wv[:, None]], [wv.conj()[None, :], np.ones((1, 1))]]))


def test_bmat_of_constants_is_array():
    assert isinstance(bmat([[np.eye(2), np.zeros((2, 1))], [np.zeros((1, 2)), 1.0]]), np.ndarray)


# -- SDPs with known solutions ---------------------------------------------------------

def test_trace_inverse_sdp():
    # min tr(T) s.t. [[T, I], [I, X]] >= 0, tr X <= 2: optimum X = I, value 2
    p = SdpProblem()
    X = p.hermitian(2)
    T = p.hermitian(2)
    p.add_psd(bmat([[T, np.eye(2)], [np.eye(2), X]]))
    p.add_nonneg(2.0 - trace(X).real)
    p.minimize(trace(T).real)
    sol, rep = solve_sdp(p)
    assert rep.optimal
    assert rep.objective == pytest.approx(2.0, rel=1e-7)
    np.testing.assert_allclose(sol[X], np.eye(2), atol=1e-6)


@given(st.integers(0, 1000))
@settings(max_examples=10, deadline=None)
def test_max_quadratic_form_is_top_eigenvalue(seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    C = B @ B.conj().T
    p = SdpProblem()
    X = p.hermitian(3)
    p.add_psd(X)
    p.add_eq(trace(X).real - 1.0)
    p.minimize(-trace(C @ X).real)
    sol, rep = solve_sdp(p)
    assert rep.optimal
    assert -rep.objective == pytest.approx(np.linalg.eigvalsh(C)[-1], rel=1e-6)


def test_ellipsoid_route_agrees_with_interior_point():
    p = SdpProblem()
    X = p.hermitian(2)
    h = np.array([1.0, 0.5j])
    t = p.real()
    p.add_psd(X)
    p.add_nonneg(1.0 - trace(X).real)
    p.add_nonneg((h.conj() @ X @ h).real - t)
    p.minimize(-t)
    _, r1 = solve_sdp(p)
    _, r2 = solve_sdp(p, method="ellipsoid", radius=10.0, tol=1e-9)
    assert r1.objective == pytest.approx(-np.vdot(h, h).real, rel=1e-7)
    assert r2.objective == pytest.approx(r1.objective, rel=1e-5)


def test_infeasible_sdp_reported():
    p = SdpProblem()
    X = p.hermitian(2)
    p.add_psd(X)
    p.add_nonneg(-1.0 - trace(X).real)
    p.minimize(trace(X).real)
    _, rep = solve_sdp(p, max_iter=60)
    assert not rep.optimal


def test_cvxpy_oracle_capacity_sdp():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(4)
    H = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    p = SdpProblem()
    X = p.hermitian(4)
    t = p.real()
    p.add_psd(X)
    for h in H:
        p.add_nonneg((h.conj() @ X @ h).real - t)
    p.add_nonneg(1.0 - trace(X).real)
    p.minimize(-t)
    _, rep = solve_sdp(p)
    Xc = cp.Variable((4, 4), hermitian=True)
    tc = cp.Variable()
    cons = [Xc >> 0, cp.real(cp.trace(Xc)) <= 1]
    cons += [cp.real(h.conj() @ Xc @ h) >= tc for h in H]
    prob = cp.Problem(cp.Maximize(tc), cons)
    prob.solve()
    assert -rep.objective == pytest.approx(prob.value, rel=1e-4)


# -- ellipsoid method ------------------------------------------------------------------

def test_ellipsoid_cut_keeps_halfspace_and_shrinks():
    E = EllipsoidState.ball(np.zeros(3), 1.0)
    v0 = E.log_volume()
    E.cut(np.array([1.0, 0.0, 0.0]))
    assert E.log_volume() < v0
    assert E.center[0] < 0


def test_ellipsoid_minimize_box_lp():
    c = np.array([1.0, 1.0, -2.0])

    def obj(x):
        return float(c @ x), c

    cuts = []
    for i in range(3):
        for s in (1.0, -1.0):
            e = np.zeros(3)
            e[i] = s
            cuts.append(lambda x, e=e: (float(e @ x - 1.0), e))
    x, rep = ellipsoid_minimize(obj, cuts, EllipsoidState.ball(np.zeros(3), 3.0), tol=1e-8)
    np.testing.assert_allclose(x, [-1, -1, 1], atol=1e-5)
    assert rep.objective == pytest.approx(-4.0, abs=1e-6)


def test_ellipsoid_one_dimensional():
    x, rep = ellipsoid_minimize(lambda x: (float(x[0] ** 2), 2 * x), [], EllipsoidState.ball(np.array([0.7]), 1.0),
                                tol=1e-12)
    assert abs(x[0]) < 1e-5


def test_default_iteration_budget_grows_with_dimension():
    assert default_max_iter(4, 10.0, 1e-6) > default_max_iter(2, 10.0, 1e-6) > 0
