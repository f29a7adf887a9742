import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from artifact.builtin_examples import hyperbolic_paraboloid
from artifact.carnot_algebra import builtin_abelian, builtin_engel, builtin_heisenberg
from artifact.jets import (
    AnalyticField, FiniteDifferenceField, InsufficientOrder, Jet, NonFiniteSample, default_step,
    frame_derivatives, frame_jet, horizontal_gradient, jet_from_callable, sqrt,
)


def sympy_jet(expr, xs, point):
    subs = dict(zip(xs, point))
    v = float(expr.subs(subs))
    d1 = np.array([float(sympy.diff(expr, a).subs(subs)) for a in xs])
    d2 = np.array([[float(sympy.diff(expr, a, b).subs(subs)) for b in xs] for a in xs])
    d3 = np.array([[[float(sympy.diff(expr, a, b, c).subs(subs)) for c in xs] for b in xs] for a in xs])
    return v, d1, d2, d3


def test_arithmetic_matches_sympy():
    xs = sympy.symbols("x0:3")
    expr = (xs[0] * xs[1] - xs[2] ** 3) / sympy.sqrt(1 + xs[0] ** 2 + xs[1] ** 2) + xs[2] ** sympy.Rational(5, 2)
    fn = lambda x: (x[0] * x[1] - x[2] ** 3) / sqrt(1 + x[0] ** 2 + x[1] ** 2) + x[2] ** 2.5
    X = np.array([[0.3, -1.1, 0.8], [1.2, 0.4, 2.0]])
    J = AnalyticField(fn, 3).jet(X, 3)
    for p in range(2):
        v, d1, d2, d3 = sympy_jet(expr, xs, X[p])
        np.testing.assert_allclose(J.v[p], v, rtol=1e-13)
        np.testing.assert_allclose(J.d1[p], d1, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(J.d2[p], d2, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(J.d3[p], d3, rtol=1e-11, atol=1e-12)


def test_slots_above_order_are_absent():
    J = Jet.variables(np.zeros((2, 3)), 1)[0]
    assert J.order == 1 and J.d2 is None
    with pytest.raises(InsufficientOrder):
        J.require(2)
    assert (J * J).order == 1


def test_product_uses_smaller_order():
    x3 = Jet.variables(np.ones((1, 2)), 3)[0]
    x1 = Jet.variables(np.ones((1, 2)), 1)[1]
    assert (x3 * x1).order == 1


def test_fd_linear_field_is_exact():
    X = np.array([[0.3, 4.0, -2.0]])
    J = jet_from_callable(lambda P: P[..., 0], X, 1)
    np.testing.assert_array_equal(J.d1[0], [1.0, 0.0, 0.0])


def test_fd_coordinate_t_on_h1():
    J = jet_from_callable(lambda P: P[..., 2], np.array([[1.0, 2.0, 3.0]]), 1)
    np.testing.assert_allclose(J.d1[0], [0, 0, 1], atol=1e-12)


def test_fd_paraboloid_matches_analytic():
    S = hyperbolic_paraboloid(1)
    rng = np.random.default_rng(3)
    X = S.embed(rng.uniform(-2, 2, size=(20, 2)))
    a = S.f.jet(X, 3)
    fd = jet_from_callable(S.f, X, 3, step=1e-4)
    for s_a, s_f in zip(a.slots(), fd.slots()):
        assert np.abs(s_a - s_f).max() <= 1e-6


def cubic(coeffs):
    c0, c1, c2, c3 = coeffs

    def fn(x):
        n = len(x)
        out = c0
        for i in range(n):
            out = out + c1[i] * x[i]
            for j in range(n):
                out = out + c2[i, j] * x[i] * x[j]
                for k in range(n):
                    out = out + c3[i, j, k] * x[i] * x[j] * x[k]
        return out

    return fn


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 4))
def test_fd_is_exact_on_cubics(seed, n):
    rng = np.random.default_rng(seed)
    coeffs = (rng.normal(), rng.normal(size=n), rng.normal(size=(n, n)), rng.normal(size=(n, n, n)))
    fn = cubic(coeffs)
    X = rng.uniform(-1, 1, size=(3, n))
    exact = AnalyticField(fn, n).jet(X, 3)
    fd = FiniteDifferenceField(fn, n, step=0.25).jet(X, 3)
    for s_a, s_f in zip(exact.slots(), fd.slots()):
        assert np.abs(s_a - s_f).max() <= 1e-9


def test_default_step_scales_with_point():
    h = default_step(np.array([[0.1, 0.2], [10.0, -300.0]]))
    np.testing.assert_array_equal(h, [2.0 ** -14, 2.0 ** -6])
    assert np.all((h <= [1e-4, 3e-2]) & (h > 0.5 * np.array([1e-4, 3e-2])))


def test_non_finite_sample_raises():
    with pytest.raises(NonFiniteSample), np.errstate(divide="ignore"):
        jet_from_callable(lambda P: np.log(P[..., 0]), np.array([[0.0, 1.0]]), 1)


def test_frame_jet_values_match_frame_matrix():
    G = builtin_engel()
    X = np.random.default_rng(0).normal(size=(5, 4))
    A = frame_jet(G, X, 2)
    for p in range(5):
        np.testing.assert_allclose(A.v[p], G.frame_matrix(X[p]), atol=1e-15)


def test_grad_h_of_t_is_half_rotated_position(h1):
    X = np.array([[0.6, -1.4, 0.3]])
    t = AnalyticField(lambda x: x[2], 3).jet(X, 2)
    A = frame_jet(h1, X, 1)
    gh = horizontal_gradient(t, A, h1.h)[0]
    z = X[0, :2]
    np.testing.assert_allclose(gh, -(h1.C_H_alpha[0] @ z) / 2)
    np.testing.assert_allclose(gh, [-X[0, 1] / 2, X[0, 0] / 2])


def test_commutator_of_t_is_one(h1):
    X = np.random.default_rng(2).normal(size=(4, 3))
    t = AnalyticField(lambda x: x[2], 3).jet(X, 2)
    _, XX = frame_derivatives(t, frame_jet(h1, X, 2), 2)
    # XX.v[p, i, j] = X_j X_i t
    np.testing.assert_allclose(XX.v[:, 1, 0] - XX.v[:, 0, 1], 1.0, atol=1e-14)


def test_abelian_frame_derivatives_are_partials():
    G = builtin_abelian(3)
    X = np.random.default_rng(5).normal(size=(3, 3))
    f = AnalyticField(lambda x: x[0] * x[1] ** 2 + x[2] ** 3, 3)
    J = f.jet(X, 3)
    D1, D2, D3 = frame_derivatives(J, frame_jet(G, X, 3), 3)
    np.testing.assert_allclose(D1.v, J.d1)
    np.testing.assert_allclose(D2.v, J.d2)
    np.testing.assert_allclose(D3.v, J.d3)


def test_grad_h_of_vertical_coordinate(h2):
    X = np.random.default_rng(9).normal(size=(6, 5))
    phi = AnalyticField(lambda x: x[4], 5).jet(X, 1)
    gh = horizontal_gradient(phi, frame_jet(h2, X, 0), h2.h)
    np.testing.assert_allclose(gh, -0.5 * X[:, :4] @ h2.C_H_alpha[0].T, atol=1e-15)


def test_grad_h_of_constant_and_coordinate(h2):
    X = np.random.default_rng(9).normal(size=(6, 5))
    A = frame_jet(h2, X, 0)
    c = Jet.constant(np.full(6, 3.0), 5, 1)
    assert not np.any(horizontal_gradient(c, A, h2.h))
    x1 = Jet.variables(X, 1)[0]
    np.testing.assert_array_equal(horizontal_gradient(x1, A, h2.h), np.tile([1, 0, 0, 0], (6, 1)))


def test_frame_derivatives_need_order():
    G = builtin_heisenberg(1)
    X = np.zeros((1, 3))
    with pytest.raises(InsufficientOrder):
        frame_derivatives(Jet.variables(X, 1)[0], frame_jet(G, X, 1), 2)


@pytest.mark.parametrize("G", [builtin_heisenberg(1), builtin_heisenberg(2), builtin_engel()],
                         ids=["h1", "h2", "engel"])
def test_bracket_identity_on_random_polynomials(G):
    rng = np.random.default_rng(G.n)
    n = G.n
    fn = cubic((0.0, rng.normal(size=n), rng.normal(size=(n, n)), 0.3 * rng.normal(size=(n, n, n))))
    X = rng.uniform(-1, 1, size=(10, n))
    D1, D2 = frame_derivatives(AnalyticField(fn, n).jet(X, 2), frame_jet(G, X, 1), 2)
    comm = D2.v.transpose(0, 2, 1) - D2.v   # [i, j] -> X_i X_j phi - X_j X_i phi
    expected = np.einsum("ijr,pr->pij", G.structure, D1.v)
    np.testing.assert_allclose(comm, expected, atol=1e-8)
