import numpy as np
import pytest

from artifact.builtin_examples import hyperbolic_paraboloid, vertical_hyperplane
from artifact.carnot_algebra import builtin_abelian, builtin_engel, builtin_heisenberg
from artifact.curvature_ops import evaluate
from artifact.identities import green_sides, pointwise_residuals, verify_identities
from artifact.jets import AnalyticField, FiniteDifferenceField
from artifact.variation import QuadraturePatch, random_bumps
from conftest import example_families, paraboloid_points

CMC_ROWS = {"varpi_jacobi_equation", "vertical_jacobi_equation", "horizontal_jacobi_equation"}


@pytest.mark.parametrize("S,X", example_families(), ids=lambda v: getattr(v, "name", ""))
def test_suite_passes_with_analytic_jets(S, X):
    report = verify_identities(S.group, S.f, X[:100], tol=1e-7)
    assert report.passed, report.table()
    assert CMC_ROWS <= set(report.names())
    assert not any(r.skipped for r in report.rows)


@pytest.mark.parametrize("S,X", example_families(), ids=lambda v: getattr(v, "name", ""))
def test_suite_passes_with_fd_jets(S, X):
    F = FiniteDifferenceField(S.f.fn, S.group.n)
    report = verify_identities(S.group, F, X[:50], tol=1e-4)
    assert report.passed, report.table()


def test_default_tolerances_follow_jet_kind():
    S = hyperbolic_paraboloid(1)
    X = paraboloid_points(S, 20)
    assert verify_identities(S.group, S.f, X)["norm_split"].tol == 1e-8
    F = FiniteDifferenceField(S.f.fn, 3)
    assert verify_identities(S.group, F, X)["norm_split"].tol == 1e-4


def test_impossible_tolerance_fails():
    S = hyperbolic_paraboloid(1)
    F = FiniteDifferenceField(S.f.fn, 3)
    assert not verify_identities(S.group, F, paraboloid_points(S, 20), tol=1e-16).passed


def test_abelian_varpi_residuals_vanish():
    G = builtin_abelian(3)
    S = vertical_hyperplane(G, [1, 2, 0])
    X = S.embed(np.random.default_rng(0).normal(size=(30, 2)))
    report = verify_identities(G, S.f, X)
    assert report.passed
    for name in ("skew_part_is_half_C_HS", "drift_divergence", "varpi_jacobi_equation",
                 "vertical_jacobi_equation"):
        assert report[name].residual == 0.0


@pytest.mark.parametrize("G", [builtin_heisenberg(1), builtin_heisenberg(2), builtin_engel()],
                         ids=["h1", "h2", "engel"])
def test_general_identities_on_non_minimal_surfaces(G):
    n = G.n
    rng = np.random.default_rng(n)
    a = rng.normal(size=(n - 1, n - 1)) * 0.5
    f = AnalyticField(lambda x: x[n - 1] - sum(a[i, j] * x[i] * x[j] for i in range(n - 1) for j in range(n - 1))
                      - 0.3 * x[0] ** 3, n)
    U = rng.uniform(-1, 1, size=(40, n - 1))
    X = np.column_stack([U, np.zeros(40)])
    X[:, -1] = -f(X)
    report = verify_identities(G, f, X)
    assert report.passed, report.table()
    for name in CMC_ROWS:
        assert report[name].skipped


def test_cmc_identities_fail_off_cmc():
    # the Jacobi-type equations are specific to constant H_cc; a bowl violates them
    G = builtin_heisenberg(1)
    f = AnalyticField(lambda x: x[2] - x[0] * x[0] - x[1] * x[1], 3)
    X = np.array([[0.5, 0.2, 0.29], [0.8, -0.4, 0.8]])
    res = pointwise_residuals(evaluate(G, f, X), cmc_tol=np.inf)
    assert res["varpi_jacobi_equation"] > 1e-3


def test_characteristic_samples_are_dropped(h1):
    S = hyperbolic_paraboloid(1)
    X = np.vstack([paraboloid_points(S, 10), [[1.0, -1.0, 0.0]]])
    assert verify_identities(h1, S.f, X).passed


def test_green_formula_on_vertical_plane(h1):
    S = vertical_hyperplane(h1, [1, 0])
    patch = QuadraturePatch.for_surface(S, [0, 0], [1, 1], 64)
    for b in random_bumps(patch, 3, seed=1):
        lo, hi = green_sides(patch, b)
        assert abs(lo - hi) / hi < 1e-6
    report = verify_identities(h1, S.f, patch.X[:50], patch=patch, bumps=random_bumps(patch, 2, 2))
    assert report.passed and "green_formula[1]" in report.names()
