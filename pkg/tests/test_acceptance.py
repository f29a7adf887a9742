"""One pass/fail test per acceptance criterion, with the stated tolerances."""

import time

import numpy as np

from artifact.builtin_examples import hyperbolic_paraboloid, nonvertical_hyperplane, vertical_hyperplane
from artifact.carnot_algebra import builtin_heisenberg, riemann_curvature, validate_structure
from artifact.cli import main
from artifact.curvature_ops import evaluate
from artifact.identities import verify_identities
from artifact.jets import FiniteDifferenceField
from artifact.variation import (
    QuadraturePatch, first_variation, h_perimeter, perimeter_under_normal_flow, random_bumps,
    second_variation, stability_certificate,
)
from artifact.identities import green_sides
from conftest import example_families, nvplane_points, paraboloid_points


def test_criterion_01_heisenberg_structure():
    start = time.perf_counter()
    for m in (1, 2, 3):
        G = builtin_heisenberg(m)
        data = G.structure.astype(int).tolist()        # integer data, checked exactly
        assert validate_structure(G.strata_dims, data).ok
    assert builtin_heisenberg(1).Q == 4
    assert builtin_heisenberg(2).Q == 6
    assert abs(riemann_curvature(builtin_heisenberg(1), 0, 1, 0, 1) - (-0.75)) <= 1e-12
    assert time.perf_counter() - start < 1.0


def test_criterion_02_h_minimality_of_example_families():
    start = time.perf_counter()
    families = example_families()
    assert {S.name for S, _ in families} == {"hparab", "nvplane", "vplane"}
    for S, X in families:
        assert len(X) == 200
        geo = evaluate(S.group, S.f, X)
        assert not geo.characteristic.any()
        assert np.abs(geo.H_cc).max() <= 1e-9, S.name
    assert time.perf_counter() - start < 5.0


def test_criterion_03_paraboloid_closed_forms():
    for m in (1, 2, 3):
        S = hyperbolic_paraboloid(m)
        X = paraboloid_points(S, 100, seed=10 + m, lo=0.5, hi=3.0)
        r = np.linalg.norm(X[:, 0:2 * m:2] + X[:, 1:2 * m:2], axis=-1)
        assert r.min() >= 0.5 and r.max() <= 3.0
        geo = evaluate(S.group, S.f, X)
        expected = {
            "varpi": np.sqrt(2) / r,
            "B2": 2 * (m - 1) / r ** 2,
            "S2": (m - 1) / r ** 2,
            "A2": (m - 1) / r ** 2,
            "B_TS": 2 * (m - 2) / r ** 2,
        }
        got = {"varpi": geo.varpi[:, 0], "B2": geo.B2, "S2": geo.S2, "A2": geo.A2, "B_TS": geo.b_ts()}
        for key in expected:
            assert np.abs(got[key] - expected[key]).max() <= 1e-7, (m, key)
        if m == 2:
            assert np.abs(got["B_TS"]).max() <= 1e-7
    S = hyperbolic_paraboloid(1)
    assert abs(evaluate(S.group, S.f, np.array([[1.0, 1.0, 0.0]])).b_ts()[0] + 0.5) <= 1e-7


def test_criterion_04_nonvertical_hyperplane_closed_forms():
    for m in (1, 2):
        G = builtin_heisenberg(m)
        S = nonvertical_hyperplane(G)
        X = nvplane_points(S, 200, seed=20 + m)[:100]
        assert len(X) == 100
        CH = G.C_H_alpha[0]
        cx = np.linalg.norm(X[:, : G.h] @ CH.T, axis=-1)
        geo = evaluate(G, S.f, X)
        assert np.abs(geo.varpi[:, 0] - 2 / cx).max() <= 1e-7
        assert geo.S2.max() <= 1e-10
        assert np.abs(geo.b_ts() - geo.A2).max() <= 1e-7
        assert not geo.characteristic.any()
        # the flag is raised exactly on {C_H x_H = 0}
        probe = np.array([[0.0] * G.n, [1e-3] + [0.0] * (G.n - 1), [0.0, 0.5] + [0.0] * (G.n - 2)])
        flags = evaluate(G, S.f, probe).characteristic
        np.testing.assert_array_equal(flags, S.characteristic_locus(probe))
        np.testing.assert_array_equal(flags, [True, False, False])


SUITE = ["tangential_divergence", "skew_part_is_half_C_HS", "trace_of_B_squared", "norm_split",
         "drift_divergence", "laplacian_decomposition", "normal_derivative_of_nu_h",
         "horizontal_jacobi_equation", "varpi_jacobi_equation", "vertical_jacobi_equation"]


def test_criterion_05_identity_suite():
    start = time.perf_counter()
    for S, X in example_families():
        analytic = verify_identities(S.group, S.f, X[:100], tol=1e-7)
        fd = verify_identities(S.group, FiniteDifferenceField(S.f.fn, S.group.n), X[:100], tol=1e-4)
        for report in (analytic, fd):
            for name in SUITE:
                row = report[name]
                assert not row.skipped and row.passed, (S.name, name, row.residual)
            if S.group.is_heisenberg():
                assert report["heisenberg_norm_identity"].passed
            assert report.passed, report.table()
    assert time.perf_counter() - start < 30.0


def test_criterion_06_measures():
    S = hyperbolic_paraboloid(1)
    patch = QuadraturePatch.for_surface(S, [0, 0], [1, 1], 256)
    keep = ~patch.geometry.characteristic
    ratio = patch.sigma_h[keep] / patch.sigma_r[keep]
    assert np.abs(ratio - patch.geometry.p_h_norm[keep]).max() <= 1e-10
    assert abs(h_perimeter(patch).value - 1 / np.sqrt(2)) <= 1e-6
    for T, lo, hi, res in ((hyperbolic_paraboloid(2), [0.2] * 4, [1.2] * 4, 6),
                           (nonvertical_hyperplane(builtin_heisenberg(1)), [0.3, 0.3], [1, 1], 16)):
        p = QuadraturePatch.for_surface(T, lo, hi, res)
        assert np.abs(p.sigma_h / p.sigma_r - p.geometry.p_h_norm).max() <= 1e-10


def test_criterion_07_first_variation():
    H1 = builtin_heisenberg(1)
    patches = [QuadraturePatch.for_surface(hyperbolic_paraboloid(1), [0.2, 0.2], [1.2, 1.2], 32),
               QuadraturePatch.for_surface(vertical_hyperplane(H1, [1, 0]), [0, 0], [1, 1], 32),
               QuadraturePatch.for_surface(nonvertical_hyperplane(H1), [0.5, 0.5], [1.5, 1.5], 32)]
    for patch in patches:
        for b in random_bumps(patch, 10, seed=0):
            assert abs(first_variation(patch, b)) <= 1e-8
    # finite difference of the perimeter along the flow with normal speed w |P_H nu|,
    # on a non-minimal surface so that the first variation is not zero
    from artifact.jets import AnalyticField
    from artifact.variation import Bump
    bowl = AnalyticField(lambda x: x[2] - (x[0] * x[0] + x[1] * x[1]) / 2, 3)
    patch = QuadraturePatch(H1, bowl, 2, [0.2, 0.2], [1.2, 1.2], 64)
    w = Bump([0.7, 0.7], [0.4, 0.4])
    t = 1e-4
    fd = (perimeter_under_normal_flow(patch, w, t) - perimeter_under_normal_flow(patch, w, 0.0)) / t
    I = first_variation(patch, w)
    assert abs(fd - I) / abs(I) <= 1e-3


def test_criterion_08_second_variation_and_stability():
    H1 = builtin_heisenberg(1)
    vplane = QuadraturePatch.for_surface(vertical_hyperplane(H1, [1, 0]), [0, 0], [1, 1], 48)
    for b in random_bumps(vplane, 10, seed=1):
        q = second_variation(vplane, b)
        q2 = second_variation(vplane, b, extension="shifted")
        assert q.value > 0
        assert abs(q.value - q.gradient_term) <= 1e-8
        assert abs(q.value - q2.value) <= 1e-8
    S2 = hyperbolic_paraboloid(2)
    h2 = QuadraturePatch.for_surface(S2, [0.3] * 4, [1.3] * 4, 10)
    for b in random_bumps(h2, 3, seed=2):
        q = second_variation(h2, b)
        assert abs(q.value - q.gradient_term) <= 1e-8
    S1 = hyperbolic_paraboloid(1)
    assert stability_certificate(
        QuadraturePatch.for_surface(S1, [0.5, 0.5], [1.5, 1.5], 32)).kind == "StableBySignDefiniteVarpi"
    assert stability_certificate(vplane).kind == "StableByNonnegativePotential"
    straddle = stability_certificate(QuadraturePatch.for_surface(S1, [-0.5, -0.5], [0.5, 0.5], 32))
    assert straddle.kind == "Inconclusive" and straddle.masked_fraction > 0


def test_criterion_09_green_formula():
    H1 = builtin_heisenberg(1)
    vplane = QuadraturePatch.for_surface(vertical_hyperplane(H1, [1, 0]), [0, 0], [1, 1], 64)
    for b in random_bumps(vplane, 5, seed=3):
        lhs, rhs = green_sides(vplane, b)
        assert abs(lhs - rhs) / abs(rhs) <= 1e-5
    S = hyperbolic_paraboloid(2)
    box = QuadraturePatch.for_surface(S, [0.3] * 4, [1.3] * 4, 2)
    for b in random_bumps(box, 5, seed=4):
        lo, hi = b.support
        patch = QuadraturePatch.for_surface(S, lo, hi, 12, rule="gauss")
        lhs, rhs = green_sides(patch, b)
        assert abs(lhs - rhs) / abs(rhs) <= 1e-5


def test_criterion_10_scan_determinism(tmp_path):
    args = ["scan", "--group", "heisenberg:1", "--surface", "hparab", "--seed", "7",
            "--patch", '{"lo": [-0.5, -0.5], "hi": [1.1, 1.1], "resolution": 32}']
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().count(b"\n") == 1025
