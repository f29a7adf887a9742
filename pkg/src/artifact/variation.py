"""Quadrature over graph patches: H-perimeter, first and second variation, stability.

A patch is a graph x_g = G(u) over a box in the remaining coordinates.  Nodes
are ordered in C order over the chart axes, and every sum goes through
``np.sum`` (pairwise summation), so results are reproducible bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .carnot_algebra import CarnotGroup
from .curvature_ops import Geometry, evaluate
from .hypersurface_geometry import EPS_CHAR
from .jets import Jet, ScalarField, frame_jet

MASK_RADIUS = 1e-3
ROOT_TOL = 1e-12


class NotHMinimalOnPatch(ValueError):
    pass


class CharacteristicNode(ValueError):
    pass


class DegenerateGram(ValueError):
    pass


class RootNotFound(ValueError):
    pass


# -- graph solving -------------------------------------------------------------

def solve_graph(field: ScalarField, axis: int, U, guess=None, bracket: float = 1.0) -> np.ndarray:
    """Solve f(u, x_axis) = 0 for x_axis at every chart point (Newton, then Brent on failures)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    x0 = np.zeros(len(U)) if guess is None else np.broadcast_to(np.asarray(guess, float), len(U)).copy()

    def point(z):
        return np.insert(U, axis, z, axis=-1)

    def F(z):
        return field(point(z))

    def dF(z):
        return field.jet(point(z), 1).d1[:, axis]

    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        z = scipy.optimize.newton(F, x0, fprime=dF, tol=ROOT_TOL, maxiter=100, disp=False)
    z = np.asarray(z, dtype=float)
    bad = ~np.isfinite(z) | (np.abs(F(np.where(np.isfinite(z), z, 0.0))) > 1e-10)
    for p in np.flatnonzero(bad):
        g = lambda s: float(field(np.insert(U[p], axis, s)[None, :])[0])
        lo, hi, width = x0[p] - bracket, x0[p] + bracket, bracket
        for _ in range(60):
            if g(lo) * g(hi) <= 0:
                break
            width *= 2
            lo, hi = x0[p] - width, x0[p] + width
        else:
            raise RootNotFound(f"no sign change along axis {axis} at chart point {U[p].tolist()}")
        z[p] = scipy.optimize.brentq(g, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps)
    return z


# -- quadrature patch ----------------------------------------------------------

def _rule(lo, hi, m, rule):
    if rule == "midpoint":
        w = (hi - lo) / m
        return lo + w * (np.arange(m) + 0.5), np.full(m, w)
    if rule in ("gauss", "gauss-legendre"):
        t, w = np.polynomial.legendre.leggauss(m)
        return 0.5 * (hi - lo) * t + 0.5 * (hi + lo), 0.5 * (hi - lo) * w
    raise ValueError(f"unknown quadrature rule {rule!r}")


@dataclass
class QuadraturePatch:
    """Tensor-product grid on a graph chart x_axis = G(u), u in the box [lo, hi]."""

    group: CarnotGroup
    field: ScalarField
    axis: int
    lo: Sequence[float]
    hi: Sequence[float]
    resolution: int | Sequence[int] = 64
    rule: str = "midpoint"
    mask_radius: float = MASK_RADIUS
    graph: Callable | None = None
    eps_char: float = EPS_CHAR

    def __post_init__(self):
        d = self.group.n - 1
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (d,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (d,)).copy()
        if np.any(self.hi <= self.lo):
            raise ValueError("empty chart domain")
        res = np.broadcast_to(np.asarray(self.resolution, dtype=int), (d,))
        nodes, weights = zip(*[_rule(a, b, int(m), self.rule) for a, b, m in zip(self.lo, self.hi, res)])
        grids = np.meshgrid(*nodes, indexing="ij")
        self.shape = tuple(int(m) for m in res)
        self.U = np.stack([g.ravel() for g in grids], axis=-1)
        wgrid = np.meshgrid(*weights, indexing="ij")
        self.weights = np.prod(np.stack([w.ravel() for w in wgrid], -1), axis=-1)

    @classmethod
    def for_surface(cls, surface, lo, hi, resolution=64, **kw) -> "QuadraturePatch":
        return cls(surface.group, surface.f, surface.graph_axis, lo, hi, resolution,
                   graph=surface.graph, **kw)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def embed(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        z = self.graph(U) if self.graph is not None else solve_graph(self.field, self.axis, U)
        return np.insert(U, self.axis, z, axis=-1)

    @cached_property
    def X(self) -> np.ndarray:
        return self.embed(self.U)

    @cached_property
    def geometry(self) -> Geometry:
        return evaluate(self.group, self.field, self.X, self.eps_char)

    @cached_property
    def areas(self):
        return area_elements(self.group, self.field, self.axis, self.X, self.geometry)

    @property
    def sigma_r(self) -> np.ndarray:
        return self.areas[0]

    @property
    def sigma_h(self) -> np.ndarray:
        return self.areas[1]

    @cached_property
    def mask(self) -> np.ndarray:
        """True at excluded (near-characteristic) nodes."""
        return self.geometry.p_h_norm < self.mask_radius

    @property
    def masked_fraction(self) -> float:
        return float(self.mask.mean())

    @property
    def masked_measure(self) -> float:
        return float(np.sum(self.weights[self.mask]))

    @property
    def min_p_h_norm(self) -> float:
        return float(self.geometry.p_h_norm.min())

    def integrate(self, values) -> float:
        """Sum of weight * sigma_H * values over unmasked nodes."""
        keep = ~self.mask
        vals = np.asarray(values, dtype=float)
        return float(np.sum((self.weights * self.sigma_h * np.where(keep, vals, 0.0))[keep]))

    def locate_characteristic(self):
        """Smallest |P_H nu| over the chart box, refined from the best node; (u, value)."""
        best = int(np.argmin(self.geometry.p_h_norm))
        u0 = self.U[best]

        def obj(u):
            x = self.embed(u[None, :])
            return float(evaluate(self.group, self.field, x, self.eps_char, False).p_h_norm[0] ** 2)

        res = scipy.optimize.minimize(obj, u0, method="L-BFGS-B",
                                      bounds=list(zip(self.lo, self.hi)),
                                      options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 200})
        val = np.sqrt(max(float(res.fun), 0.0))
        if val > self.geometry.p_h_norm[best]:
            return u0, float(self.geometry.p_h_norm[best])
        return res.x, float(val)


def area_elements(group: CarnotGroup, field: ScalarField, axis: int, X, geo: Geometry | None = None,
                  strict: bool = False):
    """(sigma_R, sigma_H) densities w.r.t. du at surface points X of the graph chart.

    Each is |det M_V| where the first column of M_V is V in coordinates (nu or
    nu_H) and the other columns are the chart tangents.  sigma_H is 0 at
    characteristic points, or raises CharacteristicNode when ``strict``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    geo = evaluate(group, field, X, with_varpi_derivatives=False) if geo is None else geo
    if strict and geo.characteristic.any():
        bad = X[np.argmax(geo.characteristic)]
        raise CharacteristicNode(f"sigma_H undefined at characteristic node {bad.tolist()}")
    n, h = group.n, group.h
    P = len(X)
    grad = field.jet(X, 1).d1
    chart = [i for i in range(n) if i != axis]
    tangents = np.zeros((P, n, n - 1))
    for j, c in enumerate(chart):
        tangents[:, c, j] = 1.0
        tangents[:, axis, j] = -grad[:, c] / grad[:, axis]
    A = frame_jet(group, X, 0).v
    nu_c = np.einsum("pri,pi->pr", A, geo.nu)
    nuh = np.where(geo.characteristic[:, None], 0.0, np.nan_to_num(geo.nu_h))
    nuh_c = np.einsum("pri,pi->pr", A[:, :, :h], nuh)
    sr = np.abs(np.linalg.det(np.concatenate([nu_c[:, :, None], tangents], axis=-1)))
    sh = np.abs(np.linalg.det(np.concatenate([nuh_c[:, :, None], tangents], axis=-1)))
    return sr, np.where(geo.characteristic, 0.0, sh)


@dataclass
class PerimeterResult:
    value: float
    masked_fraction: float
    masked_measure: float
    min_p_h_norm: float

    def __float__(self):
        return self.value


def h_perimeter(patch: QuadraturePatch) -> PerimeterResult:
    return PerimeterResult(patch.integrate(np.ones(len(patch.U))), patch.masked_fraction,
                           patch.masked_measure, patch.min_p_h_norm)


def riemannian_area(patch: QuadraturePatch) -> float:
    return float(np.sum(patch.weights * patch.sigma_r))


# -- test functions --------------------------------------------------------------

class TestFunction:
    """A function of the chart coordinates, extended off the surface by ignoring the graph axis."""

    __test__ = False  # not a pytest class

    def __init__(self, fn: Callable, amplitude: float = 1.0):
        self.fn = fn
        self.amplitude = amplitude

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(self.fn, self.amplitude * c)

    def __call__(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return self.amplitude * np.asarray(self.fn([U[:, i] for i in range(U.shape[1])]), dtype=float)

    def jet(self, X, axis: int, order: int = 2) -> Jet:
        xs = Jet.variables(X, order)
        us = [x for i, x in enumerate(xs) if i != axis]
        out = self.fn(us)
        if not isinstance(out, Jet):
            out = Jet.constant(np.broadcast_to(out, X.shape[:-1]), X.shape[-1], order)
        return out * self.amplitude


class Bump(TestFunction):
    """prod_i (1 - s_i^2)^4 with s_i = (u_i - c_i) / r_i, zero outside the box; C^3 across its edge."""

    def __init__(self, center, radius, amplitude: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = np.broadcast_to(np.asarray(radius, dtype=float), self.center.shape).copy()

        def fn(u):
            out = None
            inside = None
            for i, ui in enumerate(u):
                s = (ui - self.center[i]) / self.radius[i]
                sv = s.v if isinstance(s, Jet) else np.asarray(s)
                q = (1 - s * s) ** 4
                out = q if out is None else out * q
                ins = np.abs(sv) < 1
                inside = ins if inside is None else inside & ins
            return out * inside.astype(float)

        super().__init__(fn, amplitude)

    def scaled(self, c: float) -> "Bump":
        return Bump(self.center, self.radius, self.amplitude * c)

    @property
    def support(self):
        return self.center - self.radius, self.center + self.radius


def random_bumps(patch: QuadraturePatch, count: int, seed: int = 0, margin: float = 0.05) -> list:
    """Bumps with random centres and radii whose supports sit inside the patch box."""
    rng = np.random.default_rng(seed)
    out = []
    span = patch.hi - patch.lo
    for _ in range(count):
        r = span * rng.uniform(0.15, 0.35, size=span.shape)
        c = rng.uniform(patch.lo + r + margin * span, patch.hi - r - margin * span)
        out.append(Bump(c, r, amplitude=float(rng.uniform(0.5, 2.0))))
    return out


def _test_ops(patch: QuadraturePatch, w: TestFunction, extension: str = "graph"):
    phi = w.jet(patch.X, patch.axis, 2)
    if extension == "shifted":
        # another extension with the same trace on the surface: phi + f * (1 + |x|^2)
        xs = Jet.variables(patch.X, 2)
        r2 = sum((x * x for x in xs), Jet.constant(np.ones(len(patch.X)), patch.group.n, 2))
        phi = phi + patch.field.jet(patch.X, 2).truncate(2) * r2
    elif extension != "graph":
        raise ValueError(f"unknown extension {extension!r}")
    return phi, patch.geometry.scalar_ops(phi)


def _require_h_minimal(patch: QuadraturePatch, tol: float):
    Hcc = np.where(patch.mask, 0.0, np.nan_to_num(patch.geometry.H_cc))
    worst = float(np.abs(Hcc).max())
    if worst > tol:
        raise NotHMinimalOnPatch(f"max |H_cc| = {worst:.3e} exceeds {tol:.1e}")


def first_variation(patch: QuadraturePatch, w: TestFunction) -> float:
    """-integral of H_cc * w against sigma_H."""
    vals = np.nan_to_num(patch.geometry.H_cc) * w(patch.U)
    return -patch.integrate(vals)


@dataclass
class SecondVariation:
    value: float
    gradient_term: float
    potential_term: float


def second_variation(patch: QuadraturePatch, w: TestFunction, h_minimal_tol: float = 1e-6,
                     extension: str = "graph") -> SecondVariation:
    """integral of |grad_HS w|^2 - w^2 B_TS against sigma_H, for H-minimal patches."""
    _require_h_minimal(patch, h_minimal_tol)
    phi, ops = _test_ops(patch, w, extension)
    g2 = (ops["grad_hs"] ** 2).sum(-1)
    bts = patch_bts(patch)
    grad_term = patch.integrate(g2)
    pot = patch.integrate(phi.v ** 2 * bts)
    return SecondVariation(grad_term - pot, grad_term, pot)


def patch_bts(patch: QuadraturePatch) -> np.ndarray:
    geo = patch.geometry
    if "b_ts" not in geo.cache:
        geo.cache["b_ts"] = np.where(patch.mask, 0.0, np.nan_to_num(geo.b_ts()))
    return geo.cache["b_ts"]


def perimeter_under_normal_flow(patch: QuadraturePatch, w: TestFunction, t: float,
                                du: float = 1e-6) -> float:
    """H-perimeter of the surface moved by t * w * |P_H nu| * nu (normal speed w |P_H nu|)."""
    group = patch.group
    n, h = group.n, group.h

    def moved(U):
        X = patch.embed(U)
        geo = evaluate(group, patch.field, X, patch.eps_char, False)
        A = frame_jet(group, X, 0).v
        disp = np.einsum("pri,pi->pr", A, geo.nu) * (w(U) * geo.p_h_norm)[:, None]
        return X + t * disp

    base = moved(patch.U)
    d = n - 1
    tangents = np.empty((len(base), n, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = du
        tangents[:, :, j] = (moved(patch.U + e) - moved(patch.U - e)) / (2 * du)
    # cofactor vector: det[V, T] = V . cof
    cof = np.empty((len(base), n))
    for k in range(n):
        minor = np.delete(tangents, k, axis=1)
        cof[:, k] = (-1) ** k * np.linalg.det(minor)
    A = frame_jet(group, base, 0).v
    N = np.einsum("pri,pr->pi", A, cof)
    sh = np.linalg.norm(N[:, :h], axis=-1)
    return float(np.sum(patch.weights * sh * ~patch.mask))


# -- stability -------------------------------------------------------------------

@dataclass
class Certificate:
    kind: str                 # StableBySignDefiniteVarpi | StableByNonnegativePotential | Inconclusive
    alpha: int | None
    nodes: int
    margin: float
    masked_fraction: float
    min_p_h_norm: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {"certificate": self.kind, "alpha": self.alpha, "nodes": self.nodes,
                "margin": self.margin, "masked_fraction": self.masked_fraction,
                "min_p_h_norm": self.min_p_h_norm, "reason": self.reason}


def stability_certificate(patch: QuadraturePatch, tol: float = 1e-8,
                          h_minimal_tol: float = 1e-6) -> Certificate:
    """Sampled stability claim for an H-minimal patch (not a proof).

    The sign criterion and the potential criterion only apply to domains away
    from the characteristic set, so a patch that meets it is inconclusive.
    """
    _require_h_minimal(patch, h_minimal_tol)
    geo = patch.geometry
    keep = ~patch.mask
    nodes = int(keep.sum())
    common = dict(nodes=nodes, masked_fraction=patch.masked_fraction)
    if patch.mask.any():
        return Certificate("Inconclusive", None, margin=0.0, min_p_h_norm=patch.min_p_h_norm,
                           reason="patch meets the characteristic set", **common)
    u_star, floor = patch.locate_characteristic()
    if floor < patch.mask_radius:
        return Certificate("Inconclusive", None, margin=0.0, min_p_h_norm=floor,
                           reason=f"characteristic point near u = {np.round(u_star, 6).tolist()}",
                           **common)
    varpi = geo.varpi[keep]
    for a in range(varpi.shape[1]):
        col = varpi[:, a]
        if np.all(col > tol) or np.all(col < -tol):
            return Certificate("StableBySignDefiniteVarpi", int(group_index(patch.group, a)),
                               margin=float(np.abs(col).min()), min_p_h_norm=floor,
                               reason="varpi has one strict sign", **common)
    bts = patch_bts(patch)[keep]
    top = float(bts.max()) if bts.size else 0.0
    if top <= tol:
        return Certificate("StableByNonnegativePotential", None, margin=0.0 - top, min_p_h_norm=floor,
                           reason="B_TS <= 0 at every node", **common)
    return Certificate("Inconclusive", None, margin=top, min_p_h_norm=floor,
                       reason="varpi changes sign and B_TS is positive somewhere", **common)


def group_index(group: CarnotGroup, slot: int) -> int:
    """Basis index (0-based) of the slot-th vertical coordinate."""
    return group.h + slot


@dataclass
class RayleighResult:
    value: float
    coefficients: np.ndarray | None
    K: np.ndarray
    M: np.ndarray

    @property
    def trivially_stable(self) -> bool:
        return np.isinf(self.value)


def rayleigh_from_grams(K, M, tol: float = 1e-12) -> RayleighResult:
    """min over c of c^t K c / c^t M c among c with c^t M c > 0; +inf if there is none."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    try:
        scipy.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGram("gradient Gram matrix is not positive definite") from exc
    mu, vec = scipy.linalg.eigh(M, K)
    scale = max(np.abs(M).max(), 1e-300) / max(np.abs(K).max(), 1e-300)
    if mu[-1] <= tol * max(scale, 1.0):
        return RayleighResult(float("inf"), None, K, M)
    return RayleighResult(float(1.0 / mu[-1]), vec[:, -1], K, M)


def rayleigh_estimate(patch: QuadraturePatch, basis: Sequence[TestFunction]) -> RayleighResult:
    grads, vals = [], []
    for w in basis:
        phi, ops = _test_ops(patch, w)
        grads.append(ops["grad_hs"])
        vals.append(phi.v)
    wt = np.where(patch.mask, 0.0, patch.weights * patch.sigma_h)
    bts = patch_bts(patch)
    m = len(basis)
    K = np.empty((m, m))
    M = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            K[a, b] = K[b, a] = np.sum(wt * (grads[a] * grads[b]).sum(-1))
            M[a, b] = M[b, a] = np.sum(wt * vals[a] * vals[b] * bts)
    return rayleigh_from_grams(K, M)


from .identities import verify_identities  # noqa: E402,F401  (re-exported here)
