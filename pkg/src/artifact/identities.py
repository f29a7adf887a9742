"""Residuals of the structural identities of horizontal hypersurface geometry.

Each residual compares two independently evaluated sides at sample points.
Identities that need constant horizontal mean curvature are skipped when the
samples do not have it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .carnot_algebra import CarnotGroup
from .curvature_ops import Geometry, evaluate, heisenberg_bts_from
from .hypersurface_geometry import EPS_CHAR
from .jets import Jet, ScalarField

ANALYTIC_TOL = 1e-8
FD_TOL = 1e-4


@dataclass
class Residual:
    name: str
    residual: float
    tol: float
    skipped: bool = False
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.skipped or (np.isfinite(self.residual) and self.residual <= self.tol)


@dataclass
class IdentityReport:
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def __getitem__(self, name: str) -> Residual:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self) -> list:
        return [r.name for r in self.rows]

    def table(self) -> str:
        lines = [f"{'identity':<36} {'residual':>12} {'tol':>9}  status"]
        for r in self.rows:
            status = "skip" if r.skipped else ("pass" if r.passed else "FAIL")
            lines.append(f"{r.name:<36} {r.residual:12.3e} {r.tol:9.1e}  {status}")
        return "\n".join(lines)


def _max(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.abs(a).max()) if a.size else 0.0


def probe_field(n: int, seed: int = 0):
    """A fixed cubic polynomial used as the scalar argument of the Laplacian check."""
    rng = np.random.default_rng(seed)
    c1 = rng.normal(size=n)
    c2 = rng.normal(size=(n, n)) * 0.5
    c3 = rng.normal(size=(n, n, n)) * 0.1

    def fn(x):
        out = 0
        for i in range(n):
            out = out + c1[i] * x[i]
            for j in range(n):
                out = out + c2[i, j] * x[i] * x[j]
                for k in range(j, n):
                    out = out + c3[i, j, k] * x[i] * x[j] * x[k]
        return out

    return fn


def pointwise_residuals(geo: Geometry, cmc_tol: float = 1e-6, seed: int = 0) -> dict:
    """Max residual of every pointwise identity over the (non-characteristic) points of ``geo``."""
    g = geo.group
    n, h = g.n, g.h
    P = len(geo.X)
    nu, nh, w = geo.nu, geo.nu_h, geo.varpi
    J = geo.J
    Jh = J[:, :, :h]
    nh_full = np.zeros((P, n))
    nh_full[:, :h] = nh
    out = {}

    # tangential divergence of nu_H: full divergence minus the normal component
    # of nabla_nu nu_H, against -H_cc - <C(P_V nu) nu_H, P_V nu>
    J_full = np.zeros((P, n, n))
    J_full[:, :h, :] = J
    cov = np.einsum("pj,prj->pr", nu, J_full) + np.einsum("pj,pi,jir->pr", nu, nh_full, g.Gamma)
    div_ts = -geo.H_cc - (cov * nu).sum(-1)
    pv = nu.copy()
    pv[:, :h] = 0.0
    C_pv = np.einsum("pa,aij->pij", pv[:, h:], g.C_alpha)
    out["tangential_divergence"] = _max(div_ts - (-geo.H_cc - np.einsum("pi,pij,pj->p", pv, C_pv, nh_full)))

    out["skew_part_is_half_C_HS"] = _max(np.linalg.norm(geo.A - 0.5 * geo.CHS_var, axis=(-1, -2)))
    out["trace_of_B_squared"] = _max(np.einsum("pij,pji->p", geo.B, geo.B) - (geo.S2 - geo.A2))
    out["norm_split"] = _max(geo.B2 - geo.S2 - geo.A2)

    tot = np.zeros(P)
    for a in range(len(g.second)):
        Ca = g.C_H_alpha[a]
        Y = nh @ Ca.T
        JY = np.einsum("ik,pkj->pij", Ca, Jh)
        tot = tot + w[:, a] * geo.d_hs(Y, JY)
    drift = np.einsum("pij,pj->pi", geo.CH_var, nh)
    out["drift_divergence"] = _max(tot - (2 * geo.A2 + (drift ** 2).sum(-1)))

    # derivative of nu_H along itself, projected to HS, for level-set extensions
    L = geo.nj.h_grad_norm.truncate(2)
    ol = geo.scalar_ops(L)
    lhs = np.einsum("pij,pj->pi", geo.P_HS, np.einsum("pij,pj->pi", Jh, nh))
    out["normal_derivative_of_nu_h"] = _max(lhs - (ol["grad_hs"] / L.v[:, None] - drift))

    if g.is_heisenberg():
        m = h // 2
        out["heisenberg_norm_identity"] = _max(geo.B2 - geo.S2 - (m - 1) / 2 * w[:, 0] ** 2)

    # Laplacian decomposition against div_HS(grad_HS phi) with the Jacobian of grad_HS phi
    phi = Jet(*[s for s in _probe_jet(geo, seed).slots()[:3]])
    ops = geo.scalar_ops(phi)
    gH, hess, dnu = ops["grad_h"], ops["hess"], ops["d_nu"]
    d_dnu = np.einsum("pkj,pk->pj", hess, nh) + np.einsum("pk,pkj->pj", gH, Jh)
    JY = hess - nh[:, :, None] * d_dnu[:, None, :] - dnu[:, None, None] * Jh
    out["laplacian_decomposition"] = _max(ops["delta_hs"] - geo.div_hs(JY))

    hcc = geo.H_cc
    cmc = P > 0 and float(np.ptp(hcc)) <= cmc_tol
    out["_cmc"] = cmc
    if not cmc:
        return out
    bts = geo.b_ts()
    res = [o["l_hs"] + w[:, a] * bts for a, o in enumerate(geo.varpi_ops())]
    out["varpi_jacobi_equation"] = max([_max(r) for r in res], default=0.0)
    rng = np.random.default_rng(seed + 1)
    V = rng.normal(size=w.shape[1])
    fV = w @ V
    lV = sum((geo.varpi_ops()[a]["l_hs"] * V[a] for a in range(len(V))), np.zeros(P))
    out["vertical_jacobi_equation"] = _max(lV + fV * bts)
    if g.is_heisenberg() and _max(hcc) <= cmc_tol:
        out["heisenberg_potential"] = _max(heisenberg_bts_from(geo) - bts)

    # L_HS of <V_H, nu_H> for a constant horizontal V_H
    VH = rng.normal(size=h)
    fH = (geo.nj.nu_h.truncate(2) * VH).sum(-1)
    oH = geo.scalar_ops(fH)
    PHS = geo.P_HS
    VHS = np.einsum("pij,j->pi", PHS, VH)
    CHSV = np.einsum("pij,pjk,pk->pi", PHS, geo.CH_var, VHS)
    ghs = geo.grad_hs_varpi()
    t3 = sum((np.einsum("ij,pj,pi->p", g.C_H_alpha[a], ghs[:, a], VHS) for a in range(len(g.second))),
             np.zeros(P))
    t4 = hcc * np.einsum("pi,pi->p", drift, VHS)
    nab = np.einsum("pij,pj->pi", Jh, nh)
    rhs = (nh @ VH) * geo.B2 + (nab * CHSV).sum(-1) + t3 + t4
    out["horizontal_jacobi_equation"] = _max(-oH["l_hs"] - rhs)
    return out


def _probe_jet(geo: Geometry, seed: int) -> Jet:
    fn = probe_field(geo.group.n, seed)
    return fn(Jet.variables(geo.X, 2))


def verify_identities(group: CarnotGroup, field: ScalarField, X, tol: float | None = None,
                      patch=None, bumps=(), eps_char: float = EPS_CHAR, seed: int = 0,
                      green_tol: float = 1e-5) -> IdentityReport:
    """Residual table of all pointwise identities at X, plus the Green formula on a patch."""
    if tol is None:
        tol = ANALYTIC_TOL if getattr(field, "provenance", "") == "analytic" else FD_TOL
    X = np.atleast_2d(np.asarray(X, dtype=float))
    geo = evaluate(group, field, X, eps_char)
    keep = ~geo.characteristic
    if not keep.all():
        geo = evaluate(group, field, X[keep], eps_char)
    res = pointwise_residuals(geo, seed=seed)
    cmc = res.pop("_cmc")
    report = IdentityReport()
    for name, val in res.items():
        report.rows.append(Residual(name, val, tol))
    if not cmc:
        for name in ("varpi_jacobi_equation", "vertical_jacobi_equation", "horizontal_jacobi_equation"):
            report.rows.append(Residual(name, float("nan"), tol, skipped=True,
                                        note="samples do not have constant H_cc"))
    if patch is not None:
        for k, b in enumerate(bumps):
            lhs, rhs = green_sides(patch, b)
            gap = abs(lhs - rhs) / max(abs(rhs), 1e-300)
            report.rows.append(Residual(f"green_formula[{k}]", gap, green_tol))
    return report


def green_sides(patch, phi) -> tuple:
    """(-integral phi L_HS phi, integral |grad_HS phi|^2) against sigma_H."""
    from .variation import _test_ops

    jet, ops = _test_ops(patch, phi)
    lhs = -patch.integrate(jet.v * ops["l_hs"])
    rhs = patch.integrate((ops["grad_hs"] ** 2).sum(-1))
    return lhs, rhs
