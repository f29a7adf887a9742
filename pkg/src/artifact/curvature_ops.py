"""Horizontal mean curvature, second fundamental form and tangential operators.

Everything is evaluated pointwise from jets of the defining function, on
batches of points.  Conventions, in the adapted basis T = [tau_2 .. tau_h]:

* ``J[i, j] = X_j (nu_H)_i`` is the horizontal Jacobian of the unit
  horizontal normal, extended off the surface through the level sets of f.
* ``B = -T^t J T`` is the matrix with ``<B X, Y> = B_H(X, Y)``, where
  ``B_H(X, Y) = <nabla^H_X Y, nu_H>``.  Its skew part equals
  ``C_HS(varpi) / 2`` with ``C_HS = T^t C_H(varpi) T``.
* ``Hess[i, j] = X_j X_i phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .carnot_algebra import CarnotGroup
from .hypersurface_geometry import (
    EPS_CHAR, CharacteristicPoint, NormalJets, adapted_hs_basis, c_h_of_varpi, c_of_varpi,
    normal_jets,
)
from .jets import Jet, ScalarField, frame_derivative


class NotHeisenberg(ValueError):
    pass


class NotHMinimal(ValueError):
    pass


@dataclass
class HorizontalShape:
    B_H: np.ndarray
    S_H: np.ndarray
    A_H: np.ndarray
    H_cc: float
    B2: float
    S2: float
    A2: float


@dataclass
class StabilityDensity:
    b_ts: float
    terms: dict


def _gr(M):
    return (M ** 2).sum(axis=(-1, -2))


@dataclass
class Geometry:
    """All pointwise quantities of a level set at a batch of points.

    Arrays are NaN at characteristic points (see ``characteristic``).
    """

    group: CarnotGroup
    nj: NormalJets
    X: np.ndarray
    characteristic: np.ndarray
    p_h_norm: np.ndarray
    nu: np.ndarray            # (P, n)
    nu_h: np.ndarray          # (P, h)
    varpi: np.ndarray         # (P, n-h)
    T: np.ndarray             # (P, h, h-1)
    J: np.ndarray             # (P, h, n)   X_j (nu_H)_i
    H_cc: np.ndarray
    B: np.ndarray
    S: np.ndarray
    A: np.ndarray
    C_var: np.ndarray         # (P, n, n)   C(varpi)
    CH_var: np.ndarray        # (P, h, h)   C_H(varpi_{H2})
    CHS_var: np.ndarray       # (P, h-1, h-1)
    Xvarpi: np.ndarray | None = None    # (P, m, n)    X_j varpi_a
    XXvarpi: np.ndarray | None = None   # (P, m, n, n) X_i X_j varpi_a stored as [a, j, i]
    cache: dict = field(default_factory=dict)

    @property
    def B2(self):
        return _gr(self.B)

    @property
    def S2(self):
        return _gr(self.S)

    @property
    def A2(self):
        return _gr(self.A)

    @property
    def P_HS(self):
        """Orthogonal projector of H onto HS, (P, h, h)."""
        return np.eye(self.group.h) - self.nu_h[:, :, None] * self.nu_h[:, None, :]

    def require_noncharacteristic(self):
        if np.any(self.characteristic):
            bad = self.X[np.argmax(self.characteristic)]
            raise CharacteristicPoint(f"characteristic point {bad.tolist()}")
        return self

    # -- scalar operators ---------------------------------------------------
    def derivatives(self, phi: Jet):
        """(X phi, X X phi) for a scalar jet of order >= 2 at the same points."""
        phi.require(2)
        A = self.nj.A.truncate(1)
        d1 = frame_derivative(phi.truncate(2), A)
        d2 = frame_derivative(d1, A.truncate(0))
        return d1, d2

    def scalar_ops(self, phi: Jet) -> dict:
        """grad_HS, Delta_HS (via the horizontal Hessian), L_HS of a scalar jet."""
        h = self.group.h
        d1, d2 = self.derivatives(phi)
        g = d1.v[:, :h]
        hess = d2.v[:, :h, :h]  # [i, j] = X_j X_i phi
        return self._scalar_ops_from(g, hess)

    def _scalar_ops_from(self, g, hess):
        nh = self.nu_h
        dnu = (g * nh).sum(-1)
        g_hs = g - dnu[:, None] * nh
        lap_h = np.trace(hess, axis1=-2, axis2=-1)
        nn = np.einsum("pi,pij,pj->p", nh, hess, nh)
        delta_hs = lap_h + self.H_cc * dnu - nn
        drift = np.einsum("pij,pj->pi", self.CH_var, nh)
        l_hs = delta_hs + (drift * g_hs).sum(-1)
        return {"grad_h": g, "grad_hs": g_hs, "d_nu": dnu, "hess": hess, "delta_h": lap_h,
                "delta_hs": delta_hs, "l_hs": l_hs}

    def div_hs(self, JX):
        """div_HS of a horizontal field with horizontal Jacobian JX[i, j] = X_j Y_i, (P, h, h)."""
        return np.einsum("pik,pij,pjk->p", self.T, JX, self.T)

    def d_hs(self, Y, JX):
        drift = np.einsum("pij,pj->pi", self.CH_var, self.nu_h)
        return self.div_hs(JX) + (drift * Y).sum(-1)

    def varpi_ops(self) -> list:
        """scalar_ops of each varpi_alpha."""
        if "varpi_ops" not in self.cache:
            h = self.group.h
            self.cache["varpi_ops"] = [
                self._scalar_ops_from(self.Xvarpi[:, a, :h], self.XXvarpi[:, a, :h, :h])
                for a in range(self.varpi.shape[-1])]
        return self.cache["varpi_ops"]

    def grad_hs_varpi(self) -> np.ndarray:
        """(P, m, h) projections of grad_H varpi_alpha onto HS."""
        ops = self.varpi_ops()
        if not ops:
            return np.zeros((len(self.X), 0, self.group.h))
        return np.stack([o["grad_hs"] for o in ops], axis=1)

    def stability_terms(self) -> dict:
        g = self.group
        n, h = g.n, g.h
        P = len(self.X)
        tau1 = np.zeros((P, n))
        tau1[:, :h] = self.nu_h
        ghs = np.zeros((P, n - h, n))
        ghs[:, :, :h] = self.grad_hs_varpi()
        tau_ts = np.eye(n)[h:][None] - self.varpi[:, :, None] * tau1[:, None, :]
        Ctau_ts = np.einsum("pij,paj->pai", self.C_var, tau_ts)
        Ca_tau1 = np.einsum("aij,pj->pai", g.C_alpha, tau1)
        cross = ((2 * ghs - Ctau_ts) * Ca_tau1).sum(axis=(-1, -2))
        return {"S2": self.S2, "A2": self.A2, "cross": cross}

    def b_ts(self) -> np.ndarray:
        t = self.stability_terms()
        return t["S2"] + t["A2"] + t["cross"]


def evaluate(group: CarnotGroup, field: ScalarField, X, eps_char: float = EPS_CHAR,
             with_varpi_derivatives: bool = True) -> Geometry:
    """Run the full pointwise pipeline at the points X (shape (P, n))."""
    nj = normal_jets(group, field, X, eps_char, order=3 if with_varpi_derivatives else 2)
    h, n = group.h, group.n
    P = len(nj.X)
    char = nj.characteristic
    A1 = nj.A.truncate(1)
    Jj = frame_derivative(nj.nu_h.truncate(1), A1.truncate(0))
    nu_h = nj.nu_h.v.copy()
    varpi = nj.varpi.v.copy()
    J = Jj.v
    T = adapted_hs_basis(nu_h)
    Jh = J[:, :, :h]
    B = -np.einsum("pik,pij,pjl->pkl", T, Jh, T)
    S = 0.5 * (B + np.swapaxes(B, -1, -2))
    Askew = 0.5 * (B - np.swapaxes(B, -1, -2))
    H_cc = -np.trace(Jh, axis1=-2, axis2=-1)
    C_var = c_of_varpi(group, varpi)
    CH_var = c_h_of_varpi(group, varpi) if len(group.second) else np.zeros((P, h, h))
    CHS_var = np.einsum("pik,pij,pjl->pkl", T, CH_var, T)
    Xv = XXv = None
    if with_varpi_derivatives and n > h:
        d1 = frame_derivative(nj.varpi, nj.A.truncate(2))
        d2 = frame_derivative(d1, A1)
        Xv, XXv = d1.v, d2.v
    elif with_varpi_derivatives:
        Xv, XXv = np.zeros((P, 0, n)), np.zeros((P, 0, n, n))
    geo = Geometry(group, nj, nj.X, char, nj.p_h_norm, nj.nu, nu_h, varpi, T, J, H_cc, B, S,
                   Askew, C_var, CH_var, CHS_var, Xv, XXv)
    if np.any(char):
        for name in ("nu_h", "varpi", "T", "J", "H_cc", "B", "S", "A", "C_var", "CH_var",
                     "CHS_var", "Xvarpi", "XXvarpi"):
            arr = getattr(geo, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr[char] = np.nan
                setattr(geo, name, arr)
    return geo


# -- single-point API ------------------------------------------------------------

def _one(group, field, x, eps_char=EPS_CHAR, varpi_derivs=False) -> Geometry:
    geo = evaluate(group, field, np.asarray(x, dtype=float)[None, :], eps_char, varpi_derivs)
    return geo.require_noncharacteristic()


def mean_curvature_h(group: CarnotGroup, field: ScalarField, x, eps_char: float = EPS_CHAR) -> float:
    return float(_one(group, field, x, eps_char).H_cc[0])


def second_fundamental_form(group: CarnotGroup, field: ScalarField, x,
                            eps_char: float = EPS_CHAR) -> HorizontalShape:
    geo = _one(group, field, x, eps_char)
    return HorizontalShape(geo.B[0], geo.S[0], geo.A[0], float(geo.H_cc[0]), float(geo.B2[0]),
                           float(geo.S2[0]), float(geo.A2[0]))


def check_torsion_identity(shape: HorizontalShape, varpi_matrices) -> float:
    return float(np.linalg.norm(shape.A_H - 0.5 * varpi_matrices.C_HS_of_varpi2))


def _phi_jet(phi, X, order=2):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(phi, ScalarField):
        return phi.jet(X, order)
    return phi


def grad_hs(group: CarnotGroup, field: ScalarField, phi, x, eps_char: float = EPS_CHAR) -> np.ndarray:
    geo = _one(group, field, x, eps_char)
    return geo.scalar_ops(_phi_jet(phi, geo.X))["grad_hs"][0]


def delta_hs(group: CarnotGroup, field: ScalarField, phi, x, eps_char: float = EPS_CHAR) -> float:
    geo = _one(group, field, x, eps_char)
    return float(geo.scalar_ops(_phi_jet(phi, geo.X))["delta_hs"][0])


def l_hs(group: CarnotGroup, field: ScalarField, phi, x, eps_char: float = EPS_CHAR) -> float:
    geo = _one(group, field, x, eps_char)
    return float(geo.scalar_ops(_phi_jet(phi, geo.X))["l_hs"][0])


def _vector_field_data(geo: Geometry, Y):
    """Values and horizontal Jacobian of a horizontal field given as a list of h jets."""
    h = geo.group.h
    A1 = geo.nj.A.truncate(1)
    vals, jac = [], []
    for comp in Y:
        c = _phi_jet(comp, geo.X, 1).truncate(1)
        vals.append(c.v)
        jac.append(frame_derivative(c, A1.truncate(0)).v[:, :h])
    return np.stack(vals, -1), np.stack(jac, 1)


def div_hs(group: CarnotGroup, field: ScalarField, Y, x, eps_char: float = EPS_CHAR) -> float:
    """div_HS of a horizontal field ``Y`` (h components, fields or jets), projected onto HS first."""
    geo = _one(group, field, x, eps_char)
    _, JY = _vector_field_data(geo, Y)
    return float(geo.div_hs(JY)[0])


def d_hs(group: CarnotGroup, field: ScalarField, Y, x, eps_char: float = EPS_CHAR) -> float:
    geo = _one(group, field, x, eps_char)
    vals, JY = _vector_field_data(geo, Y)
    return float(geo.d_hs(vals, JY)[0])


def stability_density(group: CarnotGroup, field: ScalarField, x,
                      eps_char: float = EPS_CHAR) -> StabilityDensity:
    geo = _one(group, field, x, eps_char, varpi_derivs=True)
    t = geo.stability_terms()
    terms = {k: float(v[0]) for k, v in t.items()}
    return StabilityDensity(terms["S2"] + terms["A2"] + terms["cross"], terms)


def heisenberg_bts_from(geo: Geometry) -> np.ndarray:
    g = geo.group
    m = g.h // 2
    nu_circ = -np.einsum("ij,pj->pi", g.C_H_alpha[0], geo.nu_h)
    dvarpi = (geo.Xvarpi[:, 0, :g.h] * nu_circ).sum(-1)
    w = geo.varpi[:, 0]
    return geo.S2 - (2 * dvarpi - (m + 1) / 2 * w ** 2)


def heisenberg_bts(group: CarnotGroup, field: ScalarField, x, eps_char: float = EPS_CHAR,
                   tol: float = 1e-8) -> float:
    if not group.is_heisenberg():
        raise NotHeisenberg("the specialized potential needs a Heisenberg group")
    geo = _one(group, field, x, eps_char, varpi_derivs=True)
    if abs(geo.H_cc[0]) > tol:
        raise NotHMinimal(f"H_cc = {geo.H_cc[0]:.3e} at {geo.X[0].tolist()}")
    return float(heisenberg_bts_from(geo)[0])


def principal_curvatures(group: CarnotGroup, field: ScalarField, x, eps_char: float = EPS_CHAR):
    """Eigenvalues of S_H (diagnostic only, ascending)."""
    return np.linalg.eigvalsh(second_fundamental_form(group, field, x, eps_char).S_H)
