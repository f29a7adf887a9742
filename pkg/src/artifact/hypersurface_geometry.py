"""Normals, horizontal normals, the varpi vector and adapted frames of level sets.

Vectors are expressed in the left-invariant frame X_1..X_n unless noted.  The
unit normal is oriented as +grad f / |grad f|, so flipping the sign of f
flips the signs of nu_H, varpi and H_cc.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carnot_algebra import CarnotGroup
from .jets import Jet, ScalarField, frame_derivative, frame_jet

EPS_CHAR = 1e-8
GRAD_FLOOR = 1e-12


class DegenerateDefiningFunction(ValueError):
    pass


class CharacteristicPoint(ValueError):
    pass


def adapted_hs_basis(nu_h) -> np.ndarray:
    """Orthonormal basis tau_2..tau_h of the complement of nu_h in H.

    Gram-Schmidt on the canonical basis with the vector most aligned with nu_h
    dropped (ties go to the smallest index).  Each vector is signed so that its
    first nonzero entry is positive.  Works on stacks ``(..., h)`` and returns
    ``(..., h, h-1)`` with the basis vectors as columns.
    """
    nu = np.asarray(nu_h, dtype=float)
    h = nu.shape[-1]
    B = nu.shape[:-1]
    drop = np.argmax(np.abs(nu), axis=-1)
    basis = [nu]
    cols = []
    for slot in range(h - 1):
        # slot-th canonical index that is not dropped
        idx = slot + (slot >= drop)
        e = np.zeros(B + (h,))
        np.put_along_axis(e, idx[..., None], 1.0, axis=-1)
        v = e
        for _ in range(2):  # second pass for orthogonality to rounding
            for b in basis:
                v = v - (v * b).sum(-1, keepdims=True) * b
        v = v / np.linalg.norm(v, axis=-1, keepdims=True)
        first = np.argmax(np.abs(v) > 1e-12, axis=-1)
        sgn = np.sign(np.take_along_axis(v, first[..., None], axis=-1))
        v = v * np.where(sgn == 0, 1.0, sgn)
        basis.append(v)
        cols.append(v)
    if not cols:
        return np.zeros(B + (h, 0))
    return np.stack(cols, axis=-1)


@dataclass
class NormalJets:
    """Normal apparatus at a batch of points, with jets of nu_H and varpi."""

    group: CarnotGroup
    X: np.ndarray           # (P, n) points
    A: Jet                  # frame matrix jet, (P, n, n)
    f: Jet                  # defining function jet
    D: Jet                  # X_i f, (P, n)
    grad_norm: np.ndarray   # |grad f|
    p_h_norm: np.ndarray    # |P_H nu|
    characteristic: np.ndarray
    nu_h: Jet               # (P, h); arbitrary at characteristic points
    varpi: Jet              # (P, n - h)
    h_grad_norm: Jet        # |grad_H f|

    @property
    def nu(self) -> np.ndarray:
        return self.D.v / self.grad_norm[:, None]


def normal_jets(group: CarnotGroup, field: ScalarField, X, eps_char: float = EPS_CHAR,
                order: int = 3) -> NormalJets:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[-1] != group.n:
        raise ValueError(f"points must have {group.n} coordinates")
    F = field.jet(X, order)
    A = frame_jet(group, X, max(order - 1, 0))
    D = frame_derivative(F, A)
    gnorm = np.linalg.norm(D.v, axis=-1)
    if np.any(gnorm < GRAD_FLOOR):
        bad = X[np.argmin(gnorm)]
        raise DegenerateDefiningFunction(f"|grad f| < {GRAD_FLOOR} at {bad.tolist()}")
    h = group.h
    DH = D.take(np.arange(h), -1)
    s2 = (DH * DH).sum(-1)
    pnorm = np.sqrt(s2.v) / gnorm
    char = pnorm < eps_char
    safe = s2.where(~char, Jet.constant(np.ones(s2.shape), group.n, s2.order))
    hnorm = safe.sqrt()
    inv = hnorm.reciprocal().expand(-1)
    nu_h = DH * inv
    varpi = D.take(np.arange(h, group.n), -1) * inv
    return NormalJets(group, X, A, F, D, gnorm, pnorm, char, nu_h, varpi, hnorm)


@dataclass(frozen=True)
class SurfaceFrame:
    x: np.ndarray
    nu: np.ndarray
    p_h_norm: float
    nu_h: np.ndarray | None
    varpi: np.ndarray | None
    hs_basis: np.ndarray | None   # (h, h-1), columns tau_2..tau_h
    tau_ts: np.ndarray | None     # (n-h, n), rows tau_alpha - varpi_alpha tau_1
    characteristic: bool


def _frame_at(nj: NormalJets, p: int) -> SurfaceFrame:
    g = nj.group
    x = nj.X[p].copy()
    nu = nj.nu[p].copy()
    if nj.characteristic[p]:
        return SurfaceFrame(x, nu, float(nj.p_h_norm[p]), None, None, None, None, True)
    nu_h = nj.nu_h.v[p].copy()
    varpi = nj.varpi.v[p].copy()
    T = adapted_hs_basis(nu_h)
    tau1 = np.concatenate([nu_h, np.zeros(g.n - g.h)])
    tau_ts = np.eye(g.n)[g.h:] - varpi[:, None] * tau1[None, :]
    return SurfaceFrame(x, nu, float(nj.p_h_norm[p]), nu_h, varpi, T, tau_ts, False)


def surface_frames(group: CarnotGroup, field: ScalarField, X, eps_char: float = EPS_CHAR) -> list:
    nj = normal_jets(group, field, X, eps_char, order=1)
    return [_frame_at(nj, p) for p in range(len(nj.X))]


def surface_frame(group: CarnotGroup, field: ScalarField, x, eps_char: float = EPS_CHAR) -> SurfaceFrame:
    return surface_frames(group, field, np.asarray(x, dtype=float)[None, :], eps_char)[0]


@dataclass(frozen=True)
class VarpiMatrices:
    C_of_varpi: np.ndarray       # (n, n)
    C_H_of_varpi2: np.ndarray    # (h, h)
    C_HS_of_varpi2: np.ndarray   # (h-1, h-1) in the adapted basis


def c_of_varpi(group: CarnotGroup, varpi) -> np.ndarray:
    return np.einsum("...a,aij->...ij", varpi, group.C_alpha)


def c_h_of_varpi(group: CarnotGroup, varpi) -> np.ndarray:
    m = len(group.second)
    return np.einsum("...a,aij->...ij", np.asarray(varpi)[..., :m], group.C_H_alpha)


def varpi_matrices(group: CarnotGroup, frame: SurfaceFrame) -> VarpiMatrices:
    if frame.characteristic:
        raise CharacteristicPoint(f"characteristic point {frame.x.tolist()}")
    C = c_of_varpi(group, frame.varpi)
    CH = c_h_of_varpi(group, frame.varpi)
    CHS = frame.hs_basis.T @ CH @ frame.hs_basis
    for M in (C, CH, CHS):
        assert np.allclose(M, -M.T, atol=1e-12)
    return VarpiMatrices(C, CH, CHS)


def ndf_normalize(group: CarnotGroup, field: ScalarField, x, eps_char: float = EPS_CHAR) -> Jet:
    """Jet (order 2) of f / |grad_H f| at the points x."""
    nj = normal_jets(group, field, x, eps_char)
    if np.any(nj.characteristic):
        raise CharacteristicPoint("normalization undefined at characteristic points")
    return nj.f.truncate(2) / nj.h_grad_norm
