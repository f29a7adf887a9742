"""Stratified nilpotent Lie algebras and the left-invariant geometry of their groups.

Indices are 0-based in the Python API.  Violation reports and the JSON group
format use 1-based indices, matching the usual mathematical notation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy
from scipy.special import bernoulli

FLOAT_TOL = 1e-12


class StructureError(ValueError):
    """Raised when structure constants fail one of the Carnot axioms."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class SkewSymmetryViolation(StructureError):
    pass


class JacobiViolation(StructureError):
    pass


class GradingViolation(StructureError):
    pass


class GenerationFailure(StructureError):
    pass


class NonPositiveScale(ValueError):
    pass


_ERRORS = {
    "SkewSymmetryViolation": SkewSymmetryViolation,
    "JacobiViolation": JacobiViolation,
    "GradingViolation": GradingViolation,
    "GenerationFailure": GenerationFailure,
}


@dataclass(frozen=True)
class Violation:
    kind: str
    indices: tuple  # 1-based
    residual: float = 0.0

    def __str__(self):
        idx = ",".join(str(i) for i in self.indices)
        return f"{self.kind} at ({idx})"


@dataclass
class StructureReport:
    violations: list = field(default_factory=list)
    group: "CarnotGroup | None" = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.kind for v in self.violations}


def _is_exact(values) -> bool:
    return all(isinstance(v, (int, Fraction, sympy.Rational)) and not isinstance(v, bool)
               for v in values)


def _as_tensor(structure, n):
    arr = np.asarray(structure, dtype=object)
    if arr.shape != (n, n, n):
        raise ValueError(f"structure tensor must have shape {(n, n, n)}, got {arr.shape}")
    flat = list(arr.ravel())
    if _is_exact(flat):
        return np.array([Fraction(v) for v in flat], dtype=object).reshape(n, n, n), True
    return np.asarray(structure, dtype=float), False


def stratum_of(strata_dims: Sequence[int]) -> np.ndarray:
    """Stratum label (1..k) of each basis index."""
    return np.repeat(np.arange(1, len(strata_dims) + 1), strata_dims)


def check_structure(strata_dims: Sequence[int], structure) -> list:
    """List every violated axiom; an empty list means the data defines a Carnot algebra."""
    dims = [int(h) for h in strata_dims]
    if not dims or any(h <= 0 for h in dims):
        raise ValueError("strata dimensions must be positive")
    n = sum(dims)
    C, exact = _as_tensor(structure, n)
    zero = (lambda v: v == 0) if exact else (lambda v: abs(v) <= FLOAT_TOL)
    level = stratum_of(dims)
    k = len(dims)
    out = []

    for i in range(n):
        for j in range(i, n):
            for r in range(n):
                s = C[i, j, r] + C[j, i, r]
                if not zero(s):
                    out.append(Violation("SkewSymmetryViolation", (i + 1, j + 1, r + 1), float(s)))

    for i in range(n):
        for j in range(n):
            for m in range(n):
                if zero(C[i, j, m]):
                    continue
                target = level[i] + level[j]
                if target > k or level[m] != target:
                    out.append(Violation("GradingViolation", (i + 1, j + 1, m + 1), float(C[i, j, m])))

    # Jacobi: sum over cyclic permutations of [[X_i,X_j],X_l], for i < j < l
    if exact:
        nz = [[[(m, C[i, j, m]) for m in range(n) if C[i, j, m] != 0] for j in range(n)]
              for i in range(n)]

        def cyclic(i, j, l):
            acc = [Fraction(0)] * n
            for a, b, c in ((i, j, l), (j, l, i), (l, i, j)):
                for m, x in nz[a][b]:
                    for r, y in nz[m][c]:
                        acc[r] += x * y
            return acc
    else:
        jac = (np.einsum("ijm,mlr->ijlr", C, C) + np.einsum("jlm,mir->ijlr", C, C)
               + np.einsum("lim,mjr->ijlr", C, C))

        def cyclic(i, j, l):
            return jac[i, j, l]
    for i in range(n):
        for j in range(i + 1, n):
            for l in range(j + 1, n):
                vals = cyclic(i, j, l)
                for r in range(n):
                    if not zero(vals[r]):
                        out.append(Violation("JacobiViolation", (i + 1, j + 1, l + 1, r + 1),
                                             float(vals[r])))

    # generation: [H_1, H_{s-1}] spans H_s
    offsets = np.concatenate([[0], np.cumsum(dims)])
    for s in range(2, k + 1):
        lo, hi = offsets[s - 1], offsets[s]
        rows = []
        for i in range(offsets[0], offsets[1]):
            for j in range(offsets[s - 2], offsets[s - 1]):
                rows.append(list(C[i, j, lo:hi]))
        if exact:
            rank = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row]
                                 for row in rows]).rank() if rows else 0
        else:
            rank = np.linalg.matrix_rank(np.array(rows, dtype=float), tol=1e-10) if rows else 0
        if rank < dims[s - 1]:
            out.append(Violation("GenerationFailure", (s,), float(dims[s - 1] - rank)))
    return out


def validate_structure(strata_dims: Sequence[int], structure) -> StructureReport:
    """Check the axioms and build the group when they all hold."""
    violations = check_structure(strata_dims, structure)
    group = None if violations else CarnotGroup._unchecked(strata_dims, structure)
    return StructureReport(violations, group)


class CarnotGroup:
    """An immutable Carnot group given by stratum dimensions and structure constants.

    ``structure[i, j, r]`` is ``<[X_i, X_j], X_r>`` with the basis ordered stratum by stratum.
    """

    def __init__(self, strata_dims: Sequence[int], structure):
        violations = check_structure(strata_dims, structure)
        if violations:
            raise _ERRORS[violations[0].kind](violations)
        self._setup(strata_dims, structure)

    @classmethod
    def _unchecked(cls, strata_dims, structure):
        obj = cls.__new__(cls)
        obj._setup(strata_dims, structure)
        return obj

    def _setup(self, strata_dims, structure):
        self.strata_dims = tuple(int(h) for h in strata_dims)
        self.n = sum(self.strata_dims)
        self.k = len(self.strata_dims)
        self.h = self.strata_dims[0]
        C = np.array(np.asarray(structure, dtype=object).astype(float), dtype=float)
        C.setflags(write=False)
        self.structure = C
        self.stratum = stratum_of(self.strata_dims)
        self.stratum.setflags(write=False)
        self.Q = int(sum((i + 1) * h for i, h in enumerate(self.strata_dims)))
        # C^alpha matrices for every vertical index; C_H^alpha for the second stratum
        self.vertical = np.arange(self.h, self.n)
        self.second = np.arange(self.h, self.h + (self.strata_dims[1] if self.k > 1 else 0))
        C_alpha = np.moveaxis(C, 2, 0)[self.h:].copy()
        C_alpha.setflags(write=False)
        self.C_alpha = C_alpha
        C_H_alpha = C_alpha[: len(self.second), : self.h, : self.h].copy()
        C_H_alpha.setflags(write=False)
        self.C_H_alpha = C_H_alpha
        G = connection_tensor(C)
        G.setflags(write=False)
        self.Gamma = G
        self._frame_coeffs = [float(b) for b in _frame_series(self.k)]

    def __repr__(self):
        return f"CarnotGroup(strata_dims={self.strata_dims})"

    def is_heisenberg(self) -> bool:
        if self.strata_dims[1:] != (1,) or self.h % 2:
            return False
        m = self.h // 2
        return np.array_equal(self.C_H_alpha[0], heisenberg_matrix(m))

    def ad(self, x) -> np.ndarray:
        """Matrix of ad_x acting on coordinate vectors: (ad_x)[r, i] = sum_j x_j C[j, i, r]."""
        return np.einsum("...j,jir->...ri", np.asarray(x, dtype=float), self.structure)

    def frame_matrix(self, x) -> np.ndarray:
        """Columns are the coordinate components of X_1..X_n at x (values only)."""
        x = np.asarray(x, dtype=float)
        ad = self.ad(x)
        A = np.broadcast_to(np.eye(self.n), ad.shape).copy()
        P = A.copy()
        for b in self._frame_coeffs[1:]:
            P = P @ ad
            if b:
                A = A + b * P
        return A

    def to_json(self) -> str:
        entries = []
        for i in range(self.n):
            for j in range(i + 1, self.n):
                for r in range(self.n):
                    c = self.structure[i, j, r]
                    if c:
                        entries.append({"i": i + 1, "j": j + 1, "r": r + 1,
                                        "c": int(c) if float(c).is_integer() else float(c)})
        return json.dumps({"strata": list(self.strata_dims), "brackets": entries})


def _frame_series(k: int):
    """Coefficients of z/(1 - exp(-z)) up to z^(k-1)."""
    B = bernoulli(max(k - 1, 1))
    coeffs = []
    for m in range(k):
        b = B[m] / np.prod(np.arange(1, m + 1), dtype=float) if m else 1.0
        coeffs.append(abs(b) if m == 1 else b)
    return coeffs


def connection_tensor(C) -> np.ndarray:
    """Gamma[i, j, r] = <nabla_{X_i} X_j, X_r> for the left-invariant metric."""
    C = np.asarray(C, dtype=float)
    return 0.5 * (C - np.transpose(C, (2, 0, 1)) + np.transpose(C, (1, 2, 0)))


def connection_coefficients(group: CarnotGroup) -> np.ndarray:
    return group.Gamma


def curvature_tensor(group: CarnotGroup) -> np.ndarray:
    """R[i, j, h, k] = <R(X_i, X_j) X_h, X_k> with R(X,Y)Z = nabla_Y nabla_X Z - nabla_X nabla_Y Z - nabla_[Y,X] Z."""
    G, C = group.Gamma, group.structure
    return (np.einsum("ihm,jmk->ijhk", G, G) - np.einsum("jhm,imk->ijhk", G, G)
            - np.einsum("jim,mhk->ijhk", C, G))


def riemann_curvature(group: CarnotGroup, i: int, j: int, h: int, k: int) -> float:
    return float(curvature_tensor(group)[i, j, h, k])


def dilation(group: CarnotGroup, t: float, x) -> np.ndarray:
    if not t > 0:
        raise NonPositiveScale(f"dilation factor must be positive, got {t}")
    return np.asarray(x, dtype=float) * float(t) ** group.stratum


def left_invariant_frame(group: CarnotGroup, x) -> np.ndarray:
    return group.frame_matrix(x)


def heisenberg_matrix(m: int) -> np.ndarray:
    """Block matrix with [[0, 1], [-1, 0]] on the diagonal (coordinates x1, y1, x2, y2, ...)."""
    J = np.zeros((2 * m, 2 * m))
    for i in range(m):
        J[2 * i, 2 * i + 1] = 1.0
        J[2 * i + 1, 2 * i] = -1.0
    return J


def builtin_heisenberg(m: int) -> CarnotGroup:
    if m < 1:
        raise ValueError("Heisenberg index must be at least 1")
    n = 2 * m + 1
    C = [[[0] * n for _ in range(n)] for _ in range(n)]
    for i in range(m):
        C[2 * i][2 * i + 1][n - 1] = 1
        C[2 * i + 1][2 * i][n - 1] = -1
    return CarnotGroup((2 * m, 1), C)


def builtin_abelian(n: int) -> CarnotGroup:
    return CarnotGroup((n,), [[[0] * n for _ in range(n)] for _ in range(n)])


def builtin_engel() -> CarnotGroup:
    """Step-3 group with [X1, X2] = X3 and [X1, X3] = X4."""
    C = [[[0] * 4 for _ in range(4)] for _ in range(4)]
    C[0][1][2], C[1][0][2] = 1, -1
    C[0][2][3], C[2][0][3] = 1, -1
    return CarnotGroup((2, 1, 1), C)


def tensor_from_json(data) -> tuple:
    """Parse {"strata": [...], "brackets": [{"i","j","r","c"}, ...]} into (dims, dense tensor)."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    dims = [int(h) for h in data["strata"]]
    n = sum(dims)
    C = [[[0] * n for _ in range(n)] for _ in range(n)]
    given = set()
    for e in data.get("brackets", []):
        i, j, r = int(e["i"]) - 1, int(e["j"]) - 1, int(e["r"]) - 1
        if not (0 <= i < n and 0 <= j < n and 0 <= r < n):
            raise ValueError(f"bracket index out of range: {e}")
        c = e["c"]
        c = Fraction(c) if isinstance(c, int) or (isinstance(c, str) and "/" in c) else c
        if isinstance(c, str):
            c = float(c)
        C[i][j][r] = c
        given.add((i, j, r))
        if (j, i, r) not in given:
            C[j][i][r] = -c
    return dims, C


def group_from_json(data) -> CarnotGroup:
    dims, C = tensor_from_json(data)
    return CarnotGroup(dims, C)
