"""Truncated Taylor jets (order <= 3) over a batch of points, and frame derivatives.

A :class:`Jet` stores a value array of batch shape ``B`` together with the
coordinate partials ``d1`` (``B + (n,)``), ``d2`` (``B + (n, n)``) and ``d3``
(``B + (n, n, n)``).  Slots above ``order`` are ``None``; they are never
silently zero.  Arithmetic follows the Leibniz and chain rules, so any field
written with ``+ - * /``, powers and :func:`sqrt` gets exact derivatives.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class InsufficientOrder(ValueError):
    pass


class NonFiniteSample(ValueError):
    pass


def _sym3(a, b):
    """a_ij b_k + a_ik b_j + a_jk b_i for trailing axes."""
    return (a[..., :, :, None] * b[..., None, None, :]
            + a[..., :, None, :] * b[..., None, :, None]
            + a[..., None, :, :] * b[..., :, None, None])


class Jet:
    __array_priority__ = 100

    def __init__(self, v, d1=None, d2=None, d3=None):
        self.v = np.asarray(v, dtype=float)
        self.d1 = None if d1 is None else np.asarray(d1, dtype=float)
        self.d2 = None if d2 is None else np.asarray(d2, dtype=float) if d1 is not None else None
        self.d3 = None if (d3 is None or self.d2 is None) else np.asarray(d3, dtype=float)

    # -- bookkeeping ---------------------------------------------------------
    @property
    def order(self) -> int:
        return 0 if self.d1 is None else 1 if self.d2 is None else 2 if self.d3 is None else 3

    @property
    def n(self) -> int:
        if self.d1 is None:
            raise InsufficientOrder("order-0 jet has no variable count")
        return self.d1.shape[-1]

    @property
    def shape(self):
        return self.v.shape

    @property
    def ndim(self):
        return self.v.ndim

    def slots(self):
        return [s for s in (self.v, self.d1, self.d2, self.d3) if s is not None]

    def _map(self, fn):
        """Apply a batch-axis operation to every slot; ``fn(arr, extra)`` gets the trailing rank."""
        out = [fn(s, m) for m, s in enumerate(self.slots())]
        return Jet(*out)

    def truncate(self, order: int) -> "Jet":
        s = self.slots()[: order + 1]
        return Jet(*s)

    def require(self, order: int) -> "Jet":
        if self.order < order:
            raise InsufficientOrder(f"need order {order}, jet has order {self.order}")
        return self

    @staticmethod
    def constant(value, n: int, order: int = 3) -> "Jet":
        v = np.asarray(value, dtype=float)
        slots = [v] + [np.zeros(v.shape + (n,) * m) for m in range(1, order + 1)]
        return Jet(*slots)

    @staticmethod
    def variables(X, order: int = 3) -> list:
        """Coordinate jets x_0..x_{n-1} at points ``X`` of shape ``(..., n)``."""
        X = np.asarray(X, dtype=float)
        n = X.shape[-1]
        B = X.shape[:-1]
        out = []
        for i in range(n):
            slots = [X[..., i]]
            if order >= 1:
                d1 = np.zeros(B + (n,))
                d1[..., i] = 1.0
                slots.append(d1)
            for m in range(2, order + 1):
                slots.append(np.zeros(B + (n,) * m))
            out.append(Jet(*slots))
        return out

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            raise IndexError("Ellipsis indexing is ambiguous on jets; use take()")
        return self._map(lambda s, m: s[idx])

    def take(self, indices, axis: int = -1) -> "Jet":
        ax = axis % self.ndim
        return self._map(lambda s, m: np.take(s, indices, axis=ax))

    def sum(self, axis: int = -1) -> "Jet":
        ax = axis % self.ndim
        return self._map(lambda s, m: s.sum(axis=ax))

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self._map(lambda s, m: s.reshape(tuple(shape) + s.shape[s.ndim - m:]))

    def expand(self, axis: int) -> "Jet":
        ax = axis % (self.ndim + 1)
        return self._map(lambda s, m: np.expand_dims(s, ax))

    def broadcast_to(self, shape) -> "Jet":
        return self._map(lambda s, m: np.broadcast_to(s, tuple(shape) + s.shape[s.ndim - m:]))

    def where(self, mask, other: "Jet") -> "Jet":
        """Take ``self`` where mask is true, else ``other`` (batch-wise)."""
        order = min(self.order, other.order)
        shape = np.broadcast_shapes(self.shape, other.shape, np.shape(mask))
        a = self.truncate(order).broadcast_to(shape)
        b = other.truncate(order).broadcast_to(shape)
        mk = np.broadcast_to(mask, shape)
        return Jet(*[np.where(mk.reshape(shape + (1,) * m), x, y)
                     for m, (x, y) in enumerate(zip(a.slots(), b.slots()))])

    def grad(self) -> "Jet":
        """Jet of the coordinate gradient; the new batch axis is last."""
        self.require(1)
        return Jet(*self.slots()[1:])

    # -- arithmetic ----------------------------------------------------------
    def _binary(self, other, op):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            if op == "add":
                return self._map(lambda s, m: s + c if m == 0 else s + np.zeros(c.shape + (1,) * m))
            if op == "mul":
                return self._map(lambda s, m: s * c.reshape(c.shape + (1,) * m))
        a, b = self, other
        order = min(a.order, b.order)
        shape = np.broadcast_shapes(a.shape, b.shape)
        a = a.truncate(order).broadcast_to(shape)
        b = b.truncate(order).broadcast_to(shape)
        if op == "add":
            return Jet(*[x + y for x, y in zip(a.slots(), b.slots())])
        f, g = a, b
        E = lambda arr, m: arr.reshape(arr.shape + (1,) * m)
        out = [f.v * g.v]
        if order >= 1:
            out.append(f.d1 * E(g.v, 1) + E(f.v, 1) * g.d1)
        if order >= 2:
            out.append(f.d2 * E(g.v, 2) + E(f.v, 2) * g.d2
                       + f.d1[..., :, None] * g.d1[..., None, :]
                       + g.d1[..., :, None] * f.d1[..., None, :])
        if order >= 3:
            out.append(f.d3 * E(g.v, 3) + E(f.v, 3) * g.d3
                       + _sym3(f.d2, g.d1) + _sym3(g.d2, f.d1))
        return Jet(*out)

    def __add__(self, o):
        return self._binary(o, "add")

    __radd__ = __add__

    def __neg__(self):
        return self._map(lambda s, m: -s)

    def __sub__(self, o):
        return self._binary(-o, "add")

    def __rsub__(self, o):
        return (-self)._binary(o, "add")

    def __mul__(self, o):
        return self._binary(o, "mul")

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Jet):
            return self * o.reciprocal()
        return self * (1.0 / np.asarray(o, dtype=float))

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            if p == 0:
                return Jet.constant(np.ones(self.shape), self.n if self.order else 0, self.order)
            out = self
            for _ in range(p - 1):
                out = out * self
            return out
        p = float(p)
        v = self.v
        return self.compose(v ** p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2),
                            p * (p - 1) * (p - 2) * v ** (p - 3))

    def compose(self, u0, u1, u2, u3) -> "Jet":
        """Jet of u(self) given u and its first three derivatives at self.v."""
        f = self
        E = lambda arr, m: np.asarray(arr).reshape(np.shape(arr) + (1,) * m)
        out = [np.asarray(u0, dtype=float)]
        if f.order >= 1:
            out.append(E(u1, 1) * f.d1)
        if f.order >= 2:
            out.append(E(u2, 2) * f.d1[..., :, None] * f.d1[..., None, :] + E(u1, 2) * f.d2)
        if f.order >= 3:
            d1 = f.d1
            out.append(E(u3, 3) * d1[..., :, None, None] * d1[..., None, :, None] * d1[..., None, None, :]
                       + E(u2, 3) * _sym3(f.d2, d1) + E(u1, 3) * f.d3)
        return Jet(*out)

    def reciprocal(self) -> "Jet":
        v = self.v
        r = 1.0 / v
        return self.compose(r, -r ** 2, 2 * r ** 3, -6 * r ** 4)

    def sqrt(self) -> "Jet":
        s = np.sqrt(self.v)
        return self.compose(s, 0.5 / s, -0.25 / s ** 3, 0.375 / s ** 5)

    def __repr__(self):
        return f"Jet(shape={self.shape}, order={self.order})"


def sqrt(a):
    return a.sqrt() if isinstance(a, Jet) else np.sqrt(a)


def stack(jets: Sequence[Jet], axis: int = -1) -> Jet:
    """Stack jets with equal batch shape along a new batch axis."""
    order = min(j.order for j in jets)
    nd = jets[0].ndim
    ax = axis % (nd + 1)
    slots = []
    for m in range(order + 1):
        slots.append(np.stack([j.slots()[m] for j in jets], axis=ax))
    return Jet(*slots)


def matmul(a: Jet, b: Jet) -> Jet:
    """Batch matrix product of jets over the last two batch axes."""
    return (a.expand(-1) * b.expand(-3)).sum(-2)


# -- scalar fields ---------------------------------------------------------

class ScalarField:
    """A scalar field on R^n that can produce jets at batches of points."""

    provenance = "abstract"

    def __init__(self, n: int):
        self.n = n

    def __call__(self, X):
        raise NotImplementedError

    def jet(self, X, order: int = 3) -> Jet:
        raise NotImplementedError


class AnalyticField(ScalarField):
    """Field given by an expression ``fn(x)`` where ``x[i]`` is the i-th coordinate.

    The same callable receives plain arrays for values and jets for derivatives.
    """

    provenance = "analytic"

    def __init__(self, fn: Callable, n: int, name: str = ""):
        super().__init__(n)
        self.fn = fn
        self.name = name

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        out = self.fn([X[..., i] for i in range(self.n)])
        return np.broadcast_to(np.asarray(out, dtype=float), X.shape[:-1]).copy()

    def jet(self, X, order: int = 3) -> Jet:
        X = np.asarray(X, dtype=float)
        out = self.fn(Jet.variables(X, order))
        if not isinstance(out, Jet):
            out = Jet.constant(np.broadcast_to(out, X.shape[:-1]), self.n, order)
        return out.broadcast_to(X.shape[:-1])

    def scaled(self, c: float) -> "AnalyticField":
        fn = self.fn
        return AnalyticField(lambda x: fn(x) * c, self.n, self.name)


def default_step(X) -> np.ndarray:
    """max(1e-4, 1e-4 |x|_inf) rounded down to a power of two, so x +- h is exact."""
    X = np.asarray(X, dtype=float)
    h = np.maximum(1e-4, 1e-4 * np.abs(X).max(axis=-1))
    return np.exp2(np.floor(np.log2(h)))


class FiniteDifferenceField(ScalarField):
    """Field whose jets come from central difference stencils on a plain callable."""

    provenance = "finite-difference"

    def __init__(self, fn: Callable, n: int, step: float | None = None, name: str = ""):
        super().__init__(n)
        self.fn = fn
        self.step = step
        self.name = name

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return np.asarray(self.fn([X[..., i] for i in range(self.n)]), dtype=float)

    def jet(self, X, order: int = 3) -> Jet:
        return jet_from_callable(self, X, order, self.step)


def jet_from_callable(f: Callable, X, order: int = 3, step=None) -> Jet:
    """Jet of ``f`` at points ``X`` (shape ``(..., n)``) from central differences.

    ``f`` maps an array of points ``(..., n)`` to values ``(...)``.  First
    derivatives use the five-point stencil, second derivatives the three-point
    and four-corner stencils, third derivatives the standard symmetric stencils
    with the step raised to the power 3/4.  All stencils are exact on cubic
    polynomials, so only rounding remains there.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    B = X.shape[:-1]
    h = default_step(X) if step is None else np.broadcast_to(np.asarray(step, dtype=float), B)
    if np.any(h <= 0):
        raise ValueError("step must be positive")
    h3 = h ** 0.75

    def ev(offsets, hh):
        # offsets: (S, n) integer multiples of hh
        offsets = np.asarray(offsets, dtype=float)
        P = X[..., None, :] + offsets * hh[..., None, None]
        vals = np.asarray(f(P), dtype=float)
        if vals.shape != P.shape[:-1]:
            vals = np.broadcast_to(vals, P.shape[:-1])
        if not np.all(np.isfinite(vals)):
            raise NonFiniteSample("non-finite value on the difference stencil")
        return vals

    E = np.eye(n)
    f0 = ev(np.zeros((1, n)), h)[..., 0]
    # first derivatives: (-f(2h) + 8 f(h) - 8 f(-h) + f(-2h)) / 12h
    offs = np.concatenate([2 * E, E, -E, -2 * E])
    v = ev(offs, h).reshape(B + (4, n))
    d1 = (8 * (v[..., 1, :] - v[..., 2, :]) - (v[..., 0, :] - v[..., 3, :])) / (12 * h[..., None])
    slots = [f0, d1]
    if order >= 2:
        d2 = np.empty(B + (n, n))
        hh = (h ** 2)[..., None]
        diag = (v[..., 1, :] - 2 * f0[..., None] + v[..., 2, :]) / hh
        for i in range(n):
            d2[..., i, i] = diag[..., i]
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        if pairs:
            offs = []
            for i, j in pairs:
                offs += [E[i] + E[j], E[i] - E[j], -E[i] + E[j], -E[i] - E[j]]
            c = ev(np.array(offs), h).reshape(B + (len(pairs), 4))
            mixed = (c[..., 0] - c[..., 1] - c[..., 2] + c[..., 3]) / (4 * h[..., None] ** 2)
            for p, (i, j) in enumerate(pairs):
                d2[..., i, j] = d2[..., j, i] = mixed[..., p]
        slots.append(d2)
    if order >= 3:
        d3 = np.empty(B + (n, n, n))
        H3 = h3[..., None]
        offs = np.concatenate([2 * E, E, -E, -2 * E])
        w = ev(offs, h3).reshape(B + (4, n))
        diag3 = (w[..., 0, :] - 2 * w[..., 1, :] + 2 * w[..., 2, :] - w[..., 3, :]) / (2 * H3 ** 3)
        for i in range(n):
            d3[..., i, i, i] = diag3[..., i]
        # f_iij = [f_ii(x + h e_j) - f_ii(x - h e_j)] / 2h
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                offs = [E[i] + E[j], E[j], -E[i] + E[j], E[i] - E[j], -E[j], -E[i] - E[j]]
                c = ev(np.array(offs), h3)
                plus = c[..., 0] - 2 * c[..., 1] + c[..., 2]
                minus = c[..., 3] - 2 * c[..., 4] + c[..., 5]
                val = (plus - minus) / (2 * h3 ** 3)
                d3[..., i, i, j] = d3[..., i, j, i] = d3[..., j, i, i] = val
        # f_ijk for distinct indices
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    offs, sgn = [], []
                    for a in (1, -1):
                        for b in (1, -1):
                            for cc in (1, -1):
                                offs.append(a * E[i] + b * E[j] + cc * E[k])
                                sgn.append(a * b * cc)
                    c = ev(np.array(offs), h3)
                    val = (c * np.array(sgn)).sum(axis=-1) / (8 * h3 ** 3)
                    for p in ((i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)):
                        d3[(Ellipsis,) + p] = val
        slots.append(d3)
    return Jet(*slots)


# -- left-invariant frame as a jet -------------------------------------------

def frame_jet(group, X, order: int = 2) -> Jet:
    """Jet of the frame matrix A(x) = sum_m b_m (ad_x)^m; batch shape ``(..., n, n)``.

    Column i holds the coordinate components of X_i.  The entries are
    polynomials in x, so all derivative slots are exact.
    """
    X = np.asarray(X, dtype=float)
    n = group.n
    B = X.shape[:-1]
    C = group.structure
    M = np.einsum("jir->rij", C)  # M[r, i, j] = d(ad_x)[r, i] / dx_j
    slots = [np.einsum("...j,jir->...ri", X, C)]
    if order >= 1:
        slots.append(np.broadcast_to(M, B + (n, n, n)))
    for m in range(2, order + 1):
        slots.append(np.zeros(B + (n, n) + (n,) * m))
    ad = Jet(*slots)
    eye = np.broadcast_to(np.eye(n), B + (n, n))
    A = Jet.constant(eye, n, order)
    power = None
    for b in group._frame_coeffs[1:]:
        power = ad if power is None else matmul(power, ad)
        if b:
            A = A + power * b
    return A


def frame_derivative(phi: Jet, A: Jet) -> Jet:
    """X_i phi for every i, appended as a new last batch axis.

    ``phi`` has batch shape ``(P, ...)`` and ``A`` batch shape ``(P, n, n)``.
    """
    g = phi.grad()  # (P, ..., n_j)
    extra = phi.ndim - 1
    a = A
    for _ in range(extra):
        a = a.expand(1)
    return (a * g.expand(-1)).sum(-2)


def frame_derivatives(jet: Jet, A: Jet, order: int | None = None) -> list:
    """[X phi, X X phi, X X X phi] up to ``order``; entry m has index layout
    ``[i_1, ..., i_m]`` meaning X_{i_m} ... X_{i_1} phi."""
    order = jet.order if order is None else order
    jet.require(order)
    out = []
    cur = jet
    for _ in range(order):
        cur = frame_derivative(cur, A)
        out.append(cur)
    return out


def horizontal_gradient(jet: Jet, A: Jet, h: int) -> np.ndarray:
    jet.require(1)
    return frame_derivative(jet.truncate(1), A.truncate(0)).v[..., :h]
