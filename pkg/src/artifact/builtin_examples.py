"""Example hypersurfaces with closed-form values used as ground truth.

Three families: vertical hyperplanes (any group), non-vertical hyperplanes
{x_a = 0} in step-2 groups, and the hyperbolic paraboloid
t = (|x|^2 - |y|^2) / 4 in the Heisenberg group H^n with coordinates
(x1, y1, ..., xn, yn, t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .carnot_algebra import CarnotGroup, builtin_heisenberg
from .jets import AnalyticField


class NotHorizontalDirection(ValueError):
    pass


class InvalidVerticalIndex(ValueError):
    pass


@dataclass
class ExampleSurface:
    name: str
    group: CarnotGroup
    f: AnalyticField
    oracles: dict
    characteristic_locus: Callable
    graph_axis: int
    graph: Callable             # (P, n-1) chart coordinates -> (P,) graph values
    params: dict = field(default_factory=dict)

    def oracle(self, key: str, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.asarray(self.oracles[key](X), dtype=float)
        return out if out.shape[: X.ndim - 1] == X.shape[:-1] else np.broadcast_to(out, X.shape[:-1])

    def embed(self, U) -> np.ndarray:
        """Points on the surface over chart coordinates U (all coordinates except the graph axis)."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return np.insert(U, self.graph_axis, self.graph(U), axis=-1)


def _zeros(X):
    return np.zeros(X.shape[:-1])


def vertical_hyperplane(group: CarnotGroup, direction) -> ExampleSurface:
    a = np.asarray(direction, dtype=float)
    if a.shape == (group.n,):
        if np.any(a[group.h:] != 0):
            raise NotHorizontalDirection("direction must be supported on the first stratum")
        a = a[: group.h]
    if a.shape != (group.h,) or not np.any(a):
        raise NotHorizontalDirection("direction must be a nonzero horizontal covector")
    g = int(np.argmax(np.abs(a)))
    f = AnalyticField(lambda x: sum(float(a[i]) * x[i] for i in range(len(a)) if a[i]), group.n,
                      name="vplane")
    others = [i for i in range(group.h) if i != g]

    def graph(U):
        V = np.insert(U, g, 0.0, axis=-1)
        return -(V[..., :group.h][..., others] @ a[others]) / a[g]

    density = float(np.linalg.norm(a) / abs(a[g]))
    oracles = {
        "p_h_norm": lambda X: np.ones(X.shape[:-1]),
        "varpi": lambda X: np.zeros(X.shape[:-1] + (group.n - group.h,)),
        "H_cc": _zeros, "B2": _zeros, "S2": _zeros, "A2": _zeros, "B_TS": _zeros,
        "sigma_h_density": lambda X: np.full(X.shape[:-1], density),
        "nu_h": lambda X: np.broadcast_to(a / np.linalg.norm(a), X.shape[:-1] + (group.h,)),
    }
    return ExampleSurface("vplane", group, f, oracles, lambda X: np.zeros(np.shape(X)[:-1], bool),
                          g, graph, {"direction": a})


def nonvertical_hyperplane(group: CarnotGroup, alpha: int | None = None) -> ExampleSurface:
    """The hyperplane {x_alpha = 0} for a second-stratum index alpha (0-based; default the first)."""
    if group.k != 2:
        raise InvalidVerticalIndex("non-vertical hyperplanes are defined here for step-2 groups")
    alpha = group.h if alpha is None else int(alpha)
    if alpha not in group.second:
        raise InvalidVerticalIndex(f"index {alpha} is not in the second stratum")
    CH = group.C_H_alpha[alpha - group.h]
    if not np.any(CH):
        raise InvalidVerticalIndex("C_H for this index vanishes")
    h = group.h
    f = AnalyticField(lambda x: x[alpha], group.n, name="nvplane")
    a_slot = alpha - h
    CH_norm2 = float((CH ** 2).sum())

    def cx(X):
        return X[..., :h] @ CH.T

    def varpi(X):
        out = np.zeros(X.shape[:-1] + (group.n - h,))
        out[..., a_slot] = 2.0 / np.linalg.norm(cx(X), axis=-1)
        return out

    def nu_h(X):
        c = cx(X)
        return -c / np.linalg.norm(c, axis=-1, keepdims=True)

    def chs_norm2(X):
        # |C_HS|^2 = |C_H|^2 - 2 |C_H nu_H|^2 for the complement of nu_H
        return CH_norm2 - 2.0 * (np.einsum("ij,...j->...i", CH, nu_h(X)) ** 2).sum(-1)

    def a2(X):
        return varpi(X)[..., a_slot] ** 2 * chs_norm2(X) / 4.0

    oracles = {
        "p_h_norm": lambda X: 1.0 / np.sqrt(1.0 + varpi(X)[..., a_slot] ** 2),
        "varpi": varpi, "nu_h": nu_h,
        "H_cc": _zeros, "S2": _zeros, "A2": a2, "B2": a2, "B_TS": a2,
        "sigma_h_density": lambda X: np.linalg.norm(cx(X), axis=-1) / 2.0,
        "chs_norm2": chs_norm2,
    }
    return ExampleSurface("nvplane", group, f, oracles,
                          lambda X: np.linalg.norm(cx(np.asarray(X, dtype=float)), axis=-1) == 0,
                          alpha, lambda U: np.zeros(np.shape(U)[:-1]), {"alpha": alpha})


def hyperbolic_paraboloid(m: int) -> ExampleSurface:
    """t = (|x|^2 - |y|^2) / 4 in H^m."""
    group = builtin_heisenberg(m)
    n = group.n

    def fn(x):
        q = 0
        for i in range(m):
            q = q + x[2 * i] * x[2 * i] - x[2 * i + 1] * x[2 * i + 1]
        return x[n - 1] - q / 4

    f = AnalyticField(fn, n, name="hparab")

    def v2(X):
        return ((X[..., 0:2 * m:2] + X[..., 1:2 * m:2]) ** 2).sum(-1)

    def graph(U):
        return ((U[..., 0:2 * m:2] ** 2).sum(-1) - (U[..., 1:2 * m:2] ** 2).sum(-1)) / 4.0

    def nu_h(X):
        v = X[..., 0:2 * m:2] + X[..., 1:2 * m:2]
        out = np.empty(X.shape[:-1] + (2 * m,))
        out[..., 0::2] = -v
        out[..., 1::2] = v
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    oracles = {
        "p_h_norm": lambda X: 1.0 / np.sqrt(1.0 + 2.0 / v2(X)),
        "varpi": lambda X: (np.sqrt(2.0) / np.sqrt(v2(X)))[..., None],
        "nu_h": nu_h,
        "H_cc": _zeros,
        "B2": lambda X: 2.0 * (m - 1) / v2(X),
        "S2": lambda X: (m - 1) / v2(X),
        "A2": lambda X: (m - 1) / v2(X),
        "B_TS": lambda X: 2.0 * (m - 2) / v2(X),
        "L_HS_varpi": lambda X: -np.sqrt(2.0 / v2(X)) * 2.0 * (m - 2) / v2(X),
        "d_varpi_d_nu_circ": lambda X: 2.0 / v2(X),
        "sigma_h_density": lambda X: np.sqrt(v2(X)) / np.sqrt(2.0),
    }
    return ExampleSurface("hparab", group, f, oracles, lambda X: v2(np.asarray(X, dtype=float)) == 0,
                          n - 1, graph, {"m": m})


def builtin_surface(name: str, group: CarnotGroup | None = None, **kw) -> ExampleSurface:
    if name == "hparab":
        return hyperbolic_paraboloid(kw.get("m", group.h // 2 if group is not None else 1))
    if group is None:
        group = builtin_heisenberg(1)
    if name == "vplane":
        d = kw.get("direction")
        if d is None:
            d = np.eye(group.h)[0]
        return vertical_hyperplane(group, d)
    if name == "nvplane":
        return nonvertical_hyperplane(group, kw.get("alpha"))
    raise KeyError(f"unknown example surface {name!r}")
