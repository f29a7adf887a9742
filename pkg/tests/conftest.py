import numpy as np
import pytest

from artifact.builtin_examples import hyperbolic_paraboloid, nonvertical_hyperplane, vertical_hyperplane
from artifact.carnot_algebra import builtin_abelian, builtin_engel, builtin_heisenberg


@pytest.fixture
def h1():
    return builtin_heisenberg(1)


@pytest.fixture
def h2():
    return builtin_heisenberg(2)


def paraboloid_points(S, count, seed=0, lo=0.5, hi=3.0):
    """Chart points of the H^m paraboloid with |x + y| spread over [lo, hi]."""
    rng = np.random.default_rng(seed)
    m = S.params["m"]
    out = []
    while len(out) < count:
        u = rng.uniform(-2, 2, size=2 * m)
        r = np.linalg.norm(u[0::2] + u[1::2])
        if lo <= r <= hi:
            out.append(u)
    return S.embed(np.array(out))


def nvplane_points(S, count, seed=0):
    rng = np.random.default_rng(seed)
    n = S.group.n
    U = rng.uniform(-2, 2, size=(count, n - 1))
    X = S.embed(U)
    keep = np.linalg.norm(X[:, : S.group.h], axis=-1) > 0.3
    return X[keep]


def all_groups():
    return [builtin_heisenberg(1), builtin_heisenberg(2), builtin_engel(), builtin_abelian(3)]


def example_families():
    """(surface, points) for the three example families."""
    out = []
    for m in (1, 2, 3):
        S = hyperbolic_paraboloid(m)
        out.append((S, paraboloid_points(S, 200, seed=m)))
    for G in (builtin_heisenberg(1), builtin_heisenberg(2)):
        S = nonvertical_hyperplane(G)
        out.append((S, nvplane_points(S, 260, seed=G.n)[:200]))
    for G, d in ((builtin_heisenberg(1), [1, 0]), (builtin_heisenberg(2), [1, 1, 0, 0]),
                 (builtin_engel(), [1, 2])):
        S = vertical_hyperplane(G, d)
        U = np.random.default_rng(7).uniform(-2, 2, size=(200, G.n - 1))
        out.append((S, S.embed(U)))
    return out
