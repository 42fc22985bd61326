"""Affine discrete connections on the trivial principal bundles used here,
and the reduction maps they induce on C'(E).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dldps import DiscretePath, PathPair
from .matgroup import SO3, Translations


@dataclass(frozen=True)
class AffineDiscreteConnection:
    """Connection form, level and horizontal lift of a principal G-bundle M -> M/G.

    ``act(g, m)`` is the left action, ``quotient(m)`` the bundle projection.
    The domain is the whole of M x M for every instance in this package.
    """

    group: object
    form: Callable
    level: Callable
    hlift: Callable
    act: Callable
    quotient: Callable
    name: str = "connection"

    def in_domain(self, m0, m1):
        return True


def canonical_group_connection(h=None):
    """Connections on SO(3) -> {e}: A(g0, g1) = g1 h^-1 g0^-1.

    The horizontal pairs are g1 = g0 h, so the lift of the single point of
    the base is g0 h.
    """
    G = SO3()
    h = np.eye(3) if h is None else np.asarray(h, dtype=float)
    hinv = h.T
    return AffineDiscreteConnection(
        group=G,
        form=lambda g0, g1: g1 @ hinv @ g0.T,
        level=lambda g: g @ h @ g.T,
        hlift=lambda g0, r1=None: g0 @ h,
        act=lambda a, g: a @ g,
        quotient=lambda g: np.zeros(0),
        name="canonical",
    )


def abelian_translation_connection(n, split):
    """Flat connection on R^n -> R^n / R^k, R^k translating the coordinates in ``split``.

    ``quotient`` keeps the remaining coordinates in increasing order.
    """
    split = tuple(int(i) for i in split)
    rest = tuple(i for i in range(n) if i not in split)
    G = Translations(len(split))

    def embed(g):
        v = np.zeros(n)
        v[list(split)] = g
        return v

    def form(m0, m1):
        return (np.asarray(m1, dtype=float) - np.asarray(m0, dtype=float))[list(split)]

    def hlift(m0, r1):
        m1 = np.array(m0, dtype=float)
        m1[list(rest)] = r1
        return m1

    return AffineDiscreteConnection(
        group=G,
        form=form,
        level=lambda m: np.zeros(len(split)),
        hlift=hlift,
        act=lambda g, m: np.asarray(m, dtype=float) + embed(g),
        quotient=lambda m: np.asarray(m, dtype=float)[list(rest)],
        name=f"translation{split}",
    )


@dataclass(frozen=True)
class ReductionMap:
    """Upsilon: C'(E) -> C'(reduced total space), with a lift and its differential.

    ``forward(eps, m)`` and ``lift(v, r, seed)`` use the trivialized pair
    conventions of :mod:`nhreduce.dldps`; ``diff(eps, m, deps, dm)`` is the
    differential at (eps, m).
    """

    forward: Callable
    lift: Callable
    diff: Callable
    act: Callable
    name: str = "upsilon"

    def pair(self, pp):
        v, r = self.forward(pp.eps, pp.m_next)
        return PathPair(v, r)

    def path(self, path):
        return DiscretePath([self.pair(pp) for pp in path], check=False)


def upsilon_ll(conn):
    """Reduction of G x G by left translations in the eta coordinates.

    forward(g0, g1) = g0^-1 g1 h^-1 for the connection g1 h^-1 g0^-1; the
    reduced total space is G over a point.
    """
    h = conn.hlift(np.eye(3))

    def forward(eps, m):
        # solve rather than transpose: lifted points carry rounding drift
        return (np.linalg.solve(eps[1], m) @ h.T, np.zeros(0)), np.zeros(0)

    def lift(v, r, seed):
        W = v[0]
        return (np.zeros(0), seed), seed @ W @ h

    def diff(eps, m, deps, dm):
        g0 = eps[1]
        dg0 = deps[1]
        return (dg0.T @ m @ h.T + g0.T @ dm @ h.T, np.zeros(0)), np.zeros(0)

    return ReductionMap(forward=forward, lift=lift, diff=diff,
                        act=lambda a, eps, m: ((eps[0], a @ eps[1]), a @ m), name="upsilon_ll")


def lift_path(umap, reduced_pairs, seed):
    """Lift a reduced discrete path from a seed base point over its first pair.

    Each later pair is lifted from the base point reached by the previous one,
    which is the only choice keeping the lifted pairs chained.
    """
    out = []
    s = seed
    for pp in reduced_pairs:
        eps, m = umap.lift(pp.eps, pp.m_next, s)
        out.append(PathPair(eps, m))
        s = m
    return DiscretePath(out, check=False)
