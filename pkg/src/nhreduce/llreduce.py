"""Discrete LL systems: the unreduced system on G x G, its reduction to the
group (eta model), the momentum model on the dual algebra, reconstruction
and the nonholonomic momentum map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import matgroup
from .connections import canonical_group_connection, lift_path, upsilon_ll
from .dldps import (BundleSpec, DldpsError, DldpsSystem, Euclidean,
                    GroupManifold, NoConvergence, PathPair, Point, residual_vector,
                    transport_system, verify_trajectory)

_EMPTY = np.zeros(0)


class NearSingularLegendre(DldpsError):
    pass


class NotInGD(DldpsError):
    """The algebra element does not generate an admissible variation."""


@dataclass
class LlSystemSpec:
    """A left-invariant discrete nonholonomic system (G, L_d, D_d, D^nh).

    ``d1(g0, g1, dg0)`` and ``d2(g0, g1, dg1)`` are the partial differentials
    of ``lagrangian``; ``s_residual(W)`` vanishes exactly on the discrete
    constraint set S_d.  ``legendre`` / ``legendre_diff`` optionally give the
    reduced Legendre transform in closed form (vee coordinates).
    """

    group: object
    lagrangian: Callable
    d1: Callable
    d2: Callable
    subspace: matgroup.ConstraintSubspace
    s_residual: Callable
    n_kin: int = 1
    legendre: Optional[Callable] = None
    legendre_diff: Optional[Callable] = None
    name: str = "ll"

    def ell(self, W):
        return self.lagrangian(self.group.identity(), W)

    def dell(self, W, dW):
        return self.d2(self.group.identity(), W, dW)

    def check_invariance(self, rng, samples=20):
        G = self.group
        worst = 0.0
        for _ in range(samples):
            a, g0, g1 = G.random(rng), G.random(rng), G.random(rng)
            worst = max(worst, abs(self.lagrangian(G.mul(a, g0), G.mul(a, g1))
                                   - self.lagrangian(g0, g1)))
        return worst


@dataclass(frozen=True)
class MomentumValue:
    """An element of the dual algebra; on so(3) a skew matrix under the trace pairing."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.shape == (3, 3) and np.max(np.abs(p + p.T)) > 1e-12:
            raise ValueError("momentum must be skew")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def vec(self):
        return matgroup.vee(self.p, tol=np.inf) if self.p.shape == (3, 3) else self.p


def _vec(group, p):
    if isinstance(p, MomentumValue):
        return np.asarray(p.vec, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.shape == (3, 3):
        return group.vee(p)
    return p


# ---------------------------------------------------------------- M^LL

def build_m_ll(spec):
    """Unreduced system: identity bundle G -> G, zero chaining map."""
    G = spec.group
    bundle = BundleSpec(Point(), GroupManifold(G))

    def lagrangian(eps, m):
        return spec.lagrangian(eps[1], m)

    def d1(eps, m, deps):
        return spec.d1(eps[1], m, deps[1])

    def d2(eps, m, dm):
        return spec.d2(eps[1], m, dm)

    def var_basis(eps, m):
        return [(_EMPTY, G.left_tangent(eps[1], b)) for b in spec.subspace.basis]

    def kin_residual(eps, m):
        return spec.s_residual(G.mul(G.inv(eps[1]), m))

    def chain_map(prev, cand, deps1):
        return (_EMPTY, np.zeros_like(np.asarray(prev.eps[1], dtype=float)))

    return DldpsSystem(bundle=bundle, lagrangian=lagrangian, var_basis=var_basis,
                       kin_residual=kin_residual, chain_map=chain_map,
                       n_var=spec.subspace.dim, n_kin=spec.n_kin,
                       d1_lagrangian=d1, d2_lagrangian=d2, name=f"{spec.name}/full")


# ---------------------------------------------------------------- M^eta

def reduce_to_eta(spec, h=None):
    """Reduced system on G -> {point} for the connection g1 h^-1 g0^-1.

    The reduced variable is V = g0^-1 g1 h^-1 (V = W for h = e); the
    chaining map sends dV1 = xi^ V1 to -V0 h xi^ h^-1.
    """
    G = spec.group
    h = G.identity() if h is None else np.asarray(h, dtype=float)
    bundle = BundleSpec(GroupManifold(G), Point())

    def lagrangian(eps, m):
        return spec.ell(G.mul(eps[0], h))

    def d1(eps, m, deps):
        return spec.dell(G.mul(eps[0], h), G.mul(deps[0], h))

    def d2(eps, m, dm):
        return 0.0

    def var_basis(eps, m):
        return [(G.right_tangent(b, eps[0]), _EMPTY) for b in spec.subspace.basis]

    def kin_residual(eps, m):
        return spec.s_residual(G.mul(eps[0], h))

    def chain_map(prev, cand, deps1):
        xi = G.right_trivialize(cand.eps[0], deps1[0])
        return (-G.left_tangent(prev.eps[0], G.ad(h, xi)), _EMPTY)

    return DldpsSystem(bundle=bundle, lagrangian=lagrangian, var_basis=var_basis,
                       kin_residual=kin_residual, chain_map=chain_map,
                       n_var=spec.subspace.dim, n_kin=spec.n_kin,
                       d1_lagrangian=d1, d2_lagrangian=d2, name=f"{spec.name}/eta")


def eta_pair(W):
    return PathPair((np.asarray(W, dtype=float), _EMPTY), _EMPTY)


def eta_residual(spec, W0, W1):
    """R*_{W1} dl(W1) - L*_{W0} dl(W0), returned in the algebra (skew matrix on so(3))."""
    G = spec.group
    E = np.eye(G.dim)
    a = np.array([spec.dell(W1, G.right_tangent(e, W1)) - spec.dell(W0, G.left_tangent(W0, e))
                  for e in E])
    return G.hat(a)


# ---------------------------------------------------------------- Legendre

def reduced_legendre(spec, W):
    """p = R*_W dl(W) through the differential of the reduced Lagrangian."""
    G = spec.group
    a = np.array([spec.dell(W, G.right_tangent(e, W)) for e in np.eye(G.dim)])
    return MomentumValue(G.hat(a))


def _legendre_vec(spec, W):
    if spec.legendre is not None:
        return _vec(spec.group, spec.legendre(W))
    return reduced_legendre(spec, W).vec


def _legendre_jac(spec, W, h=1e-7):
    """Columns: dL(W)(W e_j^) in vee coordinates."""
    G = spec.group
    cols = []
    for e in np.eye(G.dim):
        if spec.legendre_diff is not None:
            cols.append(_vec(G, spec.legendre_diff(W, G.left_tangent(W, e))))
        else:
            cols.append((_legendre_vec(spec, G.mul(W, G.cay(h * e)))
                         - _legendre_vec(spec, G.mul(W, G.cay(-h * e)))) / (2 * h))
    return np.array(cols).T


def _linear_seed(spec, p):
    G = spec.group
    J = _legendre_jac(spec, G.identity())
    return G.cay(np.linalg.solve(J, p - _legendre_vec(spec, G.identity())))


def invert_legendre(spec, p, seed=None, tol=1e-14, max_iter=50, chart_radius=1.0):
    """Local inverse of the reduced Legendre transform by Newton in a Cayley chart.

    Without a seed, the linearization at the identity provides one.
    """
    G = spec.group
    target = _vec(G, p)
    W0 = _linear_seed(spec, target) if seed is None else np.asarray(seed, dtype=float)
    W = W0
    moved = np.zeros(G.dim)
    r = _legendre_vec(spec, W) - target
    scale = max(1.0, float(np.max(np.abs(target))))
    it = 0
    while np.max(np.abs(r)) > tol * scale:
        if it >= max_iter:
            raise NoConvergence(it, float(np.max(np.abs(r))), reason="Legendre inversion")
        it += 1
        J = _legendre_jac(spec, W)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > 1e12:
            raise NearSingularLegendre(f"Legendre Jacobian condition number {cond:.3e}")
        dx = np.linalg.solve(J, -r)
        W_new = G.mul(W, G.cay(dx))
        r_new = _legendre_vec(spec, W_new) - target
        if np.max(np.abs(r_new)) >= np.max(np.abs(r)):
            # stalled at round-off level
            if np.max(np.abs(r)) < 1e-12 * scale:
                break
            raise NoConvergence(it, float(np.max(np.abs(r))), reason="Legendre inversion stalled")
        moved = moved + dx
        if np.max(np.abs(moved)) > chart_radius:
            raise NoConvergence(it, float(np.max(np.abs(r_new))),
                                reason="Legendre inversion left the seed chart")
        W, r = W_new, r_new
    if isinstance(G, matgroup.SO3):
        W = GroupManifold(G).project(W)
    return W


class LegendreInverse:
    """Cached local inverse, seeded by known preimages where available.

    Cache misses are seeded with the most recent preimage, which keeps the
    Newton iteration in the right branch along a trajectory.
    """

    def __init__(self, spec, max_entries=20000):
        self.spec = spec
        self.cache = {}
        self.max_entries = max_entries
        self.last = None

    def _key(self, p):
        return np.asarray(p, dtype=float).tobytes()

    def remember(self, p, W):
        if len(self.cache) >= self.max_entries:
            self.cache.clear()
        self.cache[self._key(p)] = np.asarray(W, dtype=float)
        self.last = self.cache[self._key(p)]

    def __call__(self, p):
        key = self._key(p)
        W = self.cache.get(key)
        if W is None:
            try:
                W = invert_legendre(self.spec, p, seed=self.last)
            except (NoConvergence, NearSingularLegendre):
                if self.last is None:
                    raise
                W = invert_legendre(self.spec, p)
            self.remember(p, W)
        return W


class MomentumChart:
    """Unknowns: coefficients a of omega in d, with p = L(cay(omega)); only dynamic rows."""

    def __init__(self, sys, prev, guess):
        self.sys = sys
        self.prev = prev
        spec = sys.ll_spec
        self.spec = spec
        # start from the previous increment, whose preimage is known
        W = sys.legendre_inverse(prev.eps[0])
        w = spec.group.cay_inv(W)
        self.a0 = spec.subspace.coefficients(w)
        self.dim = spec.subspace.dim

    def x0(self):
        return np.zeros(self.dim)

    def pair(self, x):
        spec = self.spec
        W = spec.group.cay(spec.subspace.basis.T @ (self.a0 + x))
        p = _legendre_vec(spec, W)
        self.sys.legendre_inverse.remember(p, W)
        return PathPair((p, _EMPTY), _EMPTY)

    def equations(self, x):
        return residual_vector(self.sys, self.prev, self.pair(x), check=False)[: self.sys.n_var]


def build_m_s(spec):
    """Momentum model: the eta system carried to the dual algebra by the Legendre transform."""
    G = spec.group
    eta = reduce_to_eta(spec)
    inverse = LegendreInverse(spec)
    bundle = BundleSpec(Euclidean(G.dim), Point())

    def F(eps):
        return (_legendre_vec(spec, eps[0]), _EMPTY)

    def Finv(eps):
        return (inverse(eps[0]), _EMPTY)

    def dF(eps, deps):
        W = eps[0]
        xi = G.left_trivialize(W, deps[0])
        return (_legendre_jac(spec, W) @ xi, _EMPTY)

    def dFinv(eps, deps):
        W = inverse(eps[0])
        xi = np.linalg.solve(_legendre_jac(spec, W), deps[0])
        return (G.left_tangent(W, xi), _EMPTY)

    ident = lambda m: m  # noqa: E731
    dident = lambda m, v: v  # noqa: E731
    sys = transport_system(eta, bundle, (F, ident), (Finv, ident), (dF, dident), (dFinv, dident),
                           name=f"{spec.name}/momentum", stepping_chart=MomentumChart)
    sys.ll_spec = spec
    sys.legendre_inverse = inverse
    return sys


def momentum_pair(spec, W):
    return PathPair((_legendre_vec(spec, W), _EMPTY), _EMPTY)


def eps_residual(spec, p0, p1, seed=None):
    """d-coefficients of p1 - Ad*_{L^-1(p0)} p0 (discrete Euler-Poincare-Suslov)."""
    G = spec.group
    p0v, p1v = _vec(G, p0), _vec(G, p1)
    W0 = invert_legendre(spec, p0v, seed=seed)
    return spec.subspace.coefficients(p1v - G.ad_star_vec(W0, p0v))


# ---------------------------------------------------------------- reconstruction

def _as_group_path(W_path):
    out = []
    for item in W_path:
        out.append(item.eps[0] if isinstance(item, PathPair) else np.asarray(item, dtype=float))
    return out


def reconstruct(W_path, g0, h=None):
    """Lift reduced increments to the group: g_{k+1} = g_k W_k h, returned as full pairs."""
    conn = canonical_group_connection(h)
    umap = upsilon_ll(conn)
    Ws = _as_group_path(W_path)
    return lift_path(umap, [eta_pair(W) for W in Ws], np.asarray(g0, dtype=float))


def project_path(path, h=None):
    """Eta-model path V_k = g_k^-1 g_{k+1} h^-1 of a full path."""
    return upsilon_ll(canonical_group_connection(h)).path(path)


def full_pair(g0, g1):
    return PathPair((_EMPTY, np.asarray(g0, dtype=float)), np.asarray(g1, dtype=float))


def group_points(path):
    """g_0, ..., g_N of a full-level path."""
    pts = [pp.eps[1] for pp in path]
    if len(path):
        pts.append(path[len(path) - 1].m_next)
    return pts


# ---------------------------------------------------------------- momentum map

def section_value(spec, g0, eta):
    """xi_bar_eta(g0, g1) = Ad_{g0} eta (independent of g1)."""
    return spec.group.ad(g0, eta)


def _admissibility_gap(spec, g0, xi):
    G = spec.group
    body = G.ad(G.inv(g0), xi)
    return float(np.max(np.abs(spec.subspace.annihilator_basis @ body))) if spec.subspace.annihilator_basis.size else 0.0


def momentum_map(spec, g0, g1, xi, tol=1e-10):
    """J_d(g0, g1)(xi) = -D1 L_d(g0, g1)(xi^ g0), for xi in Ad_{g0}(d)."""
    xi = np.asarray(xi, dtype=float)
    gap = _admissibility_gap(spec, g0, xi)
    if gap > tol * max(1.0, float(np.max(np.abs(xi)))):
        raise NotInGD(f"xi is {gap:.3e} away from Ad_g0(d)")
    return -spec.d1(g0, g1, spec.group.right_tangent(xi, g0))


def momentum_map_d2(spec, g0, g1, xi):
    """The same value through D2 L_d(g0, g1)(xi^ g1) (left invariance)."""
    return spec.d2(g0, g1, spec.group.right_tangent(np.asarray(xi, dtype=float), g1))


def momentum_evolution_check(spec, path, eta):
    """Residuals J(g_k, g_{k+1})(xi) - D2 L(g_{k-1}, g_k)(xi^ g_k), xi = Ad_{g_k} eta, k >= 1.

    The chaining map of the unreduced system is zero, so no third term appears.
    """
    g = group_points(path)
    out = []
    for k in range(1, len(g) - 1):
        xi = section_value(spec, g[k], eta)
        lhs = momentum_map(spec, g[k], g[k + 1], xi)
        rhs = spec.d2(g[k - 1], g[k], spec.group.right_tangent(xi, g[k]))
        out.append(lhs - rhs)
    return np.asarray(out)


# ---------------------------------------------------------------- connection change

@dataclass
class ConnectionIndependenceReport:
    base_report: object
    shifted_report: object
    map_deviation: float
    tol: float

    @property
    def passed(self):
        return (self.base_report.passed and self.shifted_report.passed
                and self.map_deviation <= self.tol)


def connection_independence_check(spec, h, full_path, tol=1e-9):
    """Project a full trajectory with the connections for e and for h and compare.

    Both reduced paths are verified in their own eta systems, and V_k = W_k h^-1
    is checked pointwise.
    """
    h = np.asarray(h, dtype=float)
    W = project_path(full_path)
    V = project_path(full_path, h)
    rep_w = verify_trajectory(reduce_to_eta(spec), W, tol=tol)
    rep_v = verify_trajectory(reduce_to_eta(spec, h), V, tol=tol)
    G = spec.group
    dev = 0.0
    for a, b in zip(W, V):
        dev = max(dev, float(np.max(np.abs(G.mul(a.eps[0], G.inv(h)) - b.eps[0]))))
    return ConnectionIndependenceReport(rep_w, rep_v, dev, tol)


def right_translation_transport(spec, h, samples=()):
    """The eta system for h obtained from the h = e one through V = W h^-1."""
    G = spec.group
    eta = reduce_to_eta(spec)
    hinv = G.inv(h)
    ident = lambda m: m  # noqa: E731
    dident = lambda m, v: v  # noqa: E731
    return transport_system(
        eta, eta.bundle,
        (lambda e: (G.mul(e[0], hinv), _EMPTY), ident),
        (lambda e: (G.mul(e[0], h), _EMPTY), ident),
        (lambda e, d: (G.mul(d[0], hinv), _EMPTY), dident),
        (lambda e, d: (G.mul(d[0], h), _EMPTY), dident),
        samples=samples, name=f"{spec.name}/eta-transported")
