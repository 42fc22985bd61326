"""Discrete Lagrange-D'Alembert-Poincare systems on trivialized bundles.

A total-space point is a pair ``(f, m)`` of a fiber point and a base point
(E = F x M with phi(f, m) = m).  Tangent vectors to E are pairs
``(df, dm)`` in ambient coordinates.  Every manifold carries a retraction
used as a chart: ``retract(p, x)`` for chart coordinates ``x``, with
``tangent(p, x)`` its derivative at zero and ``chart(p, v)`` the inverse.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import matgroup

log = logging.getLogger(__name__)

COMPAT_TOL = 1e-10
JAC_STEP = 1e-7
GRAD_STEP = 1e-6
MAX_HALVINGS = 30
COND_LIMIT = 1e12
REPROJECT_TOL = 1e-12


class DldpsError(Exception):
    pass


class IncompatibleQuad(DldpsError):
    pass


class NoConvergence(DldpsError):
    def __init__(self, iterations, residual, step=None, reason=""):
        self.iterations = iterations
        self.residual = residual
        self.step = step
        msg = f"Newton failed after {iterations} iterations (residual {residual:.3e})"
        if reason:
            msg += f": {reason}"
        if step is not None:
            msg += f" at step {step}"
        super().__init__(msg)


class SingularJacobian(DldpsError):
    def __init__(self, cond, step=None):
        self.cond = cond
        self.step = step
        msg = f"Jacobian condition number {cond:.3e}"
        if step is not None:
            msg += f" at step {step}"
        super().__init__(msg)


class InconsistentDiffeo(DldpsError):
    pass


class IllPosedSystem(DldpsError):
    pass


# ---------------------------------------------------------------- manifolds

class Euclidean:
    def __init__(self, n):
        self.dim = int(n)

    def retract(self, p, x):
        return np.asarray(p, dtype=float) + np.asarray(x, dtype=float)

    def tangent(self, p, x):
        return np.asarray(x, dtype=float)

    def chart(self, p, v):
        return np.asarray(v, dtype=float)

    def drift(self, p):
        return 0.0

    def project(self, p, force=False):
        return p

    def extrapolate(self, a, b):
        return 2.0 * np.asarray(b) - np.asarray(a)

    def zero_tangent(self, p):
        return np.zeros(self.dim)

    def distance(self, a, b):
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        return float(np.max(np.abs(d))) if d.size else 0.0

    def flat(self, p):
        return np.asarray(p, dtype=float).reshape(-1)

    def unflat(self, v):
        return np.asarray(v, dtype=float).reshape(self.dim)


def Point():
    return Euclidean(0)


class GroupManifold:
    """A matrix Lie group as a manifold, charted by left-translated Cayley maps."""

    def __init__(self, group):
        self.group = group
        self.dim = group.dim

    def retract(self, p, x):
        return self.group.mul(p, self.group.cay(x))

    def tangent(self, p, x):
        return self.group.left_tangent(p, x)

    def chart(self, p, v):
        return self.group.left_trivialize(p, v)

    def drift(self, p):
        return self.group.drift(p)

    def project(self, p, force=False):
        if isinstance(self.group, matgroup.SO3) and (force or self.drift(p) > REPROJECT_TOL):
            return matgroup.project_to_so3(p)
        return p

    def extrapolate(self, a, b):
        # reuse the previous increment: b (a^-1 b)
        return self.group.mul(b, self.group.mul(self.group.inv(a), b))

    def zero_tangent(self, p):
        return np.zeros_like(np.asarray(p, dtype=float))

    def distance(self, a, b):
        return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))

    def flat(self, p):
        return np.asarray(p, dtype=float).reshape(-1)

    def unflat(self, v):
        shape = (3, 3) if isinstance(self.group, matgroup.SO3) else (self.dim,)
        return np.asarray(v, dtype=float).reshape(shape)


@dataclass(frozen=True)
class BundleSpec:
    """Trivialized fiber bundle E = fiber x base, phi = projection on the base."""

    fiber: object
    base: object

    @property
    def fiber_dim(self):
        return self.fiber.dim

    @property
    def base_dim(self):
        return self.base.dim

    @property
    def total_dim(self):
        return self.fiber.dim + self.base.dim

    def phi(self, eps):
        return eps[1]

    def phi_diff(self, eps, deps):
        return deps[1]

    def drift(self, eps):
        return max(self.fiber.drift(eps[0]), self.base.drift(eps[1]))

    def eps_tangent(self, eps, x):
        """Chart velocity x (fiber part first) to an ambient tangent at eps."""
        fd = self.fiber.dim
        return (self.fiber.tangent(eps[0], x[:fd]), self.base.tangent(eps[1], x[fd:]))

    def eps_chart(self, eps, deps):
        return np.concatenate([np.atleast_1d(self.fiber.chart(eps[0], deps[0])),
                               np.atleast_1d(self.base.chart(eps[1], deps[1]))])

    def eps_retract(self, eps, x):
        fd = self.fiber.dim
        return (self.fiber.retract(eps[0], x[:fd]), self.base.retract(eps[1], x[fd:]))


@dataclass(frozen=True)
class PathPair:
    """One element (eps, m_next) of C'(E) = E x M."""

    eps: tuple
    m_next: np.ndarray

    @property
    def fiber(self):
        return self.eps[0]

    @property
    def base(self):
        return self.eps[1]


@dataclass
class DiscretePath:
    pairs: list
    check: bool = True
    bundle: Optional[BundleSpec] = None

    def __post_init__(self):
        self.pairs = list(self.pairs)
        if self.check and self.bundle is not None:
            for k in range(len(self.pairs) - 1):
                d = self.bundle.base.distance(self.pairs[k].m_next, self.pairs[k + 1].eps[1])
                if d > COMPAT_TOL:
                    raise IncompatibleQuad(f"pairs {k} and {k + 1} are not chained (gap {d:.3e})")

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, k):
        return self.pairs[k]

    def __iter__(self):
        return iter(self.pairs)


# ---------------------------------------------------------------- systems

def _fd(fun, h):
    return (fun(h) - fun(-h)) / (2.0 * h)


@dataclass
class DldpsSystem:
    """The data (E, L_d, D_d, D, P) of a discrete LDP system.

    ``var_basis(eps, m)`` spans the variational constraints at (eps, m) as
    tangents ``(df, dm)`` to E; ``kin_residual(eps, m)`` vanishes exactly on
    the kinematic constraint set; ``chain_map(prev, cand, deps1)`` is the
    chaining map evaluated on a quad, returning a vertical tangent at
    ``prev.eps``.
    """

    bundle: BundleSpec
    lagrangian: Callable
    var_basis: Callable
    kin_residual: Callable
    chain_map: Callable
    n_var: int
    n_kin: int
    d1_lagrangian: Optional[Callable] = None
    d2_lagrangian: Optional[Callable] = None
    name: str = "dldps"
    stepping_chart: Optional[object] = None
    fd_step: float = GRAD_STEP

    def __post_init__(self):
        if self.n_var + self.n_kin != self.bundle.total_dim:
            raise IllPosedSystem(
                f"{self.name}: {self.n_var} variational + {self.n_kin} kinematic equations "
                f"for a total space of dimension {self.bundle.total_dim}")

    def D1L(self, eps, m, deps):
        if self.d1_lagrangian is not None:
            return float(self.d1_lagrangian(eps, m, deps))
        x = self.bundle.eps_chart(eps, deps)
        return _fd(lambda t: self.lagrangian(self.bundle.eps_retract(eps, t * x), m), self.fd_step)

    def D2L(self, eps, m, dm):
        if self.d2_lagrangian is not None:
            return float(self.d2_lagrangian(eps, m, dm))
        base = self.bundle.base
        x = base.chart(m, dm)
        return _fd(lambda t: self.lagrangian(eps, base.retract(m, t * x)), self.fd_step)

    def D1L_fd(self, eps, m, deps, h=GRAD_STEP):
        x = self.bundle.eps_chart(eps, deps)
        return _fd(lambda t: self.lagrangian(self.bundle.eps_retract(eps, t * x), m), h)

    def D2L_fd(self, eps, m, dm, h=GRAD_STEP):
        base = self.bundle.base
        x = base.chart(m, dm)
        return _fd(lambda t: self.lagrangian(eps, base.retract(m, t * x)), h)


def check_quad(sys, prev, cand, tol=COMPAT_TOL):
    gap = sys.bundle.base.distance(sys.bundle.phi(cand.eps), prev.m_next)
    if gap > tol:
        raise IncompatibleQuad(f"phi(eps_1) differs from m_1 by {gap:.3e}")


def eval_nu_d(sys, prev, cand, deps1, check=True):
    """Section of motion on the quad (prev, cand) applied to (deps1, 0)."""
    if check:
        check_quad(sys, prev, cand)
    val = sys.D1L(cand.eps, cand.m_next, deps1)
    val += sys.D2L(prev.eps, prev.m_next, sys.bundle.phi_diff(cand.eps, deps1))
    val += sys.D1L(prev.eps, prev.m_next, sys.chain_map(prev, cand, deps1))
    return float(val)


def residual_vector(sys, prev, cand, check=True):
    """Dynamic rows (nu_d on each variational basis vector) then kinematic rows."""
    if check:
        check_quad(sys, prev, cand)
    dyn = [eval_nu_d(sys, prev, cand, d, check=False) for d in sys.var_basis(cand.eps, cand.m_next)]
    kin = np.atleast_1d(np.asarray(sys.kin_residual(cand.eps, cand.m_next), dtype=float))
    return np.concatenate([np.asarray(dyn, dtype=float), kin])


# ---------------------------------------------------------------- stepping

class BundleChart:
    """Unknowns: fiber chart of eps_k over the fixed base m_k, then the chart of m_{k+1}."""

    def __init__(self, sys, prev, guess):
        self.sys = sys
        self.prev = prev
        self.guess = guess
        self.dim = sys.bundle.total_dim

    def x0(self):
        return np.zeros(self.dim)

    def pair(self, x):
        b = self.sys.bundle
        fd = b.fiber_dim
        f = b.fiber.retract(self.guess.eps[0], x[:fd])
        m_next = b.base.retract(self.guess.m_next, x[fd:])
        return PathPair((f, self.prev.m_next), m_next)

    def equations(self, x):
        return residual_vector(self.sys, self.prev, self.pair(x), check=False)


def _fd_jacobian(fun, x, r0, h):
    n = x.size
    J = np.empty((r0.size, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return J


def _safe_eval(fun, x):
    try:
        r = fun(x)
    except (matgroup.AngleAtPi, np.linalg.LinAlgError, DldpsError):
        return None
    if not np.all(np.isfinite(r)):
        return None
    return r


def newton_step(sys, prev, guess, tol=1e-12, max_iter=50, chart_radius=2.0,
                jacobian=None, stats=None, polish=True):
    """Solve the equations of motion for the pair following ``prev``.

    The chart is centred at ``guess``.  Steps are halved while the residual
    does not decrease; leaving the chart radius counts as divergence.  With
    ``polish`` one more Newton step is tried after convergence, which takes
    the residual from ``tol`` down to round-off.
    """
    if sys.stepping_chart is not None:
        chart = sys.stepping_chart(sys, prev, guess)
    else:
        chart = BundleChart(sys, prev, guess)
    fun = chart.equations
    x = chart.x0()
    r = _safe_eval(fun, x)
    if r is None:
        raise NoConvergence(0, math.inf, reason="residual undefined at the initial guess")
    nrm = float(np.max(np.abs(r)))
    it = 0
    while nrm > tol:
        if it >= max_iter:
            raise NoConvergence(it, nrm)
        it += 1
        J = jacobian(x) if jacobian is not None else _fd_jacobian(fun, x, r, JAC_STEP)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularJacobian(cond)
        dx = np.linalg.solve(J, -r)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            xn = x + t * dx
            rn = _safe_eval(fun, xn)
            if rn is not None and float(np.max(np.abs(rn))) < nrm:
                break
            t *= 0.5
        else:
            raise NoConvergence(it, nrm, reason="line search stalled")
        x, r = xn, rn
        nrm = float(np.max(np.abs(r)))
        if np.max(np.abs(x)) > chart_radius:
            raise NoConvergence(it, nrm, reason="left the chart neighbourhood of the guess")
    if polish and it > 0:
        # one extra full step, kept only if it improves the residual further
        J = jacobian(x) if jacobian is not None else _fd_jacobian(fun, x, r, JAC_STEP)
        try:
            xn = x + np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            xn = None
        rn = _safe_eval(fun, xn) if xn is not None else None
        if rn is not None and float(np.max(np.abs(rn))) < nrm:
            x, r, nrm = xn, rn, float(np.max(np.abs(rn)))
    if stats is not None:
        stats["iterations"] = it
        stats["residual"] = nrm
    out = chart.pair(x)
    b = sys.bundle
    f = b.fiber.project(out.eps[0])
    m_next = b.base.project(out.m_next)
    if f is not out.eps[0] or m_next is not out.m_next:
        out = PathPair((f, out.eps[1]), m_next)
    return out


def default_guess(sys, history):
    """Next-pair guess from the last one or two pairs (increment reuse / linear extrapolation)."""
    b = sys.bundle
    last = history[-1]
    # centre the chart on the manifold so the solution inherits no drift
    m_next = b.base.project(b.base.extrapolate(last.eps[1], last.m_next), force=True)
    if len(history) >= 2:
        f = b.fiber.project(b.fiber.extrapolate(history[-2].eps[0], last.eps[0]), force=True)
    else:
        f = last.eps[0]
    return PathPair((f, last.m_next), m_next)


def integrate(sys, initial, steps, tol=1e-12, max_iter=50, kin_tol=None, guess=None):
    kin_tol = max(tol, 1e-12) if kin_tol is None else kin_tol
    k0 = np.atleast_1d(sys.kin_residual(initial.eps, initial.m_next))
    if k0.size and np.max(np.abs(k0)) > kin_tol:
        raise ValueError(f"initial pair violates the kinematic constraint by {np.max(np.abs(k0)):.3e}")
    pairs = [initial]
    guess = guess or default_guess
    for k in range(1, steps + 1):
        g = guess(sys, pairs)
        try:
            pairs.append(newton_step(sys, pairs[-1], g, tol=tol, max_iter=max_iter))
        except (NoConvergence, SingularJacobian) as exc:
            exc.step = k
            exc.args = (f"{exc.args[0]} at step {k}",)
            raise
        log.debug("%s step %d done", sys.name, k)
    return DiscretePath(pairs, bundle=sys.bundle)


# ---------------------------------------------------------------- verification

@dataclass
class TrajectoryReport:
    dynamic: np.ndarray
    kinematic: np.ndarray
    drift: np.ndarray
    compat: np.ndarray
    tol: float
    drift_tol: float
    wall_time: float = 0.0

    @property
    def steps(self):
        return len(self.kinematic)

    @property
    def max_dynamic(self):
        return float(np.max(self.dynamic)) if self.dynamic.size else 0.0

    @property
    def max_kinematic(self):
        return float(np.max(self.kinematic)) if self.kinematic.size else 0.0

    @property
    def max_drift(self):
        return float(np.max(self.drift)) if self.drift.size else 0.0

    @property
    def max_compat(self):
        return float(np.max(self.compat)) if self.compat.size else 0.0

    def failures(self):
        bad = ((self.dynamic > self.tol) | (self.kinematic > self.tol)
               | (self.drift > self.drift_tol) | (self.compat > COMPAT_TOL))
        return np.flatnonzero(bad)

    @property
    def first_failure(self):
        f = self.failures()
        return int(f[0]) if f.size else None

    @property
    def passed(self):
        return self.first_failure is None

    def summary(self):
        return {
            "steps": self.steps,
            "max_dynamic_residual": self.max_dynamic,
            "max_kinematic_residual": self.max_kinematic,
            "max_manifold_drift": self.max_drift,
            "max_compatibility_gap": self.max_compat,
            "tol": self.tol,
            "drift_tol": self.drift_tol,
            "pass": self.passed,
            "first_failure": self.first_failure,
            "wall_time": self.wall_time,
        }


def verify_trajectory(sys, path, tol=1e-10, drift_tol=1e-9):
    """Per-pair residual maxima; entry k of ``dynamic`` is the quad (pair k-1, pair k)."""
    pairs = list(path)
    n = len(pairs)
    dyn = np.zeros(n)
    kin = np.zeros(n)
    drift = np.zeros(n)
    compat = np.zeros(n)
    b = sys.bundle
    for k, pp in enumerate(pairs):
        kr = np.atleast_1d(sys.kin_residual(pp.eps, pp.m_next))
        kin[k] = float(np.max(np.abs(kr))) if kr.size else 0.0
        drift[k] = max(b.drift(pp.eps), b.base.drift(pp.m_next))
        if k == 0:
            continue
        prev = pairs[k - 1]
        compat[k] = b.base.distance(b.phi(pp.eps), prev.m_next)
        r = residual_vector(sys, prev, pp, check=False)[: sys.n_var]
        dyn[k] = float(np.max(np.abs(r))) if r.size else 0.0
    return TrajectoryReport(dyn, kin, drift, compat, tol, drift_tol)


def _chart_directions(manifold, p):
    return [manifold.tangent(p, e) for e in np.eye(manifold.dim)]


def fd_check_gradients(sys, samples, h=GRAD_STEP):
    """Largest relative gap between the analytic partials and central differences.

    For each sample the partial differentials are evaluated on every chart
    direction of E (D1) and of M (D2); the gap is measured relative to the
    largest entry of the resulting gradient vector.
    """
    if not 1e-8 <= h <= 1e-4:
        raise ValueError("finite-difference step must lie in [1e-8, 1e-4]")
    b = sys.bundle
    worst = 0.0
    for pp in samples:
        eps, m = pp.eps, pp.m_next
        dirs = [(t, b.base.zero_tangent(eps[1])) for t in _chart_directions(b.fiber, eps[0])]
        dirs += [(b.fiber.zero_tangent(eps[0]), t) for t in _chart_directions(b.base, eps[1])]
        a1 = np.array([sys.D1L(eps, m, d) for d in dirs])
        f1 = np.array([sys.D1L_fd(eps, m, d, h) for d in dirs])
        dm = _chart_directions(b.base, m)
        a2 = np.array([sys.D2L(eps, m, d) for d in dm])
        f2 = np.array([sys.D2L_fd(eps, m, d, h) for d in dm])
        for a, f in ((a1, f1), (a2, f2)):
            if a.size == 0:
                continue
            scale = max(np.max(np.abs(a)), np.max(np.abs(f)))
            gap = np.max(np.abs(a - f))
            if scale < 1e-14:
                rel = gap
            else:
                rel = gap / scale
            worst = max(worst, float(rel))
    return worst


# ---------------------------------------------------------------- transport

def _pair_gap(bundle, a, b):
    return max(bundle.fiber.distance(a.eps[0], b.eps[0]),
               bundle.base.distance(a.eps[1], b.eps[1]),
               bundle.base.distance(a.m_next, b.m_next))


def transport_system(sys, bundle, fwd, inv, fwd_diff, inv_diff, samples=(), name=None,
                     stepping_chart=None, roundtrip_tol=1e-12):
    """System induced on ``bundle`` by a bundle isomorphism (F, f).

    ``fwd = (F, f)`` and ``inv = (F^-1, f^-1)`` act on total-space points and
    base points; ``fwd_diff = (dF, df)`` and ``inv_diff`` map tangents,
    called as ``dF(eps, deps)``.
    """
    F, f = fwd
    Finv, finv = inv
    dF, df = fwd_diff
    dFinv, dfinv = inv_diff

    for pp in samples:
        back = PathPair(Finv(F(pp.eps)), finv(f(pp.m_next)))
        if _pair_gap(sys.bundle, pp, back) > roundtrip_tol:
            raise InconsistentDiffeo("inverse map does not undo the forward map on the samples")

    def pull(pp):
        return PathPair(Finv(pp.eps), finv(pp.m_next))

    def lagrangian(eps, m):
        return sys.lagrangian(Finv(eps), finv(m))

    def d1(eps, m, deps):
        return sys.D1L(Finv(eps), finv(m), dFinv(eps, deps))

    def d2(eps, m, dm):
        return sys.D2L(Finv(eps), finv(m), dfinv(m, dm))

    def var_basis(eps, m):
        e0 = Finv(eps)
        return [dF(e0, d) for d in sys.var_basis(e0, finv(m))]

    def kin_residual(eps, m):
        return sys.kin_residual(Finv(eps), finv(m))

    def chain_map(prev, cand, deps1):
        p0, p1 = pull(prev), pull(cand)
        return dF(p0.eps, sys.chain_map(p0, p1, dFinv(cand.eps, deps1)))

    return DldpsSystem(bundle=bundle, lagrangian=lagrangian, var_basis=var_basis,
                       kin_residual=kin_residual, chain_map=chain_map,
                       n_var=sys.n_var, n_kin=sys.n_kin, d1_lagrangian=d1, d2_lagrangian=d2,
                       name=name or f"{sys.name}'", stepping_chart=stepping_chart)


def identity_transport(sys, samples=()):
    ident = lambda p: p  # noqa: E731
    dident = lambda p, v: v  # noqa: E731
    return transport_system(sys, sys.bundle, (ident, ident), (ident, ident),
                            (dident, dident), (dident, dident), samples=samples)
