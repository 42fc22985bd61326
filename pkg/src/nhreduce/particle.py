"""Nonholonomic particle on R^3 with G = R^2 translating (x, z) and H = z-translations.

Coordinates per level (fiber first, then base, as stored in a PathPair):

* full: eps = ((), (x0, y0, z0)), m = (x1, y1, z1)
* H-reduced: eps = ((w,), (x0, y0)), m = (x1, y1), with w = z1 - z0
* G-reduced: eps = ((u, w), (y0,)), m = (y1,), with u = x1 - x0
* G/H-reduced: eps = ((w, u), (y0,)), m = (y1,)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .connections import ReductionMap, abelian_translation_connection, lift_path
from .dldps import (BundleSpec, DiscretePath, DldpsSystem, Euclidean, PathPair, Point,
                    integrate, verify_trajectory)

_EMPTY = np.zeros(0)
STAGES = ("full", "H", "G", "G_over_H")


def _arr(*v):
    return np.array(v, dtype=float)


@dataclass(frozen=True)
class ParticleConfig:
    h_step: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.h_step) and self.h_step > 0):
            raise ValueError("h_step must be positive")


def _check_h(h_step):
    return ParticleConfig(float(h_step)).h_step


def constraint_residual(q0, q1):
    return q1[2] - q0[2] - 0.5 * (q0[1] + q1[1]) * (q1[0] - q0[0])


# ---------------------------------------------------------------- full system

def build_particle_full(h_step=0.1):
    h = _check_h(h_step)
    bundle = BundleSpec(Point(), Euclidean(3))

    def lagrangian(eps, m):
        d = m - eps[1]
        return float(d @ d) / (2 * h)

    def d1(eps, m, deps):
        return -float((m - eps[1]) @ deps[1]) / h

    def d2(eps, m, dm):
        return float((m - eps[1]) @ dm) / h

    def var_basis(eps, m):
        y0 = eps[1][1]
        return [(_EMPTY, _arr(1.0, 0.0, y0)), (_EMPTY, _arr(0.0, 1.0, 0.0))]

    def kin(eps, m):
        return constraint_residual(eps[1], m)

    def chain(prev, cand, deps1):
        return (_EMPTY, np.zeros(3))

    return DldpsSystem(bundle=bundle, lagrangian=lagrangian, var_basis=var_basis,
                       kin_residual=kin, chain_map=chain, n_var=2, n_kin=1,
                       d1_lagrangian=d1, d2_lagrangian=d2, name="particle/full")


# ---------------------------------------------------------------- reduced systems

def _build_h(h):
    bundle = BundleSpec(Euclidean(1), Euclidean(2))

    def lagrangian(eps, m):
        (w,), (x0, y0) = eps[0], eps[1]
        return ((m[0] - x0) ** 2 + (m[1] - y0) ** 2 + w ** 2) / (2 * h)

    def d1(eps, m, deps):
        (w,), (x0, y0) = eps[0], eps[1]
        return (w * deps[0][0] - (m[0] - x0) * deps[1][0] - (m[1] - y0) * deps[1][1]) / h

    def d2(eps, m, dm):
        x0, y0 = eps[1]
        return ((m[0] - x0) * dm[0] + (m[1] - y0) * dm[1]) / h

    def var_basis(eps, m):
        y0 = eps[1][1]
        return [(_arr(-y0), _arr(1.0, 0.0)), (_arr(0.0), _arr(0.0, 1.0))]

    def kin(eps, m):
        (w,), (x0, y0) = eps[0], eps[1]
        return w - 0.5 * (y0 + m[1]) * (m[0] - x0)

    def chain(prev, cand, deps1):
        y1 = prev.m_next[1]
        return (_arr(y1 * deps1[1][0]), np.zeros(2))

    return DldpsSystem(bundle=bundle, lagrangian=lagrangian, var_basis=var_basis,
                       kin_residual=kin, chain_map=chain, n_var=2, n_kin=1,
                       d1_lagrangian=d1, d2_lagrangian=d2, name="particle/H")


def _build_g_like(h, iu, iw, name):
    """G-reduced system (iu, iw) = (0, 1) and its G/H twin (iu, iw) = (1, 0)."""
    bundle = BundleSpec(Euclidean(2), Euclidean(1))

    def split(eps):
        f = eps[0]
        return f[iu], f[iw], eps[1][0]

    def lagrangian(eps, m):
        u, w, y0 = split(eps)
        return (u ** 2 + (m[0] - y0) ** 2 + w ** 2) / (2 * h)

    def d1(eps, m, deps):
        u, w, y0 = split(eps)
        return (u * deps[0][iu] + w * deps[0][iw] - (m[0] - y0) * deps[1][0]) / h

    def d2(eps, m, dm):
        return (m[0] - eps[1][0]) * dm[0] / h

    def fiber_vec(du, dw):
        v = np.zeros(2)
        v[iu], v[iw] = du, dw
        return v

    def var_basis(eps, m):
        y0 = eps[1][0]
        return [(fiber_vec(-1.0, -y0), _arr(0.0)), (np.zeros(2), _arr(1.0))]

    def kin(eps, m):
        u, w, y0 = split(eps)
        return w - 0.5 * (y0 + m[0]) * u

    def chain(prev, cand, deps1):
        y1 = prev.m_next[0]
        du = deps1[0][iu]
        return (fiber_vec(-du, -y1 * du), _arr(0.0))

    return DldpsSystem(bundle=bundle, lagrangian=lagrangian, var_basis=var_basis,
                       kin_residual=kin, chain_map=chain, n_var=2, n_kin=1,
                       d1_lagrangian=d1, d2_lagrangian=d2, name=name)


def build_particle_reduced(stage, h_step=0.1):
    h = _check_h(h_step)
    if stage == "H":
        return _build_h(h)
    if stage == "G":
        return _build_g_like(h, 0, 1, "particle/G")
    if stage == "G_over_H":
        return _build_g_like(h, 1, 0, "particle/G_over_H")
    raise ValueError(f"unknown stage {stage!r}")


def build_particle(stage, h_step=0.1):
    if stage == "full":
        return build_particle_full(h_step)
    return build_particle_reduced(stage, h_step)


# ---------------------------------------------------------------- connections and reduction maps

CONN_H = abelian_translation_connection(3, [2])
CONN_G = abelian_translation_connection(3, [0, 2])
CONN_G_OVER_H = abelian_translation_connection(2, [0])


def _upsilon_h():
    def forward(eps, m):
        q0 = eps[1]
        return (_arr(m[2] - q0[2]), _arr(q0[0], q0[1])), _arr(m[0], m[1])

    def lift(v, r, seed):
        (w,), (x0, y0) = v
        z0 = seed[2]
        return (_EMPTY, _arr(x0, y0, z0)), _arr(r[0], r[1], z0 + w)

    def diff(eps, m, deps, dm):
        dq0 = deps[1]
        return (_arr(dm[2] - dq0[2]), _arr(dq0[0], dq0[1])), _arr(dm[0], dm[1])

    def act(g, eps, m):
        s = _arr(0.0, 0.0, float(np.ravel(g)[0]))
        return (eps[0], eps[1] + s), m + s

    return ReductionMap(forward=forward, lift=lift, diff=diff, act=act, name="upsilon_H")


def _upsilon_g():
    def forward(eps, m):
        q0 = eps[1]
        return (_arr(m[0] - q0[0], m[2] - q0[2]), _arr(q0[1])), _arr(m[1])

    def lift(v, r, seed):
        (u, w), (y0,) = v
        x0, z0 = seed[0], seed[2]
        return (_EMPTY, _arr(x0, y0, z0)), _arr(x0 + u, r[0], z0 + w)

    def diff(eps, m, deps, dm):
        dq0 = deps[1]
        return (_arr(dm[0] - dq0[0], dm[2] - dq0[2]), _arr(dq0[1])), _arr(dm[1])

    def act(g, eps, m):
        s = _arr(g[0], 0.0, g[1])
        return (eps[0], eps[1] + s), m + s

    return ReductionMap(forward=forward, lift=lift, diff=diff, act=act, name="upsilon_G")


def _upsilon_g_over_h():
    """From the H-reduced level by the residual x-translations."""

    def forward(eps, m):
        (w,), (x0, y0) = eps[0], eps[1]
        return (_arr(w, m[0] - x0), _arr(y0)), _arr(m[1])

    def lift(v, r, seed):
        (w, u), (y0,) = v
        x0 = seed[0]
        return (_arr(w), _arr(x0, y0)), _arr(x0 + u, r[0])

    def diff(eps, m, deps, dm):
        return (_arr(deps[0][0], dm[0] - deps[1][0]), _arr(deps[1][1])), _arr(dm[1])

    def act(g, eps, m):
        s = _arr(float(np.ravel(g)[0]), 0.0)
        return (eps[0], eps[1] + s), m + s

    return ReductionMap(forward=forward, lift=lift, diff=diff, act=act, name="upsilon_G_over_H")


UPSILON_H = _upsilon_h()
UPSILON_G = _upsilon_g()
UPSILON_G_OVER_H = _upsilon_g_over_h()


def upsilon_staged(stage):
    """Reduction map for ``H`` and ``G`` (from the full level) or ``G_over_H`` (from the H level)."""
    return {"H": UPSILON_H, "G": UPSILON_G, "G_over_H": UPSILON_G_OVER_H}[stage]


def staged_f_map(pp):
    """((y0, w, u), y1) -> ((y0, u, w), y1)."""
    f = pp.eps[0]
    return PathPair((_arr(f[1], f[0]), np.array(pp.eps[1], dtype=float)), np.array(pp.m_next, dtype=float))


def staged_f_inverse(pp):
    f = pp.eps[0]
    return PathPair((_arr(f[1], f[0]), np.array(pp.eps[1], dtype=float)), np.array(pp.m_next, dtype=float))


def pair_distance(a, b):
    parts = [np.ravel(a.eps[0]) - np.ravel(b.eps[0]), np.ravel(a.eps[1]) - np.ravel(b.eps[1]),
             np.ravel(a.m_next) - np.ravel(b.m_next)]
    d = np.concatenate(parts)
    return float(np.max(np.abs(d))) if d.size else 0.0


def path_distance(a, b):
    if len(a) != len(b):
        raise ValueError("paths have different lengths")
    return max((pair_distance(p, q) for p, q in zip(a, b)), default=0.0)


# ---------------------------------------------------------------- initial data, projections

def initial_full_pair(q0=(0.0, 1.0, 0.0), dxy=(0.1, 0.05)):
    """Initial pair with z1 fixed by the discrete constraint."""
    q0 = np.asarray(q0, dtype=float)
    x1, y1 = q0[0] + dxy[0], q0[1] + dxy[1]
    z1 = q0[2] + 0.5 * (q0[1] + y1) * dxy[0]
    return PathPair((_EMPTY, q0.copy()), _arr(x1, y1, z1))


def project_full(path, stage):
    """Project a full path to ``H``, ``G`` or ``G_over_H`` coordinates."""
    if stage == "full":
        return DiscretePath(list(path), check=False)
    if stage == "G_over_H":
        return UPSILON_G_OVER_H.path(UPSILON_H.path(path))
    return upsilon_staged(stage).path(path)


def initial_pair(stage, q0=(0.0, 1.0, 0.0), dxy=(0.1, 0.05)):
    full = initial_full_pair(q0, dxy)
    return project_full([full], stage)[0]


def simulate(stage, h_step=0.1, steps=100, q0=(0.0, 1.0, 0.0), dxy=(0.1, 0.05), tol=1e-12, max_iter=50):
    sys = build_particle(stage, h_step)
    return sys, integrate(sys, initial_pair(stage, q0, dxy), steps, tol=tol, max_iter=max_iter)


def reconstruct_two_stage(gh_path, q0_seed):
    """Lift a G/H path to the H level and then to the full level."""
    q0_seed = np.asarray(q0_seed, dtype=float)
    h_path = lift_path(UPSILON_G_OVER_H, gh_path, q0_seed[:2])
    return lift_path(UPSILON_H, h_path, q0_seed)


def reconstruct_from_g(g_path, q0_seed):
    return lift_path(UPSILON_G, g_path, np.asarray(q0_seed, dtype=float))


# ---------------------------------------------------------------- staged equivalence

def connection_conjugation_gap(rng=None, samples=100):
    """Largest |A^H(g m0, g m1) - g A^H(m0, m1) g^-1| over G translations.

    Samples are dyadic so every sum is exact in floating point; the gap is
    then exactly zero for an abelian group.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(samples):
        m0, m1 = rng.integers(-4096, 4096, size=(2, 3)) / 1024.0
        a, c = rng.integers(-4096, 4096, size=2) / 1024.0
        shift = _arr(a, 0.0, c)
        lhs = CONN_H.form(m0 + shift, m1 + shift)
        rhs = (c + CONN_H.form(m0, m1)) - c
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


@dataclass
class StagedReport:
    reports: dict
    f_deviation: float
    conjugation_gap: float
    tol: float
    f_tol: float
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return self.first_failure is None

    @property
    def first_failure(self):
        for name, ok in self.checks:
            if not ok:
                return name
        return None

    def summary(self):
        out = {name: rep.summary() for name, rep in self.reports.items()}
        out["F_deviation"] = self.f_deviation
        out["conjugation_gap"] = self.conjugation_gap
        out["pass"] = self.passed
        out["first_failure"] = self.first_failure
        return out


def staged_check(h_step, full_path, h_path=None, g_path=None, gh_path=None, tol=1e-9, f_tol=1e-12):
    """Verify a full path and its three reduced images; projections are computed when not given."""
    h_path = project_full(full_path, "H") if h_path is None else h_path
    g_path = project_full(full_path, "G") if g_path is None else g_path
    gh_path = UPSILON_G_OVER_H.path(h_path) if gh_path is None else gh_path
    reports = {}
    for stage, path in (("full", full_path), ("H", h_path), ("G", g_path), ("G_over_H", gh_path)):
        reports[stage] = verify_trajectory(build_particle(stage, h_step), path, tol=tol)
    f_dev = path_distance([staged_f_map(pp) for pp in gh_path], g_path)
    gap = connection_conjugation_gap()
    checks = [(stage, rep.passed) for stage, rep in reports.items()]
    checks += [("F", f_dev <= f_tol), ("connection", gap == 0.0)]
    return StagedReport(reports, f_dev, gap, tol, f_tol, checks)


def staged_equivalence_test(h_step=0.1, initial=None, steps=100, tol=1e-9):
    """Integrate the full system, project it by stages and check everything."""
    initial = initial_full_pair() if initial is None else initial
    sys = build_particle_full(h_step)
    path = integrate(sys, initial, steps)
    return staged_check(h_step, path, tol=tol)
