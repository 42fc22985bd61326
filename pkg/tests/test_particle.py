import numpy as np
import pytest

import oracles as O
from nhreduce import dldps, particle
from nhreduce.connections import lift_path
from nhreduce.dldps import PathPair

_E = np.zeros(0)
H = 0.1


@pytest.fixture(scope="module")
def full_run():
    return dldps.integrate(particle.build_particle_full(H), particle.initial_full_pair(), 100)


def _fp(q0, q1):
    return PathPair((_E, np.asarray(q0, float)), np.asarray(q1, float))


def _dyadic(rng, shape, scale=64.0):
    return rng.integers(-2000, 2000, size=shape) / scale


def test_h_step_must_be_positive():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(ValueError):
            particle.build_particle_full(bad)


def test_full_system_dimensions():
    sys = particle.build_particle_full(H)
    assert (sys.n_var, sys.n_kin, sys.bundle.total_dim) == (2, 1, 3)


def test_full_system_translation_invariance_exact(rng):
    sys = particle.build_particle_full(H)
    for _ in range(200):
        q0, q1, q2 = _dyadic(rng, (3, 3))
        a, c = _dyadic(rng, 2)
        s = np.array([a, 0.0, c])
        r = dldps.residual_vector(sys, _fp(q0, q1), _fp(q1, q2))
        t = dldps.residual_vector(sys, _fp(q0 + s, q1 + s), _fp(q1 + s, q2 + s))
        assert np.array_equal(r, t)
        assert sys.lagrangian((_E, q0 + s), q1 + s) == sys.lagrangian((_E, q0), q1)
        assert all(np.array_equal(u[1], v[1]) for u, v in
                   zip(sys.var_basis((_E, q0), q1), sys.var_basis((_E, q0 + s), q1 + s)))


def test_motion_along_y_is_a_trajectory():
    sys = particle.build_particle_full(H)
    start = particle.initial_full_pair(q0=(1.0, 0.0, 2.0), dxy=(0.0, 0.1))
    path = dldps.integrate(sys, start, 20)
    assert dldps.verify_trajectory(sys, path).passed
    for pp in path:
        assert pp.m_next[0] == 1.0 and pp.m_next[2] == 2.0
    assert abs(path[-1].m_next[1] - 2.1) <= 1e-12


def test_reduced_kinematics_hold_on_images(rng):
    sys_h = particle.build_particle_reduced("H", H)
    for _ in range(50):
        q0 = rng.normal(size=3)
        pp = particle.initial_full_pair(q0, rng.normal(size=2))
        v = particle.UPSILON_H.pair(pp)
        assert abs(sys_h.kin_residual(v.eps, v.m_next)) <= 1e-15


@pytest.mark.parametrize("stage", ["H", "G", "G_over_H"])
def test_chain_map_is_vertical(stage, rng):
    sys = particle.build_particle_reduced(stage, H)
    full = particle.build_particle_full(H)
    q0, q1, q2 = rng.normal(size=(3, 3))
    prev = particle.project_full([_fp(q0, q1)], stage)[0]
    cand = particle.project_full([_fp(q1, q2)], stage)[0]
    for d in sys.var_basis(cand.eps, cand.m_next):
        out = sys.chain_map(prev, cand, d)
        assert np.array_equal(out[1], np.zeros_like(out[1]))
    assert full.n_var == sys.n_var


def _pullback_gap(sys_up, sys_down, umap, quads):
    worst = 0.0
    for prev, cand in quads:
        pd, cd = umap.pair(prev), umap.pair(cand)
        for d in sys_up.var_basis(cand.eps, cand.m_next):
            dm = np.zeros_like(cand.m_next)
            img = umap.diff(cand.eps, cand.m_next, d, dm)[0]
            lhs = dldps.eval_nu_d(sys_up, prev, cand, d)
            rhs = dldps.eval_nu_d(sys_down, pd, cd, img)
            worst = max(worst, abs(lhs - rhs))
    return worst


@pytest.mark.parametrize("stage", ["H", "G"])
def test_reduced_section_pulls_back_from_full(stage, rng):
    full = particle.build_particle_full(H)
    red = particle.build_particle_reduced(stage, H)
    quads = []
    for _ in range(500):
        q0, q1, q2 = rng.normal(size=(3, 3))
        quads.append((_fp(q0, q1), _fp(q1, q2)))
    assert _pullback_gap(full, red, particle.upsilon_staged(stage), quads) <= 1e-10


def test_second_stage_section_pulls_back_from_h_level(rng):
    up = particle.build_particle_reduced("H", H)
    down = particle.build_particle_reduced("G_over_H", H)
    quads = []
    for _ in range(500):
        (x0, y0, w0), (x1, y1, w1), (x2, y2) = rng.normal(size=3), rng.normal(size=3), rng.normal(size=2)
        prev = PathPair((np.array([w0]), np.array([x0, y0])), np.array([x1, y1]))
        cand = PathPair((np.array([w1]), np.array([x1, y1])), np.array([x2, y2]))
        quads.append((prev, cand))
    assert _pullback_gap(up, down, particle.UPSILON_G_OVER_H, quads) <= 1e-10


def test_reduced_partials_match_finite_differences(rng):
    for stage in ("H", "G", "G_over_H"):
        sys = particle.build_particle_reduced(stage, H)
        samples = []
        for _ in range(20):
            q0, q1 = rng.normal(size=(2, 3))
            samples.append(particle.project_full([_fp(q0, q1)], stage)[0])
        assert dldps.fd_check_gradients(sys, samples) <= 1e-6


def test_f_map_composition_exact(rng):
    worst = 0.0
    for _ in range(1000):
        q0, q1 = rng.normal(size=(2, 3)) * 3
        pp = _fp(q0, q1)
        two = particle.UPSILON_G_OVER_H.pair(particle.UPSILON_H.pair(pp))
        worst = max(worst, particle.pair_distance(particle.staged_f_map(two), particle.UPSILON_G.pair(pp)))
    assert worst == 0.0


def test_f_map_is_a_bijection(rng):
    for _ in range(100):
        pp = PathPair((rng.normal(size=2), rng.normal(size=1)), rng.normal(size=1))
        back = particle.staged_f_inverse(particle.staged_f_map(pp))
        assert particle.pair_distance(back, pp) == 0.0
        img = particle.staged_f_map(pp)
        assert np.array_equal(img.eps[1], pp.eps[1]) and np.array_equal(img.m_next, pp.m_next)


def test_staged_equivalence_generic():
    rep = particle.staged_equivalence_test(H, particle.initial_full_pair(), 100)
    assert rep.passed, rep.summary()
    assert rep.f_deviation == 0.0
    for r in rep.reports.values():
        assert r.max_dynamic <= 1e-9 and r.max_kinematic <= 1e-9


def test_staged_equivalence_y_motion():
    start = particle.initial_full_pair(q0=(0.0, 0.0, 0.0), dxy=(0.0, 0.2))
    assert particle.staged_equivalence_test(H, start, 10).passed


def test_corrupted_stage_is_localized(full_run):
    g = list(particle.project_full(full_run, "G"))
    g[40] = PathPair((g[40].eps[0] + np.array([1e-4, 0.0]), g[40].eps[1]), g[40].m_next)
    rep = particle.staged_check(H, full_run, g_path=g)
    assert not rep.reports["G"].passed
    assert rep.reports["full"].passed and rep.reports["H"].passed and rep.reports["G_over_H"].passed
    assert rep.first_failure == "G"


def test_independent_reduced_integrations_agree(full_run):
    for stage in ("H", "G", "G_over_H"):
        _, path = particle.simulate(stage, H, 100)
        assert particle.path_distance(path, particle.project_full(full_run, stage)) <= 1e-9


def test_second_stage_residual_invariance(full_run, rng):
    sys = particle.build_particle_reduced("H", H)
    h_path = list(particle.project_full(full_run, "H"))
    base = dldps.verify_trajectory(sys, h_path)
    shift = rng.normal()
    moved = [PathPair((pp.eps[0], pp.eps[1] + np.array([shift, 0.0])), pp.m_next + np.array([shift, 0.0]))
             for pp in h_path]
    rep = dldps.verify_trajectory(sys, moved)
    assert np.max(np.abs(rep.dynamic - base.dynamic)) <= 1e-12
    assert np.max(np.abs(rep.kinematic - base.kinematic)) <= 1e-12


def test_reconstruction_both_routes(full_run):
    seed = full_run[0].eps[1]
    via_g = particle.reconstruct_from_g(particle.project_full(full_run, "G"), seed)
    via_stages = particle.reconstruct_two_stage(particle.project_full(full_run, "G_over_H"), seed)
    via_h = lift_path(particle.UPSILON_H, particle.project_full(full_run, "H"), seed)
    for lifted in (via_g, via_stages, via_h):
        assert particle.path_distance(lifted, full_run) <= 1e-9


def test_connection_condition_for_h():
    assert particle.connection_conjugation_gap() == 0.0


def test_full_residual_closed_form(full_run):
    pairs = list(full_run)
    for k in range(1, len(pairs)):
        dyn, kin = O.particle_residual(pairs[k - 1].eps[1], pairs[k].eps[1], pairs[k].m_next, H)
        assert np.max(np.abs(dyn)) <= 1e-10 and abs(kin) <= 1e-12
