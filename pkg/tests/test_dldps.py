import numpy as np
import pytest

import oracles as O
from cases import GENERIC
from nhreduce import dldps, particle, suslov
from nhreduce.dldps import (BundleSpec, DldpsSystem, Euclidean, PathPair, Point)

_E = np.zeros(0)


def _full_pair(q0, q1):
    return PathPair((_E, np.asarray(q0, float)), np.asarray(q1, float))


def _constant_kin_system():
    """Equations that do not depend on the unknowns: a singular Jacobian."""
    return DldpsSystem(bundle=BundleSpec(Point(), Euclidean(1)), lagrangian=lambda e, m: 0.0,
                       var_basis=lambda e, m: [], kin_residual=lambda e, m: 1.0,
                       chain_map=lambda p, c, d: (_E, np.zeros(1)), n_var=0, n_kin=1)


def test_ill_posed_dimensions_rejected():
    with pytest.raises(dldps.IllPosedSystem):
        DldpsSystem(bundle=BundleSpec(Point(), Euclidean(3)), lagrangian=lambda e, m: 0.0,
                    var_basis=lambda e, m: [], kin_residual=lambda e, m: 0.0,
                    chain_map=lambda p, c, d: None, n_var=1, n_kin=1)


def test_incompatible_quad_rejected():
    sys = particle.build_particle_full(0.1)
    prev = _full_pair([0, 1, 0], [0.1, 1.0, 0.1])
    cand = _full_pair([0.2, 1.0, 0.1], [0.3, 1.0, 0.2])
    with pytest.raises(dldps.IncompatibleQuad):
        dldps.eval_nu_d(sys, prev, cand, (_E, np.array([1.0, 0, 1.0])))


def test_residual_matches_closed_form_particle(rng):
    h = 0.1
    sys = particle.build_particle_full(h)
    for _ in range(50):
        q0, q1, q2 = rng.normal(size=(3, 3))
        r = dldps.residual_vector(sys, _full_pair(q0, q1), _full_pair(q1, q2))
        dyn, kin = O.particle_residual(q0, q1, q2, h)
        assert np.allclose(r, np.append(dyn, kin), atol=1e-12)


def test_finite_difference_partials_used_when_missing(rng):
    base = particle.build_particle_full(0.1)
    bare = DldpsSystem(bundle=base.bundle, lagrangian=base.lagrangian, var_basis=base.var_basis,
                       kin_residual=base.kin_residual, chain_map=base.chain_map, n_var=2, n_kin=1)
    q0, q1, q2 = rng.normal(size=(3, 3))
    prev, cand = _full_pair(q0, q1), _full_pair(q1, q2)
    assert np.allclose(dldps.residual_vector(bare, prev, cand),
                       dldps.residual_vector(base, prev, cand), atol=1e-7)


def test_newton_step_solves_the_equations():
    sys = particle.build_particle_full(0.1)
    prev = particle.initial_full_pair()
    guess = dldps.default_guess(sys, [prev])
    stats = {}
    nxt = dldps.newton_step(sys, prev, guess, stats=stats)
    r = dldps.residual_vector(sys, prev, nxt)
    assert np.max(np.abs(r)) <= 1e-12
    assert 1 <= stats["iterations"] <= 10


def test_newton_far_guess_diverges():
    sys = suslov.build_suslov("eta", GENERIC)
    prev = suslov.initial_pair("eta", GENERIC)
    far = PathPair((O.rodrigues([1, 1, 0], 3.0), _E), _E)
    with pytest.raises(dldps.NoConvergence):
        dldps.newton_step(sys, prev, far, chart_radius=0.5)


def test_newton_singular_jacobian():
    sys = _constant_kin_system()
    prev = PathPair((_E, np.zeros(1)), np.zeros(1))
    with pytest.raises(dldps.SingularJacobian):
        dldps.newton_step(sys, prev, prev)


def test_integrate_reports_failing_step():
    sys = particle.build_particle_full(0.1)
    with pytest.raises(dldps.NoConvergence) as info:
        dldps.integrate(sys, particle.initial_full_pair(), 5, tol=1e-300, max_iter=3)
    assert info.value.step == 1


def test_integrate_rejects_infeasible_start():
    sys = particle.build_particle_full(0.1)
    with pytest.raises(ValueError):
        dldps.integrate(sys, _full_pair([0, 1, 0], [0.1, 1, 5.0]), 3)


def test_zero_steps_returns_initial_pair():
    sys = particle.build_particle_full(0.1)
    path = dldps.integrate(sys, particle.initial_full_pair(), 0)
    assert len(path) == 1


def test_verify_flags_the_corrupted_step(generic_eta):
    sys, path = generic_eta
    pairs = list(path)
    j = 37
    W = pairs[j].eps[0] @ O.cayley([1e-5, -2e-5, 0.0])
    pairs[j] = PathPair((W, _E), _E)
    rep = dldps.verify_trajectory(sys, pairs)
    assert rep.first_failure == j
    assert not rep.passed
    # the pair after the corrupted one is also inconsistent with it
    assert rep.failures().tolist() == [j, j + 1]


def test_verify_empty_path_passes():
    sys = particle.build_particle_full(0.1)
    rep = dldps.verify_trajectory(sys, [])
    assert rep.passed and rep.steps == 0


def test_report_summary_fields(generic_eta):
    sys, path = generic_eta
    s = dldps.verify_trajectory(sys, path).summary()
    assert s["pass"] and s["steps"] == len(path)
    assert s["max_dynamic_residual"] <= 1e-10


def test_compatibility_gap_is_reported():
    sys = particle.build_particle_full(0.1)
    path = list(dldps.integrate(sys, particle.initial_full_pair(), 3))
    bad = PathPair((_E, path[2].eps[1] + 1e-6), path[2].m_next)
    path[2] = bad
    rep = dldps.verify_trajectory(sys, path)
    assert rep.compat[2] > 1e-7 and rep.first_failure == 2


def test_discrete_path_chaining_check():
    b = BundleSpec(Point(), Euclidean(3))
    with pytest.raises(dldps.IncompatibleQuad):
        dldps.DiscretePath([_full_pair([0, 0, 0], [1, 0, 0]), _full_pair([2, 0, 0], [3, 0, 0])],
                           bundle=b)


def test_gradient_check_step_range():
    sys = particle.build_particle_full(0.1)
    with pytest.raises(ValueError):
        dldps.fd_check_gradients(sys, [], h=1e-3)


def test_gradient_check_catches_wrong_partial(rng):
    base = particle.build_particle_full(0.1)
    wrong = DldpsSystem(bundle=base.bundle, lagrangian=base.lagrangian, var_basis=base.var_basis,
                        kin_residual=base.kin_residual, chain_map=base.chain_map, n_var=2,
                        n_kin=1, d1_lagrangian=lambda e, m, d: 2 * base.D1L(e, m, d),
                        d2_lagrangian=base.d2_lagrangian)
    samples = [_full_pair(*rng.normal(size=(2, 3))) for _ in range(5)]
    assert dldps.fd_check_gradients(base, samples) < 1e-8
    assert dldps.fd_check_gradients(wrong, samples) > 0.1


# ---------------------------------------------------------------- transport

def _linear_transport(sys, A, samples=()):
    Ainv = np.linalg.inv(A)
    F = lambda e: (_E, A @ e[1])  # noqa: E731
    Finv = lambda e: (_E, Ainv @ e[1])  # noqa: E731
    dF = lambda e, d: (_E, A @ d[1])  # noqa: E731
    dFinv = lambda e, d: (_E, Ainv @ d[1])  # noqa: E731
    return dldps.transport_system(sys, sys.bundle, (F, lambda m: A @ m), (Finv, lambda m: Ainv @ m),
                                  (dF, lambda m, v: A @ v), (dFinv, lambda m, v: Ainv @ v),
                                  samples=samples)


def test_transport_pullback_identity(rng):
    sys = particle.build_particle_full(0.1)
    A = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    new = _linear_transport(sys, A)
    for _ in range(50):
        q0, q1, q2 = rng.normal(size=(3, 3))
        prev, cand = _full_pair(q0, q1), _full_pair(q1, q2)
        prev2, cand2 = _full_pair(A @ q0, A @ q1), _full_pair(A @ q1, A @ q2)
        for d in sys.var_basis(cand.eps, cand.m_next):
            lhs = dldps.eval_nu_d(sys, prev, cand, d)
            rhs = dldps.eval_nu_d(new, prev2, cand2, (_E, A @ d[1]))
            assert abs(lhs - rhs) < 1e-10
        k1 = dldps.residual_vector(sys, prev, cand)[2]
        k2 = dldps.residual_vector(new, prev2, cand2)[2]
        assert abs(k1 - k2) < 1e-12


def test_transport_maps_trajectories(rng):
    sys = particle.build_particle_full(0.1)
    A = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
    new = _linear_transport(sys, A)
    path = dldps.integrate(sys, particle.initial_full_pair(), 30)
    image = [_full_pair(A @ pp.eps[1], A @ pp.m_next) for pp in path]
    assert dldps.verify_trajectory(new, image).passed
    direct = dldps.integrate(new, image[0], 30)
    assert particle.path_distance(direct, image) < 1e-9


def test_transport_detects_inconsistent_inverse():
    sys = particle.build_particle_full(0.1)
    A = np.diag([1.0, 2.0, 3.0])
    sample = _full_pair([1, 2, 3], [4, 5, 6])
    bad = lambda e: (_E, e[1])  # noqa: E731
    ident = lambda m: m  # noqa: E731
    with pytest.raises(dldps.InconsistentDiffeo):
        dldps.transport_system(sys, sys.bundle, (lambda e: (_E, A @ e[1]), ident), (bad, ident),
                               (lambda e, d: d, lambda m, v: v), (lambda e, d: d, lambda m, v: v),
                               samples=[sample])


def test_identity_transport_is_neutral(rng):
    sys = suslov.build_suslov("full", GENERIC)
    same = dldps.identity_transport(sys, samples=[suslov.initial_pair("full", GENERIC)])
    g0, g1, g2 = (O.cayley(rng.normal(size=3) * 0.5) for _ in range(3))
    prev, cand = PathPair((_E, g0), g1), PathPair((_E, g1), g2)
    assert np.allclose(dldps.residual_vector(sys, prev, cand),
                       dldps.residual_vector(same, prev, cand), atol=1e-14)


def test_group_manifold_reprojection():
    m = dldps.GroupManifold(suslov.suslov_spec(GENERIC).group)
    W = O.cayley([0.1, 0.2, 0.3]) * (1 + 1e-9)
    assert m.drift(m.project(W)) < 1e-14
    exact = O.cayley([0.1, 0.2, 0.3])
    assert m.project(exact) is exact or m.drift(exact) > 1e-12
