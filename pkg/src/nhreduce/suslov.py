"""The discrete Suslov rigid body on SO(3)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import llreduce
from .matgroup import SO3, ConstraintSubspace, cay, cay_inv, vee


class InvalidInertia(ValueError):
    pass


@dataclass(frozen=True)
class InertiaParams:
    """Inertia tensor entries with I12 = 0."""

    I11: float
    I22: float
    I33: float
    I13: float = 0.0
    I23: float = 0.0

    def __post_init__(self):
        vals = (self.I11, self.I22, self.I33, self.I13, self.I23)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidInertia("inertia entries must be finite")
        if np.min(np.linalg.eigvalsh(self.matrix)) <= 0:
            raise InvalidInertia("inertia tensor must be positive definite")

    @classmethod
    def from_matrix(cls, I, tol=1e-12):
        I = np.asarray(I, dtype=float)
        if I.shape != (3, 3):
            raise InvalidInertia("inertia tensor must be 3x3")
        if np.max(np.abs(I - I.T)) > tol:
            raise InvalidInertia("inertia tensor must be symmetric")
        if abs(I[0, 1]) > tol:
            raise InvalidInertia("the (1,2) inertia entry must vanish")
        return cls(I[0, 0], I[1, 1], I[2, 2], I[0, 2], I[1, 2])

    @classmethod
    def from_list(cls, values):
        values = [float(v) for v in values]
        if len(values) != 5:
            raise InvalidInertia("expected five inertia entries (I11, I22, I33, I13, I23)")
        return cls(*values)

    @property
    def matrix(self):
        return np.array([[self.I11, 0.0, self.I13],
                         [0.0, self.I22, self.I23],
                         [self.I13, self.I23, self.I33]])

    @property
    def J(self):
        return mass_tensor(self)


DEFAULT_INERTIA = (1.0, 2.0, 3.0, 0.0, 0.0)
DEFAULT_OMEGA = (0.2, 0.1)


def _params(I):
    if isinstance(I, InertiaParams):
        return I
    I = np.asarray(I, dtype=float)
    if I.shape == (3, 3):
        return InertiaParams.from_matrix(I)
    return InertiaParams.from_list(I)


def mass_tensor(I):
    p = _params(I)
    return np.array([[0.5 * (p.I22 + p.I33 - p.I11), 0.0, -p.I13],
                     [0.0, 0.5 * (p.I11 + p.I33 - p.I22), -p.I23],
                     [-p.I13, -p.I23, 0.5 * (p.I11 + p.I22 - p.I33)]])


def suslov_lagrangian(J, g0, g1):
    return -float(np.trace(g1 @ J @ g0.T))


def suslov_d1(J, g0, g1, dg0):
    """D1 L_d(g0, g1) on an ambient tangent dg0 (e.g. g0 w^)."""
    return -float(np.trace(g1 @ J @ dg0.T))


def suslov_d2(J, g0, g1, dg1):
    return -float(np.trace(dg1 @ J @ g0.T))


def sd_residual(W):
    """Third Cayley coordinate of W; zero exactly on cay(d)."""
    return float(cay_inv(W)[2])


def suslov_legendre(J, W):
    return llreduce.MomentumValue(W @ J - J @ W.T)


def suslov_spec(I):
    J = mass_tensor(I)
    return llreduce.LlSystemSpec(
        group=SO3(),
        lagrangian=lambda g0, g1: suslov_lagrangian(J, g0, g1),
        d1=lambda g0, g1, dg0: suslov_d1(J, g0, g1, dg0),
        d2=lambda g0, g1, dg1: suslov_d2(J, g0, g1, dg1),
        subspace=ConstraintSubspace(np.eye(3)[:2]),
        s_residual=sd_residual,
        n_kin=1,
        legendre=lambda W: W @ J - J @ W.T,
        legendre_diff=lambda W, dW: dW @ J - J @ dW.T,
        name="suslov",
    )


def build_suslov(level, I, h=None):
    """Suslov system at level ``full``, ``eta`` (optionally for connection h) or ``momentum``."""
    spec = suslov_spec(I)
    if level == "full":
        return llreduce.build_m_ll(spec)
    if level == "eta":
        return llreduce.reduce_to_eta(spec, h)
    if level == "momentum":
        if h is not None:
            raise ValueError("the momentum level is built over the canonical connection")
        return llreduce.build_m_s(spec)
    raise ValueError(f"unknown Suslov level {level!r}")


def initial_increment(omega=DEFAULT_OMEGA):
    return cay(np.array([omega[0], omega[1], 0.0]))


def initial_pair(level, I, g0=None, omega=DEFAULT_OMEGA):
    """Matched initial data: g1 = g0 W0 on the full level, W0 and L(W0) below it."""
    g0 = np.eye(3) if g0 is None else np.asarray(g0, dtype=float)
    W0 = initial_increment(omega)
    if level == "full":
        return llreduce.full_pair(g0, g0 @ W0)
    if level == "eta":
        return llreduce.eta_pair(W0)
    if level == "momentum":
        return llreduce.momentum_pair(suslov_spec(I), W0)
    raise ValueError(f"unknown Suslov level {level!r}")


def momentum_vector(J, W):
    return vee(W @ J - J @ W.T, tol=1e-9)
