"""Matrix Lie group kernel: SO(3) and abelian translation groups.

Algebra elements are carried as coordinate vectors (the ``vee`` image);
duals of the algebra are identified with the algebra through the trace
pairing ``<A, B> = tr(A B^T) / 2``, so on so(3) a covector is stored as
a skew matrix and its pairing with a skew matrix equals the dot product
of the vee images.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL_ORTH = 1e-10
SKEW_TOL = 1e-12
# cay_inv is rejected once the rotation angle gets this close to pi
ANGLE_MARGIN = 1e-6


class AngleAtPi(ValueError):
    """Rotation angle at (or numerically too close to) pi: no Cayley preimage."""


def hat(v):
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def vee(S, tol=SKEW_TOL):
    S = np.asarray(S, dtype=float)
    sym = 0.5 * (S + S.T)
    if np.linalg.norm(sym) > tol:
        raise ValueError(f"vee: matrix is not skew (symmetric part {np.linalg.norm(sym):.3e})")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def skew_part(A):
    return 0.5 * (A - A.T)


def cay(omega):
    """Cayley transform (I + w/2)(I - w/2)^-1; accepts a 3-vector or a skew matrix.

    Evaluated as I + 4/(4 + |w|^2) (w^ + w^2/2), whose antisymmetric part is
    an exact multiple of w^.
    """
    w = np.asarray(omega, dtype=float)
    if w.shape == (3, 3):
        w = np.array([w[2, 1], w[0, 2], w[1, 0]])
    W = hat(w)
    c = 4.0 / (4.0 + float(w @ w))
    return np.eye(3) + c * (W + 0.5 * (np.outer(w, w) - float(w @ w) * np.eye(3)))


def rotation_angle(W):
    c = np.clip(0.5 * (np.trace(W) - 1.0), -1.0, 1.0)
    return float(np.arccos(c))


def cay_inv(W):
    """Inverse Cayley map of a rotation, 2 vee(W - W^T) / (1 + tr W), as a 3-vector."""
    W = np.asarray(W, dtype=float)
    if rotation_angle(W) > np.pi - ANGLE_MARGIN:
        raise AngleAtPi(f"rotation angle {rotation_angle(W):.12f} too close to pi")
    d = 1.0 + float(np.trace(W))
    return 2.0 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]]) / d


def axis_angle(axis, angle):
    """Rodrigues rotation; used for building test rotations, not by the integrators."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = hat(k)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


def trace_pairing(A, B):
    return 0.5 * float(np.trace(np.asarray(A) @ np.asarray(B).T))


def ad_star(W, p):
    """Coadjoint action Ad*_W p = W^T p W for a dual element stored as a skew matrix."""
    return skew_part(W.T @ p @ W)


def project_to_so3(W):
    """Nearest rotation by polar decomposition."""
    U, _, Vt = np.linalg.svd(W)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


def orthogonality_drift(W):
    return float(np.max(np.abs(W.T @ W - np.eye(3))))


@dataclass(frozen=True)
class So3Element:
    mat: np.ndarray
    tol: float = TOL_ORTH

    def __post_init__(self):
        m = np.array(self.mat, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("So3Element needs a 3x3 matrix")
        if orthogonality_drift(m) > self.tol or abs(np.linalg.det(m) - 1.0) > self.tol:
            raise ValueError("matrix is not a rotation within tolerance")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)


@dataclass(frozen=True)
class So3AlgebraElement:
    omega: np.ndarray

    def __post_init__(self):
        w = np.array(self.omega, dtype=float).reshape(3)
        w.setflags(write=False)
        object.__setattr__(self, "omega", w)

    @property
    def skew(self):
        return hat(self.omega)


class SO3:
    """SO(3) acting on itself by left multiplication."""

    dim = 3
    name = "so3"

    def identity(self):
        return np.eye(3)

    def mul(self, a, b):
        return a @ b

    def inv(self, a):
        return a.T

    def hat(self, v):
        return hat(v)

    def vee(self, A):
        return vee(A, tol=1e-9)

    def cay(self, v):
        return cay(v)

    def cay_inv(self, W):
        return cay_inv(W)

    def left_tangent(self, g, v):
        """dL_g(e)(v^) = g v^."""
        return g @ hat(v)

    def right_tangent(self, v, g):
        """dR_g(e)(v^) = v^ g."""
        return hat(v) @ g

    def left_trivialize(self, g, dg):
        return vee(skew_part(g.T @ dg), tol=np.inf)

    def right_trivialize(self, g, dg):
        return vee(skew_part(dg @ g.T), tol=np.inf)

    def ad(self, g, v):
        return g @ np.asarray(v, dtype=float)

    def ad_star_vec(self, g, p):
        """Coadjoint action on vee coordinates: vee(g^T p^ g) = g^T p."""
        return g.T @ np.asarray(p, dtype=float)

    def random(self, rng, max_angle=np.pi - 0.1):
        axis = rng.normal(size=3)
        return axis_angle(axis, rng.uniform(-max_angle, max_angle))

    def drift(self, g):
        return orthogonality_drift(g)


class Translations:
    """The abelian group R^n; every exponential-like map is the identity."""

    name = "translations"

    def __init__(self, n):
        self.dim = int(n)

    def identity(self):
        return np.zeros(self.dim)

    def mul(self, a, b):
        return np.asarray(a, dtype=float) + np.asarray(b, dtype=float)

    def inv(self, a):
        return -np.asarray(a, dtype=float)

    def hat(self, v):
        return np.asarray(v, dtype=float)

    def vee(self, A):
        return np.asarray(A, dtype=float)

    def cay(self, v):
        return np.asarray(v, dtype=float)

    def cay_inv(self, W):
        return np.asarray(W, dtype=float)

    def left_tangent(self, g, v):
        return np.asarray(v, dtype=float)

    def right_tangent(self, v, g):
        return np.asarray(v, dtype=float)

    def left_trivialize(self, g, dg):
        return np.asarray(dg, dtype=float)

    def right_trivialize(self, g, dg):
        return np.asarray(dg, dtype=float)

    def ad(self, g, v):
        return np.asarray(v, dtype=float)

    def ad_star_vec(self, g, p):
        return np.asarray(p, dtype=float)

    def random(self, rng, scale=1.0):
        return rng.normal(scale=scale, size=self.dim)

    def drift(self, g):
        return 0.0


@dataclass(frozen=True)
class ConstraintSubspace:
    """Subspace d of the algebra (in vee coordinates) and its pairing complement.

    The basis is orthonormalized at construction so ``project_onto`` returns
    plain pairing coefficients.
    """

    basis: np.ndarray
    annihilator_basis: np.ndarray = field(init=False)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        n = B.shape[1]
        if np.linalg.matrix_rank(B) != B.shape[0]:
            raise ValueError("constraint basis is linearly dependent")
        Q, _ = np.linalg.qr(B.T)
        Q = Q[:, : B.shape[0]]
        # QR may flip signs; keep each vector pointing like its input
        signs = np.sign(np.sum(Q * B.T, axis=0))
        signs[signs == 0] = 1.0
        Q = Q * signs
        _, _, Vt = np.linalg.svd(Q.T)
        comp = Vt[Q.shape[1]:]
        if comp.shape[0] + Q.shape[1] != n:
            raise ValueError("dimension mismatch in constraint subspace")
        Q.setflags(write=False)
        comp.setflags(write=False)
        object.__setattr__(self, "basis", Q.T.copy())
        object.__setattr__(self, "annihilator_basis", comp.copy())

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def ambient_dim(self):
        return self.basis.shape[1]

    def coefficients(self, v):
        return self.basis @ np.asarray(v, dtype=float)

    def contains(self, v, tol=1e-12):
        return bool(np.all(np.abs(self.annihilator_basis @ np.asarray(v, dtype=float)) <= tol))


def project_onto(subspace, A):
    """Pairing coefficients of A (skew matrix or vee vector) against the orthonormal basis."""
    A = np.asarray(A, dtype=float)
    v = vee(A, tol=1e-9) if A.shape == (3, 3) else A
    return subspace.coefficients(v)
