"""
The SO(3) rotation group and the SE(3)-with-bias group used by the
estimators.

A group element holds an attitude C, a position r and two bias blocks
(gyro and velocity). Its 9x9 matrix embedding is

    [ C  r  0  0   0  ]
    [ 0  1  0  0   0  ]
    [ 0  0  I  b1  b2 ]
    [ 0  0  0  1   0  ]
    [ 0  0  0  0   1  ]

so that the biases compose additively. Tangent vectors are 12-vectors laid
out as (phi, rho, dbeta1, dbeta2); the PHI, RHO, BETA1 and BETA2 slices
address the blocks.
"""

import logging

import numpy as np
from scipy.linalg import polar

from invsmooth.errors import MalformedAlgebraElement, NearPiRotation

logger = logging.getLogger(__name__)

DIM = 12
EMBED_DIM = 9

PHI = slice(0, 3)
RHO = slice(3, 6)
BETA1 = slice(6, 9)
BETA2 = slice(9, 12)
POSE = slice(0, 6)
BIASES = slice(6, 12)

SMALL_ANGLE = 1e-6
NEAR_PI = 1e-6
ORTHO_TOL = 1e-9
SPARSITY_TOL = 1e-12

# entries of the 9x9 algebra matrix that may be nonzero, besides the
# skew-symmetric attitude block
_ALGEBRA_MASK = np.zeros((EMBED_DIM, EMBED_DIM), dtype=bool)
_ALGEBRA_MASK[0:3, 0:3] = True
_ALGEBRA_MASK[0:3, 3] = True
_ALGEBRA_MASK[4:7, 7] = True
_ALGEBRA_MASK[4:7, 8] = True


def cross(v):
    """Skew-symmetric matrix with cross(a) @ b == np.cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def uncross(S):
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def tangent(phi=None, rho=None, dbeta1=None, dbeta2=None):
    """Assembles a 12-vector from its blocks; missing blocks are zero."""
    xi = np.zeros(DIM)
    for block, value in ((PHI, phi), (RHO, rho),
                         (BETA1, dbeta1), (BETA2, dbeta2)):
        if value is not None:
            xi[block] = value
    return xi


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


class GroupElement(object):
    """
    An element of the SE(3)-with-bias group. Instances are immutable; the
    arrays they expose are read-only.
    """

    __slots__ = ('attitude', 'position', 'bias_gyro', 'bias_vel')

    def __init__(self, attitude=None, position=None, bias_gyro=None,
                 bias_vel=None):
        set_ = object.__setattr__
        set_(self, 'attitude',
             _frozen(np.eye(3) if attitude is None else attitude))
        set_(self, 'position',
             _frozen(np.zeros(3) if position is None else position))
        set_(self, 'bias_gyro',
             _frozen(np.zeros(3) if bias_gyro is None else bias_gyro))
        set_(self, 'bias_vel',
             _frozen(np.zeros(3) if bias_vel is None else bias_vel))
        if self.attitude.shape != (3, 3):
            raise ValueError("attitude must be 3x3, got {}".format(
                self.attitude.shape))
        for name in ('position', 'bias_gyro', 'bias_vel'):
            if getattr(self, name).shape != (3,):
                raise ValueError("{} must be a 3-vector".format(name))

    def __setattr__(self, name, value):
        raise AttributeError("GroupElement is immutable")

    def __repr__(self):
        return ("GroupElement(attitude={!r}, position={!r}, bias_gyro={!r}, "
                "bias_vel={!r})".format(self.attitude.tolist(),
                                        self.position.tolist(),
                                        self.bias_gyro.tolist(),
                                        self.bias_vel.tolist()))

    def __reduce__(self):
        return (GroupElement, (np.array(self.attitude),
                               np.array(self.position),
                               np.array(self.bias_gyro),
                               np.array(self.bias_vel)))

    def __matmul__(self, other):
        return compose(self, other)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_embedding(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X[0:3, 0:3], X[0:3, 3], X[4:7, 7], X[4:7, 8])

    @property
    def biases(self):
        return np.concatenate([self.bias_gyro, self.bias_vel])

    @property
    def vector_part(self):
        """Position and biases stacked, the additive part of the state."""
        return np.concatenate([self.position, self.bias_gyro, self.bias_vel])

    def embedding(self):
        X = np.eye(EMBED_DIM)
        X[0:3, 0:3] = self.attitude
        X[0:3, 3] = self.position
        X[4:7, 7] = self.bias_gyro
        X[4:7, 8] = self.bias_vel
        return X

    def replace(self, attitude=None, position=None, bias_gyro=None,
                bias_vel=None):
        return GroupElement(
            self.attitude if attitude is None else attitude,
            self.position if position is None else position,
            self.bias_gyro if bias_gyro is None else bias_gyro,
            self.bias_vel if bias_vel is None else bias_vel)

    def allclose(self, other, atol=1e-10):
        return (np.allclose(self.attitude, other.attitude, rtol=0, atol=atol)
                and np.allclose(self.position, other.position,
                                rtol=0, atol=atol)
                and np.allclose(self.bias_gyro, other.bias_gyro,
                                rtol=0, atol=atol)
                and np.allclose(self.bias_vel, other.bias_vel,
                                rtol=0, atol=atol))


# ---------------------------------------------------------------------------
# SO(3)
# ---------------------------------------------------------------------------

def exp_so3(phi):
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    Phi = cross(phi)
    if angle < SMALL_ANGLE:
        return np.eye(3) + Phi + 0.5 * Phi @ Phi
    axis = phi / angle
    A = cross(axis)
    return (np.eye(3) + np.sin(angle) * A
            + (1.0 - np.cos(angle)) * A @ A)


def rotation_angle(C):
    skew = 0.5 * uncross(C - C.T)
    return np.arctan2(np.linalg.norm(skew), 0.5 * (np.trace(C) - 1.0))


def log_so3(C):
    C = np.asarray(C, dtype=float)
    skew = 0.5 * uncross(C - C.T)
    sin_angle = np.linalg.norm(skew)
    angle = np.arctan2(sin_angle, 0.5 * (np.trace(C) - 1.0))
    if np.pi - angle < NEAR_PI:
        raise NearPiRotation(
            "rotation angle {!r} is within {} of pi".format(angle, NEAR_PI))
    if angle < SMALL_ANGLE:
        return skew * (1.0 + angle * angle / 6.0)
    return skew * (angle / sin_angle)


def left_jacobian_so3(phi):
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle < SMALL_ANGLE:
        Phi = cross(phi)
        return np.eye(3) + 0.5 * Phi + Phi @ Phi / 6.0
    axis = phi / angle
    s = np.sin(angle) / angle
    return (s * np.eye(3) + (1.0 - s) * np.outer(axis, axis)
            + (1.0 - np.cos(angle)) / angle * cross(axis))


def inv_left_jacobian_so3(phi):
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle < SMALL_ANGLE:
        Phi = cross(phi)
        return np.eye(3) - 0.5 * Phi + Phi @ Phi / 12.0
    axis = phi / angle
    half = 0.5 * angle
    c = half / np.tan(half)
    return (c * np.eye(3) + (1.0 - c) * np.outer(axis, axis)
            - half * cross(axis))


def orthogonality_defect(C):
    return np.linalg.norm(C.T @ C - np.eye(3), 'fro')


def normalize_rotation(C):
    """
    Projects C onto SO(3) when its orthogonality defect exceeds the
    tolerance; otherwise returns it unchanged.
    """
    C = np.asarray(C, dtype=float)
    if orthogonality_defect(C) <= ORTHO_TOL:
        return C
    U, _ = polar(C)
    logger.debug("re-orthonormalized attitude (defect %.3g)",
                 orthogonality_defect(C))
    return U


# ---------------------------------------------------------------------------
# The SE(3)-with-bias group
# ---------------------------------------------------------------------------

def wedge(xi):
    xi = np.asarray(xi, dtype=float)
    Xi = np.zeros((EMBED_DIM, EMBED_DIM))
    Xi[0:3, 0:3] = cross(xi[PHI])
    Xi[0:3, 3] = xi[RHO]
    Xi[4:7, 7] = xi[BETA1]
    Xi[4:7, 8] = xi[BETA2]
    return Xi


def vee(Xi):
    Xi = np.asarray(Xi, dtype=float)
    if Xi.shape != (EMBED_DIM, EMBED_DIM):
        raise MalformedAlgebraElement(
            "expected a 9x9 matrix, got {}".format(Xi.shape))
    outside = np.abs(Xi[~_ALGEBRA_MASK])
    if outside.size and outside.max() > SPARSITY_TOL:
        raise MalformedAlgebraElement(
            "nonzero entry {:.3g} outside the algebra pattern".format(
                outside.max()))
    S = Xi[0:3, 0:3]
    if np.abs(S + S.T).max() > SPARSITY_TOL:
        raise MalformedAlgebraElement("attitude block is not skew-symmetric")
    return tangent(uncross(S), Xi[0:3, 3], Xi[4:7, 7], Xi[4:7, 8])


def exp_g(xi):
    xi = np.asarray(xi, dtype=float)
    phi = xi[PHI]
    return GroupElement(exp_so3(phi),
                        left_jacobian_so3(phi) @ xi[RHO],
                        xi[BETA1], xi[BETA2])


def log_g(X):
    phi = log_so3(X.attitude)
    return tangent(phi, inv_left_jacobian_so3(phi) @ X.position,
                   X.bias_gyro, X.bias_vel)


def adjoint(X):
    C = X.attitude
    Ad = np.eye(DIM)
    Ad[PHI, PHI] = C
    Ad[RHO, RHO] = C
    Ad[RHO, PHI] = cross(X.position) @ C
    return Ad


def inverse_adjoint(X):
    """Ad(X)^-1, which equals Ad(inverse(X))."""
    Ct = X.attitude.T
    Ad = np.eye(DIM)
    Ad[PHI, PHI] = Ct
    Ad[RHO, RHO] = Ct
    Ad[RHO, PHI] = -Ct @ cross(X.position)
    return Ad


def compose(X, Y):
    C = X.attitude
    return GroupElement(C @ Y.attitude,
                        C @ Y.position + X.position,
                        X.bias_gyro + Y.bias_gyro,
                        X.bias_vel + Y.bias_vel)


def inverse(X):
    Ct = X.attitude.T
    return GroupElement(Ct, -Ct @ X.position, -X.bias_gyro, -X.bias_vel)


def left_error(X, Xhat):
    """X^-1 Xhat"""
    return compose(inverse(X), Xhat)


def right_error(X, Xhat):
    """Xhat X^-1"""
    return compose(Xhat, inverse(X))


def random_rotation(rng, max_angle=np.pi - 1e-3):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_so3(axis * rng.uniform(0.0, max_angle))


def random_tangent(rng, max_angle=np.pi - 1e-3, scale=1.0):
    """
    A random 12-vector whose attitude block has norm below max_angle and
    whose remaining blocks are standard normal times scale.
    """
    xi = rng.normal(size=DIM) * scale
    axis = rng.normal(size=3)
    xi[PHI] = axis / np.linalg.norm(axis) * rng.uniform(0.0, max_angle)
    return xi


def random_element(rng, max_angle=np.pi - 1e-3, scale=1.0):
    return exp_g(random_tangent(rng, max_angle, scale))
