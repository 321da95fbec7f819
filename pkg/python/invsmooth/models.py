"""
Process and measurement models for a rigid body carrying a rate gyro and a
velocity sensor with slowly drifting biases, observed by GPS-like position
fixes and by body-frame landmark points.

Each model comes with two Jacobian families: the invariant one (left-
invariant process error, left-invariant GPS, right-invariant landmarks) and
the multiplicative one (attitude error C^T C_hat, additive position and
biases).
"""

import enum
import logging

import numpy as np
from scipy.linalg import block_diag, cho_factor, LinAlgError

from invsmooth import lie
from invsmooth.errors import LengthMismatch, NonPsdCovariance, UnknownLandmark
from invsmooth.lie import BETA1, BETA2, DIM, PHI, RHO, cross

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
PSD_JITTER = 1e-12


class Convention(enum.Enum):
    LEFT = 'left'
    RIGHT = 'right'
    MULTIPLICATIVE = 'multiplicative'
    LINEAR = 'linear'


class MeasurementKind(enum.Enum):
    GPS = 'gps'
    LANDMARK = 'landmark'


def check_psd(P, name='covariance', symmetry_tol=SYMMETRY_TOL):
    """
    Raises NonPsdCovariance unless P is symmetric and P + jitter*I admits a
    Cholesky factorization.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NonPsdCovariance("{} must be square, got {}".format(
            name, P.shape))
    if not np.all(np.isfinite(P)):
        raise NonPsdCovariance("{} has non-finite entries".format(name))
    scale = max(1.0, np.abs(P).max())
    if np.abs(P - P.T).max() > symmetry_tol * scale:
        raise NonPsdCovariance("{} is not symmetric".format(name))
    try:
        cho_factor(P + PSD_JITTER * np.eye(P.shape[0]), lower=True)
    except LinAlgError:
        raise NonPsdCovariance("{} is not positive semi-definite".format(
            name))
    return P


class InteroceptiveSample(object):
    __slots__ = ('t', 'u1', 'u2')

    def __init__(self, t, u1, u2):
        self.t = float(t)
        self.u1 = np.asarray(u1, dtype=float)
        self.u2 = np.asarray(u2, dtype=float)

    def __repr__(self):
        return 'InteroceptiveSample(t={!r}, u1={!r}, u2={!r})'.format(
            self.t, self.u1.tolist(), self.u2.tolist())

    def __eq__(self, other):
        return (isinstance(other, InteroceptiveSample)
                and self.t == other.t
                and np.array_equal(self.u1, other.u1)
                and np.array_equal(self.u2, other.u2))

    __hash__ = None


def check_monotone(stamps, what='timestamps'):
    stamps = np.asarray(stamps, dtype=float)
    if stamps.size > 1 and np.any(np.diff(stamps) <= 0.0):
        raise LengthMismatch("{} must be strictly increasing".format(what))


class NoiseSpec(object):
    """
    Continuous-time process noise densities Q1..Q4 (gyro, velocity, gyro
    bias walk, velocity bias walk) and the GPS and landmark measurement
    covariances.
    """

    names = ('Q1', 'Q2', 'Q3', 'Q4', 'R_gps', 'R_landmark')

    def __init__(self, Q1, Q2, Q3, Q4, R_gps, R_landmark):
        for name, value in zip(self.names,
                               (Q1, Q2, Q3, Q4, R_gps, R_landmark)):
            value = np.asarray(value, dtype=float)
            if value.shape != (3, 3):
                raise NonPsdCovariance("{} must be 3x3".format(name))
            setattr(self, name, check_psd(value, name))

    def __repr__(self):
        return 'NoiseSpec({})'.format(', '.join(
            '{}={!r}'.format(name, getattr(self, name).tolist())
            for name in self.names))

    @classmethod
    def isotropic(cls, q1, q2, q3, q4, r_gps, r_landmark):
        eye = np.eye(3)
        return cls(q1 * eye, q2 * eye, q3 * eye, q4 * eye,
                   r_gps * eye, r_landmark * eye)

    @property
    def Q(self):
        return block_diag(self.Q1, self.Q2, self.Q3, self.Q4)

    def process_covariance(self, dt):
        """Discrete process noise Q_d = Q dt."""
        return self.Q * dt

    def measurement_covariance(self, kind, count=1):
        R = self.R_gps if kind is MeasurementKind.GPS else self.R_landmark
        return block_diag(*([R] * count))


class ExteroMeasurement(object):
    __slots__ = ('t', 'kind', 'value', 'landmark_id')

    def __init__(self, t, kind, value, landmark_id=None):
        kind = MeasurementKind(kind)
        if (landmark_id is None) != (kind is MeasurementKind.GPS):
            raise ValueError(
                "landmark_id must be given for landmark measurements only")
        self.t = float(t)
        self.kind = kind
        self.value = np.asarray(value, dtype=float)
        self.landmark_id = None if landmark_id is None else int(landmark_id)

    def __repr__(self):
        return 'ExteroMeasurement(t={!r}, kind={}, value={!r}{})'.format(
            self.t, self.kind.value, self.value.tolist(),
            '' if self.landmark_id is None
            else ', landmark_id={}'.format(self.landmark_id))

    def __eq__(self, other):
        return (isinstance(other, ExteroMeasurement)
                and self.t == other.t and self.kind is other.kind
                and self.landmark_id == other.landmark_id
                and np.array_equal(self.value, other.value))

    __hash__ = None

    @property
    def sort_key(self):
        # GPS before landmarks at equal stamps, landmarks by index
        return (self.t, self.kind is MeasurementKind.LANDMARK,
                -1 if self.landmark_id is None else self.landmark_id)


def measurement_batch(measurements):
    """Returns the measurements as a tuple in canonical processing order."""
    return tuple(sorted(measurements, key=lambda meas: meas.sort_key))


class LandmarkMap(object):
    def __init__(self, positions):
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        positions.setflags(write=False)
        self.positions = positions

    def __len__(self):
        return len(self.positions)

    def __repr__(self):
        return 'LandmarkMap({} landmarks)'.format(len(self))

    def position(self, landmark_id):
        if not 0 <= landmark_id < len(self.positions):
            raise UnknownLandmark(
                "landmark {} not in map of {} landmarks".format(
                    landmark_id, len(self.positions)))
        return self.positions[landmark_id]


class JacobianSet(object):
    """
    Discrete process linearization for one step: transition A_d, noise
    mapping L and discrete process noise Q_d, tagged with the error
    convention they were derived under.
    """

    __slots__ = ('convention', 'A', 'L', 'Q')

    def __init__(self, convention, A, L, Q):
        self.convention = convention
        self.A = A
        self.L = L
        self.Q = Q

    @property
    def noise(self):
        return self.L @ self.Q @ self.L.T


# ---------------------------------------------------------------------------
# Process model
# ---------------------------------------------------------------------------

def propagate(X, u, dt):
    """One forward-Euler step of the noise-free kinematics."""
    if dt <= 0.0:
        raise ValueError("dt must be positive, got {!r}".format(dt))
    C = X.attitude
    omega = u.u1 + X.bias_gyro
    velocity = u.u2 + X.bias_vel
    attitude = lie.normalize_rotation(C @ lie.exp_so3(omega * dt))
    return X.replace(attitude=attitude,
                     position=X.position + C @ velocity * dt)


def invariant_process_jacobians(u, beta_hat1, beta_hat2):
    """Continuous A and L of the left-invariant error dynamics."""
    A = np.zeros((DIM, DIM))
    omega_cross = cross(u.u1 + beta_hat1)
    A[PHI, PHI] = -omega_cross
    A[PHI, BETA1] = np.eye(3)
    A[RHO, PHI] = -cross(u.u2 + beta_hat2)
    A[RHO, RHO] = -omega_cross
    A[RHO, BETA2] = np.eye(3)
    return A, -np.eye(DIM)


def multiplicative_process_jacobians(u, C_hat, beta_hat1, beta_hat2):
    """Continuous A* and L* of the multiplicative error dynamics."""
    A = np.zeros((DIM, DIM))
    A[PHI, PHI] = -cross(u.u1 + beta_hat1)
    A[PHI, BETA1] = np.eye(3)
    A[RHO, PHI] = -C_hat @ cross(u.u2 + beta_hat2)
    A[RHO, BETA2] = C_hat
    L = -np.eye(DIM)
    L[RHO, RHO] = -C_hat
    return A, L


def discretize(A, L, noise, dt, convention):
    return JacobianSet(convention, np.eye(DIM) + A * dt, L,
                       noise.process_covariance(dt))


def linearize_process(convention, X_prev, X_next, u, dt, noise):
    """
    Discrete error transition from step k-1 (estimate X_prev) to step k
    (predicted estimate X_next) under the given convention.

    The right-invariant transition is the left-invariant one conjugated
    into right-invariant coordinates at both ends of the step.
    """
    if convention is Convention.MULTIPLICATIVE:
        A, L = multiplicative_process_jacobians(
            u, X_prev.attitude, X_prev.bias_gyro, X_prev.bias_vel)
        return discretize(A, L, noise, dt, convention)
    A, L = invariant_process_jacobians(u, X_prev.bias_gyro, X_prev.bias_vel)
    jacobians = discretize(A, L, noise, dt, Convention.LEFT)
    if convention is Convention.LEFT:
        return jacobians
    if convention is not Convention.RIGHT:
        raise ValueError("no process linearization for {}".format(
            convention))
    Ad_next = lie.adjoint(X_next)
    return JacobianSet(Convention.RIGHT,
                       Ad_next @ jacobians.A @ lie.inverse_adjoint(X_prev),
                       Ad_next @ jacobians.L, jacobians.Q)


# ---------------------------------------------------------------------------
# Measurement models
# ---------------------------------------------------------------------------

def gps_predict(X):
    return np.array(X.position)


def landmark_predict(X, landmarks, landmark_id):
    return X.attitude.T @ (landmarks.position(landmark_id) - X.position)


def predict(meas, X, landmarks=None):
    if meas.kind is MeasurementKind.GPS:
        return gps_predict(X)
    return landmark_predict(X, landmarks, meas.landmark_id)


def _check_kinds(measurements):
    kinds = {meas.kind for meas in measurements}
    if len(kinds) != 1:
        raise ValueError("measurements must all be of one kind")
    return kinds.pop()


def invariant_measurement_jacobians(kind, landmarks, X_check,
                                    landmark_ids=()):
    """
    H and M of the invariant innovation. GPS uses the left-invariant form,
    landmarks the right-invariant form with one row block per landmark id.
    """
    kind = MeasurementKind(kind)
    if kind is MeasurementKind.GPS:
        H = np.zeros((3, DIM))
        H[:, RHO] = -np.eye(3)
        return H, X_check.attitude.T
    H = np.zeros((3 * len(landmark_ids), DIM))
    for row, landmark_id in enumerate(landmark_ids):
        block = slice(3 * row, 3 * row + 3)
        H[block, PHI] = -cross(landmarks.position(landmark_id))
        H[block, RHO] = np.eye(3)
    M = block_diag(*([X_check.attitude] * len(landmark_ids)))
    return H, M


def multiplicative_measurement_jacobians(kind, landmarks, X_check,
                                         landmark_ids=()):
    kind = MeasurementKind(kind)
    if kind is MeasurementKind.GPS:
        H = np.zeros((3, DIM))
        H[:, RHO] = -np.eye(3)
        return H, np.eye(3)
    C_check = X_check.attitude
    H = np.zeros((3 * len(landmark_ids), DIM))
    for row, landmark_id in enumerate(landmark_ids):
        block = slice(3 * row, 3 * row + 3)
        relative = C_check.T @ (landmarks.position(landmark_id)
                                - X_check.position)
        H[block, PHI] = -cross(relative)
        H[block, RHO] = C_check.T
    return H, np.eye(3 * len(landmark_ids))


def innovation(kind, y, X_check, landmarks=None, landmark_id=None,
               convention=Convention.LEFT):
    """
    The 3-dimensional innovation. Invariant conventions use the left form
    for GPS and the right form for landmarks; the multiplicative convention
    uses the standard difference y - y_check.
    """
    kind = MeasurementKind(kind)
    if kind is MeasurementKind.GPS:
        difference = np.asarray(y, dtype=float) - gps_predict(X_check)
    else:
        difference = (np.asarray(y, dtype=float)
                      - landmark_predict(X_check, landmarks, landmark_id))
    if convention is Convention.MULTIPLICATIVE:
        return difference
    if kind is MeasurementKind.GPS:
        return X_check.attitude.T @ difference
    return X_check.attitude @ difference


def stacked_innovation(measurements, X_check, landmarks, convention):
    return np.concatenate([
        innovation(meas.kind, meas.value, X_check, landmarks,
                   meas.landmark_id, convention)
        for meas in measurements])


def measurement_jacobians(measurements, X_check, landmarks, convention):
    """
    H and M for a same-kind group of measurements at one step, in the
    Jacobian family of the given convention.
    """
    kind = _check_kinds(measurements)
    ids = [meas.landmark_id for meas in measurements]
    if convention is Convention.MULTIPLICATIVE:
        return multiplicative_measurement_jacobians(kind, landmarks, X_check,
                                                    ids)
    return invariant_measurement_jacobians(kind, landmarks, X_check, ids)


# ---------------------------------------------------------------------------
# Group-affine check
# ---------------------------------------------------------------------------

def bias_free_kinematics(X, u):
    """
    Time derivative of the 9x9 embedding with the biases frozen at zero and
    treated as known inputs.
    """
    return X @ lie.wedge(lie.tangent(u[0:3], u[3:6]))


def biased_kinematics(X, u):
    """Time derivative of the 9x9 embedding with the biases as states."""
    C = X[0:3, 0:3]
    F = np.zeros_like(X)
    F[0:3, 0:3] = C @ cross(u[0:3] + X[4:7, 7])
    F[0:3, 3] = C @ (u[3:6] + X[4:7, 8])
    return F


def is_group_affine(F, trials, rng=None, tol=1e-9):
    """
    Checks F(X1 X2, u) = X1 F(X2, u) + F(X1, u) X2 - X1 F(I, u) X2 on random
    embeddings and random 6-dimensional inputs.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    identity = np.eye(lie.EMBED_DIM)
    for trial in range(trials):
        X1 = lie.random_element(rng).embedding()
        X2 = lie.random_element(rng).embedding()
        u = rng.normal(size=6)
        lhs = F(X1 @ X2, u)
        rhs = X1 @ F(X2, u) + F(X1, u) @ X2 - X1 @ F(identity, u) @ X2
        if np.abs(lhs - rhs).max() > tol * max(1.0, np.abs(lhs).max()):
            logger.debug("group-affine identity fails at trial %d", trial)
            return False
    return True
