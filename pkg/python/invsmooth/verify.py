"""
Numerical self-checks: group axioms and exp/log/adjoint identities,
finite-difference checks of every Jacobian family, the group-affine
property of the process models and the ERT round trip.

Each check returns a CheckResult, the process check a pair of them;
run_checks() runs them all.
"""

import logging

import numpy as np

from invsmooth import estimators, lie, models
from invsmooth.lie import GroupElement
from invsmooth.models import (
    Convention, InteroceptiveSample, LandmarkMap, MeasurementKind)

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
FD_TOL = 1e-5
# I + A dt drops O(dt^2) terms of the one-step error map
DISCRETE_DT = 1e-3
DISCRETE_TOL = 1e-4

_UNIT_NOISE = models.NoiseSpec.isotropic(1, 1, 1, 1, 1, 1)


class CheckResult(object):
    def __init__(self, name, worst, tolerance, passed=None):
        self.name = name
        self.worst = float(worst)
        self.tolerance = tolerance
        self.passed = (self.worst <= tolerance) if passed is None else passed

    def __repr__(self):
        return 'CheckResult({!r}, worst={:.3g}, passed={})'.format(
            self.name, self.worst, self.passed)

    def __str__(self):
        return '{} {:<32} worst {:.3g} (tolerance {:.1g})'.format(
            'PASS' if self.passed else 'FAIL', self.name, self.worst,
            self.tolerance)


def relative_error(actual, expected):
    scale = max(np.linalg.norm(expected), 1e-300)
    return np.linalg.norm(np.asarray(actual) - expected) / scale


def random_sample(rng, scale=1.0):
    return InteroceptiveSample(0.0, rng.normal(size=3) * scale,
                               rng.normal(size=3) * scale)


def random_landmarks(rng, count=3, extent=5.0):
    return LandmarkMap(rng.uniform(-extent, extent, size=(count, 3)))


def central_difference(function, dim=lie.DIM, h=FD_STEP):
    columns = []
    for j in range(dim):
        step = np.zeros(dim)
        step[j] = h
        columns.append((function(step) - function(-step)) / (2.0 * h))
    return np.column_stack(columns)


# ---------------------------------------------------------------------------
# Finite-difference oracles
# ---------------------------------------------------------------------------

def invariant_error_rate(u, X_hat):
    """
    Rate of the left-invariant error, trivialized at the estimate, as a
    function of the error: vee(Omega_hat) - Ad(exp(-d)) vee(Omega(beta)),
    with the true biases beta = beta_hat - d_beta.
    """
    def rate(delta):
        estimate = np.concatenate([u.u1 + X_hat.bias_gyro,
                                   u.u2 + X_hat.bias_vel,
                                   np.zeros(6)])
        truth = np.concatenate([u.u1 + X_hat.bias_gyro - delta[6:9],
                                u.u2 + X_hat.bias_vel - delta[9:12],
                                np.zeros(6)])
        return estimate - lie.adjoint(lie.exp_g(-delta)) @ truth
    return rate


def multiplicative_error_rate(u, X_hat):
    """Rate of the multiplicative error as a function of the error."""
    C_hat = X_hat.attitude
    omega_hat = u.u1 + X_hat.bias_gyro
    velocity_hat = u.u2 + X_hat.bias_vel

    def rate(delta):
        back = lie.exp_so3(-delta[0:3])
        omega = omega_hat - delta[6:9]
        velocity = velocity_hat - delta[9:12]
        return np.concatenate([omega_hat - back @ omega,
                               C_hat @ velocity_hat
                               - C_hat @ back @ velocity,
                               np.zeros(6)])
    return rate


def discrete_error_map(convention, u, X_hat, dt):
    """
    Error after one propagate() step, as a function of the error before
    it. The true state is retract(X_hat, -d).
    """
    X_hat_next = models.propagate(X_hat, u, dt)

    def step(delta):
        truth = estimators.retract(X_hat, -delta, convention)
        return estimators.state_error(models.propagate(truth, u, dt),
                                      X_hat_next, convention)
    return step


def innovation_map(kind, convention, X_check, landmarks, landmark_id=None):
    """
    Innovation of a noise-free measurement of the true state
    retract(X_check, -d), as a function of the estimate error d.
    """
    def innovation(delta):
        truth = estimators.retract(X_check, -delta, convention)
        if kind is MeasurementKind.GPS:
            y = models.gps_predict(truth)
        else:
            y = models.landmark_predict(truth, landmarks, landmark_id)
        return models.innovation(kind, y, X_check, landmarks, landmark_id,
                                 convention)
    return innovation


def process_jacobian_pair(convention, u, X_hat):
    """(analytic A, finite-difference A) for one linearization point."""
    if convention is Convention.MULTIPLICATIVE:
        A, _ = models.multiplicative_process_jacobians(
            u, X_hat.attitude, X_hat.bias_gyro, X_hat.bias_vel)
        rate = multiplicative_error_rate(u, X_hat)
    else:
        A, _ = models.invariant_process_jacobians(u, X_hat.bias_gyro,
                                                  X_hat.bias_vel)
        rate = invariant_error_rate(u, X_hat)
    return A, central_difference(rate)


def transition_pair(convention, u, X_hat, dt=DISCRETE_DT):
    """
    (discrete transition used by the filters, finite difference of the
    error map through propagate()) for one step.
    """
    X_hat_next = models.propagate(X_hat, u, dt)
    jacobians = models.linearize_process(convention, X_hat, X_hat_next, u,
                                         dt, _UNIT_NOISE)
    step = discrete_error_map(convention, u, X_hat, dt)
    return jacobians.A, central_difference(step)


def measurement_jacobian_pair(kind, convention, X_check, landmarks,
                              landmark_id=None):
    ids = [] if landmark_id is None else [landmark_id]
    if convention is Convention.MULTIPLICATIVE:
        H, _ = models.multiplicative_measurement_jacobians(
            kind, landmarks, X_check, ids)
    else:
        H, _ = models.invariant_measurement_jacobians(kind, landmarks,
                                                      X_check, ids)
    numeric = central_difference(innovation_map(kind, convention, X_check,
                                                landmarks, landmark_id))
    return H, numeric


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def check_group_axioms(rng, cases):
    worst = 0.0
    identity = GroupElement.identity().embedding()
    for _ in range(cases):
        X, Y, Z = (lie.random_element(rng) for _ in range(3))
        left = lie.compose(lie.compose(X, Y), Z).embedding()
        right = lie.compose(X, lie.compose(Y, Z)).embedding()
        worst = max(worst, np.abs(left - right).max(),
                    np.abs(lie.compose(X, lie.inverse(X)).embedding()
                           - identity).max(),
                    np.abs(lie.compose(GroupElement.identity(),
                                       X).embedding()
                           - X.embedding()).max())
    return CheckResult('group axioms', worst, 1e-10)


def check_exp_log(rng, cases):
    worst = 0.0
    for _ in range(cases):
        xi = lie.random_tangent(rng)
        worst = max(worst, np.abs(lie.log_g(lie.exp_g(xi)) - xi).max())
    return CheckResult('exp/log round trip', worst, 1e-9)


def check_adjoint(rng, cases):
    worst = 0.0
    for _ in range(cases):
        X = lie.random_element(rng)
        xi = lie.random_tangent(rng)
        E = X.embedding()
        conjugated = E @ lie.wedge(xi) @ lie.inverse(X).embedding()
        worst = max(worst,
                    np.abs(lie.wedge(lie.adjoint(X) @ xi) - conjugated).max())
    return CheckResult('adjoint identity', worst, 1e-10)


def check_adjoint_homomorphism(rng, cases):
    worst = 0.0
    for _ in range(cases):
        X, Y = lie.random_element(rng), lie.random_element(rng)
        worst = max(worst, np.abs(lie.adjoint(lie.compose(X, Y))
                                  - lie.adjoint(X) @ lie.adjoint(Y)).max())
    return CheckResult('adjoint homomorphism', worst, 1e-10)


def quadrature_left_jacobian(phi, points=100):
    nodes, weights = np.polynomial.legendre.leggauss(points)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    return sum(w * lie.exp_so3(s * np.asarray(phi))
               for s, w in zip(nodes, weights))


def check_left_jacobian(rng, cases):
    worst = 0.0
    for _ in range(cases):
        phi = lie.random_tangent(rng)[0:3]
        worst = max(worst, np.abs(lie.left_jacobian_so3(phi)
                                  - quadrature_left_jacobian(phi)).max())
    return CheckResult('left Jacobian quadrature', worst, 1e-8)


def check_process_jacobians(rng, cases, convention):
    """
    Two results: the continuous A against the error-rate oracle, and the
    discrete transition against the error map through propagate().
    """
    worst = worst_discrete = 0.0
    for _ in range(cases):
        X_hat = lie.random_element(rng, scale=0.5)
        u = random_sample(rng)
        A, numeric = process_jacobian_pair(convention, u, X_hat)
        worst = max(worst, relative_error(A, numeric))
        Phi, numeric = transition_pair(convention, u, X_hat)
        worst_discrete = max(worst_discrete, relative_error(Phi, numeric))
    label = ('multiplicative A' if convention is Convention.MULTIPLICATIVE
             else 'invariant A')
    return [CheckResult(label + ' finite difference', worst, FD_TOL),
            CheckResult(label + ' through propagate', worst_discrete,
                        DISCRETE_TOL)]


def check_measurement_jacobians(rng, cases, kind, convention):
    worst = 0.0
    for _ in range(cases):
        landmarks = random_landmarks(rng)
        X_check = lie.random_element(rng, scale=0.5)
        landmark_id = (None if kind is MeasurementKind.GPS
                       else int(rng.integers(len(landmarks))))
        H, numeric = measurement_jacobian_pair(kind, convention, X_check,
                                               landmarks, landmark_id)
        worst = max(worst, relative_error(H, numeric))
    label = '{} {} H'.format(
        'multiplicative' if convention is Convention.MULTIPLICATIVE
        else 'invariant', kind.value)
    return CheckResult(label + ' finite difference', worst, FD_TOL)


def check_state_independence(rng, cases):
    """
    Invariant A and H must not move when attitude and position change;
    the multiplicative A* and landmark H* must.
    """
    invariant_changed = False
    smallest_change = np.inf
    for _ in range(cases):
        u = random_sample(rng)
        landmarks = random_landmarks(rng)
        X1 = lie.random_element(rng)
        X2 = X1.replace(attitude=lie.random_rotation(rng),
                        position=rng.normal(size=3))
        ids = [0, 1]
        for kind in MeasurementKind:
            H1, _ = models.invariant_measurement_jacobians(
                kind, landmarks, X1, ids)
            H2, _ = models.invariant_measurement_jacobians(
                kind, landmarks, X2, ids)
            invariant_changed |= not np.array_equal(H1, H2)
        A1 = models.linearize_process(Convention.LEFT, X1, X1, u, 0.01,
                                      _UNIT_NOISE).A
        A2 = models.linearize_process(Convention.LEFT, X2, X2, u, 0.01,
                                      _UNIT_NOISE).A
        invariant_changed |= not np.array_equal(A1, A2)
        M1, _ = models.multiplicative_process_jacobians(
            u, X1.attitude, X1.bias_gyro, X1.bias_vel)
        M2, _ = models.multiplicative_process_jacobians(
            u, X2.attitude, X2.bias_gyro, X2.bias_vel)
        L1, _ = models.multiplicative_measurement_jacobians(
            MeasurementKind.LANDMARK, landmarks, X1, ids)
        L2, _ = models.multiplicative_measurement_jacobians(
            MeasurementKind.LANDMARK, landmarks, X2, ids)
        smallest_change = min(smallest_change, np.linalg.norm(M1 - M2),
                              np.linalg.norm(L1 - L2))
    passed = not invariant_changed and smallest_change > 1e-6
    return CheckResult('state independence', float(invariant_changed),
                       0.0, passed)


def check_group_affine(rng, trials):
    bias_free = models.is_group_affine(models.bias_free_kinematics, trials,
                                       rng)
    biased = models.is_group_affine(models.biased_kinematics, trials, rng)
    passed = bias_free and not biased
    return CheckResult('group-affine classification', float(not passed),
                       0.0, passed)


def check_ert_round_trip(rng, cases):
    worst = 0.0
    for _ in range(cases):
        X = lie.random_element(rng)
        G = rng.normal(size=(lie.DIM, lie.DIM))
        P = G @ G.T
        belief = estimators.Belief(X, P, Convention.LEFT)
        back = estimators.right_to_left(estimators.left_to_right(belief))
        worst = max(worst, np.abs(back.covariance - P).max()
                    / max(1.0, np.abs(P).max()))
    return CheckResult('ERT round trip', worst, 1e-11)


def run_checks(seed=0, cases=1000, jacobian_cases=100):
    rng = np.random.default_rng(seed)
    results = [
        check_group_axioms(rng, cases),
        check_exp_log(rng, cases),
        check_adjoint(rng, cases),
        check_adjoint_homomorphism(rng, cases),
        check_left_jacobian(rng, cases),
    ]
    for convention in (Convention.LEFT, Convention.MULTIPLICATIVE):
        results.extend(check_process_jacobians(rng, jacobian_cases,
                                               convention))
    for convention, kinds in (
            (Convention.LEFT, (MeasurementKind.GPS,)),
            (Convention.RIGHT, (MeasurementKind.LANDMARK,)),
            (Convention.MULTIPLICATIVE, tuple(MeasurementKind))):
        for kind in kinds:
            results.append(check_measurement_jacobians(
                rng, jacobian_cases, kind, convention))
    results.extend([
        check_state_independence(rng, jacobian_cases),
        check_group_affine(rng, jacobian_cases),
        check_ert_round_trip(rng, jacobian_cases),
    ])
    for result in results:
        logger.info('%s', result)
    return results
