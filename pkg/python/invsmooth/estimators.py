"""
Kalman filters and Rauch-Tung-Striebel smoothers.

Forward filters: the linear Kalman filter, the multiplicative EKF and the
invariant EKF, which keeps its covariance in one invariant convention and
switches to the other one around corrections that need it (error
representation transformation, ERT). Backward passes: the linear RTS
smoother, the multiplicative RTS smoother (MRTS) and the left and right
invariant RTS smoothers (L-IRTS, R-IRTS).

All smoother updates share one shape: the smoother innovation is the state
error of the next predicted state relative to the next smoothed state, and
the smoothed state is the forward corrected state retracted by -K_s z.
"""

import enum
import logging

import numpy as np
from fontTools.misc.loggingTools import Timer
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import chi2

from invsmooth import lie, models
from invsmooth.errors import (
    InvsmoothError, LengthMismatch, NonPsdCovariance,
    SingularInnovationCovariance, SingularPredictedCovariance, StepError)
from invsmooth.lie import PHI
from invsmooth.models import Convention, MeasurementKind

logger = logging.getLogger(__name__)


class Flavor(enum.Enum):
    LIRTS = 'lirts'
    RIRTS = 'rirts'
    MRTS = 'mrts'
    LINEAR = 'linear'


FLAVOR_CONVENTIONS = {
    Flavor.LIRTS: Convention.LEFT,
    Flavor.RIRTS: Convention.RIGHT,
    Flavor.MRTS: Convention.MULTIPLICATIVE,
    Flavor.LINEAR: Convention.LINEAR,
}


class Belief(object):
    """
    A state estimate with its covariance. For the group conventions the
    state is a GroupElement and the covariance is 12x12; for the linear
    convention the state is a plain vector.
    """

    __slots__ = ('state', 'covariance', 'convention', 't')

    def __init__(self, state, covariance, convention, t=0.0):
        self.state = state
        self.covariance = np.asarray(covariance, dtype=float)
        self.convention = Convention(convention)
        self.t = float(t)

    def __repr__(self):
        return 'Belief(t={!r}, convention={}, trace={:.6g})'.format(
            self.t, self.convention.value, np.trace(self.covariance))

    def replace(self, state=None, covariance=None, convention=None, t=None):
        return Belief(self.state if state is None else state,
                      self.covariance if covariance is None else covariance,
                      self.convention if convention is None else convention,
                      self.t if t is None else t)


class SmootherRun(object):
    """
    One forward and one backward pass. transitions[k] and gains[k] link
    step k to step k+1.
    """

    def __init__(self, flavor, forward_pred, forward_corr, smoothed,
                 transitions, gains, iteration=1):
        self.flavor = flavor
        self.forward_pred = forward_pred
        self.forward_corr = forward_corr
        self.smoothed = smoothed
        self.transitions = transitions
        self.gains = gains
        self.iteration = iteration

    def __repr__(self):
        return 'SmootherRun(flavor={}, iteration={}, steps={})'.format(
            self.flavor.value, self.iteration, len(self.smoothed))

    @property
    def stamps(self):
        return [belief.t for belief in self.smoothed]

    def smoothed_states(self):
        return [belief.state for belief in self.smoothed]

    def filtered_states(self):
        return [belief.state for belief in self.forward_corr]


# ---------------------------------------------------------------------------
# Error conventions
# ---------------------------------------------------------------------------

def symmetrize(P):
    return 0.5 * (P + P.T)


def state_error(X_true, X_est, convention):
    """
    The error of X_est relative to X_true as a vector:
    log(X^-1 X_hat) for the left convention, log(X_hat X^-1) for the right
    one, and (log(C^T C_hat), r_hat - r, beta_hat - beta) for the
    multiplicative one.
    """
    if convention is Convention.LEFT:
        return lie.log_g(lie.left_error(X_true, X_est))
    if convention is Convention.RIGHT:
        return lie.log_g(lie.right_error(X_true, X_est))
    if convention is Convention.MULTIPLICATIVE:
        return np.concatenate([
            lie.log_so3(X_true.attitude.T @ X_est.attitude),
            X_est.vector_part - X_true.vector_part])
    return np.asarray(X_est) - np.asarray(X_true)


def retract(X, delta, convention):
    """Inverse of state_error: state_error(X, retract(X, d)) == d."""
    if convention is Convention.LEFT:
        return lie.compose(X, lie.exp_g(delta))
    if convention is Convention.RIGHT:
        return lie.compose(lie.exp_g(delta), X)
    if convention is Convention.MULTIPLICATIVE:
        return lie.GroupElement(
            lie.normalize_rotation(X.attitude @ lie.exp_so3(delta[PHI])),
            X.position + delta[3:6], X.bias_gyro + delta[6:9],
            X.bias_vel + delta[9:12])
    return np.asarray(X) + delta


def left_to_right(belief):
    """ERT of a left-invariant belief, P_R = Ad(X) P_L Ad(X)^T."""
    if belief.convention is not Convention.LEFT:
        raise ValueError("expected a left-invariant belief")
    Ad = lie.adjoint(belief.state)
    return belief.replace(
        covariance=symmetrize(Ad @ belief.covariance @ Ad.T),
        convention=Convention.RIGHT)


def right_to_left(belief):
    """ERT of a right-invariant belief, P_L = Ad(X)^-1 P_R Ad(X)^-T."""
    if belief.convention is not Convention.RIGHT:
        raise ValueError("expected a right-invariant belief")
    Ad_inv = lie.inverse_adjoint(belief.state)
    return belief.replace(
        covariance=symmetrize(Ad_inv @ belief.covariance @ Ad_inv.T),
        convention=Convention.LEFT)


# ---------------------------------------------------------------------------
# Kalman filter building blocks
# ---------------------------------------------------------------------------

def kf_predict(belief, A_d, L_d, Q_d, X_pred, t=None):
    P = A_d @ belief.covariance @ A_d.T + L_d @ Q_d @ L_d.T
    P = models.check_psd(symmetrize(P), 'predicted covariance')
    return belief.replace(state=X_pred, covariance=P, t=t)


def kf_gain(P_check, H, M, R):
    """K = P H^T S^-1 with S = H P H^T + M R M^T, through a Cholesky solve."""
    S = symmetrize(H @ P_check @ H.T + M @ R @ M.T)
    try:
        factor = cho_factor(S, lower=True)
    except LinAlgError:
        raise SingularInnovationCovariance(
            "innovation covariance of size {} is not positive definite"
            .format(S.shape[0]))
    return cho_solve(factor, H @ P_check).T


def joseph_update(P_check, K, H, M, R):
    I_KH = np.eye(P_check.shape[0]) - K @ H
    P = I_KH @ P_check @ I_KH.T + K @ M @ R @ M.T @ K.T
    return models.check_psd(symmetrize(P), 'corrected covariance')


def kf_correct_linear(belief, K, z, H, M, R):
    state = np.asarray(belief.state, dtype=float) + K @ z
    return belief.replace(state=state,
                          covariance=joseph_update(belief.covariance,
                                                   K, H, M, R))


def _as_group(measurements):
    if isinstance(measurements, models.ExteroMeasurement):
        return [measurements]
    return list(measurements)


def _correct_group(belief, measurements, landmarks, noise):
    kind = measurements[0].kind
    X_check = belief.state
    H, M = models.measurement_jacobians(measurements, X_check, landmarks,
                                        belief.convention)
    R = noise.measurement_covariance(kind, len(measurements))
    z = models.stacked_innovation(measurements, X_check, landmarks,
                                  belief.convention)
    K = kf_gain(belief.covariance, H, M, R)
    return belief.replace(
        state=retract(X_check, -(K @ z), belief.convention),
        covariance=joseph_update(belief.covariance, K, H, M, R))


def iekf_correct(belief, measurements, landmarks, noise):
    """
    Invariant EKF correction with a group of same-kind measurements taken at
    one step. GPS fixes are corrected in the left-invariant convention and
    landmarks in the right-invariant one; the belief is brought to the
    needed convention by an ERT and back again with the corrected state.
    The returned belief keeps the input convention.
    """
    measurements = _as_group(measurements)
    if not measurements:
        return belief
    needed = (Convention.LEFT if measurements[0].kind is MeasurementKind.GPS
              else Convention.RIGHT)
    if belief.convention is needed:
        return _correct_group(belief, measurements, landmarks, noise)
    if belief.convention is Convention.LEFT:
        corrected = _correct_group(left_to_right(belief), measurements,
                                   landmarks, noise)
        return right_to_left(corrected)
    if belief.convention is Convention.RIGHT:
        corrected = _correct_group(right_to_left(belief), measurements,
                                   landmarks, noise)
        return left_to_right(corrected)
    raise ValueError("iekf_correct needs an invariant belief, got {}".format(
        belief.convention))


def mekf_correct(belief, measurements, landmarks, noise):
    """
    Multiplicative EKF correction: the attitude part of K z is applied on
    SO(3) and the rest additively.
    """
    if belief.convention is not Convention.MULTIPLICATIVE:
        raise ValueError("mekf_correct needs a multiplicative belief")
    measurements = _as_group(measurements)
    if not measurements:
        return belief
    return _correct_group(belief, measurements, landmarks, noise)


def correct(belief, groups, landmarks, noise):
    for group in groups:
        if belief.convention is Convention.MULTIPLICATIVE:
            belief = mekf_correct(belief, group, landmarks, noise)
        else:
            belief = iekf_correct(belief, group, landmarks, noise)
    return belief


# ---------------------------------------------------------------------------
# Backward pass building blocks
# ---------------------------------------------------------------------------

def rts_gain(P_corr, A, P_pred):
    """K_s = P_corr A^T P_pred^-1."""
    try:
        factor = cho_factor(symmetrize(P_pred), lower=True)
    except LinAlgError:
        raise SingularPredictedCovariance(
            "predicted covariance is not positive definite")
    return cho_solve(factor, A @ P_corr).T


def smoothed_covariance(P_corr, K_s, P_pred, P_smoothed_next):
    P = P_corr - K_s @ (P_pred - P_smoothed_next) @ K_s.T
    return models.check_psd(symmetrize(P), 'smoothed covariance')


def irts_innovation(smoothed_k1, fwd_pred_k1, side):
    """
    Left: log(X_s^-1 X_check). Right: log(X_check X_s^-1).
    """
    side = Convention(side)
    if side not in (Convention.LEFT, Convention.RIGHT):
        raise ValueError("side must be left or right")
    return state_error(smoothed_k1.state, fwd_pred_k1.state, side)


def irts_update(fwd_corr_k, K_s, z_s, side, covariance=None):
    """
    Left: X_s = X_f exp(-K_s z). Right: X_s = exp(-K_s z) X_f. The
    covariance defaults to the forward corrected one.
    """
    side = Convention(side)
    return fwd_corr_k.replace(
        state=retract(fwd_corr_k.state, -(K_s @ z_s), side),
        covariance=covariance, convention=side)


def mrts_update(fwd_corr_k, K_s, smoothed_k1, fwd_pred_k1, covariance=None):
    """
    The attitude part of K_s z is applied on SO(3) and the position and
    bias parts additively, with the stacked innovation
    z = (log(C_s^T C_check), x_check - x_s).
    """
    z = state_error(smoothed_k1.state, fwd_pred_k1.state,
                    Convention.MULTIPLICATIVE)
    return fwd_corr_k.replace(
        state=retract(fwd_corr_k.state, -(K_s @ z),
                      Convention.MULTIPLICATIVE),
        covariance=covariance)


def _backward_step(fwd_corr_k, fwd_pred_k1, smoothed_k1, A_k):
    K_s = rts_gain(fwd_corr_k.covariance, A_k, fwd_pred_k1.covariance)
    P = smoothed_covariance(fwd_corr_k.covariance, K_s,
                            fwd_pred_k1.covariance, smoothed_k1.covariance)
    convention = fwd_corr_k.convention
    if convention is Convention.MULTIPLICATIVE:
        belief = mrts_update(fwd_corr_k, K_s, smoothed_k1, fwd_pred_k1, P)
    elif convention is Convention.LINEAR:
        z = state_error(smoothed_k1.state, fwd_pred_k1.state, convention)
        belief = fwd_corr_k.replace(
            state=retract(fwd_corr_k.state, -(K_s @ z), convention),
            covariance=P)
    else:
        z = irts_innovation(smoothed_k1, fwd_pred_k1, convention)
        belief = irts_update(fwd_corr_k, K_s, z, convention, P)
    return belief, K_s


def rts_backward_step(fwd_corr_k, fwd_pred_k1, smoothed_k1, A_k):
    belief, _ = _backward_step(fwd_corr_k, fwd_pred_k1, smoothed_k1, A_k)
    return belief


def backward_pass(forward_pred, forward_corr, transitions):
    """Returns the smoothed beliefs and the smoother gains."""
    steps = len(forward_corr)
    smoothed = [None] * steps
    gains = [None] * (steps - 1)
    smoothed[-1] = forward_corr[-1]
    for k in range(steps - 2, -1, -1):
        try:
            smoothed[k], gains[k] = _backward_step(
                forward_corr[k], forward_pred[k + 1], smoothed[k + 1],
                transitions[k])
        except InvsmoothError as err:
            raise StepError(k, err)
    return smoothed, gains


# ---------------------------------------------------------------------------
# Nonlinear smoothers
# ---------------------------------------------------------------------------

def snap_measurements(extero, stamps):
    """
    Groups measurements by the interoceptive step nearest to their stamp.
    Returns one list per step holding same-kind groups, GPS first; a
    measurement farther than half a step from every stamp is dropped with a
    warning.
    """
    stamps = np.asarray(stamps, dtype=float)
    steps = [[] for _ in stamps]
    if stamps.size > 1:
        half_step = 0.5 * np.median(np.diff(stamps))
    else:
        half_step = 0.0
    buckets = [{} for _ in stamps]
    dropped = 0
    for meas in models.measurement_batch(extero):
        k = int(np.searchsorted(stamps, meas.t))
        candidates = [i for i in (k - 1, k) if 0 <= i < stamps.size]
        k = min(candidates, key=lambda i: abs(stamps[i] - meas.t))
        if abs(stamps[k] - meas.t) > half_step * (1.0 + 1e-9) + 1e-12:
            dropped += 1
            continue
        buckets[k].setdefault(meas.kind, []).append(meas)
    if dropped:
        logger.warning("dropped %d measurements outside the interoceptive "
                       "time span", dropped)
    for k, bucket in enumerate(buckets):
        for kind in (MeasurementKind.GPS, MeasurementKind.LANDMARK):
            if kind in bucket:
                steps[k].append(bucket[kind])
    return steps


def _check_intero(intero):
    if len(intero) < 2:
        raise LengthMismatch("need at least two interoceptive samples")
    models.check_monotone([sample.t for sample in intero],
                          'interoceptive timestamps')


def forward_pass(initial, intero, step_groups, landmarks, noise):
    """
    Runs the forward filter of the belief's convention over the
    interoceptive stream. Returns the predicted and corrected beliefs and
    the discrete transitions used.
    """
    convention = initial.convention
    forward_pred = [initial.replace(t=intero[0].t)]
    forward_corr = []
    transitions = []
    try:
        forward_corr.append(correct(forward_pred[0], step_groups[0],
                                    landmarks, noise))
    except InvsmoothError as err:
        raise StepError(0, err)
    for k in range(1, len(intero)):
        previous = forward_corr[-1]
        u = intero[k - 1]
        dt = intero[k].t - u.t
        try:
            X_pred = models.propagate(previous.state, u, dt)
            jacobians = models.linearize_process(
                convention, previous.state, X_pred, u, dt, noise)
            predicted = kf_predict(previous, jacobians.A, jacobians.L,
                                   jacobians.Q, X_pred, intero[k].t)
            corrected = correct(predicted, step_groups[k], landmarks, noise)
        except InvsmoothError as err:
            raise StepError(k, err)
        transitions.append(jacobians.A)
        forward_pred.append(predicted)
        forward_corr.append(corrected)
    return forward_pred, forward_corr, transitions


def iterate_smoother(initial, intero, extero, landmarks, noise, flavor,
                     iterations):
    """
    Yields one SmootherRun per iteration. Iterations after the first restart
    the forward filter from the smoothed belief at k=0.
    """
    flavor = Flavor(flavor)
    if flavor is Flavor.LINEAR:
        raise ValueError("use run_linear_rts for linear systems")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if initial.convention is not FLAVOR_CONVENTIONS[flavor]:
        raise ValueError("{} needs a {} initial belief, got {}".format(
            flavor.value, FLAVOR_CONVENTIONS[flavor].value,
            initial.convention.value))
    _check_intero(intero)
    step_groups = snap_measurements(extero, [sample.t for sample in intero])
    start = initial
    for iteration in range(1, iterations + 1):
        with Timer(logger, '{} forward pass {}'.format(flavor.value,
                                                       iteration)):
            forward_pred, forward_corr, transitions = forward_pass(
                start, intero, step_groups, landmarks, noise)
        with Timer(logger, '{} backward pass {}'.format(flavor.value,
                                                        iteration)):
            smoothed, gains = backward_pass(forward_pred, forward_corr,
                                            transitions)
        yield SmootherRun(flavor, forward_pred, forward_corr, smoothed,
                          transitions, gains, iteration)
        start = smoothed[0]


def run_smoother(initial, intero, extero, landmarks, noise, flavor,
                 iterations=1):
    run = None
    for run in iterate_smoother(initial, intero, extero, landmarks, noise,
                                flavor, iterations):
        pass
    return run


# ---------------------------------------------------------------------------
# Linear-Gaussian systems
# ---------------------------------------------------------------------------

class LinearGaussianSystem(object):
    """
    x_k = A[k-1] x_{k-1} + inputs[k-1] + L[k-1] w,  w ~ N(0, Q[k-1])
    y_k = H[k] x_k + M[k] v,                      v ~ N(0, R[k])

    A, inputs, L and Q have one entry per step (N entries); H, M, R and y
    have one entry per state (N + 1 entries), None where no measurement was
    taken.
    """

    def __init__(self, prior_mean, prior_cov, A, Q, L=None, inputs=None,
                 H=None, M=None, R=None, y=None, stamps=None):
        self.prior_mean = np.asarray(prior_mean, dtype=float)
        self.prior_cov = np.asarray(prior_cov, dtype=float)
        dim = self.prior_mean.size
        steps = len(A)
        self.A = list(A)
        self.Q = list(Q)
        self.L = list(L) if L is not None else [np.eye(dim)] * steps
        self.inputs = (list(inputs) if inputs is not None
                       else [np.zeros(dim)] * steps)
        self.H = list(H) if H is not None else [None] * (steps + 1)
        self.y = list(y) if y is not None else [None] * (steps + 1)
        self.R = list(R) if R is not None else [None] * (steps + 1)
        if M is None:
            M = [None if R_k is None else np.eye(R_k.shape[0])
                 for R_k in self.R]
        self.M = list(M)
        self.stamps = (list(stamps) if stamps is not None
                       else [float(k) for k in range(steps + 1)])
        for name in ('Q', 'L', 'inputs'):
            if len(getattr(self, name)) != steps:
                raise LengthMismatch("{} needs {} entries".format(name,
                                                                  steps))
        for name in ('H', 'y', 'R', 'M', 'stamps'):
            if len(getattr(self, name)) != steps + 1:
                raise LengthMismatch("{} needs {} entries".format(
                    name, steps + 1))

    @property
    def dim(self):
        return self.prior_mean.size

    @property
    def horizon(self):
        return len(self.A)

    def measured(self, k):
        return self.H[k] is not None and self.y[k] is not None


def _linear_correct(system, belief, k):
    if not system.measured(k):
        return belief
    H, M, R = system.H[k], system.M[k], system.R[k]
    z = system.y[k] - H @ belief.state
    K = kf_gain(belief.covariance, H, M, R)
    return kf_correct_linear(belief, K, z, H, M, R)


def run_linear_rts(system):
    """Linear Kalman filter followed by the linear RTS backward pass."""
    forward_pred = [Belief(system.prior_mean, system.prior_cov,
                           Convention.LINEAR, system.stamps[0])]
    forward_corr = []
    try:
        forward_corr.append(_linear_correct(system, forward_pred[0], 0))
        for k in range(1, system.horizon + 1):
            previous = forward_corr[-1]
            A = system.A[k - 1]
            predicted = kf_predict(
                previous, A, system.L[k - 1], system.Q[k - 1],
                A @ previous.state + system.inputs[k - 1], system.stamps[k])
            forward_pred.append(predicted)
            forward_corr.append(_linear_correct(system, predicted, k))
    except InvsmoothError as err:
        raise StepError(len(forward_corr), err)
    smoothed, gains = backward_pass(forward_pred, forward_corr, system.A)
    return SmootherRun(Flavor.LINEAR, forward_pred, forward_corr, smoothed,
                       list(system.A), gains)


# ---------------------------------------------------------------------------
# Consistency statistics
# ---------------------------------------------------------------------------

def nees(errors, covariances):
    """e^T P^-1 e for each error/covariance pair."""
    values = []
    for error, P in zip(errors, covariances):
        try:
            factor = cho_factor(symmetrize(P), lower=True)
        except LinAlgError:
            raise NonPsdCovariance("covariance is not positive definite")
        values.append(float(error @ cho_solve(factor, error)))
    return np.array(values)


def chi2_band(dof, trials, level=0.95):
    """
    Acceptance band for the NEES averaged over `trials` independent draws
    of a `dof`-dimensional error.
    """
    tail = 0.5 * (1.0 - level)
    total = dof * trials
    return (chi2.ppf(tail, total) / trials,
            chi2.ppf(1.0 - tail, total) / trials)
