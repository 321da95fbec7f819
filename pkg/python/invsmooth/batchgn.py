"""
Gauss-Newton solvers for the batch maximum a posteriori problem.

The unknown of one iteration is the error of the current trajectory
estimate under the solver's error convention: left-invariant for IGN,
multiplicative for MGN. Every factor is linearized as r(truth) = r0 + J d,
the normal equations sum(J^T W J) d = -sum(J^T W r0) are solved by block
tridiagonal elimination and the estimate is retracted by -d.
"""

import enum
import logging

import numpy as np
from fontTools.misc.loggingTools import Timer
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from invsmooth import estimators, lie, models
from invsmooth.errors import LengthMismatch, SingularNormalEquations
from invsmooth.lie import DIM, PHI, RHO, cross
from invsmooth.models import Convention, MeasurementKind

logger = logging.getLogger(__name__)


class GNFlavor(enum.Enum):
    IGN = 'ign'
    MGN = 'mgn'


GN_CONVENTIONS = {
    GNFlavor.IGN: Convention.LEFT,
    GNFlavor.MGN: Convention.MULTIPLICATIVE,
}


class BatchProblem(object):
    def __init__(self, prior, intero, extero, landmarks, noise):
        if len(intero) < 2:
            raise LengthMismatch("need at least two interoceptive samples")
        models.check_monotone([sample.t for sample in intero],
                              'interoceptive timestamps')
        models.check_psd(prior.covariance, 'prior covariance')
        self.prior = prior
        self.intero = list(intero)
        self.extero = models.measurement_batch(extero)
        self.landmarks = landmarks
        self.noise = noise
        self.step_groups = estimators.snap_measurements(
            self.extero, [sample.t for sample in self.intero])

    @property
    def horizon(self):
        return len(self.intero) - 1


class BatchSolution(object):
    def __init__(self, flavor, states, costs, snapshots):
        self.flavor = flavor
        self.states = states
        self.costs = costs
        self.snapshots = snapshots

    def __repr__(self):
        return 'BatchSolution(flavor={}, iterations={}, cost={!r})'.format(
            self.flavor.value, len(self.costs),
            self.costs[-1] if self.costs else None)


def information(covariance, what='covariance'):
    try:
        factor = cho_factor(estimators.symmetrize(covariance), lower=True)
    except LinAlgError:
        raise SingularNormalEquations("{} is singular".format(what))
    return cho_solve(factor, np.eye(covariance.shape[0]))


class NormalEquations(object):
    """
    Symmetric block tridiagonal normal equations over count states of size
    dim. Unary factors touch one state, binary factors two consecutive ones.
    """

    def __init__(self, count, dim=DIM):
        self.count = count
        self.dim = dim
        self.diagonal = [np.zeros((dim, dim)) for _ in range(count)]
        self.upper = [np.zeros((dim, dim)) for _ in range(count - 1)]
        self.rhs = [np.zeros(dim) for _ in range(count)]
        self.cost = 0.0

    def add_unary(self, k, J, W, r):
        JtW = J.T @ W
        self.diagonal[k] += JtW @ J
        self.rhs[k] -= JtW @ r
        self.cost += float(r @ W @ r)

    def add_binary(self, k, J_prev, J_next, W, r):
        """A factor on states k and k+1."""
        JtW_prev = J_prev.T @ W
        JtW_next = J_next.T @ W
        self.diagonal[k] += JtW_prev @ J_prev
        self.diagonal[k + 1] += JtW_next @ J_next
        self.upper[k] += JtW_prev @ J_next
        self.rhs[k] -= JtW_prev @ r
        self.rhs[k + 1] -= JtW_next @ r
        self.cost += float(r @ W @ r)

    def dense(self):
        """The full information matrix and right-hand side."""
        size = self.count * self.dim
        info = np.zeros((size, size))
        for k in range(self.count):
            block = slice(k * self.dim, (k + 1) * self.dim)
            info[block, block] = self.diagonal[k]
            if k + 1 < self.count:
                following = slice((k + 1) * self.dim, (k + 2) * self.dim)
                info[block, following] = self.upper[k]
                info[following, block] = self.upper[k].T
        return info, np.concatenate(self.rhs)

    def solve(self):
        return solve_block_tridiagonal(self.diagonal, self.upper, self.rhs)


def solve_block_tridiagonal(diagonal, upper, rhs):
    """
    Solves the symmetric positive definite block tridiagonal system with
    diagonal blocks D_k, super-diagonal blocks U_k (coupling k and k+1) and
    right-hand side blocks b_k by forward elimination and back substitution.
    """
    count = len(diagonal)
    factors = []
    reduced = []
    for k in range(count):
        S = diagonal[k]
        y = rhs[k]
        if k > 0:
            U = upper[k - 1]
            coupling = cho_solve(factors[-1], U)
            S = S - U.T @ coupling
            y = y - coupling.T @ reduced[-1]
        try:
            factors.append(cho_factor(estimators.symmetrize(S), lower=True))
        except LinAlgError:
            raise SingularNormalEquations(
                "normal equations are singular at state {}".format(k))
        reduced.append(y)
    solution = [None] * count
    for k in range(count - 1, -1, -1):
        y = reduced[k]
        if k + 1 < count:
            y = y - upper[k] @ solution[k + 1]
        solution[k] = cho_solve(factors[k], y)
    return solution


# ---------------------------------------------------------------------------
# Factors
# ---------------------------------------------------------------------------

def ign_measurement_jacobians(kind, landmarks, X_check, landmark_ids=()):
    """
    H and M of the IGN measurement residuals. GPS uses the left-invariant
    innovation; landmarks keep the left-invariant error with the standard
    innovation y - y_check, so their H depends on the estimate.
    """
    kind = MeasurementKind(kind)
    if kind is MeasurementKind.GPS:
        return models.invariant_measurement_jacobians(kind, landmarks,
                                                      X_check)
    C_check = X_check.attitude
    H = np.zeros((3 * len(landmark_ids), DIM))
    for row, landmark_id in enumerate(landmark_ids):
        block = slice(3 * row, 3 * row + 3)
        relative = C_check.T @ (landmarks.position(landmark_id)
                                - X_check.position)
        H[block, PHI] = -cross(relative)
        H[block, RHO] = np.eye(3)
    return H, np.eye(3 * len(landmark_ids))


def prior_factor(flavor, prior, X0):
    convention = GN_CONVENTIONS[flavor]
    r = estimators.state_error(X0, prior.state, convention)
    return r, np.eye(DIM), information(prior.covariance, 'prior covariance')


def process_factor(flavor, X_prev, X_k, u, dt, noise):
    """
    Residual between the propagated previous state and the current one.
    Returns (r, J_prev, J_k, W).
    """
    convention = GN_CONVENTIONS[flavor]
    predicted = models.propagate(X_prev, u, dt)
    jacobians = models.linearize_process(convention, X_prev, predicted, u,
                                         dt, noise)
    r = estimators.state_error(X_k, predicted, convention)
    W = information(jacobians.noise, 'process noise covariance')
    return r, -jacobians.A, np.eye(DIM), W


def measurement_factor(flavor, measurements, X, landmarks, noise):
    """One residual for a same-kind group of measurements at one state."""
    kind = measurements[0].kind
    ids = [meas.landmark_id for meas in measurements]
    if flavor is GNFlavor.IGN:
        H, M = ign_measurement_jacobians(kind, landmarks, X, ids)
        if kind is MeasurementKind.GPS:
            convention = Convention.LEFT
        else:
            convention = Convention.MULTIPLICATIVE
    else:
        H, M = models.multiplicative_measurement_jacobians(kind, landmarks,
                                                           X, ids)
        convention = Convention.MULTIPLICATIVE
    r = models.stacked_innovation(measurements, X, landmarks, convention)
    R = noise.measurement_covariance(kind, len(measurements))
    W = information(M @ R @ M.T, 'measurement covariance')
    return r, -H, W


def build_normal_equations(problem, current, flavor):
    if len(current) != problem.horizon + 1:
        raise LengthMismatch("expected {} states, got {}".format(
            problem.horizon + 1, len(current)))
    equations = NormalEquations(len(current))
    r, J, W = prior_factor(flavor, problem.prior, current[0])
    equations.add_unary(0, J, W, r)
    for k in range(1, len(current)):
        u = problem.intero[k - 1]
        dt = problem.intero[k].t - u.t
        r, J_prev, J_k, W = process_factor(flavor, current[k - 1],
                                           current[k], u, dt, problem.noise)
        equations.add_binary(k - 1, J_prev, J_k, W, r)
    for k, groups in enumerate(problem.step_groups):
        for group in groups:
            r, J, W = measurement_factor(flavor, group, current[k],
                                         problem.landmarks, problem.noise)
            equations.add_unary(k, J, W, r)
    return equations


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

def dead_reckon(prior_state, intero):
    states = [prior_state]
    for previous, sample in zip(intero[:-1], intero[1:]):
        states.append(models.propagate(states[-1], previous,
                                       sample.t - previous.t))
    return states


def gn_iterate(problem, current, flavor):
    """
    One Gauss-Newton step. Returns the updated trajectory and the weighted
    squared residual cost at the input trajectory.
    """
    flavor = GNFlavor(flavor)
    convention = GN_CONVENTIONS[flavor]
    equations = build_normal_equations(problem, current, flavor)
    steps = equations.solve()
    following = [estimators.retract(X, -step, convention)
                 for X, step in zip(current, steps)]
    return following, equations.cost


def solve(problem, flavor, iterations):
    """
    Dead reckoning from the prior mean followed by exactly `iterations`
    Gauss-Newton steps. snapshots[0] is the dead-reckoned trajectory and
    snapshots[i] the estimate after iteration i.
    """
    flavor = GNFlavor(flavor)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    current = dead_reckon(problem.prior.state, problem.intero)
    snapshots = [current]
    costs = []
    for iteration in range(1, iterations + 1):
        with Timer(logger, '{} iteration {}'.format(flavor.value,
                                                    iteration)):
            current, cost = gn_iterate(problem, current, flavor)
        logger.debug("%s iteration %d cost %.6g", flavor.value, iteration,
                     cost)
        costs.append(cost)
        snapshots.append(current)
    return BatchSolution(flavor, current, costs, snapshots)


def solve_linear_map(system, start=None):
    """
    MAP estimate of a linear-Gaussian system from one Gauss-Newton step on
    the same prior, process and measurement residuals the nonlinear solvers
    build. Returns an (N + 1) x n array of means.
    """
    dim = system.dim
    count = system.horizon + 1
    if start is None:
        current = np.zeros((count, dim))
    else:
        current = np.array(start, dtype=float)
    equations = NormalEquations(count, dim)
    equations.add_unary(0, np.eye(dim),
                        information(system.prior_cov, 'prior covariance'),
                        system.prior_mean - current[0])
    for k in range(1, count):
        A = system.A[k - 1]
        L = system.L[k - 1]
        r = A @ current[k - 1] + system.inputs[k - 1] - current[k]
        W = information(L @ system.Q[k - 1] @ L.T,
                        'process noise covariance')
        equations.add_binary(k - 1, -A, np.eye(dim), W, r)
    for k in range(count):
        if not system.measured(k):
            continue
        H, M = system.H[k], system.M[k]
        W = information(M @ system.R[k] @ M.T, 'measurement covariance')
        equations.add_unary(k, H, W, system.y[k] - H @ current[k])
    steps = equations.solve()
    return current - np.array(steps)
