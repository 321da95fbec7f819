import numpy as np
import pytest

from invsmooth import batchgn, estimators, lie, models, sim, verify
from invsmooth.batchgn import BatchProblem, GNFlavor, NormalEquations
from invsmooth.errors import (
    LengthMismatch, NonPsdCovariance, SingularNormalEquations)
from invsmooth.models import Convention, ExteroMeasurement, MeasurementKind

from test_utils import (
    filter_noise, noise_free_config, random_spd, small_error_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(77)


@pytest.fixture(scope='module')
def noise_free_trial():
    return sim.simulate_trial(noise_free_config(), 0)


def _problem(trial, flavor, delta=None, covariance=None):
    delta = np.zeros(lie.DIM) if delta is None else delta
    covariance = (0.01 * np.eye(lie.DIM) if covariance is None
                  else covariance)
    prior = sim.initial_belief(trial.truth.states[0], delta, covariance,
                               batchgn.GN_CONVENTIONS[flavor])
    return BatchProblem(prior, trial.intero, trial.extero, trial.landmarks,
                        filter_noise())


# -----
# Tests
# -----

def test_block_tridiagonal_solve(rng):
    count, dim = 5, 3
    equations = NormalEquations(count, dim)
    for k in range(count):
        equations.add_unary(k, np.eye(dim), random_spd(rng, dim),
                            rng.normal(size=dim))
    for k in range(count - 1):
        equations.add_binary(k, rng.normal(size=(dim, dim)), np.eye(dim),
                             random_spd(rng, dim), rng.normal(size=dim))
    info, rhs = equations.dense()
    assert np.allclose(info, info.T)
    expected = np.linalg.solve(info, rhs)
    assert np.allclose(np.concatenate(equations.solve()), expected)


def test_normal_equations_cost():
    equations = NormalEquations(2, 2)
    equations.add_unary(0, np.eye(2), 2.0 * np.eye(2), np.array([1.0, 1.0]))
    equations.add_binary(0, -np.eye(2), np.eye(2), np.eye(2),
                         np.array([0.0, 3.0]))
    assert equations.cost == pytest.approx(13.0)


def test_information_singular():
    with pytest.raises(SingularNormalEquations):
        batchgn.information(np.zeros((3, 3)))


def test_singular_normal_equations():
    equations = NormalEquations(2, 2)
    equations.add_unary(0, np.eye(2), np.eye(2), np.ones(2))
    with pytest.raises(SingularNormalEquations):
        equations.solve()


def test_linear_map_matches_rts(rng):
    template = sim.random_linear_system(rng, dim=3, steps=8)
    _, system = sim.simulate_linear(template, rng)
    smoothed = estimators.run_linear_rts(system).smoothed
    expected = np.array([belief.state for belief in smoothed])
    assert np.allclose(batchgn.solve_linear_map(system), expected, atol=1e-8)
    start = rng.normal(size=expected.shape)
    assert np.allclose(batchgn.solve_linear_map(system, start), expected,
                       atol=1e-8)


def test_dead_reckon_matches_truth(noise_free_trial):
    trial = noise_free_trial
    states = batchgn.dead_reckon(trial.truth.states[0], trial.intero)
    for X, truth in zip(states, trial.truth.states):
        assert X.allclose(truth, atol=1e-10)


def test_process_residual_vanishes(rng):
    X = lie.random_element(rng)
    u = verify.random_sample(rng)
    Y = models.propagate(X, u, 0.01)
    for flavor in GNFlavor:
        r, J_prev, J_k, W = batchgn.process_factor(flavor, X, Y, u, 0.01,
                                                   filter_noise())
        assert np.allclose(r, 0.0, atol=1e-12)
        assert np.array_equal(J_k, np.eye(lie.DIM))
        assert W.shape == (lie.DIM, lie.DIM)


@pytest.mark.parametrize('flavor', list(GNFlavor))
@pytest.mark.parametrize('kind', list(MeasurementKind))
def test_measurement_factor_jacobian(rng, flavor, kind):
    landmarks = verify.random_landmarks(rng)
    X = lie.random_element(rng, scale=0.5)
    ids = [None] if kind is MeasurementKind.GPS else [0, 2]
    group = []
    for landmark_id in ids:
        if kind is MeasurementKind.GPS:
            value = models.gps_predict(X)
        else:
            value = models.landmark_predict(X, landmarks, landmark_id)
        group.append(ExteroMeasurement(0.0, kind, value, landmark_id))
    convention = batchgn.GN_CONVENTIONS[flavor]
    r0, J, _ = batchgn.measurement_factor(flavor, group, X, landmarks,
                                          filter_noise())
    assert np.allclose(r0, 0.0, atol=1e-12)

    def residual(delta):
        moved = estimators.retract(X, -delta, convention)
        r, _, _ = batchgn.measurement_factor(flavor, group, moved, landmarks,
                                             filter_noise())
        return r

    numeric = verify.central_difference(residual)
    assert verify.relative_error(J, numeric) < 1e-6


def test_prior_factor(rng):
    X = lie.random_element(rng)
    prior = estimators.Belief(X, np.eye(lie.DIM), Convention.LEFT)
    r, J, W = batchgn.prior_factor(GNFlavor.IGN, prior, X)
    assert np.allclose(r, 0.0)
    assert np.array_equal(J, np.eye(lie.DIM))
    assert np.allclose(W, np.eye(lie.DIM))


def test_build_normal_equations_length(noise_free_trial):
    problem = _problem(noise_free_trial, GNFlavor.IGN)
    with pytest.raises(LengthMismatch):
        batchgn.build_normal_equations(problem, [lie.GroupElement()],
                                       GNFlavor.IGN)


@pytest.mark.parametrize('flavor', list(GNFlavor))
def test_noise_free_data_from_truth(noise_free_trial, flavor):
    trial = noise_free_trial
    solution = batchgn.solve(_problem(trial, flavor), flavor, 1)
    assert len(solution.snapshots) == 2
    assert len(solution.costs) == 1
    assert solution.costs[0] < 1e-12
    for X, truth in zip(solution.states, trial.truth.states):
        assert X.allclose(truth, atol=1e-8)


@pytest.mark.parametrize('flavor', list(GNFlavor))
def test_solver_removes_initial_error(noise_free_trial, flavor):
    trial = noise_free_trial
    spec = small_error_spec()
    problem = _problem(trial, flavor, spec.mean, spec.covariance)
    solution = batchgn.solve(problem, flavor, 3)
    assert solution.costs[-1] < solution.costs[0]
    reckoned = batchgn.dead_reckon(problem.prior.state, trial.intero)
    for X, Y in zip(solution.snapshots[0], reckoned):
        assert X.allclose(Y, atol=0)
    attitude, position, _, _ = sim.rmse(solution.states, trial.truth.states)
    assert attitude < 0.02
    assert position < 0.05


def test_gn_iterate_is_one_solver_step(noise_free_trial):
    spec = small_error_spec()
    problem = _problem(noise_free_trial, GNFlavor.IGN, spec.mean,
                       spec.covariance)
    start = batchgn.dead_reckon(problem.prior.state, problem.intero)
    following, cost = batchgn.gn_iterate(problem, start, GNFlavor.IGN)
    solution = batchgn.solve(problem, GNFlavor.IGN, 1)
    assert cost == solution.costs[0]
    for X, Y in zip(following, solution.states):
        assert X.allclose(Y, atol=0)


def test_solve_checks_iterations(noise_free_trial):
    problem = _problem(noise_free_trial, GNFlavor.MGN)
    with pytest.raises(ValueError):
        batchgn.solve(problem, GNFlavor.MGN, 0)


def test_problem_needs_psd_prior(noise_free_trial):
    with pytest.raises(NonPsdCovariance):
        _problem(noise_free_trial, GNFlavor.IGN,
                 covariance=-np.eye(lie.DIM))
