"""
Synthetic experiments: ground truth synthesis, sensor corruption with
drifting biases, artificial GPS and landmark measurements, initial error
sampling and the Monte-Carlo campaign with RMSE statistics.

Every random draw comes from a numpy Generator seeded from the scenario seed
(truth and landmark map) or from (scenario seed, trial index) (everything
that changes between trials), so results do not depend on worker
scheduling.
"""

import concurrent.futures
import functools
import logging

import numpy as np
from fontTools.misc.loggingTools import Timer
from scipy import stats

from invsmooth import batchgn, estimators, lie, models
from invsmooth.errors import InvsmoothError, LengthMismatch
from invsmooth.estimators import Belief, Flavor
from invsmooth.lie import GroupElement
from invsmooth.models import (
    Convention, ExteroMeasurement, InteroceptiveSample, LandmarkMap,
    MeasurementKind, NoiseSpec)

logger = logging.getLogger(__name__)

STATES = ('attitude', 'position', 'bias_gyro', 'bias_vel')

SMOOTHERS = {
    'irts': Flavor.LIRTS,
    'rirts': Flavor.RIRTS,
    'mrts': Flavor.MRTS,
}
SOLVERS = {
    'ign': batchgn.GNFlavor.IGN,
    'mgn': batchgn.GNFlavor.MGN,
}
ESTIMATORS = ('irts', 'rirts', 'mrts', 'ign', 'mgn')

CONVENTIONS = {
    'irts': Convention.LEFT,
    'rirts': Convention.RIGHT,
    'mrts': Convention.MULTIPLICATIVE,
    'ign': Convention.LEFT,
    'mgn': Convention.MULTIPLICATIVE,
}


class TrajectoryProfile(object):
    """
    Body-frame angular and translational velocity profiles. Each axis is a
    constant plus the amplitude times the mean of sinusoids at the given
    frequencies with seeded random phases.
    """

    def __init__(self, omega_amplitude=0.3, velocity_amplitude=0.5,
                 frequencies=(0.05, 0.13, 0.31), constant_omega=(0, 0, 0),
                 constant_velocity=(0, 0, 0)):
        self.omega_amplitude = float(omega_amplitude)
        self.velocity_amplitude = float(velocity_amplitude)
        self.frequencies = tuple(float(f) for f in frequencies)
        self.constant_omega = np.asarray(constant_omega, dtype=float)
        self.constant_velocity = np.asarray(constant_velocity, dtype=float)

    def evaluate(self, stamps, rng):
        """Returns (omega, velocity), each of shape (len(stamps), 3)."""
        stamps = np.asarray(stamps, dtype=float)
        count = len(self.frequencies)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(2, 3, count))
        waves = []
        for phase in phases:
            if count == 0:
                waves.append(np.zeros((stamps.size, 3)))
                continue
            angles = (2.0 * np.pi * stamps[:, None, None]
                      * np.asarray(self.frequencies)[None, None, :]
                      + phase[None, :, :])
            waves.append(np.sin(angles).mean(axis=2))
        omega = self.constant_omega + self.omega_amplitude * waves[0]
        velocity = (self.constant_velocity
                    + self.velocity_amplitude * waves[1])
        return omega, velocity


class ScenarioConfig(object):
    """
    Everything that defines a synthetic experiment apart from the initial
    error. Noise levels are per-sample standard deviations; the bias walks
    are standard deviations per square-root second.
    """

    def __init__(self, duration=20.0, intero_rate=100.0, gps_rate=10.0,
                 landmark_rate=15.0, landmark_count=20, landmark_extent=10.0,
                 landmark_range=None, landmarks=None, gyro_noise=0.01,
                 velocity_noise=0.05, gps_noise=0.5, landmark_noise=0.1,
                 bias_gyro0=(0.05, 0.05, 0.05), bias_vel0=(0.04, -0.03, 0.06),
                 bias_walk_gyro=0.005, bias_walk_vel=0.005,
                 variance_floor=1e-12, profile=None, seed=0):
        for name, value in (('duration', duration),
                            ('intero_rate', intero_rate)):
            if not 0.0 < value < np.inf:
                raise ValueError("{} must be finite and > 0".format(name))
        for name, value in (('gps_rate', gps_rate),
                            ('landmark_rate', landmark_rate)):
            if value < 0.0:
                raise ValueError("{} must be >= 0".format(name))
        self.duration = float(duration)
        self.intero_rate = float(intero_rate)
        self.gps_rate = float(gps_rate)
        self.landmark_rate = float(landmark_rate)
        if self.steps < 1:
            raise ValueError(
                "duration {!r} s holds no interoceptive step at {!r} Hz"
                .format(self.duration, self.intero_rate))
        self.landmark_count = int(landmark_count)
        self.landmark_extent = float(landmark_extent)
        self.landmark_range = (None if landmark_range is None
                               else float(landmark_range))
        self.gyro_noise = float(gyro_noise)
        self.velocity_noise = float(velocity_noise)
        self.gps_noise = float(gps_noise)
        self.landmark_noise = float(landmark_noise)
        self.bias_gyro0 = np.asarray(bias_gyro0, dtype=float)
        self.bias_vel0 = np.asarray(bias_vel0, dtype=float)
        self.bias_walk_gyro = float(bias_walk_gyro)
        self.bias_walk_vel = float(bias_walk_vel)
        self.variance_floor = float(variance_floor)
        self.profile = TrajectoryProfile() if profile is None else profile
        self.seed = int(seed)
        if landmarks is None:
            landmarks = self._make_landmarks()
        self.landmarks = landmarks
        if self.landmark_rate > 0.0 and not len(self.landmarks):
            raise ValueError("landmark_rate > 0 needs a non-empty map")

    def __repr__(self):
        return ('ScenarioConfig(duration={!r}, intero_rate={!r}, '
                'gps_rate={!r}, landmark_rate={!r}, landmarks={}, seed={})'
                .format(self.duration, self.intero_rate, self.gps_rate,
                        self.landmark_rate, len(self.landmarks), self.seed))

    def _make_landmarks(self):
        rng = np.random.default_rng([self.seed, 1])
        return LandmarkMap(rng.uniform(-self.landmark_extent,
                                       self.landmark_extent,
                                       size=(self.landmark_count, 3)))

    @property
    def dt(self):
        return 1.0 / self.intero_rate

    @property
    def steps(self):
        return int(round(self.duration * self.intero_rate))

    @property
    def stamps(self):
        return np.arange(self.steps + 1) * self.dt

    def noise_spec(self):
        """
        Noise densities handed to the estimators. White noise of
        per-sample standard deviation s maps to the density s^2 dt.
        """
        floor = self.variance_floor
        dt = self.dt
        return NoiseSpec.isotropic(
            self.gyro_noise ** 2 * dt + floor,
            self.velocity_noise ** 2 * dt + floor,
            self.bias_walk_gyro ** 2 + floor,
            self.bias_walk_vel ** 2 + floor,
            self.gps_noise ** 2 + floor,
            self.landmark_noise ** 2 + floor)


class InitialErrorSpec(object):
    def __init__(self, m_phi, m_r, m_beta1, m_beta2, sigma_phi, sigma_r,
                 sigma_beta1, sigma_beta2):
        self.params = (m_phi, m_r, m_beta1, m_beta2, sigma_phi, sigma_r,
                       sigma_beta1, sigma_beta2)
        ones = np.ones(3)
        self.mean = np.concatenate([m_phi * ones, m_r * ones,
                                    m_beta1 * ones, m_beta2 * ones])
        self.covariance = np.diag(np.concatenate([
            sigma_phi ** 2 * ones, sigma_r ** 2 * ones,
            sigma_beta1 ** 2 * ones, sigma_beta2 ** 2 * ones]))

    def __repr__(self):
        return 'InitialErrorSpec{!r}'.format(self.params)

    @classmethod
    def low_error(cls):
        return cls(np.pi / 12, 0.1, 0.005, 0.005,
                   np.pi / 36, 0.1, 0.005, 0.005)

    @classmethod
    def high_error(cls):
        return cls(np.pi / 3, 1.0, 0.03, 0.03,
                   np.pi / 36, 0.1, 0.005, 0.005)


class Trajectory(object):
    """Ground truth states with the body-frame rates that produced them."""

    def __init__(self, stamps, states, omega, velocity):
        if not len(stamps) == len(states) == len(omega) == len(velocity):
            raise LengthMismatch("trajectory columns differ in length")
        self.stamps = np.asarray(stamps, dtype=float)
        self.states = list(states)
        self.omega = np.asarray(omega, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)

    def __len__(self):
        return len(self.states)


class Scenario(object):
    """One trial's worth of data."""

    def __init__(self, truth, intero, extero, landmarks, noise):
        self.truth = truth
        self.intero = intero
        self.extero = extero
        self.landmarks = landmarks
        self.noise = noise


class TrialResult(object):
    """
    RMSEs of one trial. rmse[name] and filter_rmse[name] have shape
    (iterations, 4); errors[name] holds the per-step error magnitudes of
    the last iteration, shape (N + 1, 4).
    """

    def __init__(self, trial, rmse, filter_rmse, errors, failures):
        self.trial = trial
        self.rmse = rmse
        self.filter_rmse = filter_rmse
        self.errors = errors
        self.failures = failures

    def __repr__(self):
        return 'TrialResult(trial={}, estimators={}, failures={})'.format(
            self.trial, sorted(self.rmse), sorted(self.failures))


# ---------------------------------------------------------------------------
# Data synthesis
# ---------------------------------------------------------------------------

def synthesize_truth(config):
    """Integrates the profile at the interoceptive rate from the identity."""
    stamps = config.stamps
    rng = np.random.default_rng([config.seed, 0])
    omega, velocity = config.profile.evaluate(stamps, rng)
    states = [GroupElement.identity()]
    for k in range(1, stamps.size):
        rates = InteroceptiveSample(stamps[k - 1], omega[k - 1],
                                    velocity[k - 1])
        states.append(models.propagate(states[-1], rates, config.dt))
    return Trajectory(stamps, states, omega, velocity)


def corrupt_interoceptive(truth, config, rng):
    """
    Returns the measured stream u = true rate - bias - noise and the bias
    series, shape (N + 1, 6), as a random walk from the initial biases.
    """
    count = len(truth)
    dt = config.dt
    walk_std = np.concatenate([np.full(3, config.bias_walk_gyro),
                               np.full(3, config.bias_walk_vel)])
    increments = rng.normal(size=(count - 1, 6)) * walk_std * np.sqrt(dt)
    start = np.concatenate([config.bias_gyro0, config.bias_vel0])
    biases = np.vstack([start, start + np.cumsum(increments, axis=0)])
    noise_std = np.concatenate([np.full(3, config.gyro_noise),
                                np.full(3, config.velocity_noise)])
    noise = rng.normal(size=(count, 6)) * noise_std
    u1 = truth.omega - biases[:, 0:3] - noise[:, 0:3]
    u2 = truth.velocity - biases[:, 3:6] - noise[:, 3:6]
    intero = [InteroceptiveSample(t, u1[k], u2[k])
              for k, t in enumerate(truth.stamps)]
    return intero, biases


def with_biases(states, biases):
    return [X.replace(bias_gyro=beta[0:3], bias_vel=beta[3:6])
            for X, beta in zip(states, biases)]


def _epochs(rate, stamps):
    """Step indices nearest to the epochs of a sensor running at rate."""
    if rate <= 0.0:
        return []
    times = np.arange(0.0, stamps[-1] + 0.5 / rate, 1.0 / rate)
    steps = np.clip(np.rint(times / (stamps[1] - stamps[0])).astype(int),
                    0, stamps.size - 1)
    return sorted(set(steps.tolist()))


def generate_extero(truth, config, rng, landmarks=None):
    landmarks = config.landmarks if landmarks is None else landmarks
    stamps = truth.stamps
    measurements = []
    for k in _epochs(config.gps_rate, stamps):
        value = (models.gps_predict(truth.states[k])
                 + rng.normal(size=3) * config.gps_noise)
        measurements.append(ExteroMeasurement(stamps[k], MeasurementKind.GPS,
                                              value))
    for k in _epochs(config.landmark_rate, stamps):
        X = truth.states[k]
        for landmark_id in range(len(landmarks)):
            predicted = models.landmark_predict(X, landmarks, landmark_id)
            if (config.landmark_range is not None
                    and np.linalg.norm(predicted) > config.landmark_range):
                continue
            value = predicted + rng.normal(size=3) * config.landmark_noise
            measurements.append(ExteroMeasurement(
                stamps[k], MeasurementKind.LANDMARK, value, landmark_id))
    return models.measurement_batch(measurements)


def draw_initial_error(spec, rng):
    return rng.multivariate_normal(spec.mean, spec.covariance)


def initial_belief(truth0, delta, covariance, convention, t=0.0):
    """
    The estimate whose error relative to truth0 under the convention is
    delta, carrying the given covariance.
    """
    convention = Convention(convention)
    return Belief(estimators.retract(truth0, delta, convention),
                  covariance, convention, t)


def sample_initial_belief(truth0, spec, convention, rng, floor=0.0, t=0.0):
    """
    Draws the initial error from N(m, P0). The covariance handed over is
    P0 plus floor * I; the mean offset m is not folded in.
    """
    delta = draw_initial_error(spec, rng)
    covariance = spec.covariance + floor * np.eye(lie.DIM)
    return initial_belief(truth0, delta, covariance, convention, t)


def initial_error_rng(config, trial):
    """The generator of a trial's initial error draw."""
    return np.random.default_rng(
        np.random.SeedSequence([config.seed, trial, 2]))


def trial_priors(config, error_spec, names, trial, scenario):
    """
    One prior per estimator. Every estimator sees the same error draw,
    expressed in its own convention.
    """
    truth0 = scenario.truth.states[0]
    return {name: sample_initial_belief(
                truth0, error_spec, CONVENTIONS[name],
                initial_error_rng(config, trial),
                floor=config.variance_floor, t=scenario.intero[0].t)
            for name in names}


def simulate_trial(config, trial, truth=None):
    """Builds the data of one trial; truth is synthesized if not given."""
    truth = synthesize_truth(config) if truth is None else truth
    intero_seed, extero_seed = np.random.SeedSequence(
        [config.seed, trial]).spawn(2)
    intero, biases = corrupt_interoceptive(
        truth, config, np.random.default_rng(intero_seed))
    truth = Trajectory(truth.stamps, with_biases(truth.states, biases),
                       truth.omega, truth.velocity)
    extero = generate_extero(truth, config,
                             np.random.default_rng(extero_seed))
    return Scenario(truth, intero, extero, config.landmarks,
                    config.noise_spec())


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def state_errors(estimates, truth):
    """Per-step error magnitudes, shape (N + 1, 4)."""
    if len(estimates) != len(truth):
        raise LengthMismatch("{} estimates for {} truth states".format(
            len(estimates), len(truth)))
    errors = np.empty((len(truth), len(STATES)))
    for k, (X_hat, X) in enumerate(zip(estimates, truth)):
        errors[k] = (lie.rotation_angle(X.attitude.T @ X_hat.attitude),
                     np.linalg.norm(X_hat.position - X.position),
                     np.linalg.norm(X_hat.bias_gyro - X.bias_gyro),
                     np.linalg.norm(X_hat.bias_vel - X.bias_vel))
    return errors


def rmse(estimates, truth):
    """Root mean square of the per-step errors of each state block."""
    errors = state_errors(estimates, truth)
    return np.sqrt(np.mean(errors ** 2, axis=0))


# ---------------------------------------------------------------------------
# Trials and campaigns
# ---------------------------------------------------------------------------

def _check_estimators(names):
    names = list(names)
    unknown = [name for name in names if name not in ESTIMATORS]
    if unknown:
        raise ValueError("unknown estimators: {}".format(', '.join(unknown)))
    if not names:
        raise ValueError("no estimators requested")
    return names


def run_trial(config, error_spec, names, iterations, trial, truth=None):
    names = _check_estimators(names)
    scenario = simulate_trial(config, trial, truth)
    truth_states = scenario.truth.states
    priors = trial_priors(config, error_spec, names, trial, scenario)
    results = {}
    filtered = {}
    errors = {}
    failures = {}
    for name in names:
        prior = priors[name]
        try:
            if name in SMOOTHERS:
                rows, filter_rows = [], []
                for run in estimators.iterate_smoother(
                        prior, scenario.intero, scenario.extero,
                        scenario.landmarks, scenario.noise, SMOOTHERS[name],
                        iterations):
                    rows.append(rmse(run.smoothed_states(), truth_states))
                    filter_rows.append(rmse(run.filtered_states(),
                                            truth_states))
                last = run.smoothed_states()
                filtered[name] = np.array(filter_rows)
            else:
                problem = batchgn.BatchProblem(
                    prior, scenario.intero, scenario.extero,
                    scenario.landmarks, scenario.noise)
                solution = batchgn.solve(problem, SOLVERS[name], iterations)
                rows = [rmse(states, truth_states)
                        for states in solution.snapshots[1:]]
                last = solution.states
            rows = np.array(rows)
            if not np.all(np.isfinite(rows)):
                raise FloatingPointError("non-finite RMSE")
        except (InvsmoothError, FloatingPointError,
                np.linalg.LinAlgError) as err:
            logger.warning("trial %d: %s failed: %s", trial, name, err)
            failures[name] = '{}: {}'.format(type(err).__name__, err)
            filtered.pop(name, None)
            continue
        results[name] = rows
        errors[name] = state_errors(last, truth_states)
    return TrialResult(trial, results, filtered, errors, failures)


class CampaignStatistics(object):
    def __init__(self, names, iterations, results):
        self.names = list(names)
        self.iterations = iterations
        self.results = sorted(results, key=lambda result: result.trial)

    def __repr__(self):
        return 'CampaignStatistics(estimators={}, trials={})'.format(
            self.names, len(self.results))

    @property
    def trials(self):
        return len(self.results)

    def failures(self, name):
        return sum(1 for result in self.results if name in result.failures)

    def rmse_array(self, name, filtered=False):
        """Shape (successful trials, iterations, 4)."""
        source = 'filter_rmse' if filtered else 'rmse'
        rows = [getattr(result, source)[name] for result in self.results
                if name in getattr(result, source)]
        if not rows:
            return np.empty((0, self.iterations, len(STATES)))
        return np.array(rows)

    def summary(self):
        """
        Rows of (estimator, state, iteration, mean, p2.5, p97.5) in
        estimator, state, iteration order.
        """
        rows = []
        for name in self.names:
            values = self.rmse_array(name)
            for s, state in enumerate(STATES):
                for iteration in range(self.iterations):
                    column = values[:, iteration, s]
                    if column.size:
                        low, high = np.percentile(column, [2.5, 97.5])
                        mean = column.mean()
                    else:
                        mean = low = high = float('nan')
                    rows.append((name, state, iteration + 1, mean, low,
                                 high))
        return rows

    def mean_rmse(self, name, state, iteration=None):
        iteration = self.iterations if iteration is None else iteration
        return float(self.rmse_array(name)[:, iteration - 1,
                                           STATES.index(state)].mean())

    def smoothing_benefit(self, name):
        """
        Fraction of trials whose last-iteration smoothed RMSE does not
        exceed the forward-filter RMSE, per state block.
        """
        smoothed = self.rmse_array(name)[:, -1, :]
        forward = self.rmse_array(name, filtered=True)[:, -1, :]
        return np.mean(smoothed <= forward, axis=0)


def paired_comparison(statistics, first, second, state, iteration=None):
    """
    One-sided paired t-test of mean RMSE(first) < mean RMSE(second) over
    the trials where both succeeded. Returns (mean difference, p-value).
    """
    iteration = statistics.iterations if iteration is None else iteration
    column = STATES.index(state)
    a, b = [], []
    for result in statistics.results:
        if first in result.rmse and second in result.rmse:
            a.append(result.rmse[first][iteration - 1, column])
            b.append(result.rmse[second][iteration - 1, column])
    if len(a) < 2:
        raise ValueError("need at least two paired trials")
    test = stats.ttest_rel(a, b, alternative='less')
    return float(np.mean(np.subtract(a, b))), float(test.pvalue)


def run_campaign(config, error_spec, names, trials, iterations, workers=1):
    names = _check_estimators(names)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    truth = synthesize_truth(config)
    job = functools.partial(run_trial, config, error_spec, names, iterations,
                            truth=truth)
    with Timer(logger, 'run {} trials'.format(trials)):
        if workers is None or workers > 1:
            with concurrent.futures.ProcessPoolExecutor(
                    max_workers=workers) as executor:
                results = list(executor.map(job, range(trials)))
        else:
            results = [job(trial) for trial in range(trials)]
    statistics = CampaignStatistics(names, iterations, results)
    for name in names:
        count = statistics.failures(name)
        if count:
            logger.warning("%s failed in %d of %d trials", name, count,
                           trials)
    return statistics


# ---------------------------------------------------------------------------
# Linear-Gaussian calibration
# ---------------------------------------------------------------------------

def random_linear_system(rng, dim=4, steps=20, obs_dim=2):
    """
    A random stable linear-Gaussian system without measurement values; see
    simulate_linear.
    """
    A = []
    for _ in range(steps):
        Q_, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        A.append(0.95 * Q_ + 0.05 * rng.normal(size=(dim, dim)))
    Q = []
    for _ in range(steps):
        G = rng.normal(size=(dim, dim)) * 0.3
        Q.append(G @ G.T + 0.01 * np.eye(dim))
    H = [rng.normal(size=(obs_dim, dim)) for _ in range(steps + 1)]
    R = []
    for _ in range(steps + 1):
        G = rng.normal(size=(obs_dim, obs_dim)) * 0.5
        R.append(G @ G.T + 0.1 * np.eye(obs_dim))
    inputs = [rng.normal(size=dim) * 0.1 for _ in range(steps)]
    G = rng.normal(size=(dim, dim))
    prior_cov = G @ G.T + np.eye(dim)
    return estimators.LinearGaussianSystem(
        rng.normal(size=dim), prior_cov, A, Q, inputs=inputs, H=H, R=R,
        y=[np.zeros(obs_dim)] * (steps + 1))


def simulate_linear(system, rng):
    """
    Draws a truth trajectory from the system's own prior and noise models
    and returns it with a copy of the system carrying matching
    measurements.
    """
    x = rng.multivariate_normal(system.prior_mean, system.prior_cov)
    truth = [x]
    for k in range(system.horizon):
        w = rng.multivariate_normal(np.zeros(system.Q[k].shape[0]),
                                    system.Q[k])
        x = system.A[k] @ x + system.inputs[k] + system.L[k] @ w
        truth.append(x)
    y = []
    for k, x in enumerate(truth):
        if system.H[k] is None:
            y.append(None)
            continue
        v = rng.multivariate_normal(np.zeros(system.R[k].shape[0]),
                                    system.R[k])
        y.append(system.H[k] @ x + system.M[k] @ v)
    measured = estimators.LinearGaussianSystem(
        system.prior_mean, system.prior_cov, system.A, system.Q, system.L,
        system.inputs, system.H, system.M, system.R, y, system.stamps)
    return np.array(truth), measured


def linear_nees(trials, seed=0, dim=4, steps=20, step=0):
    """
    NEES of the smoothed estimate at one step over independent draws of
    the same random linear system.
    """
    rng = np.random.default_rng(seed)
    template = random_linear_system(rng, dim, steps)
    values = []
    for _ in range(trials):
        truth, system = simulate_linear(template, rng)
        run = estimators.run_linear_rts(system)
        belief = run.smoothed[step]
        values.append(estimators.nees([belief.state - truth[step]],
                                      [belief.covariance])[0])
    return np.array(values)
