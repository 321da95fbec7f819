import numpy as np
import pytest

from invsmooth import estimators, lie, models, sim
from invsmooth.errors import LengthMismatch
from invsmooth.models import Convention, LandmarkMap, MeasurementKind
from invsmooth.sim import InitialErrorSpec, ScenarioConfig, TrajectoryProfile

from test_utils import noise_free_config, small_config


@pytest.fixture(scope='module')
def campaign():
    return sim.run_campaign(small_config(), InitialErrorSpec.low_error(),
                            ['irts', 'mrts', 'ign'], trials=3, iterations=2)


def _desk_config():
    """The desk scenario shortened to 10 s at 50 Hz."""
    return ScenarioConfig(duration=10.0, intero_rate=50.0, seed=7)


@pytest.fixture(scope='module')
def high_error_campaign():
    return sim.run_campaign(_desk_config(), InitialErrorSpec.high_error(),
                            ['irts', 'mrts', 'ign', 'mgn'], trials=8,
                            iterations=5, workers=2)


# -----
# Tests
# -----

def test_scenario_stamps():
    config = ScenarioConfig(duration=2.0, intero_rate=50.0)
    assert config.steps == 100
    assert config.dt == pytest.approx(0.02)
    assert config.stamps.size == 101
    assert config.stamps[-1] == pytest.approx(2.0)


@pytest.mark.parametrize('kwargs', [
    {'duration': 0.0},
    {'intero_rate': -1.0},
    {'gps_rate': -1.0},
    {'landmark_count': 0},
    {'duration': 0.004},
    {'duration': float('inf')},
    {'intero_rate': float('nan')},
])
def test_scenario_rejects(kwargs):
    with pytest.raises(ValueError):
        ScenarioConfig(**kwargs)


def test_noise_spec_from_densities():
    config = ScenarioConfig(intero_rate=100.0, gyro_noise=0.1,
                            velocity_noise=0.2, bias_walk_gyro=0.3,
                            bias_walk_vel=0.4, gps_noise=0.5,
                            landmark_noise=0.6, variance_floor=0.0)
    noise = config.noise_spec()
    assert noise.Q1[0, 0] == pytest.approx(0.01 * 0.01)
    assert noise.Q2[0, 0] == pytest.approx(0.04 * 0.01)
    assert noise.Q3[0, 0] == pytest.approx(0.09)
    assert noise.Q4[0, 0] == pytest.approx(0.16)
    assert noise.R_gps[0, 0] == pytest.approx(0.25)
    assert noise.R_landmark[0, 0] == pytest.approx(0.36)


def test_noise_spec_floor():
    noise = noise_free_config().noise_spec()
    assert noise.Q1[0, 0] == pytest.approx(1e-12)
    assert noise.R_gps[0, 0] == pytest.approx(1e-12)


def test_landmarks_depend_on_seed_only():
    first = ScenarioConfig(seed=4, landmark_count=7)
    second = ScenarioConfig(seed=4, landmark_count=7, duration=3.0)
    third = ScenarioConfig(seed=5, landmark_count=7)
    assert len(first.landmarks) == 7
    assert np.array_equal(first.landmarks.positions,
                          second.landmarks.positions)
    assert not np.array_equal(first.landmarks.positions,
                              third.landmarks.positions)
    assert np.abs(first.landmarks.positions).max() <= 10.0


def test_profile_constant_rates():
    profile = TrajectoryProfile(omega_amplitude=0.0, velocity_amplitude=0.0,
                                constant_omega=(0, 0, 0.5),
                                constant_velocity=(1, 0, 0))
    omega, velocity = profile.evaluate(np.linspace(0, 1, 5),
                                       np.random.default_rng(0))
    assert np.allclose(omega, [0, 0, 0.5])
    assert np.allclose(velocity, [1, 0, 0])


def test_truth_follows_circle():
    profile = TrajectoryProfile(omega_amplitude=0.0, velocity_amplitude=0.0,
                                constant_omega=(0, 0, np.pi),
                                constant_velocity=(np.pi, 0, 0))
    config = ScenarioConfig(duration=2.0, intero_rate=1000.0,
                            profile=profile)
    truth = sim.synthesize_truth(config)
    assert len(truth) == 2001
    assert truth.states[0].allclose(lie.GroupElement.identity())
    # one full turn on a circle of radius 1
    assert np.allclose(truth.states[-1].position, 0.0, atol=1e-2)
    assert lie.rotation_angle(truth.states[-1].attitude) < 1e-6


def test_simulate_trial_is_reproducible():
    config = small_config()
    first = sim.simulate_trial(config, 2)
    second = sim.simulate_trial(config, 2)
    other = sim.simulate_trial(config, 3)
    assert first.intero == second.intero
    assert list(first.extero) == list(second.extero)
    assert first.intero != other.intero


def test_interoceptive_corruption():
    config = noise_free_config(bias_gyro0=(0.1, 0.2, 0.3),
                               bias_vel0=(0.0, 0.0, -0.1))
    trial = sim.simulate_trial(config, 0)
    truth = trial.truth
    for k, sample in enumerate(trial.intero):
        assert np.allclose(sample.u1, truth.omega[k] - [0.1, 0.2, 0.3])
        assert np.allclose(sample.u2, truth.velocity[k] - [0.0, 0.0, -0.1])
        assert np.allclose(truth.states[k].bias_gyro, [0.1, 0.2, 0.3])


def test_extero_rates():
    config = noise_free_config()
    trial = sim.simulate_trial(config, 0)
    gps = [m for m in trial.extero if m.kind is MeasurementKind.GPS]
    landmarks = [m for m in trial.extero
                 if m.kind is MeasurementKind.LANDMARK]
    assert len(gps) == 11
    assert len(landmarks) == 11 * 5
    k = 10
    assert gps[1].t == pytest.approx(0.2)
    assert np.allclose(gps[1].value, trial.truth.states[k].position)


def test_landmark_range_limits_observations():
    config = noise_free_config(
        landmarks=LandmarkMap([[1.0, 0, 0], [50.0, 0, 0]]),
        landmark_range=5.0, gps_rate=0.0)
    trial = sim.simulate_trial(config, 0)
    assert {m.landmark_id for m in trial.extero} == {0}


def test_initial_belief_error():
    rng = np.random.default_rng(3)
    truth0 = lie.random_element(rng)
    delta = lie.random_tangent(rng, max_angle=1.0)
    for convention in (Convention.LEFT, Convention.RIGHT,
                       Convention.MULTIPLICATIVE):
        belief = sim.initial_belief(truth0, delta, np.eye(lie.DIM),
                                    convention)
        assert belief.convention is convention
        assert np.allclose(
            estimators.state_error(truth0, belief.state, convention), delta)


def test_initial_error_spec():
    spec = InitialErrorSpec.high_error()
    assert spec.mean[0] == pytest.approx(np.pi / 3)
    assert spec.mean[3] == pytest.approx(1.0)
    assert spec.covariance[0, 0] == pytest.approx((np.pi / 36) ** 2)
    low = InitialErrorSpec.low_error()
    assert low.mean[0] == pytest.approx(np.pi / 12)


def test_sample_initial_belief_floor():
    rng = np.random.default_rng(0)
    spec = InitialErrorSpec(0, 0, 0, 0, 0, 0, 0, 0)
    belief = sim.sample_initial_belief(lie.GroupElement.identity(), spec,
                                       Convention.LEFT, rng, floor=1e-6)
    assert np.allclose(belief.covariance, 1e-6 * np.eye(lie.DIM))
    assert belief.state.allclose(lie.GroupElement.identity())


def test_rmse_and_errors():
    truth = [lie.GroupElement.identity()] * 2
    estimates = [lie.GroupElement(lie.exp_so3([0, 0, 0.3]), [3.0, 4.0, 0]),
                 lie.GroupElement(bias_gyro=[0, 1.0, 0])]
    errors = sim.state_errors(estimates, truth)
    assert errors.shape == (2, 4)
    assert errors[0, 0] == pytest.approx(0.3)
    assert errors[0, 1] == pytest.approx(5.0)
    values = sim.rmse(estimates, truth)
    assert values[1] == pytest.approx(np.sqrt(12.5))
    assert values[2] == pytest.approx(np.sqrt(0.5))


def test_rmse_length_mismatch():
    with pytest.raises(LengthMismatch):
        sim.rmse([lie.GroupElement()], [])


def test_run_trial_shapes():
    result = sim.run_trial(small_config(), InitialErrorSpec.low_error(),
                           ['irts', 'rirts', 'mgn'], 2, 0)
    assert not result.failures
    assert result.rmse['irts'].shape == (2, 4)
    assert result.filter_rmse['rirts'].shape == (2, 4)
    assert 'mgn' not in result.filter_rmse
    assert result.errors['mgn'].shape == (21, 4)


def test_trial_priors_share_one_draw():
    config = small_config()
    spec = InitialErrorSpec.high_error()
    scenario = sim.simulate_trial(config, 4)
    truth0 = scenario.truth.states[0]
    priors = sim.trial_priors(config, spec, sim.ESTIMATORS, 4, scenario)
    expected = sim.sample_initial_belief(
        truth0, spec, Convention.LEFT, sim.initial_error_rng(config, 4),
        floor=config.variance_floor)
    assert priors['irts'].state.allclose(expected.state, atol=0)
    assert np.array_equal(priors['irts'].covariance, expected.covariance)
    delta = estimators.state_error(truth0, expected.state, Convention.LEFT)
    for name, prior in priors.items():
        assert prior.convention is sim.CONVENTIONS[name]
        assert prior.t == scenario.intero[0].t
        assert np.allclose(estimators.state_error(
            truth0, prior.state, prior.convention), delta)


def test_run_trial_uses_trial_priors(monkeypatch):
    seen = []
    original = sim.trial_priors

    def record(*args):
        priors = original(*args)
        seen.append(priors)
        return priors

    monkeypatch.setattr(sim, 'trial_priors', record)
    sim.run_trial(small_config(), InitialErrorSpec.low_error(),
                  ['mrts'], 1, 2)
    assert len(seen) == 1
    assert list(seen[0]) == ['mrts']


def test_run_trial_rejects_unknown():
    with pytest.raises(ValueError):
        sim.run_trial(small_config(), InitialErrorSpec.low_error(),
                      ['kalman'], 1, 0)


def test_run_trial_is_reproducible():
    args = (small_config(), InitialErrorSpec.low_error(), ['mrts'], 1, 4)
    first = sim.run_trial(*args)
    second = sim.run_trial(*args)
    assert np.array_equal(first.rmse['mrts'], second.rmse['mrts'])


def test_campaign_statistics(campaign):
    assert campaign.trials == 3
    assert campaign.rmse_array('irts').shape == (3, 2, 4)
    assert campaign.rmse_array('irts', filtered=True).shape == (3, 2, 4)
    rows = campaign.summary()
    assert len(rows) == 3 * 4 * 2
    name, state, iteration, mean, low, high = rows[0]
    assert (name, state, iteration) == ('irts', 'attitude', 1)
    assert low <= mean <= high
    assert campaign.mean_rmse('ign', 'position') > 0.0
    benefit = campaign.smoothing_benefit('mrts')
    assert benefit.shape == (4,)
    assert np.all((0.0 <= benefit) & (benefit <= 1.0))


def test_paired_comparison(campaign):
    difference, p_value = sim.paired_comparison(campaign, 'irts', 'mrts',
                                                'position')
    assert np.isfinite(difference)
    assert 0.0 <= p_value <= 1.0


@pytest.mark.parametrize('state', ['attitude', 'position'])
def test_invariant_smoother_wins_under_high_error(high_error_campaign,
                                                  state):
    stats = high_error_campaign
    assert all(stats.failures(name) == 0 for name in stats.names)
    assert (stats.mean_rmse('irts', state, 1)
            < stats.mean_rmse('mrts', state, 1))
    difference, p_value = sim.paired_comparison(stats, 'irts', 'mrts',
                                                state, 1)
    assert difference < 0.0
    assert p_value < 0.05


@pytest.mark.parametrize('state', ['attitude', 'position'])
def test_smoothers_beat_first_solver_iteration(high_error_campaign, state):
    stats = high_error_campaign
    for smoother in ('irts', 'mrts'):
        for solver in ('ign', 'mgn'):
            assert (stats.mean_rmse(smoother, state, 1)
                    < stats.mean_rmse(solver, state, 1))


def test_solvers_approach_smoothers(high_error_campaign):
    stats = high_error_campaign
    column = sim.STATES.index('attitude')
    for solver in ('ign', 'mgn'):
        medians = np.median(stats.rmse_array(solver)[:, :, column], axis=0)
        assert np.all(np.diff(medians) <= 1e-9 + 1e-3 * medians[:-1])
        assert stats.mean_rmse(solver, 'attitude') <= 2.0 * min(
            stats.mean_rmse('irts', 'attitude', 1),
            stats.mean_rmse('mrts', 'attitude', 1))


@pytest.mark.parametrize('name', ['irts', 'mrts'])
def test_smoothing_benefit(high_error_campaign, name):
    assert np.all(high_error_campaign.smoothing_benefit(name) >= 0.9)


def test_smoothers_comparable_under_low_error():
    stats = sim.run_campaign(_desk_config(), InitialErrorSpec.low_error(),
                             ['irts', 'mrts'], trials=8, iterations=1,
                             workers=2)
    for state in ('attitude', 'position'):
        irts = stats.mean_rmse('irts', state)
        mrts = stats.mean_rmse('mrts', state)
        assert abs(irts - mrts) <= 0.25 * max(irts, mrts)


def test_campaign_matches_single_trials(campaign):
    result = sim.run_trial(small_config(), InitialErrorSpec.low_error(),
                           ['irts', 'mrts', 'ign'], 2, 1)
    assert np.array_equal(campaign.results[1].rmse['irts'],
                          result.rmse['irts'])


def test_linear_system_simulation():
    rng = np.random.default_rng(8)
    system = sim.random_linear_system(rng, dim=3, steps=5, obs_dim=2)
    truth, measured = sim.simulate_linear(system, rng)
    assert truth.shape == (6, 3)
    assert all(y.shape == (2,) for y in measured.y)
    assert isinstance(measured, estimators.LinearGaussianSystem)


def test_noise_spec_is_models_noise():
    assert isinstance(small_config().noise_spec(), models.NoiseSpec)
