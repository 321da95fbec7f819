"""
Invariant and multiplicative RTS smoothing and Gauss-Newton batch
estimation for a rigid body with biased rate sensors.

Commands:
  simulate        run a Monte-Carlo campaign described by a configuration
  smooth          run one estimator on a dataset directory
  export-fixture  write one simulated trial as a dataset directory
  verify          run the built-in numerical self-checks

The configuration is a file path or the name of a bundled preset
(low_error, high_error).
"""

import argparse
import logging
import os
import sys
import time

import numpy as np
from fontTools import configLogger

from invsmooth import batchgn, config, csvio, estimators, lie, models, sim
from invsmooth import utils, verify
from invsmooth.errors import ConfigParseError, DataError, NumericalError
from invsmooth.lie import GroupElement

__version__ = '1.0.0'

logger = logging.getLogger(__name__)

DFLT_PRESET = 'high_error'

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _validate_path(path_str):
    valid_path = os.path.abspath(os.path.realpath(path_str))
    if not os.path.exists(valid_path):
        raise argparse.ArgumentTypeError(
            "'{}' is not a valid path.".format(path_str))
    return valid_path


def _validate_config(name):
    if os.path.exists(name):
        return os.path.abspath(name)
    if name in utils.list_presets():
        return utils.get_preset_path(name)
    raise argparse.ArgumentTypeError(
        "'{}' is neither a file nor a preset ({})".format(
            name, ', '.join(utils.list_presets())))


def _split_estimators(comma_str):
    names = [item.strip().lower() for item in comma_str.split(',')]
    for name in names:
        if name not in sim.ESTIMATORS:
            raise argparse.ArgumentTypeError(
                "Invalid estimator: '{}'. Choose from {}".format(
                    name, ','.join(sim.ESTIMATORS)))
    return names


def _positive_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "Invalid integer value: '{}'".format(value))
    if number < 1:
        raise argparse.ArgumentTypeError(
            "Value must be at least 1: '{}'".format(number))
    return number


def _seed(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "Invalid integer value: '{}'".format(value))
    if number < 0:
        raise argparse.ArgumentTypeError(
            "Seed must not be negative: '{}'".format(number))
    return number


def _add_config_arguments(parser, campaign=True):
    parser.add_argument(
        '-c',
        '--config',
        metavar='PATH|PRESET',
        type=_validate_config,
        default=utils.get_preset_path(DFLT_PRESET),
        help='configuration file or preset name\n'
             "Default is the '{}' preset".format(DFLT_PRESET)
    )
    parser.add_argument(
        '--seed',
        type=_seed,
        help='override the scenario seed'
    )
    if not campaign:
        return
    parser.add_argument(
        '--trials',
        type=_positive_int,
        help='override the number of Monte-Carlo trials'
    )
    parser.add_argument(
        '--iterations',
        type=_positive_int,
        help='override the number of smoother/GN iterations'
    )
    parser.add_argument(
        '--estimators',
        metavar='NAMES',
        type=_split_estimators,
        help='comma-separated estimators to run\n'
             'Choose from {}'.format(','.join(sim.ESTIMATORS))
    )
    parser.add_argument(
        '--workers',
        type=_positive_int,
        help='override the number of worker processes'
    )


def get_options(args):
    parser = argparse.ArgumentParser(
        prog='invsmooth',
        formatter_class=argparse.RawTextHelpFormatter,
        description=__doc__
    )
    parser.add_argument(
        '--version',
        action='version',
        version=__version__
    )
    parser.add_argument(
        '-v',
        '--verbose',
        action='count',
        default=0,
        help='verbose mode\n'
             'Use -vv for debug mode'
    )
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True

    simulate = subparsers.add_parser(
        'simulate', formatter_class=argparse.RawTextHelpFormatter,
        help='run a Monte-Carlo campaign')
    _add_config_arguments(simulate)
    simulate.add_argument(
        '-o',
        '--out',
        metavar='DIR',
        required=True,
        help='directory for rmse_summary.csv, per_trial.csv and '
             'manifest.txt'
    )
    simulate.add_argument(
        '--wall-clock',
        dest='wallClock',
        action='store_true',
        help='record the run time in the manifest\n'
             '(the files are then no longer reproducible byte for byte)'
    )
    simulate.set_defaults(func=run_simulate)

    smooth = subparsers.add_parser(
        'smooth', formatter_class=argparse.RawTextHelpFormatter,
        help='run one estimator on a dataset directory')
    smooth.add_argument(
        '-d',
        '--data',
        metavar='DIR',
        required=True,
        type=_validate_path,
        help='dataset directory (intero.csv, gps.csv, ...)'
    )
    _add_config_arguments(smooth, campaign=False)
    smooth.add_argument(
        '-e',
        '--estimator',
        choices=sim.ESTIMATORS,
        default='irts',
        help="estimator to run (default '%(default)s')"
    )
    smooth.add_argument(
        '--iterations',
        type=_positive_int,
        help='override the number of iterations'
    )
    smooth.add_argument(
        '-o',
        '--out',
        metavar='DIR',
        required=True,
        help='directory for smoothed.csv (and smoothed_rmse.csv when the '
             'dataset has truth)'
    )
    smooth.set_defaults(func=run_smooth)

    fixture = subparsers.add_parser(
        'export-fixture', formatter_class=argparse.RawTextHelpFormatter,
        help='write a simulated trial as a dataset directory')
    _add_config_arguments(fixture, campaign=False)
    fixture.add_argument(
        '--duration',
        type=float,
        help='override the scenario duration in seconds'
    )
    fixture.add_argument(
        '--trial',
        type=_seed,
        default=0,
        help='trial index whose noise realization is written '
             '(default %(default)s)'
    )
    fixture.add_argument(
        '-o',
        '--out',
        metavar='DIR',
        required=True,
        help='dataset directory to write'
    )
    fixture.set_defaults(func=run_export_fixture)

    check = subparsers.add_parser(
        'verify', formatter_class=argparse.RawTextHelpFormatter,
        help='run the numerical self-checks')
    check.add_argument(
        '--seed',
        type=_seed,
        default=0,
        help='random seed of the check cases (default %(default)s)'
    )
    check.add_argument(
        '--cases',
        type=_positive_int,
        default=1000,
        help='random cases per identity check (default %(default)s)'
    )
    check.set_defaults(func=run_verify)

    options = parser.parse_args(args)

    if not options.verbose:
        level = "WARNING"
    elif options.verbose == 1:
        level = "INFO"
    else:
        level = "DEBUG"
    configLogger(logger='invsmooth', level=level)

    return options


def _load_config(options, **overrides):
    overrides['seed'] = options.seed
    try:
        with open(options.config, 'r', encoding='utf-8') as fp:
            text = fp.read()
    except (IOError, OSError, UnicodeDecodeError) as err:
        raise ConfigParseError(None, None, "cannot read {}: {}".format(
            options.config, err))
    scenario, error_spec, campaign = config.parse_config_text(text,
                                                              overrides)
    return text, scenario, error_spec, campaign


def run_simulate(options):
    text, scenario, error_spec, campaign = _load_config(
        options, trials=options.trials, iterations=options.iterations,
        estimators=options.estimators, workers=options.workers)
    start = time.time()
    statistics = sim.run_campaign(scenario, error_spec, campaign.estimators,
                                  campaign.trials, campaign.iterations,
                                  campaign.workers)
    manifest = csvio.RunManifest(
        config.config_digest(text), scenario.seed, campaign.estimators,
        campaign.iterations, campaign.trials, __version__,
        wall_clock=('{:.3f}'.format(time.time() - start)
                    if options.wallClock else None))
    paths = csvio.export_results(statistics, options.out, manifest)
    for path in paths:
        logger.info("wrote %s", path)
    for name, state, iteration, mean, low, high in statistics.summary():
        if iteration == campaign.iterations:
            logger.info("%-5s %-9s iteration %d: mean %.4g [%.4g, %.4g]",
                        name, state, iteration, mean, low, high)
    return EXIT_OK


def _initial_state(dataset):
    if dataset.truth is not None:
        return dataset.truth[1][0]
    for meas in dataset.extero:
        if meas.kind is models.MeasurementKind.GPS:
            return GroupElement(position=meas.value)
    return GroupElement.identity()


def run_smooth(options):
    _, scenario, error_spec, campaign = _load_config(
        options, iterations=options.iterations)
    dataset = csvio.ingest_dataset(options.data)
    name = options.estimator
    noise = scenario.noise_spec()
    covariance = (error_spec.covariance
                  + scenario.variance_floor * np.eye(lie.DIM))
    prior = estimators.Belief(_initial_state(dataset), covariance,
                              sim.CONVENTIONS[name], dataset.intero[0].t)
    if name in sim.SMOOTHERS:
        run = estimators.run_smoother(
            prior, dataset.intero, dataset.extero, dataset.landmarks, noise,
            sim.SMOOTHERS[name], campaign.iterations)
        states = run.smoothed_states()
    else:
        problem = batchgn.BatchProblem(prior, dataset.intero, dataset.extero,
                                       dataset.landmarks, noise)
        states = batchgn.solve(problem, sim.SOLVERS[name],
                               campaign.iterations).states
    stamps = [sample.t for sample in dataset.intero]
    os.makedirs(options.out, exist_ok=True)
    csvio.write_trajectory(os.path.join(options.out, 'smoothed.csv'),
                           stamps, states)
    if dataset.truth is not None:
        truth_stamps, truth_states = dataset.truth
        if np.array_equal(truth_stamps, stamps):
            values = sim.rmse(states, truth_states)
            csvio.export_rmse_table(
                os.path.join(options.out, 'smoothed_rmse.csv'), values)
            for state, value in zip(sim.STATES, values):
                logger.info("%s RMSE %.6g", state, value)
        else:
            logger.warning("truth stamps differ from the interoceptive "
                           "stamps; RMSE not computed")
    return EXIT_OK


def run_export_fixture(options):
    overrides = {}
    if options.duration is not None:
        overrides['duration'] = options.duration
    _, scenario, _, _ = _load_config(options, **overrides)
    trial = sim.simulate_trial(scenario, options.trial)
    csvio.export_dataset(options.out, trial.intero, trial.extero,
                         trial.landmarks,
                         (trial.truth.stamps, trial.truth.states))
    logger.info("wrote %d interoceptive samples and %d measurements to %s",
                len(trial.intero), len(trial.extero), options.out)
    return EXIT_OK


def run_verify(options):
    results = verify.run_checks(options.seed, options.cases,
                                min(100, options.cases))
    for result in results:
        print(result)
    if all(result.passed for result in results):
        return EXIT_OK
    return EXIT_NUMERICAL


def main(args=None):
    options = get_options(args)

    try:
        return options.func(options)
    except ConfigParseError as err:
        logger.error("configuration error: %s", err)
        return EXIT_CONFIG
    except DataError as err:
        logger.error("data error: %s", err)
        return EXIT_DATA
    except NumericalError as err:
        logger.error("numerical failure: %s", err)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
