"""
Reads scenario configuration files.

The format is one option per line, the option name followed by white space
and its value. Lines starting with '#' are comments. Values are numbers
(multiples of pi are written like 'pi/3' or '2*pi'), white space separated
lists of numbers, or comma separated names.
"""

import hashlib
import logging
import math
import re

from invsmooth import sim
from invsmooth.errors import ConfigParseError

logger = logging.getLogger(__name__)

RE_OPTION = re.compile(r"[ \t]*(\S+)(?:[ \t]+([^\r\n]*?))?[ \t]*$")
RE_PI = re.compile(
    r"^(?P<coef>[+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?)?)\s*\*?\s*pi"
    r"(?:\s*/\s*(?P<den>\d+\.?\d*))?$")

FLOAT = 'float'
INT = 'int'
TRIPLE = 'triple'
FLOATS = 'floats'
NAMES = 'names'

# key: (type, required)
kScenarioOptions = {
    'duration': (FLOAT, True),
    'intero_rate': (FLOAT, True),
    'gps_rate': (FLOAT, True),
    'landmark_rate': (FLOAT, True),
    'seed': (INT, True),
    'landmark_count': (INT, False),
    'landmark_extent': (FLOAT, False),
    'landmark_range': (FLOAT, False),
    'gyro_noise': (FLOAT, False),
    'velocity_noise': (FLOAT, False),
    'gps_noise': (FLOAT, False),
    'landmark_noise': (FLOAT, False),
    'bias_gyro0': (TRIPLE, False),
    'bias_vel0': (TRIPLE, False),
    'bias_walk_gyro': (FLOAT, False),
    'bias_walk_vel': (FLOAT, False),
    'variance_floor': (FLOAT, False),
}
kProfileOptions = {
    'omega_amplitude': (FLOAT, False),
    'velocity_amplitude': (FLOAT, False),
    'profile_frequencies': (FLOATS, False),
    'constant_omega': (TRIPLE, False),
    'constant_velocity': (TRIPLE, False),
}
kErrorOptions = {
    'm_phi': (FLOAT, True),
    'm_r': (FLOAT, True),
    'm_beta1': (FLOAT, True),
    'm_beta2': (FLOAT, True),
    'sigma_phi': (FLOAT, True),
    'sigma_r': (FLOAT, True),
    'sigma_beta1': (FLOAT, True),
    'sigma_beta2': (FLOAT, True),
}
kCampaignOptions = {
    'trials': (INT, True),
    'iterations': (INT, True),
    'estimators': (NAMES, True),
    'workers': (INT, False),
}

kOptions = {}
for table in (kScenarioOptions, kProfileOptions, kErrorOptions,
              kCampaignOptions):
    kOptions.update(table)

# options that must be strictly positive / non-negative
kPositive = ('duration', 'intero_rate', 'trials', 'iterations', 'workers',
             'landmark_range')
kNonNegative = ('gps_rate', 'landmark_rate', 'seed', 'landmark_count',
                'landmark_extent', 'gyro_noise', 'velocity_noise',
                'gps_noise', 'landmark_noise', 'bias_walk_gyro',
                'bias_walk_vel', 'variance_floor', 'sigma_phi', 'sigma_r',
                'sigma_beta1', 'sigma_beta2')


class CampaignOptions(object):
    def __init__(self, trials, iterations, estimators, workers=1):
        self.trials = trials
        self.iterations = iterations
        self.estimators = list(estimators)
        self.workers = workers

    def __repr__(self):
        return ('CampaignOptions(trials={}, iterations={}, estimators={}, '
                'workers={})'.format(self.trials, self.iterations,
                                     self.estimators, self.workers))


def parse_number(text):
    match = RE_PI.match(text.strip())
    if match:
        coef = match.group('coef')
        if coef in ('', '+'):
            value = math.pi
        elif coef == '-':
            value = -math.pi
        else:
            value = float(coef) * math.pi
        if match.group('den'):
            den = float(match.group('den'))
            if den == 0.0:
                raise ValueError("division by zero in {!r}".format(text))
            value /= den
    else:
        value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite number {!r}".format(text))
    return value


def parse_value(kind, text):
    if kind == FLOAT:
        return parse_number(text)
    if kind == INT:
        return int(text)
    if kind == NAMES:
        names = [name.strip().lower() for name in text.split(',')]
        if not all(names):
            raise ValueError("empty name in list")
        return names
    values = [parse_number(item) for item in text.split()]
    if kind == TRIPLE and len(values) != 3:
        raise ValueError("expected 3 numbers, got {}".format(len(values)))
    return values


def read_options(text):
    """
    Returns {key: (value, line number)} for the option lines of text.
    """
    options = {}
    for line_number, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith('#'):
            continue
        key, value = RE_OPTION.match(line).groups()
        if key not in kOptions:
            raise ConfigParseError(line_number, key, "unknown option")
        if key in options:
            raise ConfigParseError(line_number, key, "option given twice")
        if not value:
            raise ConfigParseError(line_number, key, "missing value")
        try:
            parsed = parse_value(kOptions[key][0], value)
        except ValueError as err:
            raise ConfigParseError(line_number, key,
                                   "bad value {!r}: {}".format(value, err))
        options[key] = (parsed, line_number)
    return options


def _check_ranges(options):
    for key, (value, line_number) in sorted(options.items()):
        if key in kPositive and not value > 0:
            raise ConfigParseError(line_number, key,
                                   "{} must be > 0".format(key))
        if key in kNonNegative and value < 0:
            raise ConfigParseError(line_number, key,
                                   "{} must be >= 0".format(key))
    if 'estimators' in options:
        names, line_number = options['estimators']
        unknown = [name for name in names if name not in sim.ESTIMATORS]
        if unknown:
            raise ConfigParseError(line_number, 'estimators',
                                   "unknown estimators: {}".format(
                                       ', '.join(unknown)))


def config_digest(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def parse_config_text(text, overrides=None):
    """
    Parses configuration text into (ScenarioConfig, InitialErrorSpec,
    CampaignOptions). Values in overrides replace the file values and may
    supply required ones.
    """
    options = read_options(text)
    for key, value in (overrides or {}).items():
        if value is not None:
            options[key] = (value, None)
    missing = sorted(key for key, (_, required) in kOptions.items()
                     if required and key not in options)
    if missing:
        raise ConfigParseError(None, None, "missing required options: {}"
                               .format(', '.join(missing)))
    _check_ranges(options)
    values = {key: value for key, (value, _) in options.items()}

    profile_args = {key: values[key] for key in kProfileOptions
                    if key in values}
    if 'profile_frequencies' in profile_args:
        profile_args['frequencies'] = profile_args.pop('profile_frequencies')
    scenario_args = {key: values[key] for key in kScenarioOptions
                     if key in values}
    try:
        scenario = sim.ScenarioConfig(
            profile=sim.TrajectoryProfile(**profile_args), **scenario_args)
    except ValueError as err:
        raise ConfigParseError(None, None, str(err))
    error_spec = sim.InitialErrorSpec(*[values[key] for key in (
        'm_phi', 'm_r', 'm_beta1', 'm_beta2', 'sigma_phi', 'sigma_r',
        'sigma_beta1', 'sigma_beta2')])
    campaign = CampaignOptions(values['trials'], values['iterations'],
                               values['estimators'], values.get('workers', 1))
    logger.debug("parsed %s, %s, %s", scenario, error_spec, campaign)
    return scenario, error_spec, campaign


def parse_config(path, overrides=None):
    try:
        with open(path, 'r', encoding='utf-8') as fp:
            text = fp.read()
    except (IOError, OSError, UnicodeDecodeError) as err:
        raise ConfigParseError(None, None, "cannot read {}: {}".format(
            path, err))
    return parse_config_text(text, overrides)
