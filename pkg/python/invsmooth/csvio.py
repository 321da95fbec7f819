"""
CSV interchange for datasets and results.

Dataset directory:
  intero.csv          t,u1x,u1y,u1z,u2x,u2y,u2z     (s, rad/s, m/s)
  gps.csv             t,yx,yy,yz                    (s, m)
  landmarks_obs.csv   t,id,yx,yy,yz                 (s, -, m)
  landmark_map.csv    id,px,py,pz                   (-, m)
  truth.csv           t,qw,qx,qy,qz,rx,ry,rz,b1x,b1y,b1z,b2x,b2y,b2z

Only intero.csv is required. Numbers are written with 17 significant
digits so that doubles survive a round trip unchanged.
"""

import csv
import logging
import os

import numpy as np
from scipy.spatial.transform import Rotation

from invsmooth import models, sim
from invsmooth.errors import ExportError, SchemaError
from invsmooth.lie import GroupElement
from invsmooth.models import (
    ExteroMeasurement, InteroceptiveSample, LandmarkMap, MeasurementKind)
from invsmooth.utils import format_float

logger = logging.getLogger(__name__)

INTERO_FILE = 'intero.csv'
GPS_FILE = 'gps.csv'
LANDMARK_OBS_FILE = 'landmarks_obs.csv'
LANDMARK_MAP_FILE = 'landmark_map.csv'
TRUTH_FILE = 'truth.csv'

INTERO_HEADER = ['t', 'u1x', 'u1y', 'u1z', 'u2x', 'u2y', 'u2z']
GPS_HEADER = ['t', 'yx', 'yy', 'yz']
LANDMARK_OBS_HEADER = ['t', 'id', 'yx', 'yy', 'yz']
LANDMARK_MAP_HEADER = ['id', 'px', 'py', 'pz']
TRUTH_HEADER = ['t', 'qw', 'qx', 'qy', 'qz', 'rx', 'ry', 'rz',
                'b1x', 'b1y', 'b1z', 'b2x', 'b2y', 'b2z']

SUMMARY_FILE = 'rmse_summary.csv'
PER_TRIAL_FILE = 'per_trial.csv'
MANIFEST_FILE = 'manifest.txt'
SUMMARY_HEADER = ['estimator', 'state', 'iteration', 'mean', 'p2_5',
                  'p97_5']
PER_TRIAL_HEADER = ['trial', 'estimator', 'state', 'iteration',
                    'smoothed_rmse', 'filter_rmse', 'status']

GAP_FACTOR = 5.0
QUATERNION_TOL = 1e-6


class Dataset(object):
    """
    Ingested streams. truth is None or a (stamps, states) pair; warnings
    lists the timestamp gaps found.
    """

    def __init__(self, intero, extero, landmarks, truth=None, warnings=()):
        self.intero = intero
        self.extero = extero
        self.landmarks = landmarks
        self.truth = truth
        self.warnings = list(warnings)

    def __repr__(self):
        return ('Dataset(intero={}, extero={}, landmarks={}, truth={})'
                .format(len(self.intero), len(self.extero),
                        len(self.landmarks), self.truth is not None))


class RunManifest(object):
    """Provenance of a result set, written as 'key value' lines."""

    def __init__(self, config_digest, seed, estimators, iterations, trials,
                 version, failures=None, wall_clock=None):
        self.config_digest = config_digest
        self.seed = seed
        self.estimators = list(estimators)
        self.iterations = iterations
        self.trials = trials
        self.version = version
        self.failures = dict(failures or {})
        self.wall_clock = wall_clock

    def lines(self):
        lines = ['version {}'.format(self.version),
                 'config_digest {}'.format(self.config_digest),
                 'seed {}'.format(self.seed),
                 'estimators {}'.format(','.join(self.estimators)),
                 'iterations {}'.format(self.iterations),
                 'trials {}'.format(self.trials)]
        for name in self.estimators:
            lines.append('failures_{} {}'.format(name,
                                                 self.failures.get(name, 0)))
        if self.wall_clock is not None:
            lines.append('wall_clock {}'.format(self.wall_clock))
        return lines


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

def _read_rows(path, header):
    """Yields (row number, row) pairs; row 1 is the header."""
    file_name = os.path.basename(path)
    try:
        with open(path, 'r', newline='', encoding='utf-8') as fp:
            rows = list(csv.reader(fp))
    except (IOError, OSError) as err:
        raise SchemaError(file_name, 0, "cannot read file: {}".format(err))
    except (UnicodeDecodeError, csv.Error) as err:
        raise SchemaError(file_name, 0, "not a UTF-8 CSV file: {}".format(err))
    if not rows or [cell.strip() for cell in rows[0]] != header:
        raise SchemaError(file_name, 1, "expected header {}".format(
            ','.join(header)))
    for index, row in enumerate(rows[1:], 2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise SchemaError(file_name, index,
                              "expected {} columns, got {}".format(
                                  len(header), len(row)))
        yield index, row


def _floats(file_name, index, cells):
    try:
        values = [float(cell) for cell in cells]
    except ValueError as err:
        raise SchemaError(file_name, index, str(err))
    if not all(np.isfinite(values)):
        raise SchemaError(file_name, index, "non-finite value")
    return values


def _integer(file_name, index, cell):
    try:
        return int(cell)
    except ValueError:
        raise SchemaError(file_name, index,
                          "bad landmark id {!r}".format(cell))


def _check_gaps(file_name, stamps, warnings):
    stamps = np.unique(stamps)
    if stamps.size < 3:
        return
    steps = np.diff(stamps)
    nominal = np.median(steps)
    for k in np.flatnonzero(steps > GAP_FACTOR * nominal):
        message = "{}: gap of {:.6g} s after t={:.17g} (nominal {:.6g} s)" \
            .format(file_name, steps[k], stamps[k], nominal)
        logger.warning(message)
        warnings.append(message)


def read_intero(path):
    file_name = os.path.basename(path)
    samples = []
    for index, row in _read_rows(path, INTERO_HEADER):
        values = _floats(file_name, index, row)
        samples.append((index, InteroceptiveSample(values[0], values[1:4],
                                                   values[4:7])))
    samples.sort(key=lambda item: item[1].t)
    for (_, first), (index, second) in zip(samples, samples[1:]):
        if second.t <= first.t:
            raise SchemaError(file_name, index,
                              "duplicate timestamp {!r}".format(second.t))
    return [sample for _, sample in samples]


def read_gps(path):
    file_name = os.path.basename(path)
    measurements = []
    for index, row in _read_rows(path, GPS_HEADER):
        values = _floats(file_name, index, row)
        measurements.append(ExteroMeasurement(values[0], MeasurementKind.GPS,
                                              values[1:4]))
    return measurements


def read_landmark_map(path):
    file_name = os.path.basename(path)
    entries = {}
    for index, row in _read_rows(path, LANDMARK_MAP_HEADER):
        landmark_id = _integer(file_name, index, row[0])
        if landmark_id in entries:
            raise SchemaError(file_name, index,
                              "duplicate landmark id {}".format(landmark_id))
        entries[landmark_id] = _floats(file_name, index, row[1:])
    if sorted(entries) != list(range(len(entries))):
        raise SchemaError(file_name, 0,
                          "landmark ids must be dense from 0")
    return LandmarkMap([entries[k] for k in range(len(entries))])


def read_landmark_obs(path, landmarks):
    file_name = os.path.basename(path)
    measurements = []
    for index, row in _read_rows(path, LANDMARK_OBS_HEADER):
        landmark_id = _integer(file_name, index, row[1])
        if not 0 <= landmark_id < len(landmarks):
            raise SchemaError(file_name, index,
                              "unknown landmark {}".format(landmark_id))
        values = _floats(file_name, index, [row[0]] + row[2:])
        measurements.append(ExteroMeasurement(
            values[0], MeasurementKind.LANDMARK, values[1:4], landmark_id))
    return measurements


def read_trajectory(path):
    """Returns (stamps, states) sorted by time."""
    file_name = os.path.basename(path)
    rows = []
    for index, row in _read_rows(path, TRUTH_HEADER):
        values = _floats(file_name, index, row)
        quaternion = np.array(values[1:5])
        if abs(np.linalg.norm(quaternion) - 1.0) > QUATERNION_TOL:
            raise SchemaError(file_name, index,
                              "quaternion is not of unit norm")
        w, x, y, z = quaternion
        attitude = Rotation.from_quat([x, y, z, w]).as_matrix()
        rows.append((values[0], GroupElement(attitude, values[5:8],
                                             values[8:11], values[11:14])))
    rows.sort(key=lambda item: item[0])
    return np.array([t for t, _ in rows]), [X for _, X in rows]


def ingest_dataset(directory):
    def path_of(name):
        return os.path.join(directory, name)

    if not os.path.isfile(path_of(INTERO_FILE)):
        raise SchemaError(INTERO_FILE, 0, "missing file in {}".format(
            directory))
    warnings = []
    intero = read_intero(path_of(INTERO_FILE))
    _check_gaps(INTERO_FILE, [sample.t for sample in intero], warnings)
    extero = []
    if os.path.isfile(path_of(GPS_FILE)):
        gps = read_gps(path_of(GPS_FILE))
        _check_gaps(GPS_FILE, [meas.t for meas in gps], warnings)
        extero.extend(gps)
    if os.path.isfile(path_of(LANDMARK_MAP_FILE)):
        landmarks = read_landmark_map(path_of(LANDMARK_MAP_FILE))
    else:
        landmarks = LandmarkMap(np.empty((0, 3)))
    if os.path.isfile(path_of(LANDMARK_OBS_FILE)):
        observations = read_landmark_obs(path_of(LANDMARK_OBS_FILE),
                                         landmarks)
        _check_gaps(LANDMARK_OBS_FILE, [meas.t for meas in observations],
                    warnings)
        extero.extend(observations)
    truth = None
    if os.path.isfile(path_of(TRUTH_FILE)):
        truth = read_trajectory(path_of(TRUTH_FILE))
    dataset = Dataset(intero, models.measurement_batch(extero), landmarks,
                      truth, warnings)
    logger.info("ingested %r", dataset)
    return dataset


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

def _write_rows(path, header, rows):
    try:
        with open(path, 'w', newline='', encoding='utf-8') as fp:
            writer = csv.writer(fp, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(rows)
    except (IOError, OSError) as err:
        raise ExportError("cannot write {}: {}".format(path, err))


def _cells(values):
    return [format_float(value) for value in values]


def _quaternion(attitude):
    x, y, z, w = Rotation.from_matrix(attitude).as_quat()
    if w < 0.0:
        x, y, z, w = -x, -y, -z, -w
    return [w, x, y, z]


def write_trajectory(path, stamps, states):
    rows = []
    for t, X in zip(stamps, states):
        rows.append(_cells([t] + _quaternion(X.attitude) + list(X.position)
                           + list(X.bias_gyro) + list(X.bias_vel)))
    _write_rows(path, TRUTH_HEADER, rows)


def _make_dir(directory):
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as err:
        raise ExportError("cannot create {}: {}".format(directory, err))


def export_dataset(directory, intero, extero, landmarks, truth=None):
    _make_dir(directory)

    def path_of(name):
        return os.path.join(directory, name)

    _write_rows(path_of(INTERO_FILE), INTERO_HEADER,
                [_cells([s.t] + list(s.u1) + list(s.u2)) for s in intero])
    extero = models.measurement_batch(extero)
    _write_rows(path_of(GPS_FILE), GPS_HEADER,
                [_cells([m.t] + list(m.value)) for m in extero
                 if m.kind is MeasurementKind.GPS])
    _write_rows(path_of(LANDMARK_OBS_FILE), LANDMARK_OBS_HEADER,
                [[format_float(m.t), str(m.landmark_id)] + _cells(m.value)
                 for m in extero if m.kind is MeasurementKind.LANDMARK])
    _write_rows(path_of(LANDMARK_MAP_FILE), LANDMARK_MAP_HEADER,
                [[str(k)] + _cells(p)
                 for k, p in enumerate(landmarks.positions)])
    if truth is not None:
        write_trajectory(path_of(TRUTH_FILE), *truth)


def export_results(statistics, directory, manifest):
    _make_dir(directory)
    _write_rows(os.path.join(directory, SUMMARY_FILE), SUMMARY_HEADER,
                [[name, state, str(iteration)] + _cells([mean, low, high])
                 for name, state, iteration, mean, low, high
                 in statistics.summary()])
    rows = []
    for result in statistics.results:
        for name in statistics.names:
            if name in result.failures:
                rows.append([str(result.trial), name, '', '', '', '',
                             'failed'])
                continue
            smoothed = result.rmse[name]
            filtered = result.filter_rmse.get(name)
            for s, state in enumerate(sim.STATES):
                for iteration in range(statistics.iterations):
                    filter_cell = ('' if filtered is None
                                   else format_float(filtered[iteration, s]))
                    rows.append([str(result.trial), name, state,
                                 str(iteration + 1),
                                 format_float(smoothed[iteration, s]),
                                 filter_cell, 'ok'])
    _write_rows(os.path.join(directory, PER_TRIAL_FILE), PER_TRIAL_HEADER,
                rows)
    manifest.failures = {name: statistics.failures(name)
                         for name in statistics.names}
    path = os.path.join(directory, MANIFEST_FILE)
    try:
        with open(path, 'w', encoding='utf-8') as fp:
            fp.write('\n'.join(manifest.lines()) + '\n')
    except (IOError, OSError) as err:
        raise ExportError("cannot write {}: {}".format(path, err))
    return [os.path.join(directory, name)
            for name in (SUMMARY_FILE, PER_TRIAL_FILE, MANIFEST_FILE)]


def export_rmse_table(path, values):
    """One row per state block of a single run."""
    _write_rows(path, ['state', 'rmse'],
                [[state, format_float(value)]
                 for state, value in zip(sim.STATES, values)])
