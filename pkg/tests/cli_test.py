import os

import pytest

from invsmooth import csvio, sim
from invsmooth.cli import (
    EXIT_CONFIG, EXIT_DATA, EXIT_OK, get_options, main as invsmooth)
from runner import main as runner
from test_utils import (
    get_input_path, get_temp_dir_path, get_temp_file_path, read_csv_rows)

CONFIG = ['-c', get_input_path('small.cfg')]


def _fixture(trial=0):
    out_dir = get_temp_dir_path('fixture')
    assert invsmooth(['export-fixture'] + CONFIG +
                     ['--trial', str(trial), '-o', out_dir]) == EXIT_OK
    return out_dir


# -----
# Tests
# -----

def test_version():
    with pytest.raises(SystemExit) as excinfo:
        invsmooth(['--version'])
    assert excinfo.value.code == 0


def test_command_is_required():
    with pytest.raises(SystemExit) as excinfo:
        invsmooth([])
    assert excinfo.value.code == 2


@pytest.mark.parametrize('args', [
    ['simulate'],
    ['simulate', '-o', 'out', '--trials', '0'],
    ['simulate', '-o', 'out', '--estimators', 'irts,ukf'],
    ['simulate', '-o', 'out', '-c', 'no_such_preset'],
    ['smooth', '-d', 'no_such_dir', '-o', 'out'],
    ['verify', '--seed', '-1'],
])
def test_bad_options(args):
    with pytest.raises(SystemExit) as excinfo:
        get_options(args)
    assert excinfo.value.code == 2


def test_options():
    options = get_options(['simulate', '-o', 'out', '--estimators',
                           'IRTS, mgn', '-c', 'low_error'])
    assert options.estimators == ['irts', 'mgn']
    assert os.path.basename(options.config) == 'low_error.cfg'
    assert options.trials is None
    assert not options.wallClock


def test_verify():
    assert invsmooth(['verify', '--cases', '5']) == EXIT_OK


def test_simulate():
    out_dir = get_temp_dir_path('results')
    assert invsmooth(['simulate'] + CONFIG +
                     ['--trials', '1', '-o', out_dir]) == EXIT_OK
    summary = read_csv_rows(os.path.join(out_dir, csvio.SUMMARY_FILE))
    assert len(summary) == 1 + 4 * 4 * 2
    with open(os.path.join(out_dir, csvio.MANIFEST_FILE)) as fp:
        lines = fp.read().splitlines()
    assert 'seed 7' in lines
    assert 'trials 1' in lines
    assert 'estimators irts,mrts,ign,mgn' in lines
    assert not any(line.startswith('wall_clock') for line in lines)


def test_simulate_is_reproducible():
    outputs = []
    for _ in range(2):
        out_dir = get_temp_dir_path()
        assert invsmooth(['simulate'] + CONFIG +
                         ['--trials', '1', '--estimators', 'mrts',
                          '-o', out_dir]) == EXIT_OK
        with open(os.path.join(out_dir, csvio.PER_TRIAL_FILE)) as fp:
            outputs.append(fp.read())
    assert outputs[0] == outputs[1]


def test_wall_clock():
    out_dir = get_temp_dir_path()
    assert invsmooth(['simulate'] + CONFIG +
                     ['--trials', '1', '--estimators', 'irts',
                      '--wall-clock', '-o', out_dir]) == EXIT_OK
    with open(os.path.join(out_dir, csvio.MANIFEST_FILE)) as fp:
        assert fp.read().splitlines()[-1].startswith('wall_clock ')


def test_bad_config_value():
    out_dir = get_temp_dir_path()
    assert invsmooth(['simulate', '-c', get_input_path('bad_value.cfg'),
                      '-o', out_dir]) == EXIT_CONFIG


def test_export_fixture():
    out_dir = _fixture()
    for name in (csvio.INTERO_FILE, csvio.GPS_FILE, csvio.LANDMARK_OBS_FILE,
                 csvio.LANDMARK_MAP_FILE, csvio.TRUTH_FILE):
        assert os.path.isfile(os.path.join(out_dir, name))
    dataset = csvio.ingest_dataset(out_dir)
    assert len(dataset.intero) == 21
    assert len(dataset.landmarks) == 5


@pytest.mark.parametrize('estimator', ['irts', 'mrts', 'ign', 'mgn'])
def test_smooth(estimator):
    data_dir = _fixture()
    out_dir = get_temp_dir_path('smoothed')
    assert invsmooth(['smooth', '-d', data_dir, '-e', estimator] + CONFIG +
                     ['--iterations', '1', '-o', out_dir]) == EXIT_OK
    stamps, states = csvio.read_trajectory(
        os.path.join(out_dir, 'smoothed.csv'))
    assert len(states) == 21
    rows = read_csv_rows(os.path.join(out_dir, 'smoothed_rmse.csv'))
    assert [row[0] for row in rows[1:]] == list(sim.STATES)
    # the prior starts at the recorded truth
    assert float(rows[2][1]) < 1.0


def test_smooth_without_truth():
    data_dir = _fixture()
    os.remove(os.path.join(data_dir, csvio.TRUTH_FILE))
    out_dir = get_temp_dir_path('smoothed')
    assert invsmooth(['smooth', '-d', data_dir] + CONFIG +
                     ['-o', out_dir]) == EXIT_OK
    assert os.path.isfile(os.path.join(out_dir, 'smoothed.csv'))
    assert not os.path.exists(os.path.join(out_dir, 'smoothed_rmse.csv'))


def test_smooth_empty_dataset():
    assert invsmooth(['smooth', '-d', get_temp_dir_path()] + CONFIG +
                     ['-o', get_temp_dir_path()]) == EXIT_DATA


def test_run_as_module():
    assert runner(['verify', '--cases', '3']) == EXIT_OK
    assert runner(['simulate']) == 2


def test_capture_output():
    save_path = get_temp_file_path()
    output_path = runner(['-s', save_path, 'verify', '--cases', '3'])
    with open(output_path, 'rb') as f:
        output = f.read()
    assert output.startswith(b'PASS group axioms')
    assert b'FAIL' not in output


def test_config_not_utf8():
    config_path = get_temp_file_path()
    with open(config_path, 'wb') as fp:
        fp.write(b'duration 2\n# caf\xe9\n')
    assert invsmooth(['simulate', '-c', config_path,
                      '-o', get_temp_dir_path()]) == EXIT_CONFIG


def test_smooth_intero_not_utf8():
    data_dir = _fixture()
    with open(os.path.join(data_dir, csvio.INTERO_FILE), 'ab') as fp:
        fp.write(b'9.0,0,0,0,1,0,\xff\n')
    assert invsmooth(['smooth', '-d', data_dir] + CONFIG +
                     ['-o', get_temp_dir_path()]) == EXIT_DATA


def test_export_fixture_without_steps():
    assert invsmooth(['export-fixture'] + CONFIG +
                     ['--duration', '0.004',
                      '-o', get_temp_dir_path()]) == EXIT_CONFIG
