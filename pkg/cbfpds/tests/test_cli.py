import dataclasses
import json
import logging

import numpy as np
import pytest

import cbfpds.cli as cli
from cbfpds.analysis import ReproduceReport
from cbfpds.problem import CheckResult
from cbfpds.scenarios import dumps_scenario, unit_disc
from cbfpds.sim import Trajectory

logger = logging.getLogger(__name__)


def test_simulate(tmp_path):
    logger.debug('test_simulate')
    out = tmp_path / 'cbf.csv'
    code = cli.main(['simulate', '--scenario', 'builtin:paper-example',
                     '--controller', 'cbf', '--dt', '0.05', '--t-final',
                     '2', '--out', str(out)])
    assert code == 0
    traj = Trajectory.from_csv(out)
    assert len(traj) == 41
    assert np.allclose(traj.states[0], [-1.0, 2.0])


@pytest.mark.parametrize('controller,extra', [
    ('pds', ['--scheme', 'switched_rk4']),
    ('pds', []),
    ('nominal', []),
])
def test_simulate_controllers(controller, extra, tmp_path):
    logger.debug('test_simulate_controllers')
    out = tmp_path / 'traj.csv'
    code = cli.main(['simulate', '--scenario', 'builtin:paper-example-wrongP',
                     '--controller', controller, '--dt', '0.05',
                     '--t-final', '1', '--x0', '0.5', '-0.5',
                     '--out', str(out)] + extra)
    assert code == 0
    assert np.allclose(Trajectory.from_csv(out).states[0], [0.5, -0.5])


@pytest.mark.parametrize('args', [
    ['--a', '0'],
    ['--a', '-2'],
    ['--x0', '3', '3'],
    ['--x0', '1', '2', '3'],
    ['--controller', 'magic'],
])
def test_simulate_bad_input(args, tmp_path):
    logger.debug('test_simulate_bad_input')
    base = {'--scenario': 'builtin:paper-example', '--controller': 'cbf',
            '--dt': '0.05', '--t-final': '1',
            '--out': str(tmp_path / 'x.csv')}
    argv = ['simulate']
    for key, value in base.items():
        if key not in args:
            argv += [key, value]
    assert cli.main(argv + args) == 2


def test_simulate_bad_step(tmp_path):
    logger.debug('test_simulate_bad_step')
    code = cli.main(['simulate', '--scenario', 'builtin:paper-example',
                     '--controller', 'cbf', '--dt', '-1', '--t-final', '1',
                     '--out', str(tmp_path / 'x.csv')])
    assert code == 3


def test_simulate_unknown_scenario(tmp_path):
    logger.debug('test_simulate_unknown_scenario')
    code = cli.main(['simulate', '--scenario', 'builtin:nope',
                     '--controller', 'cbf', '--out',
                     str(tmp_path / 'x.csv')])
    assert code == 2


def test_bounds(capsys):
    logger.debug('test_bounds')
    assert cli.main(['bounds', '--scenario', 'builtin:paper-example']) == 0
    info = json.loads(capsys.readouterr().out)
    assert info['a_star'] == pytest.approx(178, abs=0.5)
    assert info['maxLfh'] == pytest.approx(76.95, abs=0.01)
    assert cli.main(['bounds', '--scenario', 'builtin:paper-example',
                     '--eps-fraction', '1.0']) == 2


def test_check_inclusion(tmp_path, capsys):
    logger.debug('test_check_inclusion')
    out = tmp_path / 'inclusion.jsonl'
    code = cli.main(['check-inclusion', '--scenario',
                     'builtin:paper-example', '--a', '200', '--grid', '11',
                     '--out', str(out)])
    assert code == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows and all(row['pass'] for row in rows)
    assert 'worst margin' in capsys.readouterr().err


def test_check_inclusion_failure(monkeypatch, capsys):
    logger.debug('test_check_inclusion_failure')
    real = cli.sweep_inclusion

    def failing(*args, **kwargs):
        reports = real(*args, **kwargs)
        return [dataclasses.replace(reports[0], passed=False)] + reports[1:]

    monkeypatch.setattr(cli, 'sweep_inclusion', failing)
    code = cli.main(['check-inclusion', '--scenario',
                     'builtin:paper-example', '--a', '200', '--grid', '3'])
    assert code == 4
    assert 'failed' in capsys.readouterr().err


def test_sweep(tmp_path):
    logger.debug('test_sweep')
    out = tmp_path / 'sweep.csv'
    code = cli.main(['sweep', '--scenario', 'builtin:paper-example-wrongP',
                     '--a', '1', '10', '--dt', '0.01', '--t-final', '2',
                     '--out', str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == 'a,sup_distance'
    assert len(lines) == 3
    assert cli.main(['sweep', '--scenario', 'builtin:paper-example',
                     '--a', '10', '1', '--dt', '0.01',
                     '--t-final', '1']) == 2


def test_scenario_dump(capsys, tmp_path):
    logger.debug('test_scenario_dump')
    assert cli.main(['scenario', '--dump', 'builtin:unit-disc']) == 0
    info = json.loads(capsys.readouterr().out)
    assert info['name'] == 'unit-disc'
    path = tmp_path / 'disc.json'
    path.write_text(json.dumps(info))
    out = tmp_path / 'again.json'
    assert cli.main(['scenario', '--dump', str(path), '--out',
                     str(out)]) == 0
    assert json.loads(out.read_text()) == info


def test_scenario_validate(capsys, tmp_path):
    logger.debug('test_scenario_validate')
    assert cli.main(['scenario', '--dump', 'builtin:unit-disc',
                     '--validate', '--samples', '200']) == 0
    assert json.loads(capsys.readouterr().out)['ok']
    info = json.loads(dumps_scenario(unit_disc()))
    info['dynamics'] = {'kind': 'affine', 'A': [[0, 1], [-1, 0]],
                        'b': [0.5, 0.0]}
    path = tmp_path / 'shifted.json'
    path.write_text(json.dumps(info))
    assert cli.main(['scenario', '--dump', str(path), '--validate',
                     '--samples', '200']) == 2
    assert 'origin_equilibrium' in capsys.readouterr().err


def test_monotonicity(capsys):
    logger.debug('test_monotonicity')
    assert cli.main(['monotonicity', '--scenario',
                     'builtin:paper-example']) == 0
    info = json.loads(capsys.readouterr().out)
    assert info['alpha_est'] >= 0.15
    assert cli.main(['monotonicity', '--scenario', 'builtin:paper-example',
                     '--projected']) == 0


def test_plot_command(tmp_path):
    logger.debug('test_plot_command')
    csv = tmp_path / 'traj.csv'
    assert cli.main(['simulate', '--scenario', 'builtin:paper-example',
                     '--controller', 'cbf', '--dt', '0.1', '--t-final', '2',
                     '--out', str(csv)]) == 0
    svg = tmp_path / 'traj.svg'
    assert cli.main(['plot', '--trajectory', str(csv), '--scenario',
                     'builtin:paper-example', '--out', str(svg)]) == 0
    assert '<svg' in svg.read_text()
    assert cli.main(['plot', '--trajectory', str(tmp_path / 'none.csv'),
                     '--out', str(svg)]) == 2


@pytest.mark.timeout(300)
def test_equilibria(tmp_path):
    logger.debug('test_equilibria')
    out = tmp_path / 'eq.json'
    assert cli.main(['equilibria', '--scenario', 'builtin:paper-example',
                     '--a', '1', '--seeds', '8', '--out', str(out)]) == 0
    found = json.loads(out.read_text())
    assert len(found) == 1
    assert np.allclose(found[0]['point'], 0.0, atol=1e-6)
    assert found[0]['stability'] == 'stable'


def test_reproduce_exit_codes(monkeypatch, tmp_path):
    logger.debug('test_reproduce_exit_codes')
    outcome = {'ok': True}

    def fake_reproduce(variant, dt, t_final, seed):
        check = CheckResult('safe', outcome['ok'], 'min h = 0')
        return ReproduceReport(variant, np.zeros(2), 0.0, [], [check])

    monkeypatch.setattr(cli, 'reproduce_example', fake_reproduce)
    out = tmp_path / 'report.json'
    assert cli.main(['reproduce', '--variant', 'correct', '--out',
                     str(out)]) == 0
    assert json.loads(out.read_text())['ok']
    outcome['ok'] = False
    assert cli.main(['reproduce', '--variant', 'WrongP']) == 1


def test_bad_flags():
    logger.debug('test_bad_flags')
    assert cli.main(['no-such-command']) == 2
    assert cli.main(['reproduce']) == 2
    assert cli.main(['--version']) == 0
