"""
Tests for the gic_cli command-line entry point
"""
import os

import pandas as pd
import pytest

from gic_cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def qloss_table(out_dir):
    return pd.read_csv(os.path.join(out_dir, 'qloss.csv'))


@pytest.mark.integration
def test_compare_blockers_uniform_field(case_path, tmp_path):
    out = str(tmp_path / 'r')
    assert main(['-q', 'compare-blockers', case_path, '--uniform-field', '1', '90', '--out', out]) == EXIT_OK
    table = qloss_table(out)
    assert len(table) == 4 * 6
    blocked = table[table['scenario_label'] != 'none']
    assert (blocked['qloss_mvar'].abs() <= 1e-9).all()
    assert table[table['scenario_label'] == 'none']['qloss_mvar'].sum() > 0
    assert os.path.exists(os.path.join(out, 'qloss_bars.csv'))


@pytest.mark.integration
def test_solve_with_zero_field(case_path, tmp_path):
    out = str(tmp_path / 'r')
    assert main(['-q', 'solve', case_path, '--uniform-field', '0', '0', '--blocker', 'none', '--out', out]) == EXIT_OK
    table = qloss_table(out)
    assert (table['qloss_mvar'] == 0).all()
    assert (table['effective_gic_pu'] == 0).all()


@pytest.mark.integration
def test_solve_partial_neutral_blocking(case_path, line_volts_path, tmp_path):
    out = str(tmp_path / 'r')
    argv = ['-q', 'solve', case_path, '--line-volts', line_volts_path,
            '--blocker', 'neutral', '--locations', '3,5', '--out', out]
    assert main(argv) == EXIT_OK
    assert set(qloss_table(out)['scenario_label']) == {'neutral@3,5'}


@pytest.mark.integration
def test_unknown_substation_is_a_data_error(case_path, line_volts_path, tmp_path, capsys):
    argv = ['-q', 'solve', case_path, '--line-volts', line_volts_path,
            '--blocker', 'substation', '--locations', '999', '--out', str(tmp_path / 'r')]
    assert main(argv) == EXIT_DATA
    assert 'unknown substation' in capsys.readouterr().err


@pytest.mark.unit
@pytest.mark.parametrize('argv', [
    [],
    ['solve', 'x.case', '--uniform-field', '1', '90', '--line-volts', 'v.csv', '--out', 'r'],
    ['solve', 'x.case', '--out', 'r'],
    ['solve', 'x.case', '--uniform-field', '1', '--out', 'r'],
    ['solve', 'x.case', '--uniform-field', '-1', '90', '--out', 'r'],
    ['solve', 'x.case', '--uniform-field', '1', '90', '--blocker', 'fuse', '--out', 'r'],
    ['solve', 'x.case', '--uniform-field', '1', '90', '--locations', 'a,b', '--out', 'r'],
    ['solve', 'x.case', '--uniform-field', '1', '90', '--blocker', 'neutral', '--locations', ',', '--out', 'r'],
    ['experiment', 'x.case', '--uniform-field', '1', '90', '--out', 'r'],
    ['frobnicate'],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert 'error' in capsys.readouterr().err


@pytest.mark.unit
@pytest.mark.parametrize('argv', [['--help'], ['solve', '--help']])
def test_help_returns_ok(argv, capsys):
    assert main(argv) == EXIT_OK
    assert 'usage:' in capsys.readouterr().out


@pytest.mark.integration
def test_experiment_runs_eight_scenarios(case_path, line_volts_path, tmp_path):
    out = str(tmp_path / 'r')
    argv = ['-q', 'experiment', case_path, '--uniform-field', '1', '90',
            '--line-volts', line_volts_path, '--out', out]
    assert main(argv) == EXIT_OK
    table = qloss_table(out)
    assert len(table) == 8 * 6
    assert table.groupby(['field_label', 'scenario_label']).ngroups == 8


@pytest.mark.integration
def test_identical_runs_write_identical_files(case_path, line_volts_path, tmp_path):
    outputs = []
    for name in ('a', 'b'):
        out = str(tmp_path / name)
        main(['-q', 'compare-blockers', case_path, '--line-volts', line_volts_path, '--out', out])
        outputs.append({entry: open(os.path.join(out, entry), 'rb').read() for entry in sorted(os.listdir(out))})
    assert outputs[0] == outputs[1]


@pytest.mark.integration
def test_build_dc(case_path, tmp_path, capsys):
    out = str(tmp_path / 'net.csv')
    assert main(['-q', 'build-dc', case_path, '--out', out]) == EXIT_OK
    with open(out, encoding='utf-8') as dump:
        assert dump.readline() == '[GMD_BUS]\n'

    assert main(['-q', 'build-dc', case_path]) == EXIT_OK
    assert '[GMD_BRANCH]' in capsys.readouterr().out


@pytest.mark.unit
def test_validate(case_path, tmp_path, capsys):
    assert main(['-q', 'validate', case_path]) == EXIT_OK
    assert 'OK' in capsys.readouterr().out

    broken = tmp_path / 'broken.case'
    broken.write_text('[BUS]\nid,nominal_kv,substation_id\n1,345,4\n', encoding='utf-8')
    assert main(['-q', 'validate', str(broken)]) == EXIT_DATA
    assert 'ERROR: line 3: bus 1: unknown substation 4' in capsys.readouterr().out


@pytest.mark.unit
def test_missing_inputs_are_data_errors(case_path, tmp_path, capsys):
    assert main(['-q', 'validate', str(tmp_path / 'nope.case')]) == EXIT_DATA
    assert main(['-q', '--settings', str(tmp_path / 'nope.json'), 'validate', case_path]) == EXIT_DATA
    assert 'settings file not found' in capsys.readouterr().err
    argv = ['-q', 'solve', case_path, '--line-volts', str(tmp_path / 'nope.csv'), '--out', str(tmp_path / 'r')]
    assert main(argv) == EXIT_DATA


@pytest.mark.unit
def test_settings_file_changes_the_build(case_path, tmp_path, capsys):
    settings = tmp_path / 'settings.json'
    settings.write_text('{"builder": {"implicit_ground_r_ohm": 0}}', encoding='utf-8')
    assert main(['-q', '--settings', str(settings), 'validate', case_path]) == EXIT_DATA
    assert 'invalid builder settings' in capsys.readouterr().err
