"""
Tests for case files, line-voltage CSVs and result files
"""
import json
import os

import numpy as np
import pandas as pd
import pytest

from blockers import standard_scenarios, scenario_matrix
from case_io import (
    format_network, parse_case, parse_line_voltages, write_case, write_network, write_results,
)
from coupling import couple
from dc_builder import BuilderConfig, build
from model import CaseFormatError, CaseParseError, SeriesCapMode, TransformerKind, UnknownLineError

MINIMAL = """\
# two buses
[SUBSTATION]
id,lat,lon,grounding_resistance_ohm
1,40.0,-80.0,0.3
2,40.5,-80.0,

[BUS]
id,nominal_kv,substation_id
1,345,1
2,345,2

[LINE]
id,from,to,r_pu
1,1,2,0.01
"""


def write(tmp_path, text, name='case.case'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def diagnostics_of(path):
    with pytest.raises(CaseParseError) as excinfo:
        parse_case(path)
    return excinfo.value.diagnostics


@pytest.mark.unit
def test_fixture_case(case):
    assert len(case.buses) == 12
    assert len(case.substations) == 4
    assert len(case.lines) == 6
    assert [xf.kind for xf in case.transformers][:3] == [
        TransformerKind.THREE_WINDING, TransformerKind.THREE_WINDING, TransformerKind.AUTO_GWYE]
    assert case.transformers[2].r_high is None
    assert case.transformers[2].grounded_common is True
    assert case.buses[0].lat is None


@pytest.mark.unit
def test_minimal_case_uses_defaults(tmp_path):
    case = parse_case(write(tmp_path, MINIMAL))
    assert len(case.buses) == 2
    assert case.substations[1].grounding_resistance is None
    line = case.lines[0]
    assert (line.mva_base, line.series_cap_mode, line.status) == (100.0, SeriesCapMode.NONE, 1)
    assert case.buses[0].v_pu == 1.0


@pytest.mark.unit
def test_round_trip(case, tmp_path):
    path = write_case(case, str(tmp_path / 'copy.case'))
    assert parse_case(path) == case


@pytest.mark.unit
def test_minimal_round_trip(tmp_path):
    case = parse_case(write(tmp_path, MINIMAL))
    assert parse_case(write_case(case, str(tmp_path / 'copy.case'))) == case


@pytest.mark.unit
def test_duplicate_bus_names_both_lines(tmp_path):
    text = MINIMAL.replace('2,345,2\n', '2,345,2\n1,138,2\n')
    diagnostics = diagnostics_of(write(tmp_path, text))
    assert [str(d) for d in diagnostics] == [
        'line 11, column id: bus 1: duplicate bus id 1 (lines 9 and 11)']


@pytest.mark.unit
def test_unknown_and_duplicate_sections(tmp_path):
    text = MINIMAL + '\n[SHUNT]\nid,g\n1,2\n\n[BUS]\nid,nominal_kv,substation_id\n'
    messages = [(d.line, d.message) for d in diagnostics_of(write(tmp_path, text))]
    assert (16, 'unknown section [SHUNT]') in messages
    assert (20, 'duplicate section [BUS] (first at line 7)') in messages


@pytest.mark.unit
def test_row_errors_carry_position(tmp_path):
    text = MINIMAL.replace('1,1,2,0.01', '1,1,2,abc').replace('1,345,1', '1,345')
    diagnostics = diagnostics_of(write(tmp_path, text))
    assert [(d.line, d.column, d.message) for d in diagnostics] == [
        (9, None, 'expected 3 fields, found 2'),
        (14, 'r_pu', "expected a number, got 'abc'"),
    ]


@pytest.mark.unit
def test_header_problems(tmp_path):
    text = MINIMAL.replace('id,from,to,r_pu', 'id,from,r_pu,colour')
    messages = [d.message for d in diagnostics_of(write(tmp_path, text))]
    assert "unknown column 'colour'" in messages
    assert "missing required column 'to'" in messages


@pytest.mark.unit
def test_invariant_errors_get_line_numbers(tmp_path):
    text = MINIMAL.replace('2,345,2', '2,345,9')
    diagnostics = diagnostics_of(write(tmp_path, text))
    assert [(d.line, d.element, d.message) for d in diagnostics] == [(10, 'bus 2', 'unknown substation 9')]


@pytest.mark.unit
def test_enum_and_flag_cells(tmp_path):
    text = MINIMAL.replace('id,from,to,r_pu\n1,1,2,0.01',
                           'id,from,to,r_pu,series_cap_mode\n1,1,2,0.01,bypassed\n2,1,2,0.01,SHORTED')
    diagnostics = diagnostics_of(write(tmp_path, text))
    assert len(diagnostics) == 1
    assert diagnostics[0].column == 'series_cap_mode'
    assert 'SHORTED' in diagnostics[0].message


@pytest.mark.unit
def test_unreadable_file(tmp_path):
    diagnostics = diagnostics_of(str(tmp_path / 'missing.case'))
    assert 'cannot read case file' in diagnostics[0].message


@pytest.mark.unit
def test_parser_never_crashes(tmp_path):
    """Random text either parses or yields structured diagnostics"""
    rng = np.random.default_rng(7)
    alphabet = list('[]#,.-e0123456789 \n') + ['BUS', 'LINE', 'SUBSTATION', 'id', 'nan', 'inf', 'GWYE_GWYE']
    path = str(tmp_path / 'noise.case')
    for _ in range(200):
        tokens = rng.choice(alphabet, size=int(rng.integers(0, 120)))
        with open(path, 'w', encoding='utf-8') as noise:
            noise.write(''.join(tokens))
        try:
            parse_case(path)
        except CaseParseError as e:
            assert e.diagnostics
            assert all(d.severity in ('error', 'warning') for d in e.diagnostics)


@pytest.mark.unit
def test_line_voltages(line_volts):
    assert len(line_volts) == 6
    assert line_volts.voltages[1] == 600.0
    assert line_volts.label == 'four_substation_line_volts'


@pytest.mark.unit
def test_line_voltages_edge_cases(tmp_path):
    header_only = parse_line_voltages(write(tmp_path, 'LineID,GICInducedDCVolt\n', 'empty.csv'))
    assert len(header_only) == 0

    two_rows = parse_line_voltages(write(tmp_path, 'Name,LineID,GICInducedDCVolt\na,1,2.5\nb,2,-3\n', 'two.csv'))
    assert two_rows.voltages == {1: 2.5, 2: -3.0}

    with pytest.raises(CaseFormatError, match='missing column GICInducedDCVolt'):
        parse_line_voltages(write(tmp_path, 'LineID,Volts\n1,2\n', 'bad_header.csv'))
    with pytest.raises(CaseFormatError, match='row 3'):
        parse_line_voltages(write(tmp_path, 'LineID,GICInducedDCVolt\n1,2\n2,lots\n', 'bad_value.csv'))
    with pytest.raises(CaseFormatError, match='duplicate LineID 1'):
        parse_line_voltages(write(tmp_path, 'LineID,GICInducedDCVolt\n1,2\n1,3\n', 'dup.csv'))
    with pytest.raises(CaseFormatError, match='empty file'):
        parse_line_voltages(write(tmp_path, '', 'blank.csv'))


@pytest.mark.unit
def test_unknown_line_is_accepted_until_coupling(case, tmp_path):
    table = parse_line_voltages(write(tmp_path, 'LineID,GICInducedDCVolt\n77,10\n', 'stray.csv'))
    network, _ = build(case)
    with pytest.raises(UnknownLineError):
        couple(network, table, case)


@pytest.mark.unit
def test_network_dump(case, tmp_path):
    network, _ = build(case)
    text = format_network(network)
    assert text.startswith('[GMD_BUS]\nnode_id,role,source,substation_id,lat,lon,grounding_blocked\n')
    assert '\n[GMD_BRANCH]\nbranch_id,from_node,to_node,resistance_ohm,induced_voltage_v,origin,parent\n' in text
    assert len(text.strip().split('\n')) == 1 + 1 + 16 + 1 + 1 + 1 + 32
    path = write_network(network, str(tmp_path / 'net.csv'))
    with open(path, encoding='utf-8') as dump:
        assert dump.read() == text


@pytest.mark.integration
def test_results_files(case, line_volts, east_field, tmp_path):
    rows = scenario_matrix(case, BuilderConfig(), [east_field, line_volts], standard_scenarios())
    out = str(tmp_path / 'run')
    files = write_results(rows, out)
    assert sorted(os.path.basename(path) for path in files) == [
        'branch_currents.csv', 'qloss.csv', 'qloss_bars.csv', 'run_metadata.json', 'substation_currents.csv']

    qloss = pd.read_csv(os.path.join(out, 'qloss.csv'))
    assert list(qloss.columns) == ['field_label', 'scenario_label', 'transformer_id', 'effective_gic_pu', 'qloss_mvar']
    assert len(qloss) == 8 * 6
    branches = pd.read_csv(os.path.join(out, 'branch_currents.csv'))
    assert len(branches) == 8 * 32
    bars = pd.read_csv(os.path.join(out, 'qloss_bars.csv'))
    assert list(bars.columns) == ['field_label', 'transformer_id', 'none', 'substation', 'neutral', 'seriescap']
    assert len(bars) == 2 * 6

    with open(os.path.join(out, 'run_metadata.json'), encoding='utf-8') as metadata_file:
        metadata = json.load(metadata_file)
    assert metadata['scenarios'] == ['none', 'substation', 'neutral', 'seriescap']
    assert list(metadata['advisories']) == ['seriescap']


@pytest.mark.integration
def test_results_are_byte_identical(case, east_field, tmp_path):
    contents = []
    for name in ('first', 'second'):
        rows = scenario_matrix(case, BuilderConfig(), [east_field], standard_scenarios())
        files = write_results(rows, str(tmp_path / name))
        contents.append([open(path, 'rb').read() for path in files])
    assert contents[0] == contents[1]


@pytest.mark.unit
def test_empty_results_are_header_only(tmp_path):
    out = str(tmp_path / 'empty')
    write_results([], out)
    with open(os.path.join(out, 'qloss.csv'), encoding='utf-8') as qloss_file:
        assert qloss_file.read() == 'field_label,scenario_label,transformer_id,effective_gic_pu,qloss_mvar\n'
    with open(os.path.join(out, 'branch_currents.csv'), encoding='utf-8') as branch_file:
        assert branch_file.read() == 'field_label,scenario_label,branch_id,origin,I_dc_amps\n'
