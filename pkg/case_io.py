"""
Case files, line-voltage CSVs and result files.

Case file format: '#' starts a comment line, '[NAME]' opens a section, the
first line after it is the comma-separated column header and every further
line is a row. Optional columns may be left out of the header or left empty
in a row.

    [SUBSTATION]
    id,lat,lon,grounding_resistance_ohm
    1,48.5,-71.0,0.2
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, replace

import pandas as pd

from coupling import LineVoltageTable
from model import (
    AcBus, AcCase, AcLine, CaseFormatError, CaseParseError, Diagnostic, Generator, SeriesCapMode,
    Substation, Transformer, TransformerKind, validate_case,
)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6g'
LINE_ID_COLUMN = 'LineID'
VOLTAGE_COLUMN = 'GICInducedDCVolt'

QLOSS_COLUMNS = ['field_label', 'scenario_label', 'transformer_id', 'effective_gic_pu', 'qloss_mvar']
BRANCH_COLUMNS = ['field_label', 'scenario_label', 'branch_id', 'origin', 'I_dc_amps']
SUBSTATION_COLUMNS = ['field_label', 'scenario_label', 'substation_id', 'ground_current_amps']


@dataclass(frozen=True)
class Column:
    name: str
    attribute: str
    kind: str  # int, float, bool, cap_mode, xf_kind
    required: bool = True
    default: object = None


@dataclass(frozen=True)
class Section:
    name: str
    record: type
    columns: tuple


SECTIONS = (
    Section('SUBSTATION', Substation, (
        Column('id', 'id', 'int'),
        Column('lat', 'lat', 'float'),
        Column('lon', 'lon', 'float'),
        Column('grounding_resistance_ohm', 'grounding_resistance', 'float', False),
    )),
    Section('BUS', AcBus, (
        Column('id', 'id', 'int'),
        Column('nominal_kv', 'nominal_kv', 'float'),
        Column('substation_id', 'substation_id', 'int'),
        Column('lat', 'lat', 'float', False),
        Column('lon', 'lon', 'float', False),
        Column('v_pu', 'v_pu', 'float', False, 1.0),
    )),
    Section('LINE', AcLine, (
        Column('id', 'id', 'int'),
        Column('from', 'from_bus', 'int'),
        Column('to', 'to_bus', 'int'),
        Column('r_pu', 'r_pu', 'float'),
        Column('mva_base', 'mva_base', 'float', False, 100.0),
        Column('series_cap_mode', 'series_cap_mode', 'cap_mode', False, SeriesCapMode.NONE),
        Column('status', 'status', 'int', False, 1),
    )),
    Section('TRANSFORMER', Transformer, (
        Column('id', 'id', 'int'),
        Column('kind', 'kind', 'xf_kind'),
        Column('high_bus', 'high_bus', 'int'),
        Column('low_bus', 'low_bus', 'int'),
        Column('tertiary_bus', 'tertiary_bus', 'int', False),
        Column('r_high_ohm', 'r_high', 'float', False),
        Column('r_low_ohm', 'r_low', 'float', False),
        Column('r_tertiary_ohm', 'r_tertiary', 'float', False),
        Column('r_series_ohm', 'r_series', 'float', False),
        Column('r_common_ohm', 'r_common', 'float', False),
        Column('grounded_high', 'grounded_high', 'bool', False, True),
        Column('grounded_low', 'grounded_low', 'bool', False, True),
        Column('grounded_tertiary', 'grounded_tertiary', 'bool', False, False),
        Column('grounded_common', 'grounded_common', 'bool', False, True),
        Column('k_factor', 'k_factor', 'float', False, 0.0),
        Column('mva_base', 'mva_base', 'float', False, 100.0),
    )),
    Section('GENERATOR', Generator, (
        Column('id', 'id', 'int'),
        Column('bus', 'bus', 'int'),
        Column('status', 'status', 'int', False, 1),
    )),
)

_SECTION_INDEX = {section.name: section for section in SECTIONS}
_CASE_FIELDS = {'SUBSTATION': 'substations', 'BUS': 'buses', 'LINE': 'lines',
                'TRANSFORMER': 'transformers', 'GENERATOR': 'generators'}
_ELEMENT_NOUNS = {'SUBSTATION': 'substation', 'BUS': 'bus', 'LINE': 'line',
                  'TRANSFORMER': 'transformer', 'GENERATOR': 'generator'}
_TRUE = {'1', 'true', 'yes', 'y'}
_FALSE = {'0', 'false', 'no', 'n'}


def _convert(kind, text):
    """Parse one cell; raises ValueError with a readable message"""
    if kind == 'int':
        try:
            value = float(text)
        except ValueError:
            raise ValueError(f"expected an integer, got {text!r}")
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if kind == 'float':
        try:
            value = float(text)
        except ValueError:
            raise ValueError(f"expected a number, got {text!r}")
        if not math.isfinite(value):
            raise ValueError(f"expected a finite number, got {text!r}")
        return value
    if kind == 'bool':
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"expected 1/0 or true/false, got {text!r}")
    enum = SeriesCapMode if kind == 'cap_mode' else TransformerKind
    try:
        return enum[text.upper()]
    except KeyError:
        raise ValueError(f"expected one of {', '.join(member.name for member in enum)}, got {text!r}")


def _split_sections(lines, diagnostics, source):
    """Group numbered lines into {section: [section line, header line, header cells, rows]}"""
    tables = {}
    current = None
    for number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith('#'):
            continue
        if text.startswith('[') and text.endswith(']'):
            name = text[1:-1].strip().upper()
            current = None
            if name not in _SECTION_INDEX:
                diagnostics.append(Diagnostic('error', source, f"unknown section [{name}]", number))
            elif name in tables:
                diagnostics.append(Diagnostic('error', source,
                                              f"duplicate section [{name}] (first at line {tables[name][0]})",
                                              number))
            else:
                current = name
                tables[name] = [number, None, None, []]
            continue
        if current is None:
            diagnostics.append(Diagnostic('error', source, 'data outside a known section', number))
            continue
        cells = [cell.strip() for cell in text.split(',')]
        table = tables[current]
        if table[2] is None:
            table[1] = number
            table[2] = cells
        else:
            table[3].append((number, cells))
    return tables


def _check_header(section, header_line, header, diagnostics):
    known = {column.name: column for column in section.columns}
    positions = {}
    ok = True
    for index, name in enumerate(header):
        if name not in known:
            diagnostics.append(Diagnostic('error', f'[{section.name}]', f"unknown column {name!r}",
                                          header_line, name))
            ok = False
        elif name in positions:
            diagnostics.append(Diagnostic('error', f'[{section.name}]', f"duplicate column {name!r}",
                                          header_line, name))
            ok = False
        else:
            positions[name] = index
    for column in section.columns:
        if column.required and column.name not in positions:
            diagnostics.append(Diagnostic('error', f'[{section.name}]',
                                          f"missing required column {column.name!r}", header_line))
            ok = False
    return positions if ok else None


def _parse_rows(section, table, diagnostics):
    _, header_line, header, rows = table
    if header is None:
        return [], {}
    positions = _check_header(section, header_line, header, diagnostics)
    if positions is None:
        return [], {}

    records = []
    first_seen = {}
    lines = {}
    noun = _ELEMENT_NOUNS[section.name]
    for number, cells in rows:
        if len(cells) != len(header):
            diagnostics.append(Diagnostic('error', f'[{section.name}]',
                                          f"expected {len(header)} fields, found {len(cells)}", number))
            continue
        values = {}
        row_ok = True
        for column in section.columns:
            text = cells[positions[column.name]] if column.name in positions else ''
            if text == '':
                if column.required:
                    diagnostics.append(Diagnostic('error', f'[{section.name}]', 'missing value',
                                                  number, column.name))
                    row_ok = False
                elif column.default is not None:
                    values[column.attribute] = column.default
                continue
            try:
                values[column.attribute] = _convert(column.kind, text)
            except ValueError as e:
                diagnostics.append(Diagnostic('error', f'[{section.name}]', str(e), number, column.name))
                row_ok = False
        if not row_ok:
            continue
        record_id = values['id']
        if record_id in first_seen:
            diagnostics.append(Diagnostic(
                'error', f'{noun} {record_id}',
                f"duplicate {noun} id {record_id} (lines {first_seen[record_id]} and {number})", number, 'id'))
            continue
        first_seen[record_id] = number
        lines[f'{noun} {record_id}'] = number
        records.append(section.record(**values))
    return sorted(records, key=lambda record: record.id), lines


def parse_case(path):
    """
    Read a case file.

    Raises CaseParseError carrying every diagnostic (with line numbers where
    known) when the file cannot be read, does not parse, or violates a case
    invariant. Warnings are logged and the case is returned.
    """
    source = os.path.basename(str(path))
    try:
        with open(path, 'r', encoding='utf-8') as case_file:
            lines = case_file.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise CaseParseError([Diagnostic('error', source, f"cannot read case file: {e}")])

    diagnostics = []
    tables = _split_sections(lines, diagnostics, source)
    fields = {}
    element_lines = {}
    for section in SECTIONS:
        table = tables.get(section.name)
        if table is None:
            fields[_CASE_FIELDS[section.name]] = ()
            continue
        records, found = _parse_rows(section, table, diagnostics)
        fields[_CASE_FIELDS[section.name]] = tuple(records)
        element_lines.update(found)

    case = AcCase(**fields)
    if not any(d.severity == 'error' for d in diagnostics):
        for diagnostic in validate_case(case):
            diagnostics.append(replace(diagnostic, line=element_lines.get(diagnostic.element)))

    if any(d.severity == 'error' for d in diagnostics):
        raise CaseParseError(diagnostics)
    for diagnostic in diagnostics:
        logger.warning("%s: %s", source, diagnostic)
    logger.info("Parsed %s: %d substations, %d buses, %d lines, %d transformers, %d generators",
                source, len(case.substations), len(case.buses), len(case.lines),
                len(case.transformers), len(case.generators))
    return case


def _format_cell(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, (SeriesCapMode, TransformerKind)):
        return value.name
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_case(case):
    out = ['# GIC case', '']
    for section in SECTIONS:
        out.append(f'[{section.name}]')
        out.append(','.join(column.name for column in section.columns))
        for record in getattr(case, _CASE_FIELDS[section.name]):
            out.append(','.join(_format_cell(getattr(record, column.attribute)) for column in section.columns))
        out.append('')
    return '\n'.join(out)


def write_case(case, path):
    """Write a case in the native format; reading it back gives an equal case"""
    with open(path, 'w', encoding='utf-8', newline='\n') as case_file:
        case_file.write(format_case(case))
    return path


def parse_line_voltages(path):
    """
    Read a line-information CSV: LineID plus GICInducedDCVolt, extra columns ignored.

    Line ids are not checked against a case here; coupling rejects unknown ones.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise CaseFormatError(f"{path}: empty file, expected a header row")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise CaseFormatError(f"{path}: cannot parse CSV: {e}")

    frame.columns = [str(name).strip() for name in frame.columns]
    for column in (LINE_ID_COLUMN, VOLTAGE_COLUMN):
        if column not in frame.columns:
            raise CaseFormatError(f"{path}: missing column {column}")

    voltages = {}
    first_row = {}
    for offset, (line_text, volt_text) in enumerate(zip(frame[LINE_ID_COLUMN], frame[VOLTAGE_COLUMN])):
        row = offset + 2  # header is row 1
        try:
            line_id = _convert('int', line_text.strip())
        except ValueError as e:
            raise CaseFormatError(f"{path}: row {row}, column {LINE_ID_COLUMN}: {e}")
        try:
            volts = _convert('float', volt_text.strip())
        except ValueError as e:
            raise CaseFormatError(f"{path}: row {row}, column {VOLTAGE_COLUMN}: {e}")
        if line_id in voltages:
            raise CaseFormatError(f"{path}: row {row}: duplicate {LINE_ID_COLUMN} {line_id} "
                                  f"(first at row {first_row[line_id]})")
        voltages[line_id] = volts
        first_row[line_id] = row

    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return LineVoltageTable(voltages, label=stem)


def _to_csv(frame, path, float_format=FLOAT_FORMAT):
    frame.to_csv(path, index=False, float_format=float_format, lineterminator='\n')
    return path


def network_frames(network):
    """(nodes, branches) tables of a GMD network"""
    nodes = pd.DataFrame(
        [{'node_id': bus.id, 'role': bus.role.value, 'source': bus.source,
          'substation_id': bus.substation_id, 'lat': bus.lat, 'lon': bus.lon,
          'grounding_blocked': int(bus.grounding_blocked)} for bus in network.buses],
        columns=['node_id', 'role', 'source', 'substation_id', 'lat', 'lon', 'grounding_blocked'])
    branches = pd.DataFrame(
        [{'branch_id': br.id, 'from_node': br.from_node, 'to_node': br.to_node,
          'resistance_ohm': br.resistance, 'induced_voltage_v': br.induced_voltage,
          'origin': br.origin.value, 'parent': br.parent} for br in network.branches],
        columns=['branch_id', 'from_node', 'to_node', 'resistance_ohm', 'induced_voltage_v', 'origin', 'parent'])
    return nodes, branches


def format_network(network):
    """Node and branch tables as sectioned text; node 0 is remote earth"""
    nodes, branches = network_frames(network)
    parts = [
        '[GMD_BUS]\n', nodes.to_csv(index=False, float_format='%.10g', lineterminator='\n'),
        '\n[GMD_BRANCH]\n', branches.to_csv(index=False, float_format='%.10g', lineterminator='\n'),
    ]
    return ''.join(parts)


def write_network(network, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as network_file:
        network_file.write(format_network(network))
    return path


def results_frames(rows):
    """Flat tables for a list of blockers.ScenarioRow"""
    qloss_records, branch_records, substation_records = [], [], []
    for row in rows:
        labels = {'field_label': row.field_label, 'scenario_label': row.scenario_label}
        result = row.result
        for xf_id in sorted(result.qloss):
            qloss_records.append({**labels, 'transformer_id': xf_id,
                                  'effective_gic_pu': result.effective_gic[xf_id],
                                  'qloss_mvar': result.qloss[xf_id]})
        for bid in sorted(result.branch_current):
            branch_records.append({**labels, 'branch_id': bid, 'origin': result.branch_origin[bid].value,
                                   'I_dc_amps': result.branch_current[bid]})
        for substation_id in sorted(result.ground_current):
            substation_records.append({**labels, 'substation_id': substation_id,
                                       'ground_current_amps': result.ground_current[substation_id]})
    return (pd.DataFrame(qloss_records, columns=QLOSS_COLUMNS),
            pd.DataFrame(branch_records, columns=BRANCH_COLUMNS),
            pd.DataFrame(substation_records, columns=SUBSTATION_COLUMNS))


def qloss_bars(rows):
    """Plot-ready Qloss table: one row per (field, transformer), one column per scenario"""
    scenario_order = []
    for row in rows:
        if row.scenario_label not in scenario_order:
            scenario_order.append(row.scenario_label)
    table = {}
    for row in rows:
        for xf_id, value in row.result.qloss.items():
            table.setdefault((row.field_label, xf_id), {})[row.scenario_label] = value
    field_order = list(dict.fromkeys(row.field_label for row in rows))
    records = []
    for (field_label, xf_id), values in sorted(table.items(),
                                               key=lambda item: (field_order.index(item[0][0]), item[0][1])):
        records.append({'field_label': field_label, 'transformer_id': xf_id, **values})
    return pd.DataFrame(records, columns=['field_label', 'transformer_id'] + scenario_order)


def write_results(rows, out_dir, metadata=None):
    """
    Write qloss.csv, branch_currents.csv, substation_currents.csv,
    qloss_bars.csv and run_metadata.json into out_dir.

    Numbers use 6 significant digits and '\\n' line endings, so identical
    results give byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    qloss_frame, branch_frame, substation_frame = results_frames(rows)
    written = [
        _to_csv(qloss_frame, os.path.join(out_dir, 'qloss.csv')),
        _to_csv(branch_frame, os.path.join(out_dir, 'branch_currents.csv')),
        _to_csv(substation_frame, os.path.join(out_dir, 'substation_currents.csv')),
        _to_csv(qloss_bars(rows), os.path.join(out_dir, 'qloss_bars.csv')),
    ]

    advisories = {}
    for row in rows:
        if row.advisory:
            advisories[row.scenario_label] = row.advisory
    summary = {
        'fields': list(dict.fromkeys(row.field_label for row in rows)),
        'scenarios': list(dict.fromkeys(row.scenario_label for row in rows)),
        'advisories': advisories,
        'total_qloss_mvar': [
            {'field_label': row.field_label, 'scenario_label': row.scenario_label,
             'qloss_mvar': float(f"{row.result.total_qloss:.6g}")} for row in rows],
    }
    if metadata:
        summary.update(metadata)
    metadata_path = os.path.join(out_dir, 'run_metadata.json')
    with open(metadata_path, 'w', encoding='utf-8', newline='\n') as metadata_file:
        json.dump(summary, metadata_file, indent=2, sort_keys=True)
        metadata_file.write('\n')
    written.append(metadata_path)
    return written
