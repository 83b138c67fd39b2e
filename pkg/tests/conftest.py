"""
Shared fixtures for the GIC test suite
"""
import os
import sys
from dataclasses import replace

import pytest

# Add the project root to the Python path
REPO_ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..')
sys.path.insert(0, REPO_ROOT)

from case_io import parse_case, parse_line_voltages  # noqa: E402
from coupling import UniformField  # noqa: E402
from model import AcBus, AcCase, AcLine, Generator, Substation, Transformer, TransformerKind  # noqa: E402

FIXTURES = os.path.join(REPO_ROOT, 'fixtures')
CASE_PATH = os.path.join(FIXTURES, 'four_substation.case')
LINE_VOLTS_PATH = os.path.join(FIXTURES, 'four_substation_line_volts.csv')


@pytest.fixture
def case_path():
    return CASE_PATH


@pytest.fixture
def line_volts_path():
    return LINE_VOLTS_PATH


@pytest.fixture
def case():
    return parse_case(CASE_PATH)


@pytest.fixture
def line_volts():
    return parse_line_voltages(LINE_VOLTS_PATH)


@pytest.fixture
def bypassed_case(case):
    """The four-substation case with line 6 (inside the autotransformer loop) at zero resistance"""
    lines = tuple(replace(line, r_pu=0.0) if line.id == 6 else line for line in case.lines)
    return replace(case, lines=lines)


@pytest.fixture
def east_field():
    """The 1 V/km field with a 90 degree bearing"""
    return UniformField(1.0, 90.0)


def two_station_case(transformers=(), lines=None, grounding=(0.5, 0.5), generators=(), extra_buses=()):
    """
    Two substations 2 degrees of longitude apart with a 345 kV bus each
    (buses 1 and 2) and a 138 kV bus each (buses 3 and 4), joined by one
    345 kV line unless lines is given.
    """
    substations = (
        Substation(1, 45.0, -100.0, grounding[0]),
        Substation(2, 45.0, -98.0, grounding[1]),
    )
    buses = (
        AcBus(1, 345.0, 1),
        AcBus(2, 345.0, 2),
        AcBus(3, 138.0, 1),
        AcBus(4, 138.0, 2),
    ) + tuple(extra_buses)
    if lines is None:
        lines = (AcLine(1, 1, 2, 0.01),)
    return AcCase(
        substations=substations,
        buses=tuple(sorted(buses, key=lambda bus: bus.id)),
        lines=tuple(lines),
        transformers=tuple(transformers),
        generators=tuple(generators),
    )


def gwye_gwye(xf_id, high_bus, low_bus, r_high=0.3, r_low=0.12, k_factor=1.0):
    return Transformer(xf_id, TransformerKind.GWYE_GWYE, high_bus, low_bus,
                       r_high=r_high, r_low=r_low, k_factor=k_factor, mva_base=300.0)


@pytest.fixture
def make_case():
    return two_station_case


@pytest.fixture
def make_gwye_gwye():
    return gwye_gwye


@pytest.fixture
def generator():
    return Generator
