"""
Domain types for GIC analysis.

The AC side (substations, buses, lines, transformers, generators) is what a
case file describes. The DC side (GMD buses and branches) is derived from it
by dc_builder, and TransformerIndexMap ties every transformer terminal back to
the DC nodes and branches built for it so branch currents can be referred to
the windings again.

All records are frozen dataclasses; edits go through dataclasses.replace.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

logger = logging.getLogger(__name__)

# Remote earth: the reference node, never stored in GmdNetwork.buses
EARTH = 0


class GicError(Exception):
    """Base class for data errors raised while building or solving a case"""


class InvalidBaseError(GicError, ValueError):
    """Non-positive voltage or power base"""


class IncompleteTransformerError(GicError, ValueError):
    """A grounded winding has no resistance"""


class UnknownLineError(GicError, ValueError):
    """A line-voltage entry names a line the case does not have"""


class AssemblyError(GicError, ValueError):
    """A branch cannot be stamped into the conductance matrix"""


class MappingError(GicError, ValueError):
    """A transformer terminal refers to a branch with no current"""


class ScenarioError(GicError, ValueError):
    """A blocker location does not resolve to an element of the right kind"""


class SettingsError(GicError, ValueError):
    """A settings file is missing or malformed"""


class CaseFormatError(GicError, ValueError):
    """A line-voltage CSV cannot be read"""


class SingularSystemError(GicError):
    """The conductance matrix is singular or too ill-conditioned to trust"""

    def __init__(self, message, islands=()):
        super().__init__(message)
        self.islands = tuple(tuple(island) for island in islands)


class InvalidCaseError(GicError, ValueError):
    """A case violates its invariants; carries the diagnostics"""

    def __init__(self, diagnostics, message=None):
        self.diagnostics = list(diagnostics)
        errors = [d for d in self.diagnostics if d.severity == 'error']
        if message is None:
            message = '; '.join(str(d) for d in errors[:5]) or 'invalid case'
            if len(errors) > 5:
                message += f' (+{len(errors) - 5} more)'
        super().__init__(message)


class CaseParseError(InvalidCaseError):
    """A case file could not be parsed"""


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # 'error' or 'warning'
    element: str
    message: str
    line: int | None = None
    column: str | None = None

    def __str__(self):
        where = ''
        if self.line is not None:
            where = f'line {self.line}'
            if self.column:
                where += f', column {self.column}'
            where += ': '
        return f'{where}{self.element}: {self.message}'


class SeriesCapMode(Enum):
    NONE = 'NONE'
    OPEN = 'OPEN'
    CLOSED = 'CLOSED'
    BYPASSED = 'BYPASSED'


class TransformerKind(Enum):
    GWYE_GWYE = 'GWYE_GWYE'
    DELTA_GWYE = 'DELTA_GWYE'
    GWYE_DELTA = 'GWYE_DELTA'
    DELTA_DELTA = 'DELTA_DELTA'
    AUTO_GWYE = 'AUTO_GWYE'
    THREE_WINDING = 'THREE_WINDING'
    THREE_WINDING_AUTO = 'THREE_WINDING_AUTO'

    @property
    def is_three_winding(self):
        return self in (TransformerKind.THREE_WINDING, TransformerKind.THREE_WINDING_AUTO)

    @property
    def is_auto(self):
        return self in (TransformerKind.AUTO_GWYE, TransformerKind.THREE_WINDING_AUTO)


WINDINGS = ('high', 'low', 'tertiary', 'series', 'common')


@dataclass(frozen=True)
class Substation:
    id: int
    lat: float
    lon: float
    grounding_resistance: float | None = None  # ohms; None when the case gives none


@dataclass(frozen=True)
class AcBus:
    id: int
    nominal_kv: float
    substation_id: int
    lat: float | None = None
    lon: float | None = None
    v_pu: float = 1.0


@dataclass(frozen=True)
class AcLine:
    id: int
    from_bus: int
    to_bus: int
    r_pu: float
    mva_base: float = 100.0
    series_cap_mode: SeriesCapMode = SeriesCapMode.NONE
    status: int = 1


@dataclass(frozen=True)
class Transformer:
    """
    A two- or three-winding transformer, or an implicit generator step-up.

    Winding resistances are ohms per phase; a winding that is not used by
    the kind is simply left as None. Grounding is an explicit flag per
    winding. For autotransformers grounded_common is the neutral flag.
    """
    id: int
    kind: TransformerKind
    high_bus: int
    low_bus: int
    tertiary_bus: int | None = None
    r_high: float | None = None
    r_low: float | None = None
    r_tertiary: float | None = None
    r_series: float | None = None
    r_common: float | None = None
    grounded_high: bool = True
    grounded_low: bool = True
    grounded_tertiary: bool = False
    grounded_common: bool = True
    k_factor: float = 0.0  # MVAr per (pu effective GIC * pu voltage * base ampere)
    mva_base: float = 100.0
    is_implicit_gsu: bool = False
    source_generator: int | None = None

    def winding_resistance(self, winding):
        return getattr(self, f'r_{winding}')

    def conducting_windings(self):
        """Windings that produce a DC branch, given the kind and grounding flags"""
        kind = self.kind
        if kind is TransformerKind.GWYE_GWYE:
            flagged = (('high', self.grounded_high), ('low', self.grounded_low))
        elif kind is TransformerKind.DELTA_GWYE:
            flagged = (('low', self.grounded_low),)
        elif kind is TransformerKind.GWYE_DELTA:
            flagged = (('high', self.grounded_high),)
        elif kind is TransformerKind.THREE_WINDING:
            flagged = (('high', self.grounded_high), ('low', self.grounded_low),
                       ('tertiary', self.grounded_tertiary))
        elif kind.is_auto:
            # the series winding always conducts between the high and low terminals
            flagged = (('series', True), ('common', self.grounded_common))
        else:
            flagged = ()
        return tuple(winding for winding, grounded in flagged if grounded)


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    status: int = 1


@dataclass(frozen=True)
class AcCase:
    """The AC network as read from a case file; tables are tuples sorted by id"""
    substations: tuple = ()
    buses: tuple = ()
    lines: tuple = ()
    transformers: tuple = ()
    generators: tuple = ()

    @cached_property
    def substation_index(self):
        return {s.id: s for s in self.substations}

    @cached_property
    def bus_index(self):
        return {b.id: b for b in self.buses}

    @cached_property
    def line_index(self):
        return {line.id: line for line in self.lines}

    @cached_property
    def transformer_index(self):
        return {xf.id: xf for xf in self.transformers}

    def bus_position(self, bus_id):
        """(lon, lat) of a bus, falling back to its substation's coordinates"""
        bus = self.bus_index[bus_id]
        station = self.substation_index.get(bus.substation_id)
        lat = bus.lat if bus.lat is not None else (station.lat if station else 0.0)
        lon = bus.lon if bus.lon is not None else (station.lon if station else 0.0)
        return lon, lat


class GmdRole(Enum):
    BUS_IMAGE = 'BUS_IMAGE'
    SUBSTATION_GROUND = 'SUBSTATION_GROUND'
    STAR = 'STAR'


class BranchOrigin(Enum):
    LINE = 'LINE'
    XF_WINDING_HIGH = 'XF_WINDING_HIGH'
    XF_WINDING_LOW = 'XF_WINDING_LOW'
    XF_WINDING_TERTIARY = 'XF_WINDING_TERTIARY'
    XF_SERIES = 'XF_SERIES'
    XF_COMMON = 'XF_COMMON'
    XF_STAR_TIE = 'XF_STAR_TIE'
    XF_COMMON_GUARD = 'XF_COMMON_GUARD'
    GSU = 'GSU'
    IMPLICIT_GROUND = 'IMPLICIT_GROUND'
    CAP_BYPASS = 'CAP_BYPASS'
    SUBSTATION_GROUND_TIE = 'SUBSTATION_GROUND_TIE'


# Origins whose resistance is a recorded winding resistance divided by 3
WINDING_ORIGINS = frozenset({
    BranchOrigin.XF_WINDING_HIGH, BranchOrigin.XF_WINDING_LOW,
    BranchOrigin.XF_WINDING_TERTIARY, BranchOrigin.XF_SERIES, BranchOrigin.XF_COMMON,
})

TRANSFORMER_ORIGINS = WINDING_ORIGINS | {
    BranchOrigin.XF_STAR_TIE, BranchOrigin.XF_COMMON_GUARD,
}

# Origins built from an AC line; these carry its induced voltage
LINE_ORIGINS = frozenset({BranchOrigin.LINE, BranchOrigin.CAP_BYPASS})


@dataclass(frozen=True)
class GmdBus:
    id: int
    role: GmdRole
    source: int  # AC bus id, substation id or transformer id depending on role
    substation_id: int
    lat: float
    lon: float
    grounding_blocked: bool = False


@dataclass(frozen=True)
class GmdBranch:
    id: int
    from_node: int
    to_node: int
    resistance: float
    origin: BranchOrigin
    parent: int
    induced_voltage: float = 0.0


@dataclass(frozen=True)
class GmdNetwork:
    """
    The DC-equivalent network.

    substations and lines carry the AC context the network needs after
    construction: station coordinates and grounding for implicit ties, and
    the AC line ids that blocker and coupling inputs may refer to.
    blocked_branches keeps the ids of branches removed by blockers so their
    current reads as zero instead of missing.
    """
    buses: tuple = ()
    branches: tuple = ()
    substations: tuple = ()
    lines: frozenset = frozenset()
    blocked_branches: frozenset = frozenset()

    @cached_property
    def bus_index(self):
        return {b.id: b for b in self.buses}

    @cached_property
    def branch_index(self):
        return {br.id: br for br in self.branches}

    def ground_node(self, substation_id):
        for bus in self.buses:
            if bus.role is GmdRole.SUBSTATION_GROUND and bus.substation_id == substation_id:
                return bus
        return None

    def branches_of(self, *origins):
        return [br for br in self.branches if br.origin in origins]


@dataclass(frozen=True)
class TransformerTerminals:
    """
    Index entry for one transformer: AC buses, DC nodes and DC branches by terminal.

    Node terminals are h, l, t, g, s, c and sigma; branch terminals are
    H, L, T, S, C plus St (star tie) and Cf (common guard) for three-winding
    autotransformers.
    """
    transformer: Transformer
    nodes: tuple = ()  # ((terminal, node id), ...)
    branches: tuple = ()  # ((terminal, branch id), ...)
    kv_high: float = 0.0
    kv_low: float = 0.0
    kv_tertiary: float | None = None
    v_pu_high: float = 1.0

    def node(self, terminal):
        return dict(self.nodes).get(terminal)

    def branch(self, terminal):
        return dict(self.branches).get(terminal)

    @property
    def ground_branches(self):
        """Branches joining a neutral to g(k); these are what a neutral blocker severs"""
        return tuple(bid for terminal, bid in self.branches if terminal in ('H', 'L', 'T', 'C', 'Cf'))


@dataclass(frozen=True)
class TransformerIndexMap:
    entries: tuple = ()  # TransformerTerminals sorted by transformer id

    @cached_property
    def _by_id(self):
        return {entry.transformer.id: entry for entry in self.entries}

    def __getitem__(self, transformer_id):
        return self._by_id[transformer_id]

    def __contains__(self, transformer_id):
        return transformer_id in self._by_id

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def transformer_ids(self):
        return [entry.transformer.id for entry in self.entries]

    def branch_owners(self):
        """Map each DC branch id to (transformer id, terminal); a branch claimed twice is an error"""
        owners = {}
        for entry in self.entries:
            for terminal, bid in entry.branches:
                if bid in owners:
                    raise MappingError(
                        f'branch {bid} claimed by transformer {owners[bid][0]} '
                        f'and transformer {entry.transformer.id}')
                owners[bid] = (entry.transformer.id, terminal)
        return owners


def _finite(value):
    return value is not None and math.isfinite(value)


def _check_duplicates(records, noun, diagnostics):
    seen = set()
    for record in records:
        if record.id in seen:
            diagnostics.append(Diagnostic('error', f'{noun} {record.id}', f'duplicate {noun} id'))
        seen.add(record.id)


def validate_case(case):
    """Check every case invariant; returns diagnostics, empty when the case is clean"""
    diagnostics = []

    def error(element, message):
        diagnostics.append(Diagnostic('error', element, message))

    for records, noun in ((case.substations, 'substation'), (case.buses, 'bus'),
                          (case.lines, 'line'), (case.transformers, 'transformer'),
                          (case.generators, 'generator')):
        _check_duplicates(records, noun, diagnostics)
        for record in records:
            if record.id <= 0:
                error(f'{noun} {record.id}', 'ids must be positive integers')

    for station in case.substations:
        element = f'substation {station.id}'
        if not _finite(station.lat) or not -90 <= station.lat <= 90:
            error(element, f'latitude {station.lat} outside [-90, 90]')
        if not _finite(station.lon):
            error(element, f'longitude {station.lon} is not finite')
        if station.grounding_resistance is not None and not station.grounding_resistance >= 0:
            error(element, f'grounding resistance {station.grounding_resistance} is negative')

    buses = case.bus_index
    for bus in case.buses:
        element = f'bus {bus.id}'
        if not bus.nominal_kv > 0:
            error(element, f'nominal_kv {bus.nominal_kv} must be positive')
        if bus.substation_id not in case.substation_index:
            error(element, f'unknown substation {bus.substation_id}')
        if bus.lat is not None and (not _finite(bus.lat) or not -90 <= bus.lat <= 90):
            error(element, f'latitude {bus.lat} outside [-90, 90]')
        if bus.lon is not None and not _finite(bus.lon):
            error(element, f'longitude {bus.lon} is not finite')
        if not bus.v_pu >= 0:
            error(element, f'v_pu {bus.v_pu} is negative')

    for line in case.lines:
        element = f'line {line.id}'
        if line.from_bus == line.to_bus:
            error(element, f'from_bus and to_bus are both {line.from_bus}')
        for end in (line.from_bus, line.to_bus):
            if end not in buses:
                error(element, f'unknown bus {end}')
        if not line.r_pu >= 0:
            error(element, f'r_pu {line.r_pu} is negative')
        if not line.mva_base > 0:
            error(element, f'mva_base {line.mva_base} must be positive')
        if line.status not in (0, 1):
            error(element, f'status {line.status} must be 0 or 1')
        if (line.from_bus in buses and line.to_bus in buses
                and buses[line.from_bus].nominal_kv != buses[line.to_bus].nominal_kv):
            diagnostics.append(Diagnostic(
                'warning', element, 'end buses have different nominal_kv; the from bus sets the base'))

    for xf in case.transformers:
        element = f'transformer {xf.id}'
        for end in (xf.high_bus, xf.low_bus, xf.tertiary_bus):
            if end is not None and end not in buses:
                error(element, f'unknown bus {end}')
        if xf.high_bus == xf.low_bus:
            error(element, f'high_bus and low_bus are both {xf.high_bus}')
        if xf.kind.is_three_winding and xf.tertiary_bus is None:
            error(element, f'{xf.kind.value} needs a tertiary bus')
        if not xf.kind.is_three_winding and xf.tertiary_bus is not None:
            error(element, f'{xf.kind.value} cannot have a tertiary bus')
        for winding in WINDINGS:
            value = xf.winding_resistance(winding)
            if value is not None and not value >= 0:
                error(element, f'{winding} winding resistance {value} is negative')
        for winding in xf.conducting_windings():
            if xf.winding_resistance(winding) is None:
                error(element, f'grounded {winding} winding has no resistance')
        if not xf.k_factor >= 0:
            error(element, f'k_factor {xf.k_factor} is negative')
        elif xf.k_factor == 0:
            diagnostics.append(Diagnostic('warning', element, 'k_factor is 0; no Qloss will be reported'))
        if not xf.mva_base > 0:
            error(element, f'mva_base {xf.mva_base} must be positive')

    for gen in case.generators:
        element = f'generator {gen.id}'
        if gen.bus not in buses:
            error(element, f'unknown bus {gen.bus}')
        if gen.status not in (0, 1):
            error(element, f'status {gen.status} must be 0 or 1')

    return diagnostics
