"""
Build the GMD (DC-equivalent) network from an AC case.

Lines become branches carrying their common-mode DC resistance. Grounded
transformer windings become branches to the substation ground node g(k).
Generators on transmission buses get an implicit step-up winding, and every
bus gets a weak 25 kOhm path to its substation ground so no part of the
conductance matrix is left floating.

Nodes are numbered by (source id, role) and branches by (parent id, origin),
so building the same case twice gives identical networks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import utils
from model import (
    EARTH, BranchOrigin, GmdBranch, GmdBus, GmdNetwork, GmdRole, IncompleteTransformerError,
    InvalidBaseError, InvalidCaseError, Diagnostic, SeriesCapMode, SettingsError, Transformer,
    TransformerIndexMap, TransformerKind, TransformerTerminals, validate_case,
)

logger = logging.getLogger(__name__)

# Implicit GSU winding resistance in ohms by generator bus nominal kV, high to low
GSU_TABLE = (
    (765.0, 1.089e-6),
    (500.0, 1.667e-6),
    (345.0, 2.416e-6),
    (230.0, 3.623e-6),
    (161.0, 5.176e-6),
    (138.0, 6.039e-6),
    (115.0, 7.246e-6),
)

_SETTING_NAMES = {
    'implicit_ground_r_ohm': 'implicit_ground_r',
    'cap_bypass_r_ohm': 'cap_bypass_r',
    'star_tie_r_ohm': 'star_tie_r',
    'star_common_guard_r_ohm': 'star_common_guard_r',
    'solid_ground_r_ohm': 'solid_ground_r',
    'gsu_min_kv': 'gsu_min_kv',
}

_ROLE_ORDER = {role: rank for rank, role in enumerate(GmdRole)}
_ORIGIN_ORDER = {origin: rank for rank, origin in enumerate(BranchOrigin)}

EARTH_KEY = None


@dataclass(frozen=True)
class BuilderConfig:
    """Resistances (ohms) and thresholds used while building the DC network"""
    implicit_ground_r: float = 25000.0
    cap_bypass_r: float = 0.005
    star_tie_r: float = 1e-6
    star_common_guard_r: float = 1e6
    solid_ground_r: float = 1e-6
    gsu_min_kv: float = 30.0
    gsu_table: tuple = GSU_TABLE
    add_implicit_grounds: bool = True

    def __post_init__(self):
        for name in ('implicit_ground_r', 'cap_bypass_r', 'star_tie_r',
                     'star_common_guard_r', 'solid_ground_r'):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not self.gsu_min_kv >= 0:
            raise ValueError(f"gsu_min_kv must be non-negative, got {self.gsu_min_kv}")
        voltages = [kv for kv, _ in self.gsu_table]
        if any(upper <= lower for upper, lower in zip(voltages, voltages[1:])):
            raise ValueError("gsu_table voltages must be strictly decreasing")
        if any(not resistance > 0 for _, resistance in self.gsu_table):
            raise ValueError("gsu_table resistances must be positive")

    def gsu_resistance(self, nominal_kv):
        for kv, resistance in self.gsu_table:
            if kv == nominal_kv:
                return resistance
        return None

    @classmethod
    def from_dict(cls, data):
        """Build a config from the 'builder' section of a settings file"""
        kwargs = {}
        for key, value in data.items():
            if key == 'gsu_table_ohm':
                table = sorted(((float(kv), float(r)) for kv, r in value.items()), reverse=True)
                kwargs['gsu_table'] = tuple(table)
            elif key == 'add_implicit_grounds':
                kwargs['add_implicit_grounds'] = bool(value)
            elif key in _SETTING_NAMES:
                kwargs[_SETTING_NAMES[key]] = float(value)
            else:
                logger.warning("Ignoring unknown builder setting %r", key)
        return cls(**kwargs)


def load_builder_config(settings=None):
    """BuilderConfig from the builder block of a loaded settings dict (the bundled file when None)"""
    if settings is None:
        settings = utils.load_settings()
    try:
        return BuilderConfig.from_dict(settings.get('builder', {}))
    except (TypeError, ValueError, AttributeError) as e:
        raise SettingsError(f"invalid builder settings: {e}")


@dataclass(frozen=True)
class LineTreatment:
    """How one AC line appears in the DC network; origin is None when it has no branch"""
    line_id: int
    origin: BranchOrigin | None
    resistance: float | None
    reason: str

    @property
    def has_branch(self):
        return self.origin is not None


@dataclass(frozen=True)
class BranchSpec:
    """A branch before numbering; endpoints are node keys, EARTH_KEY for remote earth"""
    from_key: tuple | None
    to_key: tuple | None
    resistance: float
    origin: BranchOrigin
    parent: int
    owner: int | None = None  # transformer id for transformer branches
    terminal: str | None = None


def bus_key(bus_id):
    return (GmdRole.BUS_IMAGE, bus_id)


def ground_key(substation_id):
    return (GmdRole.SUBSTATION_GROUND, substation_id)


def star_key(transformer_id):
    return (GmdRole.STAR, transformer_id)


def line_dc_resistance(r_pu, kv_ll, mva_3ph):
    """Common-mode DC resistance (ohms) of a line from its per-unit resistance"""
    if not kv_ll > 0 or not mva_3ph > 0:
        raise InvalidBaseError(f"bases must be positive (kv_ll={kv_ll}, mva_3ph={mva_3ph})")
    if not r_pu >= 0:
        raise ValueError(f"r_pu must be non-negative, got {r_pu}")
    return r_pu * kv_ll ** 2 / (3 * mva_3ph)


def decompose_transformer(xf, cfg, substation_id):
    """
    DC circuit of one transformer.

    Returns (node keys the transformer adds, branch specs, terminal -> node key).
    Winding branch resistances are the per-phase winding resistance divided
    by 3 for the three phases in parallel; delta and ungrounded windings
    produce nothing.
    """
    kind = xf.kind
    h, l = bus_key(xf.high_bus), bus_key(xf.low_bus)
    t = bus_key(xf.tertiary_bus) if xf.tertiary_bus is not None else None
    g = ground_key(substation_id)
    sigma = star_key(xf.id) if kind is TransformerKind.THREE_WINDING_AUTO else None

    terminals = {'h': h, 'l': l}
    if t is not None:
        terminals['t'] = t
    if kind.is_auto:
        terminals['s'] = h
        terminals['c'] = l

    def resistance(winding):
        value = xf.winding_resistance(winding)
        if value is None:
            raise IncompleteTransformerError(
                f"transformer {xf.id}: grounded {winding} winding has no resistance")
        return value

    specs = []

    def add(from_key, to_key, r, origin, terminal, parent=xf.id):
        specs.append(BranchSpec(from_key, to_key, r, origin, parent, xf.id, terminal))

    for winding in xf.conducting_windings():
        if xf.is_implicit_gsu:
            # Table resistance is used as is
            add(l, g, resistance(winding), BranchOrigin.GSU, 'L', parent=xf.source_generator)
        elif winding == 'high':
            add(h, g, resistance('high') / 3, BranchOrigin.XF_WINDING_HIGH, 'H')
        elif winding == 'low':
            add(l, g, resistance('low') / 3, BranchOrigin.XF_WINDING_LOW, 'L')
        elif winding == 'tertiary':
            add(t, g, resistance('tertiary') / 3, BranchOrigin.XF_WINDING_TERTIARY, 'T')
        elif winding == 'series' and sigma is not None:
            add(h, sigma, resistance('series') / 3, BranchOrigin.XF_SERIES, 'S')
            add(sigma, l, cfg.star_tie_r, BranchOrigin.XF_STAR_TIE, 'St')
        elif winding == 'series':
            add(h, l, resistance('series') / 3, BranchOrigin.XF_SERIES, 'S')
        elif winding == 'common':
            add(l, g, resistance('common') / 3, BranchOrigin.XF_COMMON, 'C')
            if sigma is not None:
                add(sigma, g, cfg.star_common_guard_r, BranchOrigin.XF_COMMON_GUARD, 'Cf')

    nodes = []
    if any(g in (spec.from_key, spec.to_key) for spec in specs):
        nodes.append(g)
        terminals['g'] = g
    if sigma is not None:
        nodes.append(sigma)
        terminals['sigma'] = sigma
    return nodes, specs, terminals


def add_implicit_gsus(case, cfg=None):
    """
    Step-up transformers for in-service generators on transmission buses.

    Returns (added transformers, diagnostics). A bus voltage missing from
    the GSU table is skipped with a warning.
    """
    cfg = cfg or BuilderConfig()
    added = []
    diagnostics = []
    id_base = max((xf.id for xf in case.transformers), default=0)
    for gen in sorted(case.generators, key=lambda item: item.id):
        bus = case.bus_index.get(gen.bus)
        if gen.status != 1 or bus is None or bus.nominal_kv < cfg.gsu_min_kv:
            continue
        resistance = cfg.gsu_resistance(bus.nominal_kv)
        if resistance is None:
            diagnostic = Diagnostic('warning', f'generator {gen.id}',
                                    f'no implicit GSU resistance for {bus.nominal_kv:g} kV; GSU skipped')
            logger.warning(str(diagnostic))
            diagnostics.append(diagnostic)
            continue
        added.append(Transformer(
            id=id_base + gen.id,
            kind=TransformerKind.DELTA_GWYE,
            high_bus=gen.bus,
            low_bus=gen.bus,
            r_low=resistance,
            grounded_high=False,
            grounded_low=True,
            is_implicit_gsu=True,
            source_generator=gen.id,
        ))
    return added, diagnostics


def apply_series_cap_modes(case, cfg=None):
    """Per-line DC treatment keyed by line id"""
    cfg = cfg or BuilderConfig()
    treatments = {}
    for line in case.lines:
        mode = line.series_cap_mode
        if line.status != 1:
            treatment = LineTreatment(line.id, None, None, 'out of service')
        elif mode is SeriesCapMode.OPEN:
            treatment = LineTreatment(line.id, None, None, 'open')
        elif mode is SeriesCapMode.CLOSED:
            treatment = LineTreatment(line.id, None, None, 'series capacitor in service')
        else:
            kv = case.bus_index[line.from_bus].nominal_kv
            resistance = line_dc_resistance(line.r_pu, kv, line.mva_base)
            if resistance == 0:
                treatment = LineTreatment(line.id, BranchOrigin.CAP_BYPASS, cfg.cap_bypass_r,
                                          'zero resistance, bypassed capacitor')
            else:
                treatment = LineTreatment(line.id, BranchOrigin.LINE, resistance, mode.value.lower())
        treatments[line.id] = treatment
    return treatments


def _station_tie_resistance(station, cfg, implicit):
    if station is None or station.grounding_resistance is None:
        return cfg.implicit_ground_r if implicit else None
    if station.grounding_resistance == 0:
        return cfg.solid_ground_r
    return station.grounding_resistance


def add_implicit_grounds(network, cfg=None):
    """
    Tie every bus image to its substation ground through cfg.implicit_ground_r.

    Substations that own buses get a ground node if they lack one, and every
    ground node without a tie to remote earth gets one: the station grounding
    resistance when known, otherwise an implicit one. New nodes and branches
    are numbered after the existing ones.
    """
    cfg = cfg or BuilderConfig()
    stations = {station.id: station for station in network.substations}
    buses = list(network.buses)
    next_node = max((bus.id for bus in buses), default=0) + 1
    used_branch_ids = [br.id for br in network.branches] + list(network.blocked_branches)
    next_branch = max(used_branch_ids, default=0) + 1

    grounds = {bus.substation_id: bus.id for bus in buses if bus.role is GmdRole.SUBSTATION_GROUND}
    images = sorted((bus for bus in buses if bus.role is GmdRole.BUS_IMAGE), key=lambda bus: bus.source)
    for substation_id in sorted({bus.substation_id for bus in images}):
        if substation_id in grounds:
            continue
        station = stations.get(substation_id)
        lat, lon = (station.lat, station.lon) if station else (0.0, 0.0)
        buses.append(GmdBus(next_node, GmdRole.SUBSTATION_GROUND, substation_id, substation_id, lat, lon))
        grounds[substation_id] = next_node
        next_node += 1

    tied = {br.parent for br in network.branches if br.origin is BranchOrigin.SUBSTATION_GROUND_TIE}
    added = []
    for substation_id in sorted(grounds):
        if substation_id in tied:
            continue
        resistance = _station_tie_resistance(stations.get(substation_id), cfg, implicit=True)
        added.append(GmdBranch(next_branch, grounds[substation_id], EARTH, resistance,
                               BranchOrigin.SUBSTATION_GROUND_TIE, substation_id))
        next_branch += 1
    for bus in images:
        added.append(GmdBranch(next_branch, bus.id, grounds[bus.substation_id], cfg.implicit_ground_r,
                               BranchOrigin.IMPLICIT_GROUND, bus.source))
        next_branch += 1

    logger.debug("Added %d implicit grounding branches", len(added))
    return replace(network, buses=tuple(buses), branches=network.branches + tuple(added))


def _gmd_bus(key, node_id, case):
    role, source = key
    if role is GmdRole.BUS_IMAGE:
        lon, lat = case.bus_position(source)
        return GmdBus(node_id, role, source, case.bus_index[source].substation_id, lat, lon)
    if role is GmdRole.SUBSTATION_GROUND:
        station = case.substation_index[source]
        return GmdBus(node_id, role, source, source, station.lat, station.lon)
    high_bus = case.transformer_index[source].high_bus
    lon, lat = case.bus_position(high_bus)
    return GmdBus(node_id, role, source, case.bus_index[high_bus].substation_id, lat, lon)


def build(case, cfg=None):
    """
    GMD network and transformer index map for a case.

    Raises InvalidCaseError when the case has error diagnostics.
    """
    cfg = cfg or BuilderConfig()
    errors = [d for d in validate_case(case) if d.severity == 'error']
    if errors:
        raise InvalidCaseError(errors)

    gsus, _ = add_implicit_gsus(case, cfg)
    node_keys = {bus_key(bus.id) for bus in case.buses}
    specs = []

    for line_id, treatment in apply_series_cap_modes(case, cfg).items():
        if treatment.has_branch:
            line = case.line_index[line_id]
            specs.append(BranchSpec(bus_key(line.from_bus), bus_key(line.to_bus),
                                    treatment.resistance, treatment.origin, line.id))

    circuits = []
    for xf in list(case.transformers) + gsus:
        substation_id = case.bus_index[xf.high_bus].substation_id
        nodes, xf_specs, terminals = decompose_transformer(xf, cfg, substation_id)
        node_keys.update(nodes)
        specs.extend(xf_specs)
        circuits.append((xf, terminals))

    for role, source in sorted(key for key in node_keys if key[0] is GmdRole.SUBSTATION_GROUND):
        resistance = _station_tie_resistance(case.substation_index[source], cfg, implicit=False)
        if resistance is not None:
            specs.append(BranchSpec((role, source), EARTH_KEY, resistance,
                                    BranchOrigin.SUBSTATION_GROUND_TIE, source))

    ordered_keys = sorted(node_keys, key=lambda key: (key[1], _ROLE_ORDER[key[0]]))
    node_ids = {key: number for number, key in enumerate(ordered_keys, start=1)}
    node_ids[EARTH_KEY] = EARTH
    buses = tuple(_gmd_bus(key, node_ids[key], case) for key in ordered_keys)

    ordered_specs = sorted(specs, key=lambda spec: (spec.parent, _ORIGIN_ORDER[spec.origin], spec.terminal or ''))
    branches = []
    terminal_branches = {}
    for number, spec in enumerate(ordered_specs, start=1):
        branches.append(GmdBranch(number, node_ids[spec.from_key], node_ids[spec.to_key],
                                  spec.resistance, spec.origin, spec.parent))
        if spec.owner is not None:
            terminal_branches.setdefault(spec.owner, []).append((spec.terminal, number))

    entries = []
    for xf, terminals in sorted(circuits, key=lambda item: item[0].id):
        tertiary = case.bus_index[xf.tertiary_bus] if xf.tertiary_bus is not None else None
        entries.append(TransformerTerminals(
            transformer=xf,
            nodes=tuple((terminal, node_ids[key]) for terminal, key in terminals.items()),
            branches=tuple(terminal_branches.get(xf.id, ())),
            kv_high=case.bus_index[xf.high_bus].nominal_kv,
            kv_low=case.bus_index[xf.low_bus].nominal_kv,
            kv_tertiary=tertiary.nominal_kv if tertiary else None,
            v_pu_high=case.bus_index[xf.high_bus].v_pu,
        ))

    network = GmdNetwork(
        buses=buses,
        branches=tuple(branches),
        substations=case.substations,
        lines=frozenset(line.id for line in case.lines),
    )
    if cfg.add_implicit_grounds:
        network = add_implicit_grounds(network, cfg)
    logger.info("Built GMD network: %d nodes, %d branches, %d transformers",
                len(network.buses), len(network.branches), len(entries))
    return network, TransformerIndexMap(tuple(entries))
