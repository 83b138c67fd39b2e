"""
Nodal GIC solve: conductance matrix, node voltages, branch currents, Qloss.

Each branch is a resistor in series with its induced EMF. Its Norton
equivalent stamps 1/R into G and injects -E/R at the from node and +E/R at
the to node, so G V = J gives node voltages against remote earth (the
eliminated reference). Branch current is (V_from - V_to + E) / R.

Qloss for transformer k is K * I_gic * |V| * I_base, with I_gic the effective
per-phase current in per unit of the high-side base current and |V| the AC
per-unit voltage of the high-side bus.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, onenormest, splu

import blockers
from coupling import Geodesy, couple
from dc_builder import build
from model import (
    EARTH, AssemblyError, GmdRole, MappingError, SettingsError, SingularSystemError, TransformerKind,
)

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
MAX_CONDITION = 1e12
SOLVE_TOLERANCE = 1e-9
KCL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SolverSettings:
    dense_limit: int = DENSE_LIMIT
    max_condition: float = MAX_CONDITION
    refinement_steps: int = 2

    @classmethod
    def from_dict(cls, data):
        known = {'dense_limit': int, 'max_condition': float, 'refinement_steps': int}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                logger.warning("Ignoring unknown solver setting %r", key)
                continue
            try:
                kwargs[key] = known[key](value)
            except (TypeError, ValueError):
                raise SettingsError(f"solver setting {key} must be a number, got {value!r}")
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class ConductanceSystem:
    """
    G V = J over the unknown node voltages.

    node_ids gives the node id of each row. Pinned nodes are held at 0 V
    (floating islands whose station grounds were blocked); floating lists
    islands that have no path to earth and nothing to pin.
    """
    G: object  # scipy.sparse.csr_matrix, siemens
    J: np.ndarray  # amperes
    node_ids: tuple
    pinned: tuple = ()
    floating: tuple = ()

    @property
    def size(self):
        return len(self.node_ids)


@dataclass(frozen=True, eq=False)
class SolveResult:
    node_voltage: dict  # node id -> volts
    branch_current: dict  # branch id -> amperes, blocked branches read 0
    effective_gic: dict  # transformer id -> per unit
    qloss: dict  # transformer id -> MVAr, implicit GSUs excluded
    ground_current: dict  # substation id -> amperes into remote earth
    network: object
    branch_origin: dict = field(default_factory=dict)  # branch id -> BranchOrigin, blocked branches included
    kcl_residual: float = 0.0

    @property
    def total_qloss(self):
        return float(sum(self.qloss.values()))


def _islands(network, position):
    """Connected components ignoring remote earth, and which of them touch it"""
    n = len(position)
    rows, cols = [], []
    grounded_nodes = set()
    for br in network.branches:
        if br.from_node == EARTH:
            grounded_nodes.add(br.to_node)
        elif br.to_node == EARTH:
            grounded_nodes.add(br.from_node)
        else:
            rows.append(position[br.from_node])
            cols.append(position[br.to_node])
    adjacency = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(adjacency, directed=False)
    grounded = {labels[position[node]] for node in grounded_nodes}
    return count, labels, grounded


def assemble(network):
    """Conductance system of a coupled network"""
    position = {bus.id: index for index, bus in enumerate(network.buses)}
    for br in network.branches:
        if not br.resistance > 0:
            raise AssemblyError(f"branch {br.id} has non-positive resistance {br.resistance}")
        for node in (br.from_node, br.to_node):
            if node != EARTH and node not in position:
                raise AssemblyError(f"branch {br.id} ends at unknown node {node}")

    pinned, floating = [], []
    if network.buses:
        count, labels, grounded = _islands(network, position)
        for component in range(count):
            if component in grounded:
                continue
            members = [bus for bus in network.buses if labels[position[bus.id]] == component]
            blocked = sorted(bus.id for bus in members
                             if bus.role is GmdRole.SUBSTATION_GROUND and bus.grounding_blocked)
            if blocked:
                pinned.append(blocked[0])
            else:
                floating.append(tuple(sorted(bus.id for bus in members)))

    held = set(pinned)
    node_ids = tuple(bus.id for bus in network.buses if bus.id not in held)
    row = {node: index for index, node in enumerate(node_ids)}
    n = len(node_ids)

    rows, cols, values = [], [], []
    J = np.zeros(n)
    for br in network.branches:
        g = 1.0 / br.resistance
        injection = g * br.induced_voltage
        i = row.get(br.from_node)
        j = row.get(br.to_node)
        if i is not None:
            rows.append(i)
            cols.append(i)
            values.append(g)
            J[i] -= injection
        if j is not None:
            rows.append(j)
            cols.append(j)
            values.append(g)
            J[j] += injection
        if i is not None and j is not None:
            rows.extend((i, j))
            cols.extend((j, i))
            values.extend((-g, -g))
    G = coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()
    return ConductanceSystem(G, J, node_ids, tuple(pinned), tuple(floating))


def _sparse_condition(G, lu):
    n = G.shape[0]
    inverse = LinearOperator(
        (n, n),
        matvec=lu.solve,
        rmatvec=lambda x: lu.solve(x, trans='T'),
        dtype=float,
    )
    return onenormest(G) * onenormest(inverse)


def _factorize(system, settings):
    """Solve function and 1-norm condition estimate for G"""
    if system.size <= settings.dense_limit:
        dense = system.G.toarray()
        try:
            condition = np.linalg.cond(dense, 1)
            factor = scipy.linalg.lu_factor(dense)
        except (np.linalg.LinAlgError, ValueError):
            return None, math.inf
        return (lambda rhs: scipy.linalg.lu_solve(factor, rhs)), condition
    try:
        lu = splu(system.G.tocsc())
    except RuntimeError:
        return None, math.inf
    return lu.solve, _sparse_condition(system.G, lu)


def condition_estimate(system, settings=None):
    settings = settings or SolverSettings()
    if system.size == 0:
        return 1.0
    _, condition = _factorize(system, settings)
    return condition


def solve(system, settings=None):
    """
    Node voltages (node id -> volts), pinned nodes included at 0 V.

    Raises SingularSystemError for islands with no path to earth or a
    condition estimate above the configured limit.
    """
    settings = settings or SolverSettings()
    if system.floating:
        described = '; '.join(f"nodes {list(island)}" for island in system.floating)
        raise SingularSystemError(f"singular system: no path to earth for {described}", system.floating)

    voltages = {node: 0.0 for node in system.pinned}
    if system.size == 0:
        return voltages

    solve_with, condition = _factorize(system, settings)
    if solve_with is None or not np.isfinite(condition) or condition > settings.max_condition:
        raise SingularSystemError(
            f"ill-conditioned system: condition estimate {condition:.3g} exceeds {settings.max_condition:.3g}",
            [system.node_ids])
    logger.debug("Condition estimate %.3g for %d nodes", condition, system.size)

    J = system.J
    V = solve_with(J)
    limit = SOLVE_TOLERANCE * max(1.0, float(np.max(np.abs(J))))
    for _ in range(settings.refinement_steps):
        residual = J - system.G @ V
        if np.max(np.abs(residual)) <= limit:
            break
        V = V + solve_with(residual)
    worst = float(np.max(np.abs(J - system.G @ V)))
    if worst > limit:
        logger.warning("Solve residual %.3g A exceeds tolerance %.3g A", worst, limit)

    voltages.update(zip(system.node_ids, (float(v) for v in V)))
    return voltages


def branch_currents(network, node_voltage):
    """Branch id -> amperes, positive from from_node to to_node"""
    if not network.branches:
        return {}
    volts = dict(node_voltage)
    volts[EARTH] = 0.0
    v_from = np.array([volts[br.from_node] for br in network.branches])
    v_to = np.array([volts[br.to_node] for br in network.branches])
    emf = np.array([br.induced_voltage for br in network.branches])
    resistance = np.array([br.resistance for br in network.branches])
    current = (v_from - v_to + emf) / resistance
    return {br.id: float(i) for br, i in zip(network.branches, current)}


def kcl_residuals(network, currents):
    """Net current leaving each node through its branches, earth excluded"""
    net = {bus.id: 0.0 for bus in network.buses}
    for br in network.branches:
        current = currents[br.id]
        if br.from_node != EARTH:
            net[br.from_node] += current
        if br.to_node != EARTH:
            net[br.to_node] -= current
    return net


def ground_currents(network, currents):
    """Current from each substation ground node into remote earth"""
    buses = network.bus_index
    totals = {}
    for br in network.branches:
        if br.to_node == EARTH and br.from_node != EARTH:
            node, current = br.from_node, currents[br.id]
        elif br.from_node == EARTH and br.to_node != EARTH:
            node, current = br.to_node, -currents[br.id]
        else:
            continue
        station = buses[node].substation_id
        totals[station] = totals.get(station, 0.0) + current
    return totals


def base_current(mva_base, kv_high):
    """High-side base current in amperes"""
    return mva_base * 1e6 / (math.sqrt(3) * kv_high * 1e3)


def _phase_current(entry, currents, terminal):
    bid = entry.branch(terminal)
    if bid is None:
        return 0.0
    if bid not in currents:
        raise MappingError(f"transformer {entry.transformer.id}: no current for branch {bid} ({terminal})")
    return currents[bid] / 3.0


def effective_gic_amps(entry, currents):
    """Effective per-phase GIC of one transformer in amperes"""
    xf = entry.transformer
    kind = xf.kind
    phase = {terminal: _phase_current(entry, currents, terminal) for terminal in ('H', 'L', 'T', 'S', 'C')}
    if kind.is_auto:
        ratio = entry.kv_high / entry.kv_low
        return abs(phase['S'] + phase['C'] * (ratio - 1.0) / ratio)
    if kind is TransformerKind.GWYE_GWYE:
        return abs(phase['H'] + phase['L'] * entry.kv_low / entry.kv_high)
    if kind is TransformerKind.DELTA_GWYE:
        return abs(phase['L'])
    if kind is TransformerKind.GWYE_DELTA:
        return abs(phase['H'])
    if kind is TransformerKind.THREE_WINDING:
        total = phase['H'] + phase['L'] * entry.kv_low / entry.kv_high
        if entry.kv_tertiary:
            total += phase['T'] * entry.kv_tertiary / entry.kv_high
        return abs(total)
    return 0.0


def effective_gic(xf, index_map, currents):
    """Effective GIC of transformer xf in per unit of its high-side base current"""
    entry = index_map[xf.id]
    return effective_gic_amps(entry, currents) / base_current(xf.mva_base, entry.kv_high)


def qloss(xf, effective_gic, high_bus_voltage, i_base):
    """Reactive loss in MVAr"""
    if effective_gic < 0:
        raise ValueError(f"effective GIC must be non-negative, got {effective_gic}")
    return xf.k_factor * effective_gic * abs(high_bus_voltage) * i_base


def _transformer_losses(index_map, currents):
    effective, losses = {}, {}
    for entry in index_map:
        xf = entry.transformer
        if xf.is_implicit_gsu:
            continue
        i_gic = effective_gic(xf, index_map, currents)
        effective[xf.id] = i_gic
        losses[xf.id] = qloss(xf, i_gic, entry.v_pu_high, base_current(xf.mva_base, entry.kv_high))
    return effective, losses


def run(case, cfg, field, scenario=None, settings=None):
    """Build, block, couple, solve and report losses for one field and scenario"""
    network, index_map = build(case, cfg)
    origins = {br.id: br.origin for br in network.branches}
    geodesy = Geodesy.from_network(network)
    if scenario is not None:
        network = blockers.apply(network, index_map, scenario)
    network = couple(network, field, case, geodesy)

    system = assemble(network)
    node_voltage = solve(system, settings)
    currents = branch_currents(network, node_voltage)

    residuals = kcl_residuals(network, currents)
    worst = max((abs(value) for value in residuals.values()), default=0.0)
    if worst > KCL_TOLERANCE:
        logger.warning("KCL residual %.3g A exceeds %.0e A", worst, KCL_TOLERANCE)

    all_currents = {bid: 0.0 for bid in network.blocked_branches}
    all_currents.update(currents)
    effective, losses = _transformer_losses(index_map, all_currents)
    return SolveResult(
        node_voltage=node_voltage,
        branch_current=all_currents,
        effective_gic=effective,
        qloss=losses,
        ground_current=ground_currents(network, currents),
        network=network,
        branch_origin=origins,
        kcl_residual=worst,
    )
