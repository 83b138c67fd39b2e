"""
GIC blocker scenarios as topology edits on a built GMD network.

NEUTRAL removes a transformer's neutral-to-ground branches (the series
winding of an autotransformer stays), SUBSTATION removes the station tie to
remote earth, SERIES_CAP removes the line branch. Edits are exact removals
and applying a scenario twice changes nothing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

from joblib import Parallel, delayed

from model import LINE_ORIGINS, BranchOrigin, GmdRole, ScenarioError

logger = logging.getLogger(__name__)

SERIES_CAP_ADVISORY = ("Series capacitors add reactance to every blocked line; "
                       "the resulting AC phase shift is not modelled.")


class BlockerKind(Enum):
    NONE = 'none'
    NEUTRAL = 'neutral'
    SUBSTATION = 'substation'
    SERIES_CAP = 'seriescap'


@dataclass(frozen=True)
class BlockerScenario:
    """
    Blocker type and placement.

    locations holds transformer ids (NEUTRAL), substation ids (SUBSTATION)
    or line ids (SERIES_CAP); None means every element of that kind.
    """
    kind: BlockerKind = BlockerKind.NONE
    locations: frozenset | None = None

    def __post_init__(self):
        if self.locations is not None:
            object.__setattr__(self, 'locations', frozenset(int(x) for x in self.locations))

    @property
    def label(self):
        if self.kind is BlockerKind.NONE or self.locations is None:
            return self.kind.value
        return f"{self.kind.value}@{','.join(str(x) for x in sorted(self.locations))}"

    @property
    def advisory(self):
        return SERIES_CAP_ADVISORY if self.kind is BlockerKind.SERIES_CAP else None


@dataclass(frozen=True, eq=False)
class ScenarioRow:
    field_label: str
    scenario_label: str
    result: object  # solver.SolveResult
    advisory: str | None = None


def standard_scenarios():
    """No blocking, then 100% substation, neutral and series-capacitor placement"""
    return [
        BlockerScenario(BlockerKind.NONE),
        BlockerScenario(BlockerKind.SUBSTATION),
        BlockerScenario(BlockerKind.NEUTRAL),
        BlockerScenario(BlockerKind.SERIES_CAP),
    ]


def _targets(scenario, known, noun):
    if scenario.locations is None:
        return set(known)
    unknown = sorted(scenario.locations - set(known))
    if unknown:
        raise ScenarioError(f"unknown {noun} id(s) for {scenario.kind.value} blocking: "
                            f"{', '.join(str(x) for x in unknown)}")
    return set(scenario.locations)


def apply(network, index_map, scenario):
    """Network with the scenario's blocked branches removed"""
    kind = scenario.kind
    buses = network.buses
    if kind is BlockerKind.NONE:
        return network
    if kind is BlockerKind.NEUTRAL:
        targets = _targets(scenario, index_map.transformer_ids(), 'transformer')
        removed = {bid for xf_id in targets for bid in index_map[xf_id].ground_branches}
    elif kind is BlockerKind.SUBSTATION:
        targets = _targets(scenario, [station.id for station in network.substations], 'substation')
        removed = {br.id for br in network.branches
                   if br.origin is BranchOrigin.SUBSTATION_GROUND_TIE and br.parent in targets}
        buses = tuple(
            replace(bus, grounding_blocked=True)
            if bus.role is GmdRole.SUBSTATION_GROUND and bus.substation_id in targets else bus
            for bus in network.buses)
    elif kind is BlockerKind.SERIES_CAP:
        targets = _targets(scenario, network.lines, 'line')
        removed = {br.id for br in network.branches
                   if br.origin in LINE_ORIGINS and br.parent in targets}
    else:
        raise ScenarioError(f"unsupported blocker kind {kind}")

    present = {br.id for br in network.branches}
    removed &= present
    logger.debug("%s blocking removed %d branches", scenario.label, len(removed))
    return replace(
        network,
        buses=buses,
        branches=tuple(br for br in network.branches if br.id not in removed),
        blocked_branches=network.blocked_branches | removed,
    )


def scenario_matrix(case, cfg, fields, scenarios, n_jobs=1, settings=None):
    """
    One row per (field, scenario), fields outer and scenarios inner.

    Cells are independent; n_jobs > 1 evaluates them in parallel.
    """
    from solver import run

    cells = [(field, scenario) for field in fields for scenario in scenarios]
    if not cells:
        return []
    results = Parallel(n_jobs=n_jobs)(
        delayed(run)(case, cfg, field, scenario, settings) for field, scenario in cells)
    rows = []
    for (field, scenario), result in zip(cells, results):
        rows.append(ScenarioRow(field.label, scenario.label, result, scenario.advisory))
        logger.info("%s / %s: total Qloss %.6g MVAr", field.label, scenario.label, result.total_qloss)
    return rows
