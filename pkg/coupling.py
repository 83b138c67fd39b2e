"""
Induced line voltages from a geoelectric field.

A uniform field is integrated along each line with a flat-earth projection
that uses one mean latitude for the whole network, so displacements around
any closed path cancel exactly and a uniform field drives no loop EMF. A
per-line table (the GICInducedDCVolt export) is copied onto the line
branches as is.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

import utils
from model import LINE_ORIGINS, UnknownLineError

logger = logging.getLogger(__name__)

KM_PER_DEG_LAT = 110.574
KM_PER_DEG_LON_EQUATOR = 113.320


@dataclass(frozen=True)
class UniformField:
    """Spatially uniform field: magnitude in V/km, bearing in degrees clockwise from North"""
    magnitude: float
    bearing: float

    def __post_init__(self):
        if not np.isfinite(self.magnitude) or self.magnitude < 0:
            raise ValueError(f"field magnitude must be a non-negative number, got {self.magnitude}")
        if not np.isfinite(self.bearing) or not 0 <= self.bearing < 360:
            raise ValueError(f"field bearing must be in [0, 360), got {self.bearing}")

    @property
    def label(self):
        return f"uniform_{utils.format_number(self.magnitude)}_{utils.format_number(self.bearing)}"

    def scaled(self, factor):
        return UniformField(self.magnitude * factor, self.bearing)

    def reversed(self):
        return UniformField(self.magnitude, (self.bearing + 180.0) % 360.0)


@dataclass(frozen=True)
class LineVoltageTable:
    """Induced DC voltage per AC line id, in volts"""
    voltages: dict = field(default_factory=dict)
    label: str = 'line_volts'

    def __len__(self):
        return len(self.voltages)


@dataclass(frozen=True)
class Geodesy:
    mean_lat: float = 0.0

    def __post_init__(self):
        if not abs(self.mean_lat) < 90:
            raise ValueError(f"mean latitude must be inside (-90, 90), got {self.mean_lat}")

    @property
    def km_per_deg_lat(self):
        return KM_PER_DEG_LAT

    @property
    def km_per_deg_lon(self):
        return KM_PER_DEG_LON_EQUATOR * np.cos(np.radians(self.mean_lat))

    @classmethod
    def from_network(cls, network):
        """Mean of the latitude midpoints of every line branch (0 when there are none)"""
        buses = network.bus_index
        midpoints = [(buses[br.from_node].lat + buses[br.to_node].lat) / 2
                     for br in network.branches if br.origin in LINE_ORIGINS]
        if not midpoints:
            return cls(0.0)
        return cls(float(np.mean(midpoints)))


def displacement(p1, p2, geo):
    """(east, north) displacement in km from p1 to p2, both (lon, lat) in degrees"""
    (lon1, lat1), (lon2, lat2) = p1, p2
    d_n = geo.km_per_deg_lat * (lat2 - lat1)
    d_e = geo.km_per_deg_lon * (lon2 - lon1)
    return d_e, d_n


def branch_voltage(d, uniform_field):
    d_e, d_n = d
    theta = np.radians(uniform_field.bearing)
    return uniform_field.magnitude * (d_n * np.cos(theta) + d_e * np.sin(theta))


def _uniform_voltages(network, lines, uniform_field, geo):
    buses = network.bus_index
    start = np.array([(buses[br.from_node].lon, buses[br.from_node].lat) for br in lines], dtype=float)
    end = np.array([(buses[br.to_node].lon, buses[br.to_node].lat) for br in lines], dtype=float)
    d_e, d_n = displacement(start.T, end.T, geo)
    return branch_voltage((d_e, d_n), uniform_field)


def _table_voltages(lines, table, known_lines):
    unknown = sorted(set(table.voltages) - set(known_lines))
    if unknown:
        raise UnknownLineError(f"line voltage table references unknown line(s): {unknown}")
    missing = sorted({br.parent for br in lines} - set(table.voltages))
    if missing:
        logger.warning("No induced voltage for line(s) %s; using 0 V", missing)
    return np.array([float(table.voltages.get(br.parent, 0.0)) for br in lines], dtype=float)


def couple(network, source, case=None, geodesy=None):
    """
    Network with induced_voltage set on every line branch, bypassed ones included.

    Every other branch gets 0 V. Positive voltage drives current from
    from_node to to_node. geodesy defaults to the network's own mean
    latitude; pass the unblocked network's value to keep it fixed across
    blocker scenarios.
    """
    lines = [br for br in network.branches if br.origin in LINE_ORIGINS]
    if isinstance(source, UniformField):
        geo = geodesy or Geodesy.from_network(network)
        voltages = _uniform_voltages(network, lines, source, geo) if lines else np.zeros(0)
    elif isinstance(source, LineVoltageTable):
        known = [line.id for line in case.lines] if case is not None else network.lines
        voltages = _table_voltages(lines, source, known)
    else:
        raise TypeError(f"unsupported field source {type(source).__name__}")

    by_branch = {br.id: float(v) for br, v in zip(lines, voltages)}
    branches = tuple(replace(br, induced_voltage=by_branch.get(br.id, 0.0)) for br in network.branches)
    return replace(network, branches=branches)
