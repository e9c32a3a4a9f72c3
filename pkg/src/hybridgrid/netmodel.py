"""Network description: domain types, per-unit bases, parsing and validation.

A hybrid grid is described by ac buses, dc buses (grouped into dc zones by
their dc lines) and converter couplings between an ac bus and a dc bus.  The
dc buses are first-class members of the model; admittance assembly reflects
them into the ac phasor domain later.

Units: every solver-facing quantity is per unit.  Angles are radians in memory
and degrees in the JSON document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

import jsonschema
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ModelError, NetworkFormatError
from .reflect import modulation_alpha

SCHEMA_VERSION = 1


class BusKind(str, Enum):
    AC_SLACK = "AcSlack"
    AC_PV = "AcPV"
    AC_PQ = "AcPQ"
    DC_SOURCE = "DcSource"
    DC_LOAD = "DcLoad"
    COUPLING_AC_SIDE = "CouplingAcSide"
    REFLECTED_DC = "ReflectedDc"

    @property
    def is_dc(self) -> bool:
        return self in (BusKind.DC_SOURCE, BusKind.DC_LOAD, BusKind.REFLECTED_DC)

    @property
    def is_ac(self) -> bool:
        return not self.is_dc


class BranchTag(str, Enum):
    LINE = "Line"
    SHIFT_TRANSFORMER = "ShiftTransformer"
    BB_COUPLING = "BbCoupling"
    SHUNT = "Shunt"


class ShuntRole(str, Enum):
    """Which studies a shunt takes part in.

    ``network``: always stamped (filters, the reactive element at a dc bus).
    ``source``: generator/source impedance, fault studies only.
    ``compensation``: shunt capacitors/reactors, power flow and the solved
    pre-fault mode; dropped under the flat pre-fault assumption.
    """

    NETWORK = "network"
    SOURCE = "source"
    COMPENSATION = "compensation"


@dataclass(frozen=True)
class PerUnit:
    """Base quantities of one voltage zone.

    Three-phase zones use line-to-line voltage and total power, so the base
    current is ``S / (sqrt(3) V)``; dc zones use ``S / V``.
    """

    zone: str
    power: float
    voltage: float
    three_phase: bool = True

    @property
    def current(self) -> float:
        k = math.sqrt(3.0) if self.three_phase else 1.0
        return self.power / (k * self.voltage)

    @property
    def impedance(self) -> float:
        return self.voltage**2 / self.power

    def _base(self, quantity: str) -> float:
        try:
            return {
                "power": self.power,
                "voltage": self.voltage,
                "current": self.current,
                "impedance": self.impedance,
                "admittance": 1.0 / self.impedance,
            }[quantity]
        except KeyError:
            raise ValueError(f"unknown quantity {quantity!r}") from None

    def normalize(self, value, quantity: str):
        return value / self._base(quantity)

    def denormalize(self, value, quantity: str):
        return value * self._base(quantity)


@dataclass(frozen=True)
class Bases:
    power: float
    voltage_ac: float
    voltage_dc: float

    @property
    def ac(self) -> PerUnit:
        return PerUnit("ac", self.power, self.voltage_ac, three_phase=True)

    @property
    def dc(self) -> PerUnit:
        return PerUnit("dc", self.power, self.voltage_dc, three_phase=False)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    voltage_setpoint: float | None = None
    p_injection: float = 0.0
    q_injection: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class Branch:
    """One stamped element.

    For ``Shunt`` the element sits at ``from_bus`` and ``y`` is the shunt
    admittance; otherwise ``y`` is the series admittance between ``from_bus``
    and ``to_bus``.  ``ratio`` is only meaningful for ``ShiftTransformer`` and
    ``converter`` (a converter id) only for ``BbCoupling``.
    """

    id: str
    tag: BranchTag
    from_bus: int
    to_bus: int | None = None
    y: complex = 0j
    ratio: complex = 1 + 0j
    converter: str | None = None
    role: ShuntRole = ShuntRole.NETWORK


@dataclass(frozen=True)
class ConverterCoupling:
    id: str
    ac_bus: int
    reflected_bus: int
    modulation: float
    reactance: float
    delta: float | None
    shift_theta_a: float | None = None

    @property
    def alpha(self) -> float:
        return modulation_alpha(self.modulation)

    @property
    def beta(self) -> float:
        return 1.0 / self.alpha


@dataclass(frozen=True)
class DcZone:
    id: str
    buses: frozenset
    converters: tuple


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    element: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.element}: {self.message}"


@dataclass(frozen=True)
class NetworkModel:
    bases: Bases
    buses: tuple
    branches: tuple
    converters: tuple = ()
    common_theta: float = 0.0
    common_gamma: float = 0.0
    name: str = ""
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "converters", tuple(self.converters))
        branches = list(self.branches)
        coupled = {b.converter for b in branches if b.tag is BranchTag.BB_COUPLING}
        for conv in self.converters:
            if conv.id not in coupled:
                branches.append(
                    Branch(
                        id=f"BB:{conv.id}",
                        tag=BranchTag.BB_COUPLING,
                        from_bus=conv.ac_bus,
                        to_bus=conv.reflected_bus,
                        converter=conv.id,
                    )
                )
        object.__setattr__(self, "branches", tuple(branches))
        index = {}
        for i, bus in enumerate(self.buses):
            index.setdefault(bus.id, i)
        object.__setattr__(self, "_index", index)

    @property
    def bus_ids(self) -> tuple:
        return tuple(b.id for b in self.buses)

    def has_bus(self, bus_id) -> bool:
        return bus_id in self._index

    def bus(self, bus_id) -> Bus:
        try:
            return self.buses[self._index[bus_id]]
        except KeyError:
            raise ModelError(f"unknown bus {bus_id}") from None

    def index(self, bus_id) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise ModelError(f"unknown bus {bus_id}") from None

    def converter(self, conv_id) -> ConverterCoupling:
        for conv in self.converters:
            if conv.id == conv_id:
                return conv
        raise ModelError(f"unknown converter {conv_id}")

    def slack_buses(self) -> list:
        return [b.id for b in self.buses if b.kind is BusKind.AC_SLACK]

    @property
    def is_hybrid(self) -> bool:
        return any(b.kind.is_dc for b in self.buses)

    def dc_zones(self) -> tuple:
        """Connected components of dc buses joined by dc lines."""
        dc = [b.id for b in self.buses if b.kind.is_dc]
        if not dc:
            return ()
        pos = {bid: i for i, bid in enumerate(dc)}
        rows, cols = [], []
        for br in self.branches:
            if br.tag is BranchTag.LINE and br.from_bus in pos and br.to_bus in pos:
                rows.append(pos[br.from_bus])
                cols.append(pos[br.to_bus])
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(dc), len(dc)))
        _, labels = connected_components(graph, directed=False)
        groups: dict[int, list] = {}
        for bid, lab in zip(dc, labels):
            groups.setdefault(lab, []).append(bid)
        zones = []
        for members in sorted(groups.values(), key=min):
            mset = frozenset(members)
            convs = tuple(c.id for c in self.converters if c.reflected_bus in mset)
            zones.append(DcZone(f"dc{min(members)}", mset, convs))
        return tuple(zones)

    def zone_of(self, bus_id) -> DcZone | None:
        for zone in self.dc_zones():
            if bus_id in zone.buses:
                return zone
        return None

    def zone_alpha(self, zone: DcZone) -> float:
        """Reflection coefficient shared by every converter of ``zone``."""
        if not zone.converters:
            raise ModelError(f"dc zone {zone.id} has no converter coupling")
        return self.converter(zone.converters[0]).alpha

    def bus_alphas(self) -> dict:
        """alpha per dc bus (ac buses omitted)."""
        out = {}
        for zone in self.dc_zones():
            a = self.zone_alpha(zone)
            for bid in zone.buses:
                out[bid] = a
        return out

    def replace(self, **changes) -> "NetworkModel":
        if "converters" in changes and "branches" not in changes:
            changes["branches"] = tuple(
                b for b in self.branches if b.tag is not BranchTag.BB_COUPLING
            )
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# JSON document

_COMPLEX = {
    "type": "object",
    "properties": {"re": {"type": "number"}, "im": {"type": "number"}},
    "required": ["re", "im"],
    "additionalProperties": False,
}
_POLAR = {
    "type": "object",
    "properties": {
        "magnitude": {"type": "number", "exclusiveMinimum": 0},
        "angle_deg": {"type": "number"},
    },
    "required": ["magnitude", "angle_deg"],
    "additionalProperties": False,
}

NETWORK_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["bases", "buses", "branches", "converters"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "bases": {
            "type": "object",
            "required": ["power_va", "voltage_ac_v", "voltage_dc_v"],
            "properties": {
                "power_va": {"type": "number"},
                "voltage_ac_v": {"type": "number"},
                "voltage_dc_v": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "options": {
            "type": "object",
            "properties": {
                "common_theta_deg": {"type": "number"},
                "common_gamma_deg": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "buses": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "properties": {
                    "id": {"type": "integer"},
                    "kind": {"enum": [k.value for k in BusKind]},
                    "name": {"type": "string"},
                    "voltage_setpoint": {"type": "number"},
                    "p_injection": {"type": "number"},
                    "q_injection": {"type": "number"},
                },
                "additionalProperties": False,
            },
        },
        "branches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["tag", "from", "y"],
                "properties": {
                    "id": {"type": "string"},
                    "tag": {"enum": ["Line", "ShiftTransformer", "Shunt"]},
                    "from": {"type": "integer"},
                    "to": {"type": "integer"},
                    "y": _COMPLEX,
                    "ratio": {"oneOf": [_COMPLEX, _POLAR]},
                    "role": {"enum": [r.value for r in ShuntRole]},
                },
                "additionalProperties": False,
            },
        },
        "converters": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "ac_bus", "reflected_bus", "modulation", "reactance"],
                "properties": {
                    "id": {"type": "string"},
                    "ac_bus": {"type": "integer"},
                    "reflected_bus": {"type": "integer"},
                    "modulation": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "reactance": {"type": "number", "exclusiveMinimum": 0},
                    "delta_deg": {"type": "number"},
                    "shift_theta_a_deg": {"type": "number"},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

_FATAL = {"duplicate-bus", "dangling-bus-reference", "nonpositive-base", "duplicate-converter"}


def _deg(rad: float) -> float:
    """Degrees that convert back to exactly ``rad``."""
    d = math.degrees(rad)
    for _ in range(8):
        back = math.radians(d)
        if back == rad:
            return d
        d = math.nextafter(d, math.inf if back < rad else -math.inf)
    return math.degrees(rad)


def _cplx(obj) -> complex:
    if "re" in obj:
        return complex(obj["re"], obj["im"])
    return obj["magnitude"] * complex(
        math.cos(math.radians(obj["angle_deg"])), math.sin(math.radians(obj["angle_deg"]))
    )


def _cdict(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def parse_network(document) -> NetworkModel:
    """Parse a network document (JSON text, bytes, or an already-decoded dict).

    Raises:
        NetworkFormatError: schema violation (the message names the offending
            field), duplicate ids, dangling bus references, non-positive bases.
    """
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError(f"invalid JSON: {exc}") from exc
    else:
        data = document

    validator = jsonschema.Draft202012Validator(NETWORK_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise NetworkFormatError(f"schema violation at {where}: {err.message}")

    b = data["bases"]
    bases = Bases(b["power_va"], b["voltage_ac_v"], b["voltage_dc_v"])
    buses = [
        Bus(
            id=item["id"],
            kind=BusKind(item["kind"]),
            voltage_setpoint=item.get("voltage_setpoint"),
            p_injection=float(item.get("p_injection", 0.0)),
            q_injection=float(item.get("q_injection", 0.0)),
            name=item.get("name", ""),
        )
        for item in data["buses"]
    ]
    branches = []
    for i, item in enumerate(data["branches"]):
        tag = BranchTag(item["tag"])
        branches.append(
            Branch(
                id=item.get("id", f"br{i}"),
                tag=tag,
                from_bus=item["from"],
                to_bus=item.get("to"),
                y=_cplx(item["y"]),
                ratio=_cplx(item["ratio"]) if "ratio" in item else 1 + 0j,
                role=ShuntRole(item.get("role", "network")),
            )
        )
    converters = []
    for item in data["converters"]:
        delta = math.radians(item["delta_deg"]) if "delta_deg" in item else None
        shift = (
            math.radians(item["shift_theta_a_deg"]) if "shift_theta_a_deg" in item else None
        )
        converters.append(
            ConverterCoupling(
                id=item["id"],
                ac_bus=item["ac_bus"],
                reflected_bus=item["reflected_bus"],
                modulation=float(item["modulation"]),
                reactance=float(item["reactance"]),
                delta=delta,
                shift_theta_a=shift,
            )
        )
    opts = data.get("options", {})
    model = NetworkModel(
        bases=bases,
        buses=tuple(buses),
        branches=tuple(branches),
        converters=tuple(converters),
        common_theta=math.radians(opts.get("common_theta_deg", 0.0)),
        common_gamma=math.radians(opts.get("common_gamma_deg", 0.0)),
        name=data.get("name", ""),
    )
    fatal = [d for d in _structural_diagnostics(model) if d.code in _FATAL]
    if fatal:
        raise NetworkFormatError("; ".join(str(d) for d in fatal))
    return model


def load_network(path) -> NetworkModel:
    return parse_network(Path(path).read_text())


def serialize_network(model: NetworkModel) -> dict:
    """Inverse of :func:`parse_network` (BB couplings are implied by converters)."""
    buses = []
    for b in model.buses:
        item: dict[str, Any] = {"id": b.id, "kind": b.kind.value}
        if b.name:
            item["name"] = b.name
        if b.voltage_setpoint is not None:
            item["voltage_setpoint"] = b.voltage_setpoint
        item["p_injection"] = b.p_injection
        item["q_injection"] = b.q_injection
        buses.append(item)
    branches = []
    for br in model.branches:
        if br.tag is BranchTag.BB_COUPLING:
            continue
        item = {"id": br.id, "tag": br.tag.value, "from": br.from_bus}
        if br.to_bus is not None:
            item["to"] = br.to_bus
        item["y"] = _cdict(br.y)
        if br.tag is BranchTag.SHIFT_TRANSFORMER:
            item["ratio"] = _cdict(br.ratio)
        if br.tag is BranchTag.SHUNT:
            item["role"] = br.role.value
        branches.append(item)
    converters = []
    for c in model.converters:
        item = {
            "id": c.id,
            "ac_bus": c.ac_bus,
            "reflected_bus": c.reflected_bus,
            "modulation": c.modulation,
            "reactance": c.reactance,
        }
        if c.delta is not None:
            item["delta_deg"] = _deg(c.delta)
        if c.shift_theta_a is not None:
            item["shift_theta_a_deg"] = _deg(c.shift_theta_a)
        converters.append(item)
    out: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    if model.name:
        out["name"] = model.name
    out["bases"] = {
        "power_va": model.bases.power,
        "voltage_ac_v": model.bases.voltage_ac,
        "voltage_dc_v": model.bases.voltage_dc,
    }
    out["options"] = {
        "common_theta_deg": _deg(model.common_theta),
        "common_gamma_deg": _deg(model.common_gamma),
    }
    out["buses"] = buses
    out["branches"] = branches
    out["converters"] = converters
    return out


def dumps_network(model: NetworkModel) -> str:
    return json.dumps(serialize_network(model), indent=2)


# ---------------------------------------------------------------------------
# Validation


def _structural_diagnostics(model: NetworkModel) -> list:
    diags = []
    add = lambda code, msg, elem: diags.append(Diagnostic(code, msg, elem))  # noqa: E731

    for name, value in (
        ("power", model.bases.power),
        ("voltage_ac", model.bases.voltage_ac),
        ("voltage_dc", model.bases.voltage_dc),
    ):
        if not value > 0:
            add("nonpositive-base", f"base {name} must be > 0, got {value}", f"bases.{name}")

    seen = set()
    for b in model.buses:
        if b.id in seen:
            add("duplicate-bus", "duplicate bus id", f"bus {b.id}")
        seen.add(b.id)

    seen_conv = set()
    for c in model.converters:
        if c.id in seen_conv:
            add("duplicate-converter", "duplicate converter id", f"converter {c.id}")
        seen_conv.add(c.id)

    for br in model.branches:
        ends = [br.from_bus] if br.tag is BranchTag.SHUNT else [br.from_bus, br.to_bus]
        for end in ends:
            if end is None or not model.has_bus(end):
                add("dangling-bus-reference", f"dangling bus reference {end}", f"branch {br.id}")
    for c in model.converters:
        for end in (c.ac_bus, c.reflected_bus):
            if not model.has_bus(end):
                add("dangling-bus-reference", f"dangling bus reference {end}", f"converter {c.id}")
    return diags


def validate_model(model: NetworkModel) -> list:
    """Every invariant violation as a :class:`Diagnostic`; empty when the model is usable."""
    from .reflect import validate_lemma2

    diags = _structural_diagnostics(model)
    if any(d.code == "dangling-bus-reference" for d in diags):
        return diags
    add = lambda code, msg, elem: diags.append(Diagnostic(code, msg, elem))  # noqa: E731

    slacks = model.slack_buses()
    if len(slacks) > 1:
        add("multiple-slack", f"multiple slack buses {slacks}", f"bus {slacks[1]}")
    elif not slacks:
        add("no-slack", "no slack bus", "network")

    for b in model.buses:
        if b.kind.is_dc and b.q_injection != 0:
            add("reactive-on-dc", "dc bus carries reactive injection", f"bus {b.id}")
        if b.kind in (BusKind.AC_SLACK, BusKind.AC_PV, BusKind.DC_SOURCE):
            if b.voltage_setpoint is None:
                add("missing-setpoint", f"{b.kind.value} bus needs a voltage setpoint", f"bus {b.id}")
        if b.voltage_setpoint is not None and not b.voltage_setpoint > 0:
            add("nonpositive-voltage", "voltage setpoint must be > 0", f"bus {b.id}")

    for br in model.branches:
        if br.tag is BranchTag.SHUNT:
            continue
        if br.from_bus == br.to_bus:
            add("self-loop", "branch ends on the same bus", f"branch {br.id}")
            continue
        if br.tag is BranchTag.BB_COUPLING:
            continue
        a_dc = model.bus(br.from_bus).kind.is_dc
        b_dc = model.bus(br.to_bus).kind.is_dc
        if a_dc != b_dc:
            add("line-crosses-ac-dc", "ac and dc buses may only meet at a converter", f"branch {br.id}")
        elif a_dc and br.tag is BranchTag.SHIFT_TRANSFORMER:
            add("transformer-on-dc", "shift transformer between dc buses", f"branch {br.id}")
        elif a_dc and br.y.imag != 0:
            add("dc-line-reactive", "dc line admittance must be real", f"branch {br.id}")
        if br.tag is BranchTag.SHIFT_TRANSFORMER and br.ratio == 0:
            add("zero-ratio", "transformer ratio is zero", f"branch {br.id}")

    for c in model.converters:
        elem = f"converter {c.id}"
        if not model.bus(c.ac_bus).kind.is_ac:
            add("converter-bus-kind", f"ac_bus {c.ac_bus} is not an ac bus", elem)
        if not model.bus(c.reflected_bus).kind.is_dc:
            add("converter-bus-kind", f"reflected_bus {c.reflected_bus} is not a dc bus", elem)
        if not 0 < c.modulation <= 1:
            add("modulation-range", f"modulation {c.modulation} outside (0, 1]", elem)
        if not c.reactance > 0:
            add("reactance-range", f"coupling reactance {c.reactance} must be > 0", elem)
        if c.delta is not None and abs(math.sin(c.delta)) < 1e-9:
            add("singular-angle", "sin(delta) = 0 makes the coupling block singular", elem)

    for zone in model.dc_zones():
        if not zone.converters:
            add("zone-without-converter", "dc zone not coupled to the ac network", f"zone {zone.id}")
            continue
        mods = {model.converter(cid).modulation for cid in zone.converters}
        if len(mods) > 1:
            add(
                "mixed-modulation",
                f"converters of one zone must share a modulation factor, got {sorted(mods)}",
                f"zone {zone.id}",
            )
    diags.extend(validate_lemma2(model))
    return diags


def require_valid(model: NetworkModel, allow: Iterable[str] = ()) -> None:
    """Raise :class:`ModelError` listing every diagnostic not in ``allow``."""
    allow = set(allow)
    diags = [d for d in validate_model(model) if d.code not in allow]
    if diags:
        raise ModelError("; ".join(str(d) for d in diags), diags)
