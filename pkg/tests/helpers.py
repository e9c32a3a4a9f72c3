"""Random network generators shared by the test modules."""

import math

import numpy as np

from hybridgrid import parse_network
from hybridgrid.reflect import ALPHA_PER_MODULATION, stamp_shift_transformer


def cx(z):
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _ac_part(rng, n_ac, first_id=1):
    ids = list(range(first_id, first_id + n_ac))
    buses = [{"id": ids[0], "kind": "AcSlack", "voltage_setpoint": 1.0}]
    for b in ids[1:]:
        if rng.random() < 0.2:
            buses.append({"id": b, "kind": "AcPV", "voltage_setpoint": round(rng.uniform(0.98, 1.03), 4),
                          "p_injection": round(rng.uniform(0.0, 0.3), 4)})
        else:
            buses.append({"id": b, "kind": "AcPQ", "p_injection": round(-rng.uniform(0.0, 0.4), 4),
                          "q_injection": round(-rng.uniform(0.0, 0.15), 4)})
    branches = []
    edges = {(ids[int(rng.integers(0, k))], ids[k]) for k in range(1, n_ac)}
    for _ in range(n_ac // 3):
        i, j = sorted(rng.choice(ids, 2, replace=False).tolist())
        edges.add((i, j))
    for k, (i, j) in enumerate(sorted(edges)):
        z = complex(rng.uniform(0.005, 0.03), rng.uniform(0.03, 0.12))
        if rng.random() < 0.15:
            ratio = {"magnitude": 1.0, "angle_deg": round(rng.uniform(-3, 3), 3)}
            branches.append({"id": f"T{k}", "tag": "ShiftTransformer", "from": i, "to": j,
                             "y": cx(1 / z), "ratio": ratio})
        else:
            branches.append({"id": f"L{k}", "tag": "Line", "from": i, "to": j, "y": cx(1 / z)})
    return buses, branches


def random_ac_document(rng, n_ac):
    buses, branches = _ac_part(rng, n_ac)
    for b in rng.choice([x["id"] for x in buses], max(1, n_ac // 4), replace=False):
        branches.append({"id": f"G{b}", "tag": "Shunt", "from": int(b), "role": "source",
                         "y": cx(1 / complex(0.005, rng.uniform(0.02, 0.1)))})
    return {"schema_version": 1, "name": "random ac",
            "bases": {"power_va": 1e6, "voltage_ac_v": 400.0, "voltage_dc_v": 400.0},
            "buses": buses, "branches": branches, "converters": []}


def random_hybrid_document(rng, n_ac=None, n_zones=None, max_dc=5):
    """A meshed ac grid with one or two dc zones behind converters.

    Every zone has a dc source, constant-power loads and a reactive shunt.
    """
    n_ac = n_ac or int(rng.integers(3, 9))
    n_zones = n_zones or int(rng.integers(1, 3))
    buses, branches = _ac_part(rng, n_ac)
    free_ac = [b["id"] for b in buses if b["kind"] == "AcPQ"]
    if not free_ac:
        buses[-1] = {"id": buses[-1]["id"], "kind": "AcPQ", "p_injection": -0.1, "q_injection": 0.0}
        free_ac = [buses[-1]["id"]]
    rng.shuffle(free_ac)
    converters = []
    next_id = 100
    for z in range(n_zones):
        if not free_ac:
            break
        n_dc = int(rng.integers(2, max_dc + 1))
        ids = list(range(next_id, next_id + n_dc))
        next_id += 100
        ma = round(rng.uniform(0.8, 1.0), 3)
        alpha = ALPHA_PER_MODULATION * ma
        src = ids[0]
        buses.append({"id": src, "kind": "DcSource", "voltage_setpoint": round(rng.uniform(0.98, 1.02) / alpha, 4)})
        for b in ids[1:]:
            buses.append({"id": b, "kind": "DcLoad", "p_injection": round(-rng.uniform(0.0, 0.3), 4)})
        for k in range(1, n_dc):
            j = ids[int(rng.integers(0, k))]
            branches.append({"id": f"D{ids[k]}", "tag": "Line", "from": j, "to": ids[k],
                             "y": cx(rng.uniform(5.0, 30.0))})
        branches.append({"id": f"S{z}", "tag": "Shunt", "from": int(rng.choice(ids)), "y": cx(-1j)})
        n_conv = min(int(rng.integers(1, 3)), len(free_ac), n_dc - 1)
        for c in range(n_conv):
            ac = free_ac.pop()
            for b in buses:
                if b["id"] == ac:
                    b["kind"] = "CouplingAcSide"
            converters.append({"id": f"C{z}{c}", "ac_bus": ac, "reflected_bus": ids[c + 1],
                               "modulation": ma, "reactance": round(rng.uniform(0.1, 0.3), 4),
                               "delta_deg": round(rng.uniform(5.0, 20.0), 3)})
    return {"schema_version": 1, "name": "random hybrid",
            "bases": {"power_va": 1e6, "voltage_ac_v": 400.0, "voltage_dc_v": 400.0},
            "buses": buses, "branches": branches, "converters": converters}


def random_hybrid(rng, **kw):
    return parse_network(random_hybrid_document(rng, **kw))


def random_ac(rng, n_ac):
    return parse_network(random_ac_document(rng, n_ac))


def two_bus_document():
    """Slack feeding a 0.1 pu active load over a j0.1 pu line."""
    return {
        "schema_version": 1, "name": "two bus",
        "bases": {"power_va": 1e6, "voltage_ac_v": 400.0, "voltage_dc_v": 400.0},
        "buses": [{"id": 1, "kind": "AcSlack", "voltage_setpoint": 1.0},
                  {"id": 2, "kind": "AcPQ", "p_injection": -0.1, "q_injection": 0.0}],
        "branches": [{"id": "L", "tag": "Line", "from": 1, "to": 2, "y": cx(1 / 0.1j)}],
        "converters": [],
    }


def rad(deg):
    return math.radians(deg)


def random_dc_zone(rng, n):
    """Connected resistive zone with a few reactive shunts on the diagonal."""
    G = np.zeros((n, n))
    for k in range(1, n):
        j = int(rng.integers(0, k))
        g = rng.uniform(1, 30)
        G[[k, j], [k, j]] += g
        G[k, j] -= g
        G[j, k] -= g
    for _ in range(n // 2):
        i, j = rng.choice(n, 2, replace=False)
        g = rng.uniform(1, 30)
        G[[i, j], [i, j]] += g
        G[i, j] -= g
        G[j, i] -= g
    return G.astype(complex) + np.diag(1j * rng.uniform(-1, 1, n) * (rng.random(n) < 0.3))


def shift_power_defect(y, a, V):
    """Terminal power minus what the series admittance itself absorbs.

    The ideal phase shifter in the stamp neither produces nor absorbs complex
    power, so whatever enters at the terminals is taken up by ``y`` alone.
    """
    current = stamp_shift_transformer(y, a) @ V
    S = V * np.conj(current)
    series = V[0] - V[1] / a
    absorbed = series * np.conj(y * series)
    return S.sum() - absorbed, S


__all__ = ["cx", "random_hybrid", "random_hybrid_document", "random_ac", "random_ac_document",
           "two_bus_document", "rad", "random_dc_zone", "shift_power_defect", "np"]
