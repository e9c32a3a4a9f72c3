"""Build the reconstructed ac-dc-ac test grid shipped as hybridgrid/data/reconstructed_grid.json.

Only a handful of quantities of the original test system are known: three
converters with coupling reactance X = 1/6.6313 pu and coupling angles of 29,
33.5 and 29 degrees, a driving-point impedance of 0.0075 - j0.0774 pu at the
faulted bus, and a fault current of about 718.6 A.  Everything else is chosen
here and then two groups of free parameters are calibrated:

* the dc feeder conductance and dc-link shunt at converter 2's dc terminal,
  so that Z_kk at ac bus 4 matches the driving-point impedance;
* the local generation at the three converter ac buses, so that each solved
  ac-side angle exceeds the common reflected angle by exactly the converter's
  coupling angle (the converters then transfer exactly the power the coupling
  model assumes).

Converter 2's dc terminal is grid forming (a dc source): the calibrated dc
feeder behind it is weak, and a power-only terminal there settles on a
low-voltage solution.

Run:  python scripts/reconstruct_grid.py [--out PATH]
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np
from scipy.optimize import fsolve

from hybridgrid import parse_network, newton_raphson_powerflow, symmetrical_fault

Z_TARGET = complex(0.0075, -0.0774)
FAULT_AMPS = 718.6104
X_COUPLING = 0.1508
DELTAS = {"C1": 29.0, "C2": 33.5, "C3": 29.0}
V_BASE = 400.0
# common reflected angle; keeps the converter ac-side targets (delta + theta) near zero
COMMON_THETA = -30.0


def cx(z):
    return {"re": z.real, "im": z.imag}


def document(g_feeder, b_link, p_gen):
    i_base = FAULT_AMPS / abs(1 / Z_TARGET)
    s_base = math.sqrt(3) * V_BASE * i_base
    v_dc = 1.0 / (math.sqrt(3) / (2 * math.sqrt(2)))  # reflected magnitude 1 pu at Ma = 1
    return {
        "schema_version": 1,
        "name": "reconstructed ac-dc-ac test grid (three converters)",
        "bases": {"power_va": round(s_base, 3), "voltage_ac_v": V_BASE, "voltage_dc_v": V_BASE},
        "options": {"common_theta_deg": COMMON_THETA, "common_gamma_deg": 0.0},
        "buses": [
            {"id": 1, "kind": "AcSlack", "name": "ac source 1", "voltage_setpoint": 1.0},
            {"id": 2, "kind": "AcPQ", "name": "ac load", "p_injection": -0.6, "q_injection": -0.2},
            {"id": 3, "kind": "CouplingAcSide", "name": "converter 1 ac", "p_injection": p_gen[0]},
            {"id": 4, "kind": "CouplingAcSide", "name": "converter 2 ac", "p_injection": p_gen[1]},
            {"id": 5, "kind": "CouplingAcSide", "name": "converter 3 ac", "p_injection": p_gen[2]},
            {"id": 6, "kind": "AcPV", "name": "ac source 2", "voltage_setpoint": 1.0, "p_injection": 0.2},
            {"id": 11, "kind": "ReflectedDc", "name": "converter 1 dc"},
            {"id": 12, "kind": "DcSource", "name": "converter 2 dc (grid forming)",
             "voltage_setpoint": round(v_dc, 6)},
            {"id": 13, "kind": "ReflectedDc", "name": "converter 3 dc"},
            {"id": 14, "kind": "DcSource", "name": "dc source", "voltage_setpoint": round(v_dc, 6)},
            {"id": 15, "kind": "DcLoad", "name": "dc load", "p_injection": -0.5},
        ],
        "branches": [
            {"id": "L1-2", "tag": "Line", "from": 1, "to": 2, "y": cx(1 / complex(0.02, 0.08))},
            {"id": "L2-3", "tag": "Line", "from": 2, "to": 3, "y": cx(1 / complex(0.01, 0.05))},
            {"id": "L2-4", "tag": "Line", "from": 2, "to": 4, "y": cx(1 / complex(0.01, 0.05))},
            {"id": "L3-4", "tag": "Line", "from": 3, "to": 4, "y": cx(1 / complex(0.02, 0.06))},
            {"id": "L5-6", "tag": "Line", "from": 5, "to": 6, "y": cx(1 / complex(0.01, 0.05))},
            {"id": "D11-14", "tag": "Line", "from": 11, "to": 14, "y": cx(complex(20.0, 0))},
            {"id": "D12-14", "tag": "Line", "from": 12, "to": 14, "y": cx(complex(g_feeder, 0))},
            {"id": "D13-15", "tag": "Line", "from": 13, "to": 15, "y": cx(complex(20.0, 0))},
            {"id": "D14-15", "tag": "Line", "from": 14, "to": 15, "y": cx(complex(10.0, 0))},
            {"id": "S12-link", "tag": "Shunt", "from": 12, "y": cx(complex(0, b_link)), "role": "network"},
            {"id": "S15-lemma2", "tag": "Shunt", "from": 15, "y": cx(complex(0, -1.0)), "role": "network"},
            {"id": "G1", "tag": "Shunt", "from": 1, "y": cx(1 / complex(0.005, 0.05)), "role": "source"},
            {"id": "G6", "tag": "Shunt", "from": 6, "y": cx(1 / complex(0.01, 0.1)), "role": "source"},
        ],
        "converters": [
            {"id": cid, "ac_bus": ac, "reflected_bus": dc, "modulation": 1.0,
             "reactance": X_COUPLING, "delta_deg": DELTAS[cid]}
            for cid, ac, dc in (("C1", 3, 11), ("C2", 4, 12), ("C3", 5, 13))
        ],
    }


def calibrate():
    def z_residual(p):
        g, b = p
        z = symmetrical_fault(parse_network(document(g, b, (0, 0, 0))), 4).z_kk
        return [z.real - Z_TARGET.real, z.imag - Z_TARGET.imag]

    g, b = fsolve(z_residual, [0.1, 0.1], xtol=1e-13)
    g, b = round(g, 6), round(b, 6)

    targets = np.radians([DELTAS[c] + COMMON_THETA for c in ("C1", "C2", "C3")])

    def angle_residual(p_gen):
        pf = newton_raphson_powerflow(parse_network(document(g, b, tuple(p_gen))))
        return [np.angle(pf.voltage(k)) - t for k, t in zip((3, 4, 5), targets)]

    p_gen = fsolve(angle_residual, [3.0, 3.0, 3.0], xtol=1e-12)
    return document(g, b, tuple(float(p) for p in p_gen))


def main():
    default = Path(__file__).resolve().parents[1] / "src/hybridgrid/data/reconstructed_grid.json"
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=default)
    args = ap.parse_args()
    doc = calibrate()
    args.out.write_text(json.dumps(doc, indent=2) + "\n")
    model = parse_network(doc)
    fault = symmetrical_fault(model, 4)
    pf = newton_raphson_powerflow(model)
    print(f"Z_kk(4) = {fault.z_kk:.6f}  |I| = {abs(fault.current):.4f} pu = {fault.current_amperes:.2f} A")
    for k in (3, 4, 5):
        print(f"bus {k}: {abs(pf.voltage(k)):.4f} pu at {math.degrees(np.angle(pf.voltage(k))):.4f} deg")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
