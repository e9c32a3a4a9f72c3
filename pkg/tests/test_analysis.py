import cmath
import math

import numpy as np
import pytest

from hybridgrid import (
    BusKind,
    fault_sweep,
    newton_raphson_powerflow,
    parse_network,
    resolve_coupling_angles,
    symmetrical_fault,
)
from hybridgrid.analysis import branch_flows
from hybridgrid.errors import JacobianSingularError, ModelError, PowerFlowDivergence
from hybridgrid.matrixops import assemble_ybus, zbus

from helpers import cx, random_ac, random_hybrid, two_bus_document


def _source_bus(z_source):
    return parse_network({
        "schema_version": 1,
        "bases": {"power_va": 1e6, "voltage_ac_v": 400.0, "voltage_dc_v": 400.0},
        "buses": [{"id": 1, "kind": "AcSlack", "voltage_setpoint": 1.0}],
        "branches": [{"tag": "Shunt", "from": 1, "y": cx(1 / z_source), "role": "source"}],
        "converters": [],
    })


def test_fault_behind_source_impedance():
    f = symmetrical_fault(_source_bus(0.1j), 1)
    assert f.current == pytest.approx(cmath.rect(10, -math.pi / 2), abs=1e-12)
    assert abs(f.voltages[0]) < 1e-12


def test_fault_unit_impedance():
    f = symmetrical_fault(_source_bus(1j), 1)
    assert abs(f.current) == pytest.approx(1.0, abs=1e-14)
    assert math.degrees(cmath.phase(f.current)) == pytest.approx(-90.0, abs=1e-12)


def test_reconstructed_fault(reconstructed):
    f = symmetrical_fault(reconstructed, 4)
    assert f.z_kk == pytest.approx(0.0075 - 0.0774j, abs=5e-7)
    assert abs(f.current) == pytest.approx(1 / abs(0.0075 - 0.0774j), rel=1e-5)
    assert abs(f.current) == pytest.approx(12.86, rel=1e-3)
    assert f.current_amperes == pytest.approx(718.6104, rel=1e-4)
    assert abs(f.voltages[f.bus_ids.index(4)]) < 1e-10


def test_solved_prefault_mode(reconstructed):
    pf = newton_raphson_powerflow(reconstructed)
    f = symmetrical_fault(reconstructed, 4, prefault="solved", powerflow=pf)
    k = f.bus_ids.index(4)
    assert f.prefault[k] == pf.voltages[k]
    assert abs(f.voltages[k]) < 1e-10
    assert f.current == pytest.approx(pf.voltages[k] / f.z_kk, rel=1e-14)
    with pytest.raises(ValueError):
        symmetrical_fault(reconstructed, 4, prefault="warm")


def test_fault_unknown_bus(reconstructed):
    with pytest.raises(ModelError, match="99"):
        symmetrical_fault(reconstructed, 99)


def test_fault_consistency_through_zbus(reconstructed):
    model = resolve_coupling_angles(reconstructed)
    Z = zbus(assemble_ybus(model, "fault"))
    for f in fault_sweep(model):
        k = f.bus_ids.index(f.bus)
        assert np.abs(Z[:, k] * f.current - (f.prefault - f.voltages)).max() < 1e-10


def test_sweep_two_bus():
    doc = two_bus_document()
    doc["branches"].append({"tag": "Shunt", "from": 1, "y": cx(1 / 0.05j), "role": "source"})
    model = parse_network(doc)
    sweep = fault_sweep(model)
    assert [f.bus for f in sweep] == [1, 2]
    for f in sweep:
        single = symmetrical_fault(model, f.bus)
        assert f.current == single.current
        assert np.array_equal(f.voltages, single.voltages)


def test_sweep_bitwise_equals_single_calls(rng):
    for _ in range(5):
        model = random_ac(rng, int(rng.integers(2, 51)))
        sweep = fault_sweep(model)
        threaded = fault_sweep(model, max_workers=4)
        for f, g in zip(sweep, threaded):
            single = symmetrical_fault(model, f.bus)
            assert f.current == single.current == g.current
            assert np.array_equal(f.voltages, single.voltages)
            assert np.array_equal(f.voltages, g.voltages)
            assert abs(f.voltages[f.bus_ids.index(f.bus)]) < 1e-10


def test_sweep_empty_network():
    empty = parse_network({"bases": {"power_va": 1.0, "voltage_ac_v": 1.0, "voltage_dc_v": 1.0},
                           "buses": [], "branches": [], "converters": []})
    with pytest.raises(ModelError):
        fault_sweep(empty)


def test_zero_injection_flat_solution():
    doc = two_bus_document()
    doc["buses"][1]["p_injection"] = 0.0
    pf = newton_raphson_powerflow(parse_network(doc))
    assert pf.iterations == 0
    assert np.array_equal(pf.voltages, np.ones(2, dtype=complex))


def test_two_bus_closed_form():
    pf = newton_raphson_powerflow(parse_network(two_bus_document()))
    v2 = pf.voltage(2)
    # sin(2 d) = -0.02 and |V2| = cos(d)
    d = 0.5 * math.asin(-0.02)
    assert abs(v2) == pytest.approx(math.cos(d), abs=1e-12)
    assert cmath.phase(v2) == pytest.approx(d, abs=1e-12)
    assert abs(v2) == pytest.approx(0.99995, abs=1e-6)
    assert math.degrees(cmath.phase(v2)) == pytest.approx(-0.573, abs=1e-3)
    assert pf.converged and pf.iterations <= 6


def _quadratic_tail(trace):
    # steps landing below 1e-12 are dominated by rounding in the mismatch itself
    tail = [(a, b) for a, b in zip(trace, trace[1:]) if a < 1e-3 and b > 1e-12]
    return all(b <= 10 * a * a for a, b in tail)


def test_quadratic_convergence(reconstructed, rng):
    assert _quadratic_tail(newton_raphson_powerflow(parse_network(two_bus_document())).trace)
    assert _quadratic_tail(newton_raphson_powerflow(reconstructed).trace)
    for _ in range(5):
        assert _quadratic_tail(newton_raphson_powerflow(random_ac(rng, 12)).trace)


def test_mismatch_within_tolerance(reconstructed):
    pf = newton_raphson_powerflow(reconstructed, tol=1e-10)
    for bus, s in zip(reconstructed.buses, pf.injections):
        if bus.kind in (BusKind.AC_PQ, BusKind.COUPLING_AC_SIDE):
            assert abs(s - complex(bus.p_injection, bus.q_injection)) < 1e-10
        elif bus.kind in (BusKind.AC_PV, BusKind.DC_LOAD, BusKind.REFLECTED_DC):
            assert abs(s.real - bus.p_injection) < 1e-10


def test_dc_source_fixes_reflected_magnitude(reconstructed):
    pf = newton_raphson_powerflow(reconstructed)
    alphas = reconstructed.bus_alphas()
    for bus in reconstructed.buses:
        if bus.kind is BusKind.DC_SOURCE:
            assert abs(pf.voltage(bus.id)) == pytest.approx(alphas[bus.id] * bus.voltage_setpoint, rel=1e-15)
        if bus.kind.is_dc:
            assert cmath.phase(pf.voltage(bus.id)) == pytest.approx(reconstructed.common_theta, abs=1e-15)


def test_slack_balance(reconstructed, rng):
    for model in [reconstructed] + [random_hybrid(rng) for _ in range(5)]:
        model = resolve_coupling_angles(model)
        pf = newton_raphson_powerflow(model)
        losses = sum(f.loss for f in branch_flows(model, pf))
        assert abs(pf.injections.sum() - losses) < 1e-8


def test_no_reactive_flow_on_dc_lines(reconstructed, rng):
    for model in [reconstructed] + [random_hybrid(rng) for _ in range(5)]:
        pf = newton_raphson_powerflow(model)
        dc = {b.id for b in model.buses if b.kind.is_dc}
        for flow in branch_flows(model, pf):
            br = next(b for b in model.branches if b.id == flow.branch)
            if br.tag.value == "Line" and br.from_bus in dc:
                assert all(abs(s.imag) < 1e-8 for s in flow.terminal_power.values())


def test_calibrated_converters_conserve_power(reconstructed):
    pf = newton_raphson_powerflow(reconstructed)
    flows = {f.branch: f for f in branch_flows(reconstructed, pf)}
    for conv in reconstructed.converters:
        f = flows[f"BB:{conv.id}"]
        assert abs(f.loss.real) < 1e-8
        # the converter is the only element at its reflected terminal carrying reactive current
        assert abs(pf.injections[pf.bus_ids.index(conv.reflected_bus)].imag) < 1e-8 or conv.reflected_bus == 12
        assert cmath.phase(pf.voltage(conv.ac_bus)) - cmath.phase(pf.voltage(conv.reflected_bus)) == \
            pytest.approx(conv.delta, abs=1e-8)


def test_divergence_carries_trace(reconstructed):
    with pytest.raises(PowerFlowDivergence) as info:
        newton_raphson_powerflow(reconstructed, max_iter=1)
    assert len(info.value.result.trace) == 2
    assert not info.value.result.converged
    with pytest.raises(ValueError):
        newton_raphson_powerflow(reconstructed, tol=0)


def test_singular_jacobian_reports_bus():
    doc = two_bus_document()
    doc["buses"].append({"id": 3, "kind": "AcPQ", "p_injection": -0.1})
    doc["branches"].append({"tag": "Shunt", "from": 3, "y": cx(-1j)})
    with pytest.raises(JacobianSingularError) as info:
        newton_raphson_powerflow(parse_network(doc))
    assert info.value.iteration == 1
    assert info.value.bus == 3


def test_missing_delta_is_estimated(reconstructed):
    stripped = reconstructed.replace(converters=tuple(
        type(c)(c.id, c.ac_bus, c.reflected_bus, c.modulation, c.reactance, None) for c in reconstructed.converters))
    resolved = resolve_coupling_angles(stripped)
    for c in resolved.converters:
        assert c.delta is not None and math.sin(c.delta) != 0
        assert c.shift_theta_a == pytest.approx(c.delta, abs=1e-15)
    assert newton_raphson_powerflow(stripped).converged
