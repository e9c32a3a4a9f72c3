"""Symmetrical fault analysis and the unified Newton-Raphson power flow.

Both analyses run on the single admittance matrix of the ac-equivalent
network; dc zones have already been reflected and BB-coupled by assembly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .errors import JacobianSingularError, ModelError, PowerFlowDivergence, SingularMatrixError
from .matrixops import AdmittanceMatrix, Factorization, assemble_ybus, branch_stamps, thevenin
from .netmodel import BusKind, NetworkModel, require_valid
from .reflect import solve_shift_angles

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50

_PQ_KINDS = (BusKind.AC_PQ, BusKind.COUPLING_AC_SIDE)
_DC_FREE_KINDS = (BusKind.DC_LOAD, BusKind.REFLECTED_DC)


@dataclass
class PowerFlowResult:
    bus_ids: tuple
    voltages: np.ndarray
    iterations: int
    mismatch: float
    trace: list
    converged: bool
    factorizations: int = 0
    method: str = "unified"
    injections: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def voltage(self, bus) -> complex:
        return complex(self.voltages[self.bus_ids.index(bus)])


@dataclass
class FaultResult:
    bus: int
    current: complex
    voltages: np.ndarray
    z_kk: complex
    bus_ids: tuple
    prefault: np.ndarray
    current_amperes: float | None = None


@dataclass(frozen=True)
class _BusSets:
    slack: np.ndarray
    pv: np.ndarray
    pq: np.ndarray
    dc_free: np.ndarray
    dc_fixed: np.ndarray


def _bus_sets(model: NetworkModel) -> _BusSets:
    def where(*kinds):
        return np.array([i for i, b in enumerate(model.buses) if b.kind in kinds], dtype=int)

    return _BusSets(
        slack=where(BusKind.AC_SLACK),
        pv=where(BusKind.AC_PV),
        pq=where(*_PQ_KINDS),
        dc_free=where(*_DC_FREE_KINDS),
        dc_fixed=where(BusKind.DC_SOURCE),
    )


def _initial_voltages(model: NetworkModel) -> np.ndarray:
    alphas = model.bus_alphas() if model.is_hybrid else {}
    zone_level = {}
    for zone in model.dc_zones():
        sets = [model.bus(b).voltage_setpoint for b in zone.buses if model.bus(b).kind is BusKind.DC_SOURCE]
        zone_level[zone.id] = float(np.mean(sets)) if sets else 1.0
    zone_by_bus = {b: z.id for z in model.dc_zones() for b in z.buses}
    V = np.ones(len(model.buses), dtype=complex)
    for i, bus in enumerate(model.buses):
        if bus.kind in (BusKind.AC_SLACK, BusKind.AC_PV):
            V[i] = bus.voltage_setpoint
        elif bus.kind is BusKind.DC_SOURCE:
            V[i] = alphas[bus.id] * bus.voltage_setpoint * np.exp(1j * model.common_theta)
        elif bus.kind.is_dc:
            V[i] = alphas[bus.id] * zone_level[zone_by_bus[bus.id]] * np.exp(1j * model.common_theta)
    return V


def _specified_power(model: NetworkModel) -> np.ndarray:
    return np.array([complex(b.p_injection, b.q_injection) for b in model.buses])


def _dS_dV(Y, V):
    Ibus = Y @ V
    diagV = scipy.sparse.diags(V)
    diagI = scipy.sparse.diags(Ibus)
    diagVnorm = scipy.sparse.diags(V / np.abs(V))
    dS_dVm = diagV @ (Y @ diagVnorm).conj() + diagI.conj() @ diagVnorm
    dS_dVa = 1j * diagV @ (diagI - Y @ diagV).conj()
    return dS_dVm.tocsr(), dS_dVa.tocsr()


def _newton(model: NetworkModel, Y: AdmittanceMatrix, tol: float, max_iter: int) -> PowerFlowResult:
    sets = _bus_sets(model)
    Ym = Y.matrix
    V = _initial_voltages(model)
    Va = np.angle(V)
    Vm = np.abs(V)
    Sspec = _specified_power(model)

    pvpq = np.r_[sets.pv, sets.pq].astype(int)
    rows_p = np.r_[pvpq, sets.dc_free].astype(int)
    rows_q = sets.pq
    cols_a = pvpq
    cols_m = np.r_[sets.pq, sets.dc_free].astype(int)
    labels = [model.buses[i].id for i in np.r_[cols_a, cols_m].astype(int)]
    na = len(cols_a)

    def mismatch(V):
        mis = V * np.conj(Ym @ V) - Sspec
        return np.r_[mis[rows_p].real, mis[rows_q].imag]

    F = mismatch(V)
    norm = float(np.max(np.abs(F))) if F.size else 0.0
    trace = [norm]
    it = 0
    nfact = 0
    while norm >= tol and it < max_iter:
        it += 1
        dS_dVm, dS_dVa = _dS_dV(Ym, V)
        J = scipy.sparse.bmat(
            [
                [dS_dVa[rows_p][:, cols_a].real, dS_dVm[rows_p][:, cols_m].real],
                [dS_dVa[rows_q][:, cols_a].imag, dS_dVm[rows_q][:, cols_m].imag],
            ],
            format="csc",
        )
        try:
            lu = Factorization(J, labels=labels)
        except SingularMatrixError as exc:
            raise JacobianSingularError(
                f"Jacobian singular at iteration {it} (bus {exc.bus})", bus=exc.bus, iteration=it
            ) from exc
        nfact += 1
        dx = -lu.solve(F).real
        Va[cols_a] += dx[:na]
        Vm[cols_m] += dx[na:]
        V = Vm * np.exp(1j * Va)
        F = mismatch(V)
        norm = float(np.max(np.abs(F))) if F.size else 0.0
        trace.append(norm)
        log.debug("NR iteration %d: max mismatch %.3e", it, norm)

    result = PowerFlowResult(
        bus_ids=model.bus_ids,
        voltages=V,
        iterations=it,
        mismatch=norm,
        trace=trace,
        converged=norm < tol,
        factorizations=nfact,
        injections=V * np.conj(Ym @ V),
    )
    return result


def resolve_coupling_angles(model: NetworkModel, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Fill in missing converter angles and transformer shifts.

    A converter without an explicit delta gets the ac-side angle found by a
    preliminary flat-start power flow in which each coupling is the bare
    reactance; the angle is then held fixed.
    """
    if all(c.delta is not None and c.shift_theta_a is not None for c in model.converters):
        return model
    deltas = {c.id: c.delta for c in model.converters}
    if any(d is None for d in deltas.values()):
        pre = _newton(model, assemble_ybus(model, "powerflow", coupling="reactance"), tol, max_iter)
        if not pre.converged:
            raise PowerFlowDivergence("preliminary power flow for coupling angles did not converge", pre)
        ang = np.angle(pre.voltages)
        for c in model.converters:
            if deltas[c.id] is None:
                deltas[c.id] = float(ang[model.index(c.ac_bus)] - model.common_theta)
    convs = []
    for c in model.converters:
        d = deltas[c.id]
        shift = c.shift_theta_a
        if shift is None:
            (shift,) = solve_shift_angles([model.common_theta + d], model.common_theta)
        convs.append(type(c)(c.id, c.ac_bus, c.reflected_bus, c.modulation, c.reactance, d, shift))
    return model.replace(converters=tuple(convs))


def _prepare(model: NetworkModel, allow=()) -> NetworkModel:
    require_valid(model, allow=allow)
    return resolve_coupling_angles(model)


def newton_raphson_powerflow(
    model: NetworkModel, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> PowerFlowResult:
    """Polar Newton-Raphson on the unified admittance matrix, flat start.

    Reflected dc buses sit at the common angle and contribute only an active
    power equation; the reactive current at the converter node is carried by
    the converter itself.  dc sources fix the reflected voltage magnitude.

    Raises:
        PowerFlowDivergence: no convergence within ``max_iter``; the exception's
            ``result`` holds the mismatch trace.
        JacobianSingularError: with the iteration and bus of the zero pivot.
    """
    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    model = _prepare(model, allow=("lemma2-missing-reactive-element",))
    result = _newton(model, assemble_ybus(model, "powerflow"), tol, max_iter)
    if not result.converged:
        raise PowerFlowDivergence(
            f"Newton-Raphson did not converge in {max_iter} iterations "
            f"(mismatch {result.mismatch:.3e})",
            result,
        )
    return result


@dataclass(frozen=True)
class BranchFlow:
    branch: str
    terminal_power: dict
    loss: complex


def branch_flows(model: NetworkModel, result: PowerFlowResult, study: str = "powerflow") -> list:
    """Complex power drawn by each element at each of its terminals."""
    model = resolve_coupling_angles(model)
    V = dict(zip(result.bus_ids, result.voltages))
    flows = []
    for br, entries in branch_stamps(model, study):
        current: dict = {}
        for r, c, val in entries:
            current[r] = current.get(r, 0j) + val * V[c]
        power = {bus: V[bus] * np.conj(i) for bus, i in current.items()}
        flows.append(BranchFlow(br.id, power, complex(sum(power.values()))))
    return flows


def _ampere_base(model: NetworkModel, bus) -> float:
    if model.bus(bus).kind.is_dc:
        alpha = model.bus_alphas()[bus]
        return alpha * model.bases.dc.current
    return model.bases.ac.current


def _fault_setup(model: NetworkModel, prefault: str, powerflow: PowerFlowResult | None):
    if prefault == "flat":
        Y = assemble_ybus(model, "fault")
        return Y, np.ones(Y.n, dtype=complex)
    if prefault == "solved":
        pf = powerflow or newton_raphson_powerflow(model)
        Y = assemble_ybus(model, "fault-solved")
        loads = {}
        for bus, v, s in zip(model.buses, pf.voltages, _specified_power(model)):
            if bus.kind in _PQ_KINDS + _DC_FREE_KINDS and s != 0:
                loads[bus.id] = np.conj(-s) / abs(v) ** 2
        return Y.with_shunts(loads), np.asarray(pf.voltages, dtype=complex)
    raise ValueError(f"prefault must be 'flat' or 'solved', got {prefault!r}")


def _fault_at(model, Y: AdmittanceMatrix, vpre: np.ndarray, bus) -> FaultResult:
    view = thevenin(Y, bus)
    k = Y.position(bus)
    i_f = vpre[k] / view.z_kk
    vf = vpre - view.column * i_f
    return FaultResult(
        bus=bus,
        current=complex(i_f),
        voltages=vf,
        z_kk=view.z_kk,
        bus_ids=Y.bus_ids,
        prefault=vpre,
        current_amperes=float(abs(i_f) * _ampere_base(model, bus)),
    )


def symmetrical_fault(
    model: NetworkModel, bus, prefault: str = "flat", powerflow: PowerFlowResult | None = None
) -> FaultResult:
    """Bolted three-phase fault at ``bus``.

    With ``prefault="flat"`` every bus starts at 1 pu, loads and compensation
    shunts are dropped and source impedances are added.  ``"solved"`` starts
    from the power-flow voltages and keeps loads as constant admittances.
    """
    model = _prepare(model)
    model.bus(bus)
    Y, vpre = _fault_setup(model, prefault, powerflow)
    return _fault_at(model, Y, vpre, bus)


def fault_sweep(
    model: NetworkModel,
    prefault: str = "flat",
    powerflow: PowerFlowResult | None = None,
    max_workers: int | None = None,
) -> list:
    """``symmetrical_fault`` at every bus, sharing one factorization."""
    if not model.buses:
        raise ModelError("empty network")
    model = _prepare(model)
    Y, vpre = _fault_setup(model, prefault, powerflow)
    Y.factorization  # factor once before fanning out
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(lambda b: _fault_at(model, Y, vpre, b), model.bus_ids))
    return [_fault_at(model, Y, vpre, b) for b in model.bus_ids]
