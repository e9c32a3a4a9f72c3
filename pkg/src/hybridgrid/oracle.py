"""Independent verification backends.

Nothing here touches the factorization code of ``matrixops``:

* ``dense_oracle_solve`` is textbook Gaussian elimination with partial pivoting;
* ``sequential_hybrid_powerflow`` is the conventional alternating method.  dc
  zones are kept in native dc quantities and only meet the ac network through
  alpha/beta scaling at the converter terminals.  Its Jacobian is built by
  finite differences and solved with ``dense_oracle_solve``;
* ``bench_compare`` times both power-flow methods on the same network.
"""

from __future__ import annotations

import enum
import math
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import HybridGridError, PowerFlowDivergence, SingularMatrixError
from .netmodel import BranchTag, BusKind, NetworkModel, ShuntRole, require_valid

PIVOT_TOL = 1e-13
REL_FLOOR = 1e-12
FD_STEP = 1e-6

_POWERFLOW_ROLES = (ShuntRole.NETWORK, ShuntRole.COMPENSATION)


def dense_oracle_solve(A, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` by Gaussian elimination with partial pivoting.

    ``rhs`` may be a vector or a matrix of right-hand sides.

    Raises:
        SingularMatrixError: no usable pivot in some column; ``.bus`` is that
            column's index.
    """
    A = np.asarray(A)
    b = np.asarray(rhs)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"rhs has {b.shape[0]} rows, matrix order is {A.shape[0]}")
    dtype = np.result_type(A.dtype, b.dtype, np.float64)
    U = A.astype(dtype, copy=True)
    x = b.astype(dtype, copy=True)
    vector = x.ndim == 1
    if vector:
        x = x[:, None]
    n = U.shape[0]
    scale = float(np.abs(U).max()) if n else 1.0
    scale = scale or 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(U[k:, k])))
        if abs(U[p, k]) <= PIVOT_TOL * scale:
            raise SingularMatrixError(f"matrix is singular (no pivot in column {k})", bus=k)
        if p != k:
            U[[k, p]] = U[[p, k]]
            x[[k, p]] = x[[p, k]]
        m = U[k + 1 :, k] / U[k, k]
        U[k + 1 :, k:] -= np.outer(m, U[k, k:])
        x[k + 1 :] -= np.outer(m, x[k])
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - U[k, k + 1 :] @ x[k + 1 :]) / U[k, k]
    return x[:, 0] if vector else x


@dataclass(frozen=True)
class ComparisonReport:
    quantity: str
    unified: float
    oracle: float
    abs_dev: float
    rel_dev: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def compare_values(quantity: str, unified, oracle, tolerance: float) -> ComparisonReport:
    """Absolute deviation gated by ``tolerance``; relative deviation reported."""
    u, o = float(unified), float(oracle)
    dev = abs(u - o)
    return ComparisonReport(
        quantity=quantity,
        unified=u,
        oracle=o,
        abs_dev=dev,
        rel_dev=dev / max(abs(o), REL_FLOOR),
        tolerance=tolerance,
        passed=bool(dev <= tolerance),
    )


def compare_complex(quantity: str, unified, oracle, tolerance: float) -> ComparisonReport:
    """Magnitudes are reported; the deviation is that of the complex difference."""
    u, o = complex(unified), complex(oracle)
    dev = abs(u - o)
    return ComparisonReport(
        quantity=quantity,
        unified=abs(u),
        oracle=abs(o),
        abs_dev=dev,
        rel_dev=dev / max(abs(o), REL_FLOOR),
        tolerance=tolerance,
        passed=bool(dev <= tolerance),
    )


def compare_coupling_voltages(model: NetworkModel, unified, sequential, tolerance: float = 1e-4) -> list:
    """One report per converter terminal (ac and reflected side): |V| agreement."""
    buses = []
    for c in model.converters:
        for b in (c.ac_bus, c.reflected_bus):
            if b not in buses:
                buses.append(b)
    return [
        compare_values(f"|V| bus {b}", abs(unified.voltage(b)), abs(sequential.voltage(b)), tolerance)
        for b in buses
    ]


class Method(str, enum.Enum):
    UNIFIED = "Unified"
    SEQUENTIAL = "Sequential"


@dataclass(frozen=True)
class BenchRecord:
    method: Method
    wall_time: float
    iterations: int
    factorizations: int
    rounds: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchRecord":
        return cls(
            method=Method(d["method"]),
            wall_time=float(d["wall_time"]),
            iterations=int(d["iterations"]),
            factorizations=int(d["factorizations"]),
            rounds=int(d.get("rounds", 0)),
        )


# ---------------------------------------------------------------------------
# sequential ac/dc power flow


@dataclass
class _Zone:
    alpha: float
    buses: list  # all bus ids, native ordering
    G: np.ndarray  # native conductance matrix
    load: np.ndarray  # native constant-power injection per bus
    sources: list  # positions with fixed voltage
    boundary: list  # converter terminals with free voltage
    interior: list  # remaining free positions
    v: np.ndarray  # native voltages
    Geq: np.ndarray | None = None
    heq: np.ndarray | None = None
    kron: np.ndarray | None = None  # interior voltages = -kron @ [v_B, v_S]


@dataclass
class _Converter:
    ac: int  # position among ac buses
    zone: int
    slot: int  # position within the zone
    X: float
    delta: float


class _SequentialCase:
    def __init__(self, model: NetworkModel):
        self.model = model
        self.theta = model.common_theta
        self.ac_ids = [b.id for b in model.buses if b.kind.is_ac]
        ac_pos = {b: k for k, b in enumerate(self.ac_ids)}
        n = len(self.ac_ids)

        Y = np.zeros((n, n), dtype=complex)
        for br in model.branches:
            if br.tag is BranchTag.SHUNT:
                if br.from_bus in ac_pos and br.role in _POWERFLOW_ROLES:
                    Y[ac_pos[br.from_bus], ac_pos[br.from_bus]] += br.y
            elif br.tag in (BranchTag.LINE, BranchTag.SHIFT_TRANSFORMER):
                if br.from_bus not in ac_pos:
                    continue
                i, j = ac_pos[br.from_bus], ac_pos[br.to_bus]
                a = br.ratio if br.tag is BranchTag.SHIFT_TRANSFORMER else 1.0
                y = complex(br.y)
                Y[i, i] += y
                Y[i, j] -= y / a
                Y[j, i] -= y / np.conj(a)
                Y[j, j] += y / abs(a) ** 2

        self.zones: list[_Zone] = []
        zone_of = {}
        for zone in model.dc_zones():
            ids = sorted(zone.buses)
            pos = {b: k for k, b in enumerate(ids)}
            alpha = model.zone_alpha(zone)
            G = np.zeros((len(ids), len(ids)))
            for br in model.branches:
                if br.from_bus not in pos:
                    continue
                if br.tag is BranchTag.LINE:
                    i, j, g = pos[br.from_bus], pos[br.to_bus], br.y.real
                    G[i, i] += g
                    G[j, j] += g
                    G[i, j] -= g
                    G[j, i] -= g
                elif br.tag is BranchTag.SHUNT and br.role in _POWERFLOW_ROLES:
                    # shunts at dc buses are declared in the reflected domain
                    G[pos[br.from_bus], pos[br.from_bus]] += alpha**2 * br.y.real
            terminals = {model.converter(c).reflected_bus for c in zone.converters}
            sources, boundary, interior = [], [], []
            v = np.empty(len(ids))
            levels = [model.bus(b).voltage_setpoint for b in ids if model.bus(b).kind is BusKind.DC_SOURCE]
            level = float(np.mean(levels)) if levels else 1.0
            for k, b in enumerate(ids):
                bus = model.bus(b)
                if bus.kind is BusKind.DC_SOURCE:
                    sources.append(k)
                    v[k] = bus.voltage_setpoint
                else:
                    (boundary if b in terminals else interior).append(k)
                    v[k] = level
            load = np.array([0.0 if model.bus(b).kind is BusKind.DC_SOURCE else model.bus(b).p_injection for b in ids])
            for b in ids:
                zone_of[b] = (len(self.zones), pos[b])
            self.zones.append(_Zone(alpha, ids, G, load, sources, boundary, interior, v))

        self.converters = []
        for c in model.converters:
            Y[ac_pos[c.ac_bus], ac_pos[c.ac_bus]] += 1.0 / complex(0.0, c.reactance)
            z, slot = zone_of[c.reflected_bus]
            self.converters.append(_Converter(ac_pos[c.ac_bus], z, slot, c.reactance, c.delta))
        self.Y = Y

        kinds = [model.bus(b).kind for b in self.ac_ids]
        self.pv = [k for k, t in enumerate(kinds) if t is BusKind.AC_PV]
        self.pq = [k for k, t in enumerate(kinds) if t in (BusKind.AC_PQ, BusKind.COUPLING_AC_SIDE)]
        self.S = np.array([complex(model.bus(b).p_injection, model.bus(b).q_injection) for b in self.ac_ids])
        self.V0 = np.array(
            [model.bus(b).voltage_setpoint if t in (BusKind.AC_SLACK, BusKind.AC_PV) else 1.0
             for b, t in zip(self.ac_ids, kinds)],
            dtype=complex,
        )
        # boundary unknowns, as (zone, slot) pairs
        self.free_boundary = [(z, k) for z, zone in enumerate(self.zones) for k in zone.boundary]
        self.factorizations = 0
        self.iterations = 0

    # dc side ---------------------------------------------------------------

    def dc_step(self) -> None:
        """Linearise loads at the present voltages, solve the interior, build the equivalent."""
        for zone in self.zones:
            free = zone.boundary + zone.interior
            Gt = zone.G.copy()
            gl = np.zeros(len(zone.buses))
            gl[free] = -zone.load[free] / zone.v[free] ** 2
            Gt[np.diag_indices_from(Gt)] += gl
            B, I, S = zone.boundary, zone.interior, zone.sources
            outer = B + S
            if I:
                rhs = Gt[np.ix_(I, outer)]
                try:
                    K = dense_oracle_solve(Gt[np.ix_(I, I)], rhs)
                except SingularMatrixError as exc:
                    bus = zone.buses[I[exc.bus]]
                    raise SingularMatrixError(f"dc interior singular at bus {bus}", bus=bus) from exc
                self.factorizations += 1
                zone.kron = K
                zone.v[I] = -K @ zone.v[outer]
                red = Gt[np.ix_(B, outer)] - Gt[np.ix_(B, I)] @ K
            else:
                zone.kron = np.zeros((0, len(outer)))
                red = Gt[np.ix_(B, outer)]
            nb = len(B)
            zone.Geq = red[:, :nb]
            zone.heq = red[:, nb:] @ zone.v[S]

    def refresh_interior(self) -> None:
        for zone in self.zones:
            if zone.interior:
                zone.v[zone.interior] = -zone.kron @ zone.v[zone.boundary + zone.sources]

    # ac side ---------------------------------------------------------------

    def _unpack(self, x):
        na, nm = len(self.pv) + len(self.pq), len(self.pq)
        ang = np.angle(self.V0)
        mag = np.abs(self.V0)
        ang[self.pv + self.pq] = x[:na]
        mag[self.pq] = x[na : na + nm]
        vb = x[na + nm :]
        return mag * np.exp(1j * ang), vb

    def _pack(self, V, vb):
        return np.r_[np.angle(V)[self.pv + self.pq], np.abs(V)[self.pq], vb]

    def residual(self, x):
        V, vb = self._unpack(x)
        vref = [zone.alpha * zone.v.copy() for zone in self.zones]
        for (z, k), val in zip(self.free_boundary, vb):
            vref[z][k] = val
        I = self.Y @ V
        inj = [np.zeros(len(zone.buses)) for zone in self.zones]
        rot = np.exp(1j * self.theta)
        for c in self.converters:
            I[c.ac] -= vref[c.zone][c.slot] * rot / complex(0.0, c.X)
            # active current delivered into the reflected node, in phase with it
            cur = math.sin(c.delta) / c.X * (V[c.ac] * np.exp(-1j * (c.delta + self.theta))).real
            inj[c.zone][c.slot] += cur
        mis = V * np.conj(I) - self.S
        out = [mis[self.pv + self.pq].real, mis[self.pq].imag]
        for z, zone in enumerate(self.zones):
            if not zone.boundary:
                continue
            a = zone.alpha
            v_native = vref[z][zone.boundary] / a
            i_native = zone.Geq @ v_native + zone.heq
            # reflected current balance: network draw minus converter delivery
            out.append(i_native / a - inj[z][zone.boundary])
        return np.concatenate(out)

    def ac_step(self, x, tol, max_iter):
        F = self.residual(x)
        norm = float(np.max(np.abs(F))) if F.size else 0.0
        trace = [norm]
        it = 0
        while norm >= tol and it < max_iter:
            it += 1
            J = np.empty((F.size, x.size))
            for k in range(x.size):
                e = np.zeros_like(x)
                e[k] = FD_STEP
                J[:, k] = (self.residual(x + e) - self.residual(x - e)) / (2 * FD_STEP)
            dx = dense_oracle_solve(J, -F)
            self.factorizations += 1
            x = x + dx
            F = self.residual(x)
            norm = float(np.max(np.abs(F))) if F.size else 0.0
            trace.append(norm)
        self.iterations += it
        return x, norm, trace

    def store_boundary(self, x):
        _, vb = self._unpack(x)
        for (z, k), val in zip(self.free_boundary, vb):
            self.zones[z].v[k] = val / self.zones[z].alpha

    def boundary_state(self, x) -> np.ndarray:
        """Boundary voltages and powers plus every dc voltage.

        The dc voltages take part because the load linearisation only settles
        once they stop moving, even when a fixed source holds the boundary.
        """
        V, _ = self._unpack(x)
        out = []
        for c in self.converters:
            zone = self.zones[c.zone]
            cur = math.sin(c.delta) / c.X * (V[c.ac] * np.exp(-1j * (c.delta + self.theta))).real
            out += [abs(V[c.ac]), zone.v[c.slot], zone.alpha * zone.v[c.slot] * cur]
        for zone in self.zones:
            out += list(zone.v)
        return np.array(out)

    def voltages(self, x) -> np.ndarray:
        V, _ = self._unpack(x)
        by_id = dict(zip(self.ac_ids, V))
        rot = np.exp(1j * self.theta)
        for zone in self.zones:
            for b, v in zip(zone.buses, zone.v):
                by_id[b] = zone.alpha * v * rot
        return np.array([by_id[b] for b in self.model.bus_ids], dtype=complex)


def sequential_hybrid_powerflow(
    model: NetworkModel, tol: float = 1e-8, max_iter: int = 50, max_rounds: int = 200
):
    """Alternating ac / dc power flow.

    Each round first solves every dc zone (constant-power loads linearised as
    conductances at the latest voltages) and reduces it to a Norton
    equivalent at its converter terminals, then runs an ac Newton-Raphson in
    which the converters exchange current with those equivalents.  Rounds
    stop once the boundary voltages and powers and the dc voltages move less
    than ``tol``; with a
    dc zone at least two rounds always run.

    Returns:
        ``(PowerFlowResult, BenchRecord)``.

    Raises:
        PowerFlowDivergence: an ac step fails to converge, the rounds run out,
            or the boundary exchange stops contracting (oscillation).
    """
    from .analysis import PowerFlowResult, resolve_coupling_angles

    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    require_valid(model, allow=("lemma2-missing-reactive-element",))
    model = resolve_coupling_angles(model, tol, max_iter)
    start = time.perf_counter()
    case = _SequentialCase(model)
    vb0 = np.array([case.zones[z].alpha * case.zones[z].v[k] for z, k in case.free_boundary])
    x = case._pack(case.V0, vb0)

    def fail(msg, norm, trace):
        res = PowerFlowResult(
            bus_ids=model.bus_ids, voltages=case.voltages(x), iterations=case.iterations,
            mismatch=norm, trace=trace, converged=False, factorizations=case.factorizations,
            method="sequential",
        )
        raise PowerFlowDivergence(msg, res)

    rounds = 0
    changes: list = []
    trace: list = []
    if not case.zones:
        x, norm, trace = case.ac_step(x, tol, max_iter)
        if norm >= tol:
            fail(f"ac Newton-Raphson did not converge in {max_iter} iterations", norm, trace)
    else:
        previous = None
        while True:
            rounds += 1
            case.dc_step()
            x, norm, trace = case.ac_step(x, tol, max_iter)
            if norm >= tol:
                fail(f"ac step of round {rounds} did not converge (mismatch {norm:.3e})", norm, trace)
            case.store_boundary(x)
            case.refresh_interior()
            state = case.boundary_state(x)
            change = math.inf if previous is None else float(np.max(np.abs(state - previous)))
            changes.append(change)
            previous = state
            if rounds >= 2 and change < tol:
                break
            if rounds >= max_rounds:
                fail(f"boundary exchange did not settle in {max_rounds} rounds", change, changes)
            if len(changes) > 8 and min(changes[-4:]) >= min(changes[:-4]):
                fail(f"boundary exchange oscillates (change {change:.3e} after {rounds} rounds)",
                     change, changes)

    elapsed = time.perf_counter() - start
    result = PowerFlowResult(
        bus_ids=model.bus_ids,
        voltages=case.voltages(x),
        iterations=case.iterations,
        mismatch=norm,
        trace=trace,
        converged=True,
        factorizations=case.factorizations,
        method="sequential",
        extra={"rounds": rounds, "boundary_changes": changes},
    )
    record = BenchRecord(Method.SEQUENTIAL, elapsed, case.iterations, case.factorizations, rounds)
    return result, record


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class BenchComparison:
    repetitions: int
    comparable: bool
    unified: BenchRecord | None = None
    sequential: BenchRecord | None = None
    voltage_reports: list = field(default_factory=list)
    reason: str = ""

    @property
    def unified_faster_by_count(self) -> bool:
        return bool(self.comparable and self.unified.factorizations < self.sequential.factorizations)

    def to_dict(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "comparable": self.comparable,
            "reason": self.reason,
            "unified": self.unified.to_dict() if self.unified else None,
            "sequential": self.sequential.to_dict() if self.sequential else None,
            "voltage_reports": [r.to_dict() for r in self.voltage_reports],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchComparison":
        return cls(
            repetitions=int(d["repetitions"]),
            comparable=bool(d["comparable"]),
            unified=BenchRecord.from_dict(d["unified"]) if d.get("unified") else None,
            sequential=BenchRecord.from_dict(d["sequential"]) if d.get("sequential") else None,
            voltage_reports=[ComparisonReport(**r) for r in d.get("voltage_reports", [])],
            reason=d.get("reason", ""),
        )


def bench_compare(
    model: NetworkModel, repetitions: int = 5, tol: float = 1e-8, max_iter: int = 50
) -> BenchComparison:
    """Run both power-flow methods ``repetitions`` times each, serially.

    Wall times are medians; iteration and factorization counts are per run
    (deterministic).  A failure of either solver marks the report incomparable.
    """
    from .analysis import newton_raphson_powerflow, resolve_coupling_angles

    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    try:
        model = resolve_coupling_angles(model, tol, max_iter)
        times_u, times_s = [], []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            uni = newton_raphson_powerflow(model, tol, max_iter)
            times_u.append(time.perf_counter() - t0)
            seq, rec = sequential_hybrid_powerflow(model, tol, max_iter)
            times_s.append(rec.wall_time)
    except HybridGridError as exc:
        return BenchComparison(repetitions, False, reason=f"{type(exc).__name__}: {exc}")
    return BenchComparison(
        repetitions=repetitions,
        comparable=True,
        unified=BenchRecord(Method.UNIFIED, statistics.median(times_u), uni.iterations, uni.factorizations, 1),
        sequential=BenchRecord(
            Method.SEQUENTIAL, statistics.median(times_s), rec.iterations, rec.factorizations, rec.rounds
        ),
        voltage_reports=compare_coupling_voltages(model, uni, seq),
    )
