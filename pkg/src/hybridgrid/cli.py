"""Command-line front end: ``hybridgrid <command> [options]``.

Exit status is 0 on success, 1 when the input or the model is rejected
(diagnostics), 2 when a solver fails.  Errors are written to stderr as one
JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    fault_sweep,
    newton_raphson_powerflow,
    resolve_coupling_angles,
    symmetrical_fault,
)
from .errors import (
    FloatingBusError,
    HybridGridError,
    ModelError,
    NetworkFormatError,
    PowerFlowDivergence,
    SingularAngleError,
)
from .matrixops import assemble_ybus, zbus
from .netmodel import load_network, require_valid
from .oracle import (
    bench_compare,
    compare_complex,
    compare_coupling_voltages,
    dense_oracle_solve,
    sequential_hybrid_powerflow,
)

REPORT_SCHEMA = "hybridgrid-report"
REPORT_VERSION = 1
COMMANDS = ("powerflow", "fault", "fault-sweep", "export-ybus", "verify", "bench")
DENSE_TABLE_LIMIT = 20
BUNDLED_GRID = "reconstructed_grid.json"

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_SOLVER = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    input: Path | None
    command: str
    bus: int | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    format: str = "table"
    out: Path | None = None
    prefault: str = "flat"
    repetitions: int = 5

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if (self.command == "fault") != (self.bus is not None):
            raise ValueError("--bus is required for 'fault' and only accepted there")
        if not self.tol > 0:
            raise ValueError(f"--tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"--max-iter must be >= 1, got {self.max_iter}")


def _cx(z) -> dict:
    z = complex(z)
    return {"re": float(z.real), "im": float(z.imag)}


def _deg(z) -> float:
    return math.degrees(float(np.angle(z)))


def _load(config: RunConfig):
    if config.input is None:
        with resources.as_file(resources.files("hybridgrid") / "data" / BUNDLED_GRID) as path:
            return load_network(path)
    return load_network(config.input)


# command bodies return (payload, rows, header) where rows feed table/csv output


def _powerflow(model, config):
    pf = newton_raphson_powerflow(model, config.tol, config.max_iter)
    rows = [
        [b.id, b.kind.value, abs(v), _deg(v), s.real, s.imag]
        for b, v, s in zip(model.buses, pf.voltages, pf.injections)
    ]
    payload = {
        "converged": pf.converged,
        "iterations": pf.iterations,
        "mismatch": pf.mismatch,
        "mismatch_trace": pf.trace,
        "buses": [
            {"id": r[0], "kind": r[1], "vm": r[2], "va_deg": r[3], "v": _cx(v), "p": r[4], "q": r[5]}
            for r, v in zip(rows, pf.voltages)
        ],
    }
    return payload, rows, ["bus", "kind", "vm", "va_deg", "p", "q"]


def _fault(model, config):
    f = symmetrical_fault(model, config.bus, prefault=config.prefault)
    rows = [[b, abs(v), _deg(v)] for b, v in zip(f.bus_ids, f.voltages)]
    payload = {
        "bus": f.bus,
        "prefault": config.prefault,
        "z_kk": _cx(f.z_kk),
        "current": _cx(f.current),
        "current_pu": abs(f.current),
        "current_amperes": f.current_amperes,
        "voltages": [{"id": b, "vm": abs(v), "va_deg": _deg(v), "v": _cx(v)} for b, v in zip(f.bus_ids, f.voltages)],
    }
    header = ["bus", "vm", "va_deg"]
    return payload, rows, header


def _fault_sweep(model, config):
    results = fault_sweep(model, prefault=config.prefault)
    rows = [[f.bus, f.z_kk.real, f.z_kk.imag, abs(f.current), f.current_amperes] for f in results]
    payload = {
        "prefault": config.prefault,
        "faults": [
            {"bus": f.bus, "z_kk": _cx(f.z_kk), "current": _cx(f.current), "current_pu": abs(f.current),
             "current_amperes": f.current_amperes}
            for f in results
        ],
    }
    return payload, rows, ["bus", "z_kk_re", "z_kk_im", "current_pu", "current_a"]


def _export_ybus(model, config):
    require_valid(model)
    model = resolve_coupling_angles(model, config.tol, config.max_iter)
    Y = assemble_ybus(model, "powerflow")
    entries = Y.entries()
    rows = [[r, c, v.real, v.imag] for r, c, v in entries]
    payload = {
        "order": Y.n,
        "bus_ids": list(Y.bus_ids),
        "entries": [{"row": r, "col": c, "y": _cx(v)} for r, c, v in entries],
    }
    if config.format == "table" and Y.n <= DENSE_TABLE_LIMIT:
        dense = Y.toarray()
        rows = [[b] + [f"{z.real:+.4f}{z.imag:+.4f}j" for z in dense[i]] for i, b in enumerate(Y.bus_ids)]
        return payload, rows, ["bus"] + [str(b) for b in Y.bus_ids]
    return payload, rows, ["row", "col", "re", "im"]


def _verify(model, config):
    require_valid(model)
    model = resolve_coupling_angles(model, config.tol, config.max_iter)
    Y = assemble_ybus(model, "fault")
    Z_unified = zbus(Y)
    Z_oracle = dense_oracle_solve(Y.toarray(), np.eye(Y.n, dtype=complex))
    reports = [
        compare_complex(f"Z_kk bus {b}", Z_unified[k, k], Z_oracle[k, k], 1e-9)
        for k, b in enumerate(Y.bus_ids)
    ]
    if model.is_hybrid:
        uni = newton_raphson_powerflow(model, config.tol, config.max_iter)
        seq, _ = sequential_hybrid_powerflow(model, config.tol, config.max_iter)
        reports += compare_coupling_voltages(model, uni, seq, 1e-4)
    rows = [[r.quantity, r.unified, r.oracle, r.abs_dev, r.rel_dev, "pass" if r.passed else "FAIL"] for r in reports]
    payload = {"passed": all(r.passed for r in reports), "comparisons": [r.to_dict() for r in reports]}
    return payload, rows, ["quantity", "unified", "oracle", "abs_dev", "rel_dev", "status"]


def _bench(model, config):
    cmp = bench_compare(model, config.repetitions, config.tol, config.max_iter)
    rows = []
    for rec in (cmp.unified, cmp.sequential):
        if rec is not None:
            rows.append([rec.method.value, rec.wall_time, rec.iterations, rec.factorizations, rec.rounds])
    return cmp.to_dict(), rows, ["method", "median_wall_time_s", "nr_iterations", "factorizations", "rounds"]


_HANDLERS = {
    "powerflow": _powerflow,
    "fault": _fault,
    "fault-sweep": _fault_sweep,
    "export-ybus": _export_ybus,
    "verify": _verify,
    "bench": _bench,
}


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render(config: RunConfig, network: str, payload: dict, rows: list, header: list) -> str:
    if config.format == "json":
        doc = {
            "schema": REPORT_SCHEMA,
            "schema_version": REPORT_VERSION,
            "command": config.command,
            "network": network,
            "result": payload,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if config.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in r])
        return buf.getvalue()
    cells = [header] + [[_fmt(x) for x in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _error(kind: str, exc: Exception, **extra) -> dict:
    out = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    out.update({k: v for k, v in extra.items() if v is not None})
    return out


def run(config: RunConfig) -> tuple:
    """Execute ``config``; returns ``(exit_status, report_text, error_dict_or_None)``."""
    try:
        model = _load(config)
        payload, rows, header = _HANDLERS[config.command](model, config)
    except FloatingBusError as exc:
        return EXIT_DIAGNOSTIC, "", _error("diagnostic", exc, bus=exc.bus)
    except ModelError as exc:
        diags = [{"code": d.code, "element": d.element, "message": d.message} for d in exc.diagnostics]
        return EXIT_DIAGNOSTIC, "", _error("diagnostic", exc, diagnostics=diags or None)
    except (NetworkFormatError, SingularAngleError, OSError) as exc:
        return EXIT_DIAGNOSTIC, "", _error("diagnostic", exc)
    except PowerFlowDivergence as exc:
        res = exc.result
        trace = list(res.trace) if res is not None else None
        return EXIT_SOLVER, "", _error("solver", exc, mismatch_trace=trace)
    except HybridGridError as exc:
        return EXIT_SOLVER, "", _error("solver", exc, bus=getattr(exc, "bus", None))
    status = EXIT_OK
    if config.command == "verify" and not payload["passed"]:
        status = EXIT_DIAGNOSTIC
    if config.command == "bench" and not payload["comparable"]:
        status = EXIT_SOLVER
    return status, render(config, model.name, payload, rows, header), None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=Path, default=None,
                        help="network JSON file (default: the bundled reconstructed test grid)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="power-flow mismatch tolerance [pu]")
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="Newton-Raphson iteration limit")
    common.add_argument("--format", choices=("table", "json", "csv"), default="table")
    common.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(prog="hybridgrid", description="Unified analysis of hybrid ac-dc grids.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("powerflow", parents=[common], help="unified Newton-Raphson power flow")
    for name, helptext in (("fault", "bolted three-phase fault at one bus"),
                           ("fault-sweep", "bolted fault at every bus")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "fault":
            p.add_argument("--bus", type=int, required=True)
        p.add_argument("--prefault", choices=("flat", "solved"), default="flat")
    sub.add_parser("export-ybus", parents=[common], help="unified admittance matrix")
    sub.add_parser("verify", parents=[common], help="cross-check against the independent oracles")
    p = sub.add_parser("bench", parents=[common], help="unified vs sequential power-flow benchmark")
    p.add_argument("--repetitions", type=int, default=5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(
            input=args.input,
            command=args.command,
            bus=getattr(args, "bus", None),
            tol=args.tol,
            max_iter=args.max_iter,
            format=args.format,
            out=args.out,
            prefault=getattr(args, "prefault", "flat"),
            repetitions=getattr(args, "repetitions", 5),
        )
    except ValueError as exc:
        print(json.dumps(_error("usage", exc)), file=sys.stderr)
        return EXIT_DIAGNOSTIC
    status, text, err = run(config)
    if err is not None:
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return status
    if config.out is not None:
        config.out.write_text(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
