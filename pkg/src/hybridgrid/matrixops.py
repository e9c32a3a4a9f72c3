"""Unified admittance matrix assembly and factorization-backed Z_bus access."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .coupling import build_bb_block, stamp_bb
from .errors import FloatingBusError, ModelError, SingularMatrixError
from .netmodel import BranchTag, NetworkModel, ShuntRole
from .reflect import stamp_shift_transformer

DENSE_LIMIT = 64
PIVOT_TOL = 1e-12

STUDY_ROLES = {
    "powerflow": {ShuntRole.NETWORK, ShuntRole.COMPENSATION},
    "fault": {ShuntRole.NETWORK, ShuntRole.SOURCE},
    "fault-solved": {ShuntRole.NETWORK, ShuntRole.SOURCE, ShuntRole.COMPENSATION},
}


class Factorization:
    """LU factors of a square complex matrix, reusable across right-hand sides.

    Dense LAPACK factors for small orders, SuperLU above ``DENSE_LIMIT``.  A
    pivot smaller than ``PIVOT_TOL`` times the largest entry is treated as zero.
    """

    def __init__(self, A, labels=None):
        self.n = A.shape[0]
        self.labels = labels
        scale = abs(A).max() if self.n else 1.0
        scale = float(scale) if scale else 1.0
        if self.n <= DENSE_LIMIT:
            dense = A.toarray() if scipy.sparse.issparse(A) else np.asarray(A, dtype=complex)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)  # pivots checked below
                self._lu = scipy.linalg.lu_factor(dense, check_finite=False)
            pivots = np.abs(np.diag(self._lu[0]))
            columns = np.arange(self.n)
            self._sparse = None
        else:
            csc = scipy.sparse.csc_matrix(A, dtype=complex)
            try:
                self._sparse = scipy.sparse.linalg.splu(csc)
            except RuntimeError as exc:
                raise SingularMatrixError(f"matrix is singular: {exc}") from exc
            pivots = np.abs(self._sparse.U.diagonal())
            columns = self._sparse.perm_c
        bad = np.flatnonzero(pivots < PIVOT_TOL * scale)
        if bad.size:
            col = int(columns[bad[0]])
            name = labels[col] if labels is not None else col
            raise SingularMatrixError(f"matrix is singular (zero pivot at bus {name})", bus=name)

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=complex)
        if self._sparse is not None:
            return self._sparse.solve(rhs)
        return scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)


@dataclass(frozen=True)
class AdmittanceMatrix:
    bus_ids: tuple
    matrix: scipy.sparse.csr_matrix

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    @cached_property
    def index(self) -> dict:
        return {b: i for i, b in enumerate(self.bus_ids)}

    def position(self, bus) -> int:
        try:
            return self.index[bus]
        except KeyError:
            raise ModelError(f"unknown bus {bus}") from None

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def entries(self) -> list:
        """Non-zero entries as ``(row_bus, col_bus, value)`` in row-major order."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (self.bus_ids[coo.row[i]], self.bus_ids[coo.col[i]], complex(coo.data[i]))
            for i in order
            if coo.data[i] != 0
        ]

    @cached_property
    def factorization(self) -> Factorization:
        return Factorization(self.matrix, labels=self.bus_ids)

    def with_shunts(self, shunts: dict) -> "AdmittanceMatrix":
        diag = np.zeros(self.n, dtype=complex)
        for bus, y in shunts.items():
            diag[self.position(bus)] += y
        return AdmittanceMatrix(self.bus_ids, (self.matrix + scipy.sparse.diags(diag)).tocsr())


@dataclass(frozen=True)
class TheveninView:
    bus: int
    z_kk: complex
    column: np.ndarray


def branch_stamps(model: NetworkModel, study: str = "powerflow", coupling: str = "bb") -> list:
    """Per-branch ``(branch, [(row_bus, col_bus, value), ...])`` contributions.

    dc lines are reflected by ``1/alpha**2``.  A converter's BB block is
    stamped with the ac-side row as a current drawn from the ac bus and the
    reflected-side row as a current delivered into the dc bus, hence the sign
    flip on the second row.  ``coupling="reactance"`` replaces every BB block
    by the bare coupling reactance (used to estimate unknown coupling angles).
    """
    if study not in STUDY_ROLES:
        raise ValueError(f"unknown study {study!r}; expected one of {sorted(STUDY_ROLES)}")
    roles = STUDY_ROLES[study]
    alphas = model.bus_alphas() if model.is_hybrid else {}
    out = []
    for br in model.branches:
        if br.tag is BranchTag.SHUNT:
            if br.role in roles:
                out.append((br, [(br.from_bus, br.from_bus, complex(br.y))]))
            continue
        i, j = br.from_bus, br.to_bus
        if br.tag is BranchTag.LINE:
            y = complex(br.y)
            if i in alphas and j in alphas:
                y = y / alphas[i] ** 2
            out.append((br, [(i, i, y), (i, j, -y), (j, i, -y), (j, j, y)]))
        elif br.tag is BranchTag.SHIFT_TRANSFORMER:
            blk = stamp_shift_transformer(br.y, br.ratio)
            out.append((br, [(i, i, blk[0, 0]), (i, j, blk[0, 1]), (j, i, blk[1, 0]), (j, j, blk[1, 1])]))
        elif br.tag is BranchTag.BB_COUPLING:
            conv = model.converter(br.converter)
            k, r = conv.ac_bus, conv.reflected_bus
            if coupling == "reactance":
                y = 1.0 / complex(0.0, conv.reactance)
                out.append((br, [(k, k, y), (k, r, -y), (r, k, -y), (r, r, y)]))
                continue
            if conv.delta is None:
                raise ModelError(
                    f"converter {conv.id} has no coupling angle; resolve it with "
                    "analysis.resolve_coupling_angles first"
                )
            block = build_bb_block(conv.reactance, conv.delta)
            entries = []
            for row, col, val in stamp_bb(block, conv.ac_bus, conv.reflected_bus):
                entries.append((row, col, -val if row == conv.reflected_bus else val))
            out.append((br, entries))
    return out


def assemble_ybus(
    model: NetworkModel, study: str = "powerflow", coupling: str = "bb"
) -> AdmittanceMatrix:
    """Sum every branch stamp into one complex admittance matrix.

    ``study`` selects which shunts participate (see ``STUDY_ROLES``).

    Raises:
        FloatingBusError: a bus has no admittance entry at all.
    """
    ids = model.bus_ids
    pos = {b: k for k, b in enumerate(ids)}
    rows, cols, vals = [], [], []
    for _, entries in branch_stamps(model, study, coupling):
        for r, c, v in entries:
            rows.append(pos[r])
            cols.append(pos[c])
            vals.append(v)
    n = len(ids)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    vals = np.asarray(vals, dtype=complex)
    # canonical order so duplicate sums do not depend on branch order
    order = np.lexsort((vals.imag, vals.real, cols, rows))
    Y = scipy.sparse.coo_matrix((vals[order], (rows[order], cols[order])), shape=(n, n)).tocsr()
    Y.sum_duplicates()
    Y.sort_indices()
    row_norm = np.asarray(abs(Y).sum(axis=1)).ravel()
    empty = np.flatnonzero(row_norm == 0)
    if empty.size:
        bus = ids[empty[0]]
        raise FloatingBusError(f"bus {bus} has an all-zero admittance row (floating bus)", bus=bus)
    return AdmittanceMatrix(ids, Y)


def thevenin(Y: AdmittanceMatrix, bus) -> TheveninView:
    """Driving-point impedance and Z_bus column at ``bus`` from one solve."""
    k = Y.position(bus)
    e = np.zeros(Y.n, dtype=complex)
    e[k] = 1.0
    col = Y.factorization.solve(e)
    return TheveninView(bus=bus, z_kk=complex(col[k]), column=col)


def zbus(Y: AdmittanceMatrix) -> np.ndarray:
    return Y.factorization.solve(np.eye(Y.n, dtype=complex))


def solve_linear(Y, rhs) -> np.ndarray:
    """Solve ``Y x = rhs`` (``Y`` an AdmittanceMatrix, dense array or sparse matrix)."""
    rhs = np.asarray(rhs, dtype=complex)
    if isinstance(Y, AdmittanceMatrix):
        if rhs.shape[0] != Y.n:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, matrix order is {Y.n}")
        return Y.factorization.solve(rhs)
    if Y.shape[0] != Y.shape[1] or rhs.shape[0] != Y.shape[0]:
        raise ValueError("dimension mismatch")
    return Factorization(Y).solve(rhs)
