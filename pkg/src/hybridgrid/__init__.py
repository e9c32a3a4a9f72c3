"""Unified steady-state analysis of interconnected hybrid ac-dc microgrids."""

from .analysis import (
    FaultResult,
    PowerFlowResult,
    fault_sweep,
    newton_raphson_powerflow,
    resolve_coupling_angles,
    symmetrical_fault,
)
from .coupling import BbBlock, build_b_matrix, build_bb_block, converter_node_current, stamp_bb
from .matrixops import AdmittanceMatrix, assemble_ybus, solve_linear, thevenin
from .netmodel import (
    Bases,
    Branch,
    BranchTag,
    Bus,
    BusKind,
    ConverterCoupling,
    NetworkModel,
    ShuntRole,
    load_network,
    parse_network,
    serialize_network,
    validate_model,
)

__version__ = "0.1.0"
