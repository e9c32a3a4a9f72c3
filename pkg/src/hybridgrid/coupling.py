"""Branch-building (BB) block coupling a converter's ac node to its reflected dc node.

At a converter node the ac voltage ``V1`` leads the reflected dc voltage ``V2``
by the fixed angle delta across the coupling reactance ``X``.  The current
through ``X`` splits into an active part ``I_dc`` (in phase with ``V2``) and a
reactive part ``I_c``.  Writing both terminal voltages in terms of
``[I1, I_dc]`` gives an impedance-like matrix ``B``; its inverse is the BB
block that is stamped into the admittance matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularAngleError

SIN_GUARD = 1e-9


def converter_node_current(V1: float, V2: float, X: float, delta: float) -> tuple:
    """Active and reactive components ``(I_dc, I_c)`` of the coupling current.

    ``I1 = (V1 e^{j delta} - V2) / (jX) = I_dc + j I_c`` with ``V2`` at angle zero.
    """
    if not X > 0:
        raise ValueError(f"coupling reactance must be > 0, got {X}")
    i_dc = V1 * math.sin(delta) / X
    i_c = -(V1 * math.cos(delta) - V2) / X
    return i_dc, i_c


def _check(X: float, delta: float) -> None:
    if not X > 0:
        raise ValueError(f"coupling reactance must be > 0, got {X}")
    if abs(math.sin(delta)) < SIN_GUARD:
        raise SingularAngleError(
            f"coupling angle {math.degrees(delta):.6g} deg gives sin(delta) ~ 0"
        )


def build_b_matrix(X: float, delta: float) -> np.ndarray:
    _check(X, delta)
    b = X * complex(math.cos(delta), math.sin(delta)) / math.sin(delta)
    c = X / 1j
    d = X / math.tan(delta) - X / 1j
    return np.array([[0.0, b], [c, d]], dtype=complex)


@dataclass(frozen=True)
class BbBlock:
    matrix: np.ndarray
    b_matrix: np.ndarray
    reactance: float
    delta: float


def build_bb_block(X: float, delta: float) -> BbBlock:
    B = build_b_matrix(X, delta)
    b, c, d = B[0, 1], B[1, 0], B[1, 1]
    # closed-form inverse of [[0, b], [c, d]]
    M = np.array([[-d / (b * c), 1.0 / c], [1.0 / b, 0.0]], dtype=complex)
    M.setflags(write=False)
    B.setflags(write=False)
    return BbBlock(matrix=M, b_matrix=B, reactance=X, delta=delta)


def stamp_bb(block: BbBlock, ac_bus, reflected_bus) -> list:
    """``(row, col, value)`` entries of ``block`` addressed to the two buses."""
    if ac_bus == reflected_bus:
        raise ValueError("distinct buses required for a BB stamp")
    M = block.matrix
    return [
        (ac_bus, ac_bus, M[0, 0]),
        (ac_bus, reflected_bus, M[0, 1]),
        (reflected_bus, ac_bus, M[1, 0]),
        (reflected_bus, reflected_bus, M[1, 1]),
    ]
