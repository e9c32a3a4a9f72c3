"""Reflection of dc quantities into the ac phasor domain.

A dc voltage ``v`` behind a converter with modulation factor ``Ma`` appears on
the ac side as the phasor ``alpha * v`` at the zone's common angle theta, with
``alpha = sqrt(3) / (2 sqrt(2)) * Ma``; a dc current ``i`` appears as
``beta * i`` at the common angle gamma with ``beta = 1 / alpha``, so that the
product (the dc power) is preserved.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularMatrixError

ALPHA_PER_MODULATION = math.sqrt(3.0) / (2.0 * math.sqrt(2.0))  # 0.6124
SINGULAR_PIVOT = 1e-12


def _check_modulation(Ma: float) -> None:
    if not 0.0 < Ma <= 1.0:
        raise ValueError(f"modulation factor must lie in (0, 1], got {Ma}")


def modulation_alpha(Ma: float) -> float:
    _check_modulation(Ma)
    return ALPHA_PER_MODULATION * Ma


@dataclass(frozen=True)
class ReflectedPhasor:
    magnitude: float
    angle: float

    @property
    def phasor(self) -> complex:
        return cmath.rect(self.magnitude, self.angle)


def reflect_dc_voltage(v_dc: float, Ma: float, theta: float = 0.0) -> ReflectedPhasor:
    if v_dc < 0:
        raise ValueError(f"dc voltage must be non-negative, got {v_dc}")
    return ReflectedPhasor(modulation_alpha(Ma) * v_dc, theta)


def reflect_dc_current(i_dc: float, Ma: float, gamma: float = 0.0) -> ReflectedPhasor:
    return ReflectedPhasor(i_dc / modulation_alpha(Ma), gamma)


def unreflect_voltage(p: ReflectedPhasor, Ma: float) -> float:
    return p.magnitude / modulation_alpha(Ma)


def unreflect_current(p: ReflectedPhasor, Ma: float) -> float:
    return p.magnitude * modulation_alpha(Ma)


def stamp_shift_transformer(y: complex, a: complex) -> np.ndarray:
    """2x2 admittance block of a phase-shift transformer with complex ratio ``a``.

    Maps terminal voltages ``[Vi, Vj]`` to injected currents ``[Ii, Ij]``.
    """
    if a == 0:
        raise ValueError("transformer ratio must be non-zero")
    if y == 0:
        raise ValueError("series admittance must be non-zero")
    return np.array(
        [[y, -y / a], [-y / np.conj(a), y / abs(a) ** 2]],
        dtype=complex,
    )


def solve_shift_angles(converter_ac_angles, common_theta: float = 0.0) -> list:
    """Transformer angles that bring every converter's reflected voltage to ``common_theta``."""
    return [theta_k - common_theta for theta_k in converter_ac_angles]


@dataclass(frozen=True)
class DcPartition:
    """Boundary/interior split of one dc zone's admittance matrix.

    Boundary buses (``V1``) carry converter currents ``I1``; interior buses
    carry none, so ``I2`` is identically zero.
    """

    Y1: np.ndarray
    Y2: np.ndarray
    Y3: np.ndarray
    Y4: np.ndarray
    V1: np.ndarray
    interior_labels: tuple = ()

    @property
    def I2(self) -> np.ndarray:
        return np.zeros(self.Y4.shape[0], dtype=complex)

    @classmethod
    def from_matrix(cls, Y, boundary, interior, V1, labels=None) -> "DcPartition":
        Y = np.asarray(Y)
        boundary = list(boundary)
        interior = list(interior)
        names = tuple(labels[i] for i in interior) if labels is not None else tuple(interior)
        return cls(
            Y1=Y[np.ix_(boundary, boundary)],
            Y2=Y[np.ix_(boundary, interior)],
            Y3=Y[np.ix_(interior, boundary)],
            Y4=Y[np.ix_(interior, interior)],
            V1=np.asarray(V1),
            interior_labels=names,
        )


def eliminate_dc_interior(p: DcPartition) -> np.ndarray:
    """Interior voltages ``V2 = -Y4^-1 Y3 V1``.

    Raises:
        SingularMatrixError: ``Y4`` has a zero pivot; ``.bus`` names the
            interior bus left floating.
    """
    n = p.Y4.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)  # pivots are checked below
        lu, piv = scipy.linalg.lu_factor(p.Y4, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = max(np.abs(p.Y4).max(), 1.0)
    bad = np.flatnonzero(diag < SINGULAR_PIVOT * scale)
    if bad.size:
        label = p.interior_labels[bad[0]] if p.interior_labels else int(bad[0])
        raise SingularMatrixError(f"interior dc block is singular; bus {label} is floating", bus=label)
    return -scipy.linalg.lu_solve((lu, piv), p.Y3 @ p.V1, check_finite=False)


def boundary_currents(p: DcPartition, V2: np.ndarray) -> np.ndarray:
    return p.Y1 @ p.V1 + p.Y2 @ V2


def validate_lemma2(model) -> list:
    """One diagnostic per dc zone lacking a reactive shunt element at any of its buses."""
    from .netmodel import BranchTag, Diagnostic

    out = []
    for zone in model.dc_zones():
        has_shunt = any(
            br.tag is BranchTag.SHUNT and br.from_bus in zone.buses and br.y.imag != 0
            for br in model.branches
        )
        if not has_shunt:
            out.append(
                Diagnostic(
                    "lemma2-missing-reactive-element",
                    "Lemma II: no reactive (capacitive or inductive) shunt at any bus of "
                    "this dc zone; the reflected zone cannot carry the converter's "
                    "reactive current",
                    f"zone {zone.id}",
                )
            )
    return out


def auto_fix_lemma2(model, reactance: float = 1.0):
    """Add a ``j*reactance`` shunt at the first converter terminal of each failing zone."""
    from .netmodel import Branch, BranchTag, ShuntRole

    failing = {d.element.split(" ", 1)[1] for d in validate_lemma2(model)}
    extra = []
    for zone in model.dc_zones():
        if zone.id not in failing:
            continue
        if zone.converters:
            bus = model.converter(zone.converters[0]).reflected_bus
        else:
            bus = min(zone.buses)
        extra.append(
            Branch(
                id=f"lemma2:{zone.id}",
                tag=BranchTag.SHUNT,
                from_bus=bus,
                y=1.0 / complex(0.0, reactance),
                role=ShuntRole.NETWORK,
            )
        )
    if not extra:
        return model
    return model.replace(branches=model.branches + tuple(extra))
