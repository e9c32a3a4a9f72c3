import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridgrid.coupling import build_b_matrix, build_bb_block, converter_node_current, stamp_bb
from hybridgrid.errors import SingularAngleError

from helpers import rad

X_FIG = 0.1508

angles = st.floats(0.01, math.pi - 0.01) | st.floats(-math.pi + 0.01, -0.01)


def test_node_current_aligned_equal_voltages():
    assert converter_node_current(1.0, 1.0, 0.1, 0.0) == (0.0, 0.0)


def test_node_current_quadrature():
    i_dc, i_c = converter_node_current(1.0, 1.0, 1.0, rad(90))
    assert i_dc == pytest.approx(1.0, abs=1e-15)
    assert i_c == pytest.approx(1.0, abs=1e-15)


def test_node_current_29_degrees():
    i_dc, i_c = converter_node_current(1.0, 0.9, X_FIG, rad(29))
    assert i_dc == pytest.approx(3.215, abs=5e-4)
    assert i_c == pytest.approx(0.1684, abs=5e-4)
    assert i_dc == pytest.approx(math.sin(rad(29)) / X_FIG, rel=1e-15)


def test_node_current_rejects_nonpositive_reactance():
    with pytest.raises(ValueError):
        converter_node_current(1.0, 1.0, 0.0, 0.3)


@given(v1=st.floats(0.1, 2), v2=st.floats(0.1, 2), x=st.floats(0.01, 2), d=angles)
def test_current_split_recombines(v1, v2, x, d):
    i_dc, i_c = converter_node_current(v1, v2, x, d)
    assert isinstance(i_dc, float) and isinstance(i_c, float)
    i1 = (v1 * cmath.exp(1j * d) - v2) / (1j * x)
    assert abs(complex(i_dc, i_c) - i1) <= 1e-14 * max(1.0, abs(i1))


def test_b_matrix_unit_quadrature():
    B = build_b_matrix(1.0, rad(90))
    assert np.abs(B - np.array([[0, 1j], [-1j, 1j]])).max() < 1e-15


def test_b_matrix_29_degrees():
    B = build_b_matrix(X_FIG, rad(29))
    assert abs(B[0, 0]) == 0
    assert abs(B[0, 1]) == pytest.approx(X_FIG / math.sin(rad(29)), rel=1e-15)
    # 0.311050 quoted to four places as 0.3111: one unit in the last place
    assert abs(B[0, 1]) == pytest.approx(0.3111, abs=1e-4)
    assert math.degrees(cmath.phase(B[0, 1])) == pytest.approx(29.0, abs=1e-12)
    assert B[1, 0] == pytest.approx(-0.1508j, abs=1e-15)
    assert B[1, 1] == pytest.approx(0.2721 + 0.1508j, abs=5e-5)


@pytest.mark.parametrize("delta", [0.0, 1e-12, math.pi, -math.pi])
def test_b_matrix_singular_angle(delta):
    with pytest.raises(SingularAngleError):
        build_b_matrix(0.2, delta)
    with pytest.raises(SingularAngleError):
        build_bb_block(0.2, delta)


def test_bb_unit_quadrature():
    blk = build_bb_block(1.0, rad(90))
    assert np.abs(blk.matrix - np.array([[-1j, 1j], [-1j, 0]])).max() < 1e-15


def test_bb_magnitudes_29_degrees():
    M = build_bb_block(X_FIG, rad(29)).matrix
    assert abs(M[0, 1]) == pytest.approx(6.6313, rel=5e-3)
    assert abs(M[1, 0]) == pytest.approx(3.215, rel=5e-3)
    assert abs(M[0, 0]) == pytest.approx(6.63, rel=1e-2)
    assert M[1, 1] == 0


def test_bb_magnitudes_33_5_degrees():
    M = build_bb_block(X_FIG, rad(33.5)).matrix
    assert abs(M[1, 0]) == pytest.approx(3.66, rel=5e-3)
    assert abs(M[0, 1]) == pytest.approx(6.6313, rel=5e-3)


@given(x=st.floats(0.01, 10), d=angles)
def test_bb_inverts_b(x, d):
    blk = build_bb_block(x, d)
    assert np.abs(blk.matrix @ blk.b_matrix - np.eye(2)).max() < 1e-12
    assert abs(blk.matrix[0, 1]) == pytest.approx(1 / x, rel=1e-13)
    assert abs(blk.matrix[1, 0]) == pytest.approx(abs(math.sin(d)) / x, rel=1e-13)


@given(v1=st.floats(0.1, 2), v2=st.floats(0.1, 2), x=st.floats(0.01, 2), d=angles, t2=st.floats(-3, 3))
def test_bb_maps_terminal_voltages_to_currents(v1, v2, x, d, t2):
    """With theta1 = delta + theta2 the block sends [V1, V2] to [I1, I_dc]."""
    rot = cmath.exp(1j * t2)
    V1, V2 = v1 * cmath.exp(1j * d) * rot, v2 * rot
    i1 = (V1 - V2) / (1j * x)
    i_dc = v1 * math.sin(d) / x * rot
    blk = build_bb_block(x, d)
    out = blk.matrix @ np.array([V1, V2])
    scale = max(1.0, abs(i1), abs(i_dc))
    assert abs(out[0] - i1) < 1e-12 * scale
    assert abs(out[1] - i_dc) < 1e-12 * scale
    back = blk.b_matrix @ np.array([i1, i_dc])
    assert np.abs(back - [V1, V2]).max() < 1e-12 * max(1.0, v1, v2)


def test_block_is_read_only():
    blk = build_bb_block(X_FIG, rad(29))
    with pytest.raises(ValueError):
        blk.matrix[0, 0] = 0


def test_stamp_addresses_buses():
    blk = build_bb_block(1.0, rad(90))
    entries = {(r, c): v for r, c, v in stamp_bb(blk, 0, 1)}
    expected = {(0, 0): -1j, (0, 1): 1j, (1, 0): -1j, (1, 1): 0}
    assert entries.keys() == expected.keys()
    for k, v in expected.items():
        assert entries[k] == pytest.approx(v, abs=1e-15)


def test_stamp_same_bus_rejected():
    with pytest.raises(ValueError, match="distinct buses required"):
        stamp_bb(build_bb_block(1.0, 0.5), 3, 3)


def test_two_converters_disjoint_stamps():
    a = stamp_bb(build_bb_block(0.2, 0.4), 1, 11)
    b = stamp_bb(build_bb_block(0.3, 0.5), 2, 12)
    keys_a = {(r, c) for r, c, _ in a}
    keys_b = {(r, c) for r, c, _ in b}
    assert not keys_a & keys_b
    assert len(keys_a | keys_b) == 8
