import numpy as np
import pytest
from hypothesis import given, strategies as st

from tristream.codec.motion import MotionField
from tristream.codec.sidecar import (
    HEADER, SidecarRecord, field_to_sidecar, parse_sidecar, serialize_sidecar, sidecar_to_field,
)
from tristream.errors import FormatError, InputError


def test_single_record():
    recs = parse_sidecar(HEADER + "\n2,-1,16,16,8,8,12,6,0,16,-8,4\n")
    assert recs == [SidecarRecord(2, -1, 16, 16, 8, 8, 12, 6, 0, 16, -8, 4)]
    assert (recs[0].motion_x / recs[0].motion_scale, recs[0].motion_y / recs[0].motion_scale) == (4.0, -2.0)


def test_empty_body():
    assert parse_sidecar(HEADER + "\n") == []


def test_wrong_field_count_names_line():
    with pytest.raises(FormatError) as err:
        parse_sidecar(HEADER + "\n2,-1,16,16,8,8,12,6,0,16,-8\n")
    assert err.value.line == 2 and "line 2" in str(err.value)


@pytest.mark.parametrize("line,col", [
    ("2,-1,16,16,8,8,12,6,0,x,-8,4", 10),
    ("2,0,16,16,8,8,12,6,0,1,1,4", 2),
    ("2,-1,12,16,8,8,12,6,0,1,1,4", 3),
    ("2,-1,16,16,8,8,12,6,0,1,1,3", 12),
])
def test_bad_values_name_column(line, col):
    with pytest.raises(FormatError) as err:
        parse_sidecar(f"{HEADER}\n1,-1,16,16,8,8,8,8,0,0,0,1\n{line}\n")
    assert (err.value.line, err.value.column) == (3, col)


def test_missing_header():
    with pytest.raises(FormatError) as err:
        parse_sidecar("2,-1,16,16,8,8,12,6,0,16,-8,4\n")
    assert err.value.line == 1


def test_single_record_rasterises_to_one_cell():
    recs = [SidecarRecord(2, -1, 16, 16, 0, 0, 8, 8, 0, 16, -8, 4)]
    f = sidecar_to_field(recs, 2, (32, 32), 16)
    assert tuple(f.mv[0, 0]) == (16, -8) and f.subpel_scale == 4
    assert not f.mv[0, 1].any() and not f.mv[1].any()


def test_four_small_blocks_tile_one_cell():
    # centre-coverage rule: the cell centre (8, 8) lies in the block centred at (12, 12)
    recs = [SidecarRecord(3, -1, 8, 8, 0, 0, x, y, 0, 5, 7, 2) for y in (4, 12) for x in (4, 12)]
    f = sidecar_to_field(recs, 3, (16, 16), 16)
    assert tuple(f.mv[0, 0]) == (5, 7)


def test_no_records_for_frame():
    recs = [SidecarRecord(3, -1, 16, 16, 0, 0, 8, 8, 0, 5, 7, 2)]
    assert not sidecar_to_field(recs, 4, (32, 32), 16).mv.any()


def test_rejects_future_reference_and_mixed_scale():
    with pytest.raises(InputError):
        sidecar_to_field([SidecarRecord(2, 1, 16, 16, 0, 0, 8, 8, 0, 1, 1, 1)], 2, (16, 16))
    mixed = [SidecarRecord(2, -1, 16, 16, 0, 0, 8, 8, 0, 1, 1, 1), SidecarRecord(2, -1, 16, 16, 0, 0, 24, 8, 0, 1, 1, 2)]
    with pytest.raises(InputError):
        sidecar_to_field(mixed, 2, (32, 16))


@given(st.integers(0, 10 ** 6), st.sampled_from([4, 8, 16]), st.sampled_from([1, 2, 4]))
def test_field_round_trip(seed, b, s):
    rng = np.random.default_rng(seed)
    gh, gw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    field = MotionField(rng.integers(-40, 41, (gh, gw, 2)), b, s)
    text = serialize_sidecar(field_to_sidecar(field, 7))
    back = sidecar_to_field(parse_sidecar(text), 7, (gw * b, gh * b), b)
    assert back == field
    assert serialize_sidecar(parse_sidecar(text)) == text


def test_src_position_rounds_half_up():
    rec = field_to_sidecar(MotionField(np.array([[[3, -3]]]), 16, 2), 2)[0]
    # dst (8, 8); motion (1.5, -1.5) px; src = dst - round_half_up(motion)
    assert (rec.srcx, rec.srcy) == (6, 9)
