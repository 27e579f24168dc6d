import io
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from qtopt.errors import InvalidInputError, InvalidTableError
from qtopt.jpeg import ANNEX_K_CHROMA, ANNEX_K_LUMA, QuantTableSet, quality_scaled, round_half_away
from qtopt.jpeg.tables import (STD_AC_CHROMA, STD_AC_LUMA, STD_DC_CHROMA, STD_DC_LUMA,
                               default_assignment)


def pillow_jpeg(quality, mode="RGB"):
    arr = np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8)
    im = Image.fromarray(arr).convert(mode)
    buf = io.BytesIO()
    im.save(buf, "JPEG", quality=quality, subsampling=0)
    return buf.getvalue()


def dht_segments(data):
    """(class, id) -> (bits, values) for every DHT table in a JPEG stream."""
    out = {}
    i = 2
    while i < len(data):
        marker = data[i + 1]
        length = struct.unpack(">H", data[i + 2:i + 4])[0]
        seg = data[i + 4:i + 2 + length]
        if marker == 0xC4:
            j = 0
            while j < len(seg):
                tc, th = seg[j] >> 4, seg[j] & 15
                bits = list(seg[j + 1:j + 17])
                n = sum(bits)
                out[(tc, th)] = (bits, list(seg[j + 17:j + 17 + n]))
                j += 17 + n
        if marker == 0xDA:
            break
        i += 2 + length
    return out


def test_annex_k_corner_values():
    assert ANNEX_K_LUMA[0, 0] == 16 and ANNEX_K_LUMA[7, 7] == 99
    assert ANNEX_K_LUMA[4, 5] == 109 and ANNEX_K_LUMA[5, 6] == 113
    assert ANNEX_K_CHROMA[0, 0] == 17 and ANNEX_K_CHROMA[1, 1] == 21
    assert ANNEX_K_CHROMA[7, 7] == 99


@pytest.mark.parametrize("q", [1, 10, 25, 50, 75, 90, 95, 100])
def test_quality_scaling_matches_libjpeg(q):
    im = Image.open(io.BytesIO(pillow_jpeg(q)))
    luma = np.array(im.quantization[0]).reshape(8, 8)
    chroma = np.array(im.quantization[1]).reshape(8, 8)
    np.testing.assert_array_equal(quality_scaled(ANNEX_K_LUMA, q), luma)
    np.testing.assert_array_equal(quality_scaled(ANNEX_K_CHROMA, q), chroma)


def test_quality_scaling_hand_values():
    assert quality_scaled(ANNEX_K_LUMA, 50)[0, 0] == 16
    assert quality_scaled(ANNEX_K_LUMA, 75)[0, 0] == 8
    assert quality_scaled(ANNEX_K_LUMA, 10)[0, 0] == 80
    assert quality_scaled(ANNEX_K_LUMA, 1).max() == 255
    assert np.all(quality_scaled(ANNEX_K_LUMA, 100) == 1)
    with pytest.raises(InvalidInputError):
        quality_scaled(ANNEX_K_LUMA, 0)


def test_standard_huffman_tables_match_pillow():
    segs = dht_segments(pillow_jpeg(75))
    for key, spec in [((0, 0), STD_DC_LUMA), ((1, 0), STD_AC_LUMA),
                      ((0, 1), STD_DC_CHROMA), ((1, 1), STD_AC_CHROMA)]:
        bits, values = segs[key]
        assert tuple(bits) == spec.bits
        assert tuple(values) == spec.values


def test_known_codewords():
    codes, lens = STD_DC_LUMA.code_table()
    assert (codes[0], lens[0]) == (0b00, 2)
    assert (codes[11], lens[11]) == (0b111111110, 9)
    codes, lens = STD_AC_LUMA.code_table()
    assert (codes[0x00], lens[0x00]) == (0b1010, 4)
    assert (codes[0x01], lens[0x01]) == (0b00, 2)
    assert (codes[0xF0], lens[0xF0]) == (0b11111111001, 11)


@pytest.mark.parametrize("spec", [STD_DC_LUMA, STD_DC_CHROMA, STD_AC_LUMA, STD_AC_CHROMA])
def test_huffman_codes_prefix_free(spec):
    codes, lens = spec.code_table()
    words = [format(codes[s], f"0{lens[s]}b") for s in spec.values]
    assert len(set(words)) == len(words)
    for a in words:
        for b in words:
            assert a == b or not b.startswith(a)
    assert all(w != "1" * len(w) for w in words)  # all-ones codes are reserved


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away([0.5, -0.5, 1.5, 2.5, -2.5, 0.49]),
                                  [1, -1, 2, 3, -3, 0])


def test_default_assignment():
    assert default_assignment(1, 2) == (0,)
    assert default_assignment(3, 1) == (0, 0, 0)
    assert default_assignment(3, 2) == (0, 1, 1)
    assert default_assignment(3, 3) == (0, 1, 2)


def test_table_set_validation():
    with pytest.raises(InvalidTableError):
        QuantTableSet(np.ones((2, 8, 7)), (0, 1, 1))
    with pytest.raises(InvalidTableError):
        QuantTableSet(np.ones((1, 8, 8)), (0, 1, 1))
    with pytest.raises(InvalidTableError):
        QuantTableSet(np.full((1, 8, 8), np.nan), (0,))
    t = QuantTableSet(np.full((1, 8, 8), 0.2), (0,))
    assert t.tables.min() == 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 400.0), min_size=128, max_size=128))
def test_export_is_integer_and_clamped(vals):
    t = QuantTableSet(np.array(vals).reshape(2, 8, 8), (0, 1, 1)).exported()
    q = t.quantized_export
    assert q.min() >= 1 and q.max() <= 255
    assert np.all(np.abs(q - np.clip(t.tables, 1, 255)) <= 0.5)


def test_json_roundtrip_and_zigzag_layout(tmp_path):
    t = QuantTableSet.standard(75, 3, 2)
    obj = json.loads(t.to_json())
    assert obj["assignment"] == [0, 1, 1]
    # zigzag position 2 is natural (1, 0)
    assert obj["tables"][0][2] == t.quantized_export[0, 1, 0]
    t.save(tmp_path / "t.json")
    back = QuantTableSet.load(tmp_path / "t.json")
    np.testing.assert_array_equal(back.quantized_export, t.quantized_export)
    assert back.assignment == t.assignment


def test_json_rejects_garbage():
    with pytest.raises(InvalidTableError):
        QuantTableSet.from_json("{}")
    with pytest.raises(InvalidTableError):
        QuantTableSet.from_json(json.dumps({"tables": [[1] * 63], "assignment": [0]}))
    with pytest.raises(InvalidTableError):
        QuantTableSet.from_json(json.dumps({"tables": [[0] * 64], "assignment": [0]}))
