"""Baseline JPEG run-length tokenization and Huffman size accounting."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .. import kernels
from ..errors import InvalidInputError
from .tables import STD_AC_CHROMA, STD_AC_LUMA, STD_DC_CHROMA, STD_DC_LUMA


class Token(NamedTuple):
    """One coded unit: zero run, size category, amplitude.

    The first token of a block is the DC difference (run is always 0).
    ZRL is (15, 0, 0) and EOB is (0, 0, 0) when they appear among AC tokens.
    """

    run: int
    size: int
    value: int


ZRL = Token(15, 0, 0)
EOB = Token(0, 0, 0)


def size_category(v):
    return int(abs(int(v))).bit_length()


def rle_tokenize(zz, prev_dc=0):
    """Tokenize one zigzag-ordered block of 64 quantized coefficients."""
    v = [int(x) for x in np.asarray(zz).ravel()]
    if len(v) != 64:
        raise InvalidInputError(f"expected 64 coefficients, got {len(v)}")
    diff = v[0] - int(prev_dc)
    tokens = [Token(0, size_category(diff), diff)]
    run = 0
    for x in v[1:]:
        if x == 0:
            run += 1
            continue
        while run >= 16:
            tokens.append(ZRL)
            run -= 16
        tokens.append(Token(run, size_category(x), x))
        run = 0
    if run:
        tokens.append(EOB)
    return tokens


def token_bits(tokens, luma=True):
    """Bit cost of a token list under the Annex K tables (reference path)."""
    dc_codes, dc_lens = (STD_DC_LUMA if luma else STD_DC_CHROMA).code_table()
    ac_codes, ac_lens = (STD_AC_LUMA if luma else STD_AC_CHROMA).code_table()
    first, *rest = tokens
    total = int(dc_lens[first.size]) + first.size
    for t in rest:
        total += int(ac_lens[(t.run << 4) | t.size]) + t.size
    return total


def component_tables(ncomp):
    """Stacked Annex K (code, length) arrays; component 0 is luma."""
    specs = [(STD_DC_LUMA, STD_AC_LUMA)] + [(STD_DC_CHROMA, STD_AC_CHROMA)] * (ncomp - 1)
    dc = [s[0].code_table() for s in specs]
    ac = [s[1].code_table() for s in specs]
    return (
        np.stack([c for c, _ in dc]), np.stack([ln for _, ln in dc]),
        np.stack([c for c, _ in ac]), np.stack([ln for _, ln in ac]),
    )


def scan_order(zz_planes):
    """Interleave (C, N, 64) per-component blocks into 4:4:4 MCU order.

    Returns (blocks (N*C, 64), component index per block).
    """
    c, n = zz_planes.shape[:2]
    blocks = np.ascontiguousarray(zz_planes.transpose(1, 0, 2)).reshape(n * c, 64)
    comp = np.tile(np.arange(c), n)
    return blocks, comp


def estimate_size_bits(quantized_zz, dc_prediction=True, use_numba=None):
    """Sum of Huffman code lengths plus amplitude bits, no bytes emitted.

    ``quantized_zz`` is (C, N, 64) zigzag-ordered quantized blocks. With
    ``dc_prediction`` and all blocks of an image in raster order this equals
    the entropy-coded segment length of ``encode_jpeg`` before padding and
    0xFF byte stuffing. For sampled blocks, pass ``dc_prediction=False`` so
    every DC is coded as a difference from zero.
    """
    q = np.asarray(quantized_zz, dtype=np.int64)
    if q.ndim == 2:
        q = q[None]
    if q.ndim != 3 or q.shape[-1] != 64:
        raise InvalidInputError(f"expected (C, N, 64) blocks, got {q.shape}")
    ncomp = q.shape[0]
    _, dc_len, _, ac_len = component_tables(ncomp)
    blocks, comp = scan_order(q)
    return float(kernels.count_bits(blocks, comp, dc_len, ac_len, ncomp,
                                    predict_dc=dc_prediction, use_numba=use_numba))
