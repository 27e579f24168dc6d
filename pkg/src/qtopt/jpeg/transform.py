"""8x8 DCT, quantization, zigzag, and block tiling.

Every function accepts arbitrary leading batch dimensions: a single block is
(8, 8), a whole plane of blocks is (..., 8, 8).
"""
import numpy as np

from ..errors import InvalidInputError, InvalidTableError
from .tables import UNZIGZAG, ZIGZAG, round_half_away


def dct_matrix():
    """Orthonormal DCT-II basis; row k is frequency k."""
    n = np.arange(8)
    k = n[:, None]
    m = np.cos((2 * n[None, :] + 1) * k * np.pi / 16.0)
    m[0] *= np.sqrt(1.0 / 8.0)
    m[1:] *= np.sqrt(2.0 / 8.0)
    return m


DCT = dct_matrix()


def forward_dct(block, level_shift=True):
    x = np.asarray(block, dtype=np.float64)
    if level_shift:
        x = x - 128.0
    return DCT @ x @ DCT.T


def inverse_dct(coeffs, level_shift=True):
    y = DCT.T @ np.asarray(coeffs, dtype=np.float64) @ DCT
    if level_shift:
        y = y + 128.0
    return y


def quantize(coeffs, table):
    t = np.asarray(table, dtype=np.float64)
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise InvalidTableError("quantization table entries must be positive")
    return round_half_away(np.asarray(coeffs, dtype=np.float64) / t).astype(np.int64)


def dequantize(q, table):
    return np.asarray(q, dtype=np.float64) * np.asarray(table, dtype=np.float64)


def zigzag(block):
    b = np.asarray(block)
    if b.shape[-2:] != (8, 8):
        raise InvalidInputError(f"zigzag needs (..., 8, 8), got {b.shape}")
    return b.reshape(b.shape[:-2] + (64,))[..., ZIGZAG]


def inverse_zigzag(vec):
    v = np.asarray(vec)
    if v.shape[-1:] != (64,):
        raise InvalidInputError(f"inverse_zigzag needs length-64 vectors, got {v.shape}")
    return v[..., UNZIGZAG].reshape(v.shape[:-1] + (8, 8))


def blockify(planes):
    """(C, H, W) with H, W multiples of 8 -> (C, H/8, W/8, 8, 8)."""
    c, h, w = planes.shape
    if h % 8 or w % 8:
        raise InvalidInputError(f"plane size {h}x{w} is not a multiple of 8")
    return planes.reshape(c, h // 8, 8, w // 8, 8).swapaxes(2, 3)


def unblockify(blocks):
    c, by, bx = blocks.shape[:3]
    return blocks.swapaxes(2, 3).reshape(c, by * 8, bx * 8)


# libjpeg jidctint.c (islow) constants, CONST_BITS = 13
_CB = 13
_P1 = 2
_F0298 = 2446
_F0390 = 3196
_F0541 = 4433
_F0765 = 6270
_F0899 = 7373
_F1175 = 9633
_F1501 = 12299
_F1847 = 15137
_F1961 = 16069
_F2053 = 16819
_F2562 = 20995
_F3072 = 25172


def _descale(x, n):
    return (x + (1 << (n - 1))) >> n


def _idct_1d(s0, s1, s2, s3, s4, s5, s6, s7):
    # even part
    z1 = (s2 + s6) * _F0541
    tmp2 = z1 + s6 * (-_F1847)
    tmp3 = z1 + s2 * _F0765
    tmp0 = (s0 + s4) << _CB
    tmp1 = (s0 - s4) << _CB
    tmp10 = tmp0 + tmp3
    tmp13 = tmp0 - tmp3
    tmp11 = tmp1 + tmp2
    tmp12 = tmp1 - tmp2
    # odd part
    t0, t1, t2, t3 = s7, s5, s3, s1
    z1 = t0 + t3
    z2 = t1 + t2
    z3 = t0 + t2
    z4 = t1 + t3
    z5 = (z3 + z4) * _F1175
    t0 = t0 * _F0298
    t1 = t1 * _F2053
    t2 = t2 * _F3072
    t3 = t3 * _F1501
    z1 = z1 * (-_F0899)
    z2 = z2 * (-_F2562)
    z3 = z3 * (-_F1961) + z5
    z4 = z4 * (-_F0390) + z5
    t0 = t0 + z1 + z3
    t1 = t1 + z2 + z4
    t2 = t2 + z2 + z3
    t3 = t3 + z1 + z4
    return (tmp10 + t3, tmp11 + t2, tmp12 + t1, tmp13 + t0,
            tmp13 - t0, tmp12 - t1, tmp11 - t2, tmp10 - t3)


def _range_limit_table():
    # post-IDCT table of jdmaster.c, indexed by (x & 1023) for centered x
    idx = np.arange(1024)
    out = np.empty(1024, dtype=np.int64)
    out[:128] = idx[:128] + 128
    out[128:512] = 255
    out[512:896] = 0
    out[896:] = idx[896:] - 896
    return out


_RANGE_LIMIT = _range_limit_table()


def inverse_dct_int(dequantized):
    """libjpeg's accurate integer IDCT (JDCT_ISLOW), bit-exact.

    Input is dequantized integer coefficients (..., 8, 8); output is uint8
    samples after the level shift and range limiting.
    """
    c = np.asarray(dequantized, dtype=np.int64)
    # pass 1: columns
    cols = _idct_1d(*(c[..., k, :] for k in range(8)))
    ws = [_descale(v, _CB - _P1) for v in cols]
    # pass 2: rows; ws[k] is row k of the workspace, indexed by column
    rows = _idct_1d(*(np.stack(ws, axis=-2)[..., :, k] for k in range(8)))
    out = np.stack([_descale(v, _CB + _P1 + 3) for v in rows], axis=-1)
    return _RANGE_LIMIT[out & 1023].astype(np.uint8)


def reconstruct_blocks(quantized, tables, method="int"):
    """Dequantize -> inverse DCT -> clamp; the internal decode path.

    ``quantized`` is (..., 8, 8) integers in natural order and ``tables``
    broadcasts against it. ``method="int"`` reproduces libjpeg exactly,
    ``"float"`` uses the orthonormal DCT with round-half-up.
    """
    if method == "int":
        deq = np.asarray(quantized, dtype=np.int64) * np.asarray(tables, dtype=np.int64)
        return inverse_dct_int(deq).astype(np.float64)
    if method == "float":
        y = inverse_dct(dequantize(quantized, tables))
        return np.clip(np.floor(y + 0.5), 0.0, 255.0)
    raise InvalidInputError(f"unknown IDCT method {method!r}")
