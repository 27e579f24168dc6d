"""Baseline sequential JFIF writer and reader (Huffman, 8-bit)."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import (CorruptJpegError, InvalidInputError, InvalidTableError,
                      MustConvertError, UnsupportedJpegError)
from .entropy import component_tables, scan_order
from .image import ColorSpace, ImagePlanes, pad_to_blocks, ycbcr_to_rgb, ycbcr_to_rgb_int
from .tables import (STD_AC_CHROMA, STD_AC_LUMA, STD_DC_CHROMA, STD_DC_LUMA, UNZIGZAG,
                     ZIGZAG, QuantTableSet)
from .transform import blockify, forward_dct, quantize, reconstruct_blocks, unblockify

SOI = 0xD8
EOI = 0xD9
SOF0 = 0xC0
SOF1 = 0xC1
DHT = 0xC4
DQT = 0xDB
DRI = 0xDD
SOS = 0xDA
APP0 = 0xE0
COM = 0xFE
RST0 = 0xD0

AC_LIMIT = 1023


@dataclass
class EncodedJpeg:
    data: bytes
    tables_used: QuantTableSet
    ecs_bits: int = 0

    @property
    def size_bytes(self):
        return len(self.data)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.data)


def quantize_image(img, tables):
    """Quantized DCT blocks of a Gray/YCbCr image, shape (C, BY, BX, 8, 8).

    Uses the integer export of ``tables``; AC values are clipped to the
    baseline range of +-1023.
    """
    if img.colorspace is ColorSpace.RGB:
        raise MustConvertError("convert RGB to YCbCr before quantizing")
    per_ch = tables.per_channel(integer=True)
    if len(per_ch) != img.channels:
        raise InvalidTableError(
            f"assignment covers {len(per_ch)} channels, image has {img.channels}")
    coeffs = forward_dct(blockify(pad_to_blocks(img.planes)))
    q = quantize(coeffs, per_ch[:, None, None])
    dc = q[..., 0, 0].copy()
    q = np.clip(q, -AC_LIMIT, AC_LIMIT)
    q[..., 0, 0] = dc
    return q


def reconstruct_image(quantized, tables, height, width, method="int"):
    """Decode quantized blocks back to cropped codec-space planes (C, H, W)."""
    per_ch = tables.per_channel(integer=True)
    pix = reconstruct_blocks(quantized, per_ch[:, None, None], method=method)
    return unblockify(pix)[:, :height, :width]


def to_display(planes, colorspace, method="int"):
    """Codec-space planes -> ImagePlanes in Gray or RGB, as a decoder would."""
    if colorspace is ColorSpace.GRAY:
        return ImagePlanes(planes, ColorSpace.GRAY)
    if method == "int":
        rgb = ycbcr_to_rgb_int(planes.astype(np.int64)).astype(np.float64)
        return ImagePlanes(rgb, ColorSpace.RGB)
    rgb = ycbcr_to_rgb(ImagePlanes(planes, ColorSpace.YCBCR))
    return ImagePlanes(np.clip(np.floor(rgb.planes + 0.5), 0, 255), ColorSpace.RGB)


def _segment(marker, payload):
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _dht_payload(cls_id, spec):
    return bytes([cls_id]) + bytes(spec.bits) + bytes(spec.values)


def jfif_headers(width, height, qexport, assignment):
    nc = len(assignment)
    out = bytearray(b"\xff\xd8")
    out += _segment(APP0, b"JFIF\x00" + struct.pack(">BBBHHBB", 1, 1, 0, 1, 1, 0, 0))
    dqt = bytearray()
    for tid, table in enumerate(qexport):
        dqt.append(tid)  # Pq = 0 (8-bit), Tq = tid
        dqt += bytes(int(v) for v in table.reshape(64)[ZIGZAG])
    out += _segment(DQT, bytes(dqt))
    sof = struct.pack(">BHHB", 8, height, width, nc)
    for i, tq in enumerate(assignment):
        sof += struct.pack(">BBB", i + 1, 0x11, tq)
    out += _segment(SOF0, sof)
    dht = _dht_payload(0x00, STD_DC_LUMA) + _dht_payload(0x10, STD_AC_LUMA)
    if nc > 1:
        dht += _dht_payload(0x01, STD_DC_CHROMA) + _dht_payload(0x11, STD_AC_CHROMA)
    out += _segment(DHT, dht)
    sos = bytes([nc])
    for i in range(nc):
        sel = 0x00 if i == 0 else 0x11
        sos += bytes([i + 1, sel])
    sos += bytes([0, 63, 0])
    out += _segment(SOS, sos)
    return bytes(out)


def encode_quantized(quantized, tables, height, width, use_numba=None):
    """Emit a JFIF file from already-quantized (C, BY, BX, 8, 8) blocks."""
    nc = quantized.shape[0]
    zz = quantized.reshape(nc, -1, 64)[..., ZIGZAG]
    blocks, comp = scan_order(zz)
    dc_code, dc_len, ac_code, ac_len = component_tables(nc)
    ecs, nbits = kernels.encode_blocks(blocks, comp, dc_code, dc_len, ac_code, ac_len, nc,
                                       use_numba=use_numba)
    head = jfif_headers(width, height, tables.quantized_export, tables.assignment)
    data = head + ecs.tobytes() + b"\xff\xd9"
    return EncodedJpeg(data, tables, nbits)


def encode_jpeg(img, tables, use_numba=None):
    """Baseline 4:4:4 JFIF with Annex K Huffman tables."""
    if img.colorspace is ColorSpace.RGB:
        raise MustConvertError("encode_jpeg needs Gray or YCbCr planes; convert RGB first")
    if tables.quantized_export is None:
        raise InvalidTableError("tables carry no quantized_export")
    if img.width > 65535 or img.height > 65535:
        raise InvalidInputError("image too large for baseline JPEG")
    q = quantize_image(img, tables)
    return encode_quantized(q, tables, img.height, img.width, use_numba=use_numba)


# ------------------------------------------------------------------ reading


@dataclass
class _Component:
    cid: int
    h: int
    v: int
    tq: int
    coeffs: np.ndarray = None
    td: int = 0
    ta: int = 0


@dataclass
class DecodedJpeg:
    """Codec-space planes plus the raw material a decoder saw."""

    planes: ImagePlanes
    qtables: dict
    coefficients: list = field(default_factory=list)

    def to_display(self, method="int"):
        return to_display(self.planes.planes, self.planes.colorspace, method)


def _find_scan_end(buf, start):
    arr = np.frombuffer(buf, dtype=np.uint8, offset=start)
    ff = np.flatnonzero(arr[:-1] == 0xFF)
    nxt = arr[ff + 1]
    stop = ff[(nxt != 0x00) & ((nxt < 0xD0) | (nxt > 0xD7)) & (nxt != 0xFF)]
    return start + (int(stop[0]) if stop.size else len(arr))


def _unstuff(seg):
    arr = np.frombuffer(seg, dtype=np.uint8)
    if arr.size < 2:
        return arr.copy()
    drop = np.zeros(arr.size, dtype=bool)
    drop[1:] = (arr[1:] == 0x00) & (arr[:-1] == 0xFF)
    return arr[~drop]


def _split_restarts(ecs):
    arr = np.frombuffer(ecs, dtype=np.uint8)
    if arr.size < 2:
        return [ecs]
    ff = np.flatnonzero(arr[:-1] == 0xFF)
    rst = ff[(arr[ff + 1] >= 0xD0) & (arr[ff + 1] <= 0xD7)]
    parts = []
    prev = 0
    for p in rst:
        parts.append(ecs[prev:p])
        prev = int(p) + 2
    parts.append(ecs[prev:])
    return parts


def decode_jpeg(data, method="int", use_numba=None):
    """Decode a baseline sequential Huffman JPEG.

    Progressive, arithmetic, lossless, and 12-bit files raise
    UnsupportedJpegError so callers can fall back to another decoder.
    """
    data = bytes(data)
    if data[:2] != b"\xff\xd8":
        raise CorruptJpegError("missing SOI marker")
    try:
        return _decode(data, method, use_numba)
    except (CorruptJpegError, UnsupportedJpegError):
        raise
    except (struct.error, ValueError, IndexError, KeyError) as exc:
        raise CorruptJpegError(f"malformed JPEG: {exc}") from exc


def _decode(data, method, use_numba):
    qt = {}
    huff = {}
    comps = []
    width = height = 0
    restart = 0
    pos = 2
    got_frame = False
    scans = 0
    while pos < len(data):
        if data[pos] != 0xFF:
            raise CorruptJpegError(f"expected marker at offset {pos}")
        marker = data[pos + 1]
        pos += 2
        if marker == 0xFF:
            pos -= 1
            continue
        if marker == EOI:
            break
        if RST0 <= marker <= RST0 + 7 or marker == 0x01:
            continue
        if pos + 2 > len(data):
            raise CorruptJpegError("truncated segment header")
        (length,) = struct.unpack_from(">H", data, pos)
        if length < 2 or pos + length > len(data):
            raise CorruptJpegError(f"segment 0x{marker:02X} runs past end of data")
        body = data[pos + 2:pos + length]
        pos += length
        if marker in (SOF0, SOF1):
            precision, height, width, nc = struct.unpack_from(">BHHB", body)
            if precision != 8:
                raise UnsupportedJpegError(f"{precision}-bit samples")
            if nc not in (1, 3):
                raise UnsupportedJpegError(f"{nc} components")
            comps = []
            for i in range(nc):
                cid, hv, tq = body[6 + 3 * i:9 + 3 * i]
                comps.append(_Component(cid, hv >> 4, hv & 15, tq))
            got_frame = True
        elif 0xC2 <= marker <= 0xCF and marker not in (DHT, 0xC8, 0xCC):
            raise UnsupportedJpegError(f"SOF marker 0x{marker:02X} (not baseline)")
        elif marker == DQT:
            i = 0
            while i < len(body):
                pq, tq = body[i] >> 4, body[i] & 15
                i += 1
                if pq == 0:
                    vals = np.frombuffer(body, dtype=np.uint8, count=64, offset=i).astype(np.int64)
                    i += 64
                else:
                    vals = np.frombuffer(body, dtype=">u2", count=64, offset=i).astype(np.int64)
                    i += 128
                qt[tq] = vals[UNZIGZAG].reshape(8, 8)
        elif marker == DHT:
            i = 0
            while i < len(body):
                tc_th = body[i]
                bits = list(body[i + 1:i + 17])
                n = sum(bits)
                values = list(body[i + 17:i + 17 + n])
                huff[(tc_th >> 4, tc_th & 15)] = (bits, values)
                i += 17 + n
        elif marker == DRI:
            (restart,) = struct.unpack_from(">H", body)
        elif marker == SOS:
            if not got_frame:
                raise CorruptJpegError("SOS before SOF")
            end = _find_scan_end(data, pos)
            _decode_scan(body, data[pos:end], comps, huff, width, height, restart, use_numba)
            pos = end
            scans += 1
        # APPn, COM and anything else: skipped
    if not got_frame or scans == 0:
        raise CorruptJpegError("no frame or scan found")
    return _finish(comps, qt, width, height, method)


def _grid(comps, width, height):
    hmax = max(c.h for c in comps)
    vmax = max(c.v for c in comps)
    mcux = -(-width // (8 * hmax))
    mcuy = -(-height // (8 * vmax))
    return hmax, vmax, mcux, mcuy


def _decode_scan(header, ecs, comps, huff, width, height, restart, use_numba):
    ns = header[0]
    by_id = {c.cid: c for c in comps}
    scomps = []
    for i in range(ns):
        cid, sel = header[1 + 2 * i], header[2 + 2 * i]
        c = by_id.get(cid)
        if c is None:
            raise CorruptJpegError(f"scan references unknown component {cid}")
        c.td, c.ta = sel >> 4, sel & 15
        scomps.append(c)
    ss, se, ahal = header[1 + 2 * ns:4 + 2 * ns]
    if ss != 0 or se != 63 or ahal != 0:
        raise UnsupportedJpegError("spectral selection / successive approximation")
    hmax, vmax, mcux, mcuy = _grid(comps, width, height)
    for c in comps:
        if c.coeffs is None:
            c.coeffs = np.zeros((mcuy * c.v, mcux * c.h, 64), dtype=np.int64)

    keys = sorted({(0, c.td) for c in scomps} | {(1, c.ta) for c in scomps})
    missing = [k for k in keys if k not in huff]
    if missing:
        raise CorruptJpegError(f"undefined Huffman tables {missing}")
    lut = kernels.build_decode_lut([huff[k] for k in keys])
    index = {k: i for i, k in enumerate(keys)}
    dc_tab = np.array([index[(0, c.td)] for c in scomps], dtype=np.int64)
    ac_tab = np.array([index[(1, c.ta)] for c in scomps], dtype=np.int64)

    # block destinations in decode order
    if ns == 1:
        c = scomps[0]
        bw = -(-(-(-width * c.h // hmax)) // 8)
        bh = -(-(-(-height * c.v // vmax)) // 8)
        yy, xx = np.divmod(np.arange(bw * bh), bw)
        dest = [(0, yy, xx)]
        mcu_comp = np.zeros(1, dtype=np.int64)
        n_mcus = bw * bh
    else:
        mcu_comp = []
        offs = []
        for k, c in enumerate(scomps):
            for dy in range(c.v):
                for dx in range(c.h):
                    mcu_comp.append(k)
                    offs.append((k, dy, dx))
        mcu_comp = np.array(mcu_comp, dtype=np.int64)
        n_mcus = mcux * mcuy
        m = np.arange(n_mcus)
        my, mx = np.divmod(m, mcux)
        dest = []
        for k, dy, dx in offs:
            c = scomps[k]
            dest.append((k, my * c.v + dy, mx * c.h + dx))
    per_mcu = len(mcu_comp)
    flat = np.zeros((n_mcus * per_mcu, 64), dtype=np.int64)
    pred = np.zeros(ns, dtype=np.int64)

    segments = _split_restarts(ecs) if restart else [ecs]
    interval = restart if restart else n_mcus
    done = 0
    for seg in segments:
        if done >= n_mcus:
            break
        todo = min(interval, n_mcus - done)
        pred[:] = 0
        status, _ = kernels.decode_mcus(_unstuff(seg), 0, todo, mcu_comp, dc_tab, ac_tab,
                                        lut, pred, flat, done * per_mcu, use_numba=use_numba)
        if status in (1, 2):
            raise CorruptJpegError("invalid Huffman data in scan")
        done += todo
    if done < n_mcus:
        raise CorruptJpegError("scan ended before all MCUs were decoded")

    flat = flat.reshape(n_mcus, per_mcu, 64)
    for j, (k, yy, xx) in enumerate(dest):
        scomps[k].coeffs[yy, xx] = flat[:, j]


def _finish(comps, qt, width, height, method):
    hmax, vmax, _, _ = _grid(comps, width, height)
    planes = []
    coefficients = []
    for c in comps:
        if c.tq not in qt:
            raise CorruptJpegError(f"quantization table {c.tq} undefined")
        zz = c.coeffs
        nat = zz[..., UNZIGZAG].reshape(zz.shape[:2] + (8, 8))
        coefficients.append(nat)
        pix = reconstruct_blocks(nat, qt[c.tq], method=method)
        plane = pix.swapaxes(1, 2).reshape(pix.shape[0] * 8, pix.shape[1] * 8)
        fy, fx = vmax // c.v, hmax // c.h
        if fy > 1 or fx > 1:
            plane = np.repeat(np.repeat(plane, fy, axis=0), fx, axis=1)
        planes.append(plane[:height, :width])
    arr = np.stack(planes)
    cs = ColorSpace.GRAY if len(comps) == 1 else ColorSpace.YCBCR
    return DecodedJpeg(ImagePlanes(arr, cs), dict(qt), coefficients)
