"""Hot loops of the codec: Huffman bit emission, bit counting, scan decoding.

Each kernel has a numba-compiled loop and a fallback. The encoder and the
bit counter fall back to vectorized numpy; the decoder falls back to the
same loop run by the interpreter. ``USE_NUMBA`` (see ``_accel``) picks the
default at import time; both variants stay importable for tests and the
benchmark.
"""
import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, jit

# ---------------------------------------------------------------- encoding


def _encode_loop(zz, comp, dc_code, dc_len, ac_code, ac_len, ncomp, out):
    prev = np.zeros(ncomp, dtype=np.int64)
    acc = 0
    nacc = 0
    pos = 0
    nbits = 0
    for b in range(zz.shape[0]):
        c = comp[b]
        # DC difference
        diff = zz[b, 0] - prev[c]
        prev[c] = zz[b, 0]
        mag = diff if diff >= 0 else -diff
        size = 0
        while mag > 0:
            size += 1
            mag >>= 1
        amp = diff if diff >= 0 else diff + (1 << size) - 1
        for part in range(2):
            if part == 0:
                val = dc_code[c, size]
                ln = dc_len[c, size]
            else:
                val = amp
                ln = size
            if ln == 0:
                continue
            acc = (acc << ln) | (val & ((1 << ln) - 1))
            nacc += ln
            nbits += ln
            while nacc >= 8:
                byte = (acc >> (nacc - 8)) & 0xFF
                out[pos] = byte
                pos += 1
                if byte == 0xFF:
                    out[pos] = 0
                    pos += 1
                nacc -= 8
            acc &= (1 << nacc) - 1
        # AC run-length tokens
        run = 0
        for k in range(1, 64):
            v = zz[b, k]
            if v == 0:
                run += 1
                continue
            while run >= 16:
                ln = ac_len[c, 0xF0]
                acc = (acc << ln) | ac_code[c, 0xF0]
                nacc += ln
                nbits += ln
                while nacc >= 8:
                    byte = (acc >> (nacc - 8)) & 0xFF
                    out[pos] = byte
                    pos += 1
                    if byte == 0xFF:
                        out[pos] = 0
                        pos += 1
                    nacc -= 8
                acc &= (1 << nacc) - 1
                run -= 16
            mag = v if v >= 0 else -v
            size = 0
            while mag > 0:
                size += 1
                mag >>= 1
            amp = v if v >= 0 else v + (1 << size) - 1
            sym = (run << 4) | size
            for part in range(2):
                if part == 0:
                    val = ac_code[c, sym]
                    ln = ac_len[c, sym]
                else:
                    val = amp
                    ln = size
                acc = (acc << ln) | (val & ((1 << ln) - 1))
                nacc += ln
                nbits += ln
                while nacc >= 8:
                    byte = (acc >> (nacc - 8)) & 0xFF
                    out[pos] = byte
                    pos += 1
                    if byte == 0xFF:
                        out[pos] = 0
                        pos += 1
                    nacc -= 8
                acc &= (1 << nacc) - 1
            run = 0
        if run > 0:
            ln = ac_len[c, 0x00]
            acc = (acc << ln) | ac_code[c, 0x00]
            nacc += ln
            nbits += ln
            while nacc >= 8:
                byte = (acc >> (nacc - 8)) & 0xFF
                out[pos] = byte
                pos += 1
                if byte == 0xFF:
                    out[pos] = 0
                    pos += 1
                nacc -= 8
            acc &= (1 << nacc) - 1
    # pad the final byte with one-bits
    if nacc > 0:
        pad = 8 - nacc
        byte = ((acc << pad) | ((1 << pad) - 1)) & 0xFF
        out[pos] = byte
        pos += 1
        if byte == 0xFF:
            out[pos] = 0
            pos += 1
    return pos, nbits


_encode_loop_nb = jit(_encode_loop) if HAVE_NUMBA else None


def _bit_length(v):
    return np.frexp(np.abs(v).astype(np.float64))[1].astype(np.int64)


def _events(zz, comp, dc_code, dc_len, ac_code, ac_len, ncomp, predict_dc=True):
    """Vectorized tokenization: (value, length) pairs in bitstream order."""
    nblk = zz.shape[0]
    dc = zz[:, 0]
    if predict_dc:
        diff = np.empty_like(dc)
        for c in range(ncomp):
            sel = np.flatnonzero(comp == c)
            d = dc[sel]
            diff[sel] = np.diff(d, prepend=0)
    else:
        diff = dc.copy()
    dsize = _bit_length(diff)
    damp = np.where(diff >= 0, diff, diff + (1 << dsize) - 1)
    keys = [np.arange(nblk, dtype=np.int64) * 2048]
    vals = [(dc_code[comp, dsize] << dsize) | damp]
    lens = [dc_len[comp, dsize] + dsize]

    ac = zz[:, 1:]
    bi, ki = np.nonzero(ac)
    if bi.size:
        pos = ki + 1
        first = np.ones(bi.size, dtype=bool)
        first[1:] = bi[1:] != bi[:-1]
        prevpos = np.empty_like(pos)
        prevpos[0] = 0
        prevpos[1:] = pos[:-1]
        prevpos[first] = 0
        run = pos - prevpos - 1
        nzrl = run // 16
        r = run % 16
        v = ac[bi, ki]
        size = _bit_length(v)
        amp = np.where(v >= 0, v, v + (1 << size) - 1)
        cb = comp[bi]
        sym = (r << 4) | size
        keys.append(bi * 2048 + pos * 16 + 8)
        vals.append((ac_code[cb, sym] << size) | amp)
        lens.append(ac_len[cb, sym] + size)
        for j in range(1, 4):
            sel = nzrl >= j
            if not np.any(sel):
                break
            keys.append(bi[sel] * 2048 + pos[sel] * 16 + (j - 1))
            vals.append(ac_code[cb[sel], 0xF0])
            lens.append(ac_len[cb[sel], 0xF0])
    last = np.zeros(nblk, dtype=np.int64)
    if bi.size:
        np.maximum.at(last, bi, ki + 1)
    eob = np.flatnonzero(last < 63)
    keys.append(eob * 2048 + 64 * 16)
    vals.append(ac_code[comp[eob], 0x00])
    lens.append(ac_len[comp[eob], 0x00])

    keys = np.concatenate(keys)
    order = np.argsort(keys, kind="stable")
    return np.concatenate(vals)[order], np.concatenate(lens)[order]


def _encode_numpy(zz, comp, dc_code, dc_len, ac_code, ac_len, ncomp):
    vals, lens = _events(zz, comp, dc_code, dc_len, ac_code, ac_len, ncomp)
    nbits = int(lens.sum())
    total = nbits + (-nbits) % 8
    bits = np.ones(total, dtype=np.uint8)
    starts = np.cumsum(lens) - lens
    owner = np.repeat(np.arange(lens.size), lens)
    offset = np.arange(nbits) - starts[owner]
    shift = lens[owner] - 1 - offset
    bits[:nbits] = (vals[owner] >> shift) & 1
    packed = np.packbits(bits)
    ff = np.flatnonzero(packed == 0xFF)
    return np.insert(packed, ff + 1, 0), nbits


def encode_blocks(zz, comp, dc_code, dc_len, ac_code, ac_len, ncomp, use_numba=None):
    """Entropy-code zigzag blocks in scan order.

    Returns (stuffed entropy-coded segment as uint8 array, bit count before
    padding and stuffing).
    """
    zz = np.ascontiguousarray(zz, dtype=np.int64)
    comp = np.ascontiguousarray(comp, dtype=np.int64)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        out = np.empty(zz.shape[0] * 440 + 16, dtype=np.uint8)
        n, nbits = _encode_loop_nb(zz, comp, dc_code, dc_len, ac_code, ac_len, ncomp, out)
        return out[:n].copy(), int(nbits)
    return _encode_numpy(zz, comp, dc_code, dc_len, ac_code, ac_len, ncomp)


# ---------------------------------------------------------------- bit count


def _count_loop(zz, comp, dc_len, ac_len, ncomp, predict_dc):
    prev = np.zeros(ncomp, dtype=np.int64)
    total = 0
    for b in range(zz.shape[0]):
        c = comp[b]
        diff = zz[b, 0]
        if predict_dc:
            diff = zz[b, 0] - prev[c]
            prev[c] = zz[b, 0]
        mag = diff if diff >= 0 else -diff
        size = 0
        while mag > 0:
            size += 1
            mag >>= 1
        total += dc_len[c, size] + size
        run = 0
        for k in range(1, 64):
            v = zz[b, k]
            if v == 0:
                run += 1
                continue
            while run >= 16:
                total += ac_len[c, 0xF0]
                run -= 16
            mag = v if v >= 0 else -v
            size = 0
            while mag > 0:
                size += 1
                mag >>= 1
            total += ac_len[c, (run << 4) | size] + size
            run = 0
        if run > 0:
            total += ac_len[c, 0x00]
    return total


_count_loop_nb = jit(_count_loop) if HAVE_NUMBA else None


def count_bits(zz, comp, dc_len, ac_len, ncomp, predict_dc=True, use_numba=None):
    """Exact Huffman + amplitude bit count, no bytes emitted."""
    zz = np.ascontiguousarray(zz, dtype=np.int64)
    comp = np.ascontiguousarray(comp, dtype=np.int64)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return int(_count_loop_nb(zz, comp, dc_len, ac_len, ncomp, predict_dc))
    zeros = np.zeros_like(dc_len)
    _, lens = _events(zz, comp, zeros, dc_len, zeros, ac_len, ncomp, predict_dc)
    return int(lens.sum())


# ---------------------------------------------------------------- decoding


def _decode_loop(data, bitpos, n_mcus, mcu_comp, dc_tab, ac_tab,
                 maxcode, valptr, mincode, huffval, pred, out, out_start):
    """Decode ``n_mcus`` MCUs; returns (status, next bit position).

    status 0 = ok, 1 = invalid Huffman code, 2 = coefficient overflow,
    3 = ran past the end of data (missing bits read as zero).
    """
    nbytes = data.shape[0]
    status = 0
    blk = out_start
    for m in range(n_mcus):
        for j in range(mcu_comp.shape[0]):
            c = mcu_comp[j]
            for half in range(2):
                t = dc_tab[c] if half == 0 else ac_tab[c]
                k = 0 if half == 0 else 1
                while True:
                    # decode one Huffman symbol
                    code = 0
                    length = 0
                    while True:
                        byte_i = bitpos >> 3
                        bit = 0
                        if byte_i < nbytes:
                            bit = (np.int64(data[byte_i]) >> (7 - (bitpos & 7))) & 1
                        else:
                            status = 3
                        bitpos += 1
                        code = (code << 1) | bit
                        length += 1
                        if length > 16:
                            return 1, bitpos
                        if code <= maxcode[t, length]:
                            break
                    sym = huffval[t, valptr[t, length] + code - mincode[t, length]]
                    if half == 0:
                        size = sym
                        run = 0
                    else:
                        run = sym >> 4
                        size = sym & 15
                    v = 0
                    for _ in range(size):
                        byte_i = bitpos >> 3
                        bit = 0
                        if byte_i < nbytes:
                            bit = (np.int64(data[byte_i]) >> (7 - (bitpos & 7))) & 1
                        else:
                            status = 3
                        bitpos += 1
                        v = (v << 1) | bit
                    if size > 0 and v < (1 << (size - 1)):
                        v += (-1 << size) + 1
                    if half == 0:
                        pred[c] += v
                        out[blk, 0] = pred[c]
                        break
                    if size == 0:
                        if run == 15:
                            k += 16
                            if k > 64:
                                return 2, bitpos
                            if k == 64:
                                break
                            continue
                        break
                    k += run
                    if k > 63:
                        return 2, bitpos
                    out[blk, k] = v
                    k += 1
                    if k > 63:
                        break
            blk += 1
    return status, bitpos


_decode_loop_nb = jit(_decode_loop) if HAVE_NUMBA else None


def decode_mcus(data, bitpos, n_mcus, mcu_comp, dc_tab, ac_tab, lut, pred, out,
                out_start, use_numba=None):
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _decode_loop_nb if use_numba else _decode_loop
    maxcode, valptr, mincode, huffval = lut
    status, bitpos = fn(data, bitpos, n_mcus, mcu_comp, dc_tab, ac_tab,
                        maxcode, valptr, mincode, huffval, pred, out, out_start)
    return int(status), int(bitpos)


def build_decode_lut(specs):
    """maxcode/valptr/mincode/huffval arrays (ITU T.81 F.2.2.3) per table."""
    n = len(specs)
    maxcode = np.full((n, 18), -1, dtype=np.int64)
    valptr = np.zeros((n, 17), dtype=np.int64)
    mincode = np.zeros((n, 17), dtype=np.int64)
    huffval = np.zeros((n, 256), dtype=np.int64)
    for t, (bits, values) in enumerate(specs):
        huffval[t, :len(values)] = values
        code = 0
        k = 0
        for length in range(1, 17):
            cnt = bits[length - 1]
            if cnt:
                valptr[t, length] = k
                mincode[t, length] = code
                code += cnt
                k += cnt
                maxcode[t, length] = code - 1
            code <<= 1
        maxcode[t, 17] = 1 << 20
    return maxcode, valptr, mincode, huffval
