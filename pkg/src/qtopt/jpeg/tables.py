"""Standard JPEG tables, zigzag order, and the quantization-table container."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError, InvalidTableError

# zigzag index -> natural (row-major) index
ZIGZAG = np.array([
    0, 1, 8, 16, 9, 2, 3, 10,
    17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
], dtype=np.intp)

# natural index -> zigzag index
UNZIGZAG = np.argsort(ZIGZAG)

ANNEX_K_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)

ANNEX_K_CHROMA = np.full((8, 8), 99, dtype=np.int64)
ANNEX_K_CHROMA[:4, :4] = [
    [17, 18, 24, 47],
    [18, 21, 26, 66],
    [24, 26, 56, 99],
    [47, 66, 99, 99],
]


def _ac_values(prefix):
    # Annex K AC lists: an irregular head, then every remaining (run, size)
    # symbol in increasing numeric order.
    every = {0x00, 0xF0} | {(r << 4) | s for r in range(16) for s in range(1, 11)}
    rest = sorted(every - set(prefix))
    return list(prefix) + rest


DC_LUMA_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
DC_CHROMA_BITS = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
DC_VALUES = list(range(12))

AC_LUMA_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D]
AC_LUMA_VALUES = _ac_values([
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
    0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
    0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72,
    0x82, 0x09, 0x0A, 0x16,
])

AC_CHROMA_BITS = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77]
AC_CHROMA_VALUES = _ac_values([
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41,
    0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
    0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0, 0x15, 0x62, 0x72, 0xD1,
    0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1,
])


@dataclass(frozen=True)
class HuffmanSpec:
    """A Huffman table in DHT form: code counts per length plus symbols."""

    bits: tuple
    values: tuple

    def code_table(self):
        """Return (codes, lengths) arrays indexed by symbol (0..255)."""
        codes = np.zeros(256, dtype=np.int64)
        lengths = np.zeros(256, dtype=np.int64)
        code = 0
        k = 0
        for length in range(1, 17):
            for _ in range(self.bits[length - 1]):
                sym = self.values[k]
                codes[sym] = code
                lengths[sym] = length
                code += 1
                k += 1
            code <<= 1
        return codes, lengths


STD_DC_LUMA = HuffmanSpec(tuple(DC_LUMA_BITS), tuple(DC_VALUES))
STD_DC_CHROMA = HuffmanSpec(tuple(DC_CHROMA_BITS), tuple(DC_VALUES))
STD_AC_LUMA = HuffmanSpec(tuple(AC_LUMA_BITS), tuple(AC_LUMA_VALUES))
STD_AC_CHROMA = HuffmanSpec(tuple(AC_CHROMA_BITS), tuple(AC_CHROMA_VALUES))


def quality_scaled(base, quality):
    """Scale a base table the way libjpeg's ``jpeg_quality_scaling`` does.

    Integer arithmetic matches cjpeg exactly; output is clamped to [1, 255].
    """
    quality = int(quality)
    if not 1 <= quality <= 100:
        raise InvalidInputError(f"quality must be in 1..100, got {quality}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    scaled = (np.asarray(base, dtype=np.int64) * scale + 50) // 100
    return np.clip(scaled, 1, 255)


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def default_assignment(channels, num_tables):
    if channels == 1:
        return (0,)
    if num_tables == 1:
        return (0, 0, 0)
    if num_tables == 2:
        return (0, 1, 1)
    return (0, 1, 2)


@dataclass
class QuantTableSet:
    """Q continuous 8x8 tables, a channel->table map, and the integer export.

    Tables are stored in natural (row-major) order. The JSON exchange format
    carries zigzag order, matching the DQT segment layout.
    """

    tables: np.ndarray
    assignment: tuple
    quantized_export: np.ndarray | None = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.tables, dtype=np.float64)
        if t.ndim == 2:
            t = t[None]
        if t.ndim != 3 or t.shape[1:] != (8, 8):
            raise InvalidTableError(f"tables must be Qx8x8, got shape {t.shape}")
        if not 1 <= t.shape[0] <= 4:
            raise InvalidTableError(f"at most 4 tables fit in DQT, got {t.shape[0]}")
        if not np.all(np.isfinite(t)):
            raise InvalidTableError("table entries must be finite")
        self.tables = np.maximum(t, 1.0)
        self.assignment = tuple(int(a) for a in self.assignment)
        for a in self.assignment:
            if not 0 <= a < len(self.tables):
                raise InvalidTableError(
                    f"assignment {self.assignment} references a missing table"
                )
        if self.quantized_export is not None:
            q = np.asarray(self.quantized_export)
            if q.shape != self.tables.shape:
                raise InvalidTableError("quantized_export shape differs from tables")
            if np.any(q < 1) or np.any(q > 255) or np.any(q != np.round(q)):
                raise InvalidTableError("quantized_export entries must be integers in 1..255")
            self.quantized_export = q.astype(np.int64)

    @property
    def num_tables(self):
        return len(self.tables)

    def exported(self):
        """Copy with ``quantized_export = round(clamp(tables, 1, 255))``."""
        q = round_half_away(np.clip(self.tables, 1.0, 255.0)).astype(np.int64)
        return QuantTableSet(self.tables.copy(), self.assignment, q)

    def per_channel(self, integer=True):
        """Stack of the table used by each channel, shape (C, 8, 8)."""
        src = self.quantized_export if integer else self.tables
        if src is None:
            raise InvalidTableError("tables have no quantized_export; call exported()")
        return np.stack([src[a] for a in self.assignment])

    @classmethod
    def standard(cls, quality=75, channels=3, num_tables=2):
        """Annex K tables at a libjpeg quality, already exported."""
        luma = quality_scaled(ANNEX_K_LUMA, quality)
        chroma = quality_scaled(ANNEX_K_CHROMA, quality)
        stack = [luma] + [chroma] * (num_tables - 1)
        tables = np.stack(stack).astype(np.float64)
        return cls(tables, default_assignment(channels, num_tables)).exported()

    def to_json(self):
        if self.quantized_export is None:
            raise InvalidTableError("only exported tables can be serialized")
        zz = self.quantized_export.reshape(len(self.tables), 64)[:, ZIGZAG]
        return json.dumps({
            "tables": zz.tolist(),
            "assignment": list(self.assignment),
        })

    @classmethod
    def from_json(cls, text):
        try:
            obj = json.loads(text)
            rows = np.asarray(obj["tables"], dtype=np.float64)
            assignment = obj["assignment"]
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidTableError(f"malformed table JSON: {exc}") from exc
        if rows.ndim != 2 or rows.shape[1] != 64:
            raise InvalidTableError("each table must list 64 entries in zigzag order")
        natural = rows[:, UNZIGZAG].reshape(-1, 8, 8)
        return cls(natural, assignment, natural.copy())

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())
