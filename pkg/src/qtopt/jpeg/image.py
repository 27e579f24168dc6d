"""Image planes, color conversion, and file ingestion."""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError


class ColorSpace(str, enum.Enum):
    GRAY = "Gray"
    RGB = "RGB"
    YCBCR = "YCbCr"


@dataclass
class ImagePlanes:
    """Channel-first float planes, shape (C, H, W), samples in [0, 255]."""

    planes: np.ndarray
    colorspace: ColorSpace

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3 or p.shape[0] not in (1, 3):
            raise InvalidInputError(f"planes must be (C,H,W) with C in {{1,3}}, got {p.shape}")
        if p.shape[1] < 1 or p.shape[2] < 1:
            raise InvalidInputError("image must be at least 1x1")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 255.0:
            raise InvalidInputError("samples must lie in [0, 255]")
        cs = ColorSpace(self.colorspace)
        if p.shape[0] == 1 and cs is not ColorSpace.GRAY:
            raise InvalidInputError("single-channel images must be tagged Gray")
        if p.shape[0] == 3 and cs is ColorSpace.GRAY:
            raise InvalidInputError("three-channel images cannot be tagged Gray")
        self.planes = p
        self.colorspace = cs

    @property
    def channels(self):
        return self.planes.shape[0]

    @property
    def height(self):
        return self.planes.shape[1]

    @property
    def width(self):
        return self.planes.shape[2]

    def to_uint8(self):
        """(H, W) or (H, W, 3) uint8 array, rounded and clamped."""
        a = np.clip(np.floor(self.planes + 0.5), 0, 255).astype(np.uint8)
        return a[0] if self.channels == 1 else np.moveaxis(a, 0, -1)

    @classmethod
    def from_uint8(cls, array, colorspace=None):
        a = np.asarray(array)
        if a.ndim == 2:
            return cls(a[None].astype(np.float64), ColorSpace.GRAY)
        if a.ndim == 3 and a.shape[2] == 3:
            return cls(np.moveaxis(a, -1, 0).astype(np.float64), colorspace or ColorSpace.RGB)
        raise InvalidInputError(f"expected HxW or HxWx3 array, got {a.shape}")


# BT.601 full range, as used by JFIF
_RGB2YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168735892, -0.331264108, 0.5],
    [0.5, -0.418687589, -0.081312411],
])
_YCC2RGB = np.linalg.inv(_RGB2YCC)
_CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


def rgb_to_ycbcr_matrix():
    return _RGB2YCC.copy()


def ycbcr_to_rgb_matrix():
    return _YCC2RGB.copy()


def rgb_to_ycbcr(img):
    if img.colorspace is not ColorSpace.RGB:
        raise InvalidInputError(f"rgb_to_ycbcr needs RGB input, got {img.colorspace.value}")
    out = np.einsum("ij,jhw->ihw", _RGB2YCC, img.planes) + _CHROMA_OFFSET[:, None, None]
    return ImagePlanes(np.clip(out, 0.0, 255.0), ColorSpace.YCBCR)


def ycbcr_to_rgb(img):
    if img.colorspace is not ColorSpace.YCBCR:
        raise InvalidInputError(f"ycbcr_to_rgb needs YCbCr input, got {img.colorspace.value}")
    out = np.einsum("ij,jhw->ihw", _YCC2RGB, img.planes - _CHROMA_OFFSET[:, None, None])
    return ImagePlanes(np.clip(out, 0.0, 255.0), ColorSpace.RGB)


def _libjpeg_ycc_tables():
    scalebits = 16
    one_half = 1 << (scalebits - 1)

    def fix(v):
        return int(v * (1 << scalebits) + 0.5)

    x = np.arange(256, dtype=np.int64) - 128
    cr_r = (fix(1.40200) * x + one_half) >> scalebits
    cb_b = (fix(1.77200) * x + one_half) >> scalebits
    cr_g = -fix(0.71414) * x
    cb_g = -fix(0.34414) * x + one_half
    return cr_r, cb_b, cr_g, cb_g


_CR_R, _CB_B, _CR_G, _CB_G = _libjpeg_ycc_tables()


def ycbcr_to_rgb_int(ycc):
    """libjpeg's fixed-point YCbCr->RGB on uint8 planes (3, H, W).

    Bit-exact with jdcolor.c, so decoded RGB matches libjpeg-based readers.
    """
    y, cb, cr = (np.asarray(p, dtype=np.int64) for p in ycc)
    r = y + _CR_R[cr]
    g = y + ((_CB_G[cb] + _CR_G[cr]) >> 16)
    b = y + _CB_B[cb]
    return np.clip(np.stack([r, g, b]), 0, 255).astype(np.uint8)


def to_codec_space(img):
    """Gray stays Gray, RGB becomes YCbCr, YCbCr passes through."""
    if img.colorspace is ColorSpace.RGB:
        return rgb_to_ycbcr(img)
    return img


def pad_to_blocks(planes):
    """Edge-replicate (C, H, W) planes up to multiples of 8."""
    c, h, w = planes.shape
    ph = (-h) % 8
    pw = (-w) % 8
    if ph == 0 and pw == 0:
        return planes
    return np.pad(planes, ((0, 0), (0, ph), (0, pw)), mode="edge")


_RAW_HEADER = struct.Struct("<III")


def write_raw(path, img):
    """Raw planar format: uint32 width, height, channels (LE) then C*H*W bytes."""
    a = np.clip(np.floor(img.planes + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(img.width, img.height, img.channels))
        fh.write(a.tobytes())


def read_raw(path, colorspace=None):
    data = Path(path).read_bytes()
    if len(data) < _RAW_HEADER.size:
        raise InvalidInputError(f"{path}: truncated raw header")
    w, h, c = _RAW_HEADER.unpack_from(data)
    if c not in (1, 3):
        raise InvalidInputError(f"{path}: raw channel count must be 1 or 3, got {c}")
    body = np.frombuffer(data, dtype=np.uint8, offset=_RAW_HEADER.size)
    if body.size != w * h * c:
        raise InvalidInputError(f"{path}: expected {w * h * c} samples, found {body.size}")
    cs = ColorSpace.GRAY if c == 1 else ColorSpace(colorspace or ColorSpace.RGB)
    return ImagePlanes(body.reshape(c, h, w).astype(np.float64), cs)


def load_image(path):
    """Read PNG/BMP (8-bit, via Pillow) or the raw planar format."""
    path = Path(path)
    if path.suffix.lower() == ".raw":
        return read_raw(path)
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "1"):
                arr = np.asarray(im.convert("L"))
            elif im.mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr", "LA"):
                if im.mode == "LA":
                    arr = np.asarray(im.convert("L"))
                else:
                    arr = np.asarray(im.convert("RGB"))
            else:
                raise InvalidInputError(f"{path}: unsupported image mode {im.mode} (8-bit only)")
    except OSError as exc:
        raise InvalidInputError(f"{path}: cannot read image: {exc}") from exc
    return ImagePlanes.from_uint8(arr)


def save_png(path, img):
    from PIL import Image

    if img.colorspace is ColorSpace.YCBCR:
        img = ycbcr_to_rgb(img)
    Image.fromarray(img.to_uint8()).save(path, format="PNG")
