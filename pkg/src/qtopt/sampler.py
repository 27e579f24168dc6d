"""Variance-biased block sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPlanError
from .jpeg.image import ColorSpace, pad_to_blocks, rgb_to_ycbcr
from .jpeg.transform import blockify, forward_dct


@dataclass(frozen=True)
class SamplePlan:
    total_samples: int = 256
    top_fraction: float = 0.75
    rng_seed: int = 0

    def __post_init__(self):
        if self.total_samples < 1:
            raise InvalidPlanError("total_samples must be at least 1")
        if not 0.0 <= self.top_fraction <= 1.0:
            raise InvalidPlanError("top_fraction must lie in [0, 1]")

    @property
    def n_top(self):
        return math.ceil(self.top_fraction * self.total_samples - 1e-9)


@dataclass
class BlockSet:
    """S sampled blocks, all channels per coordinate.

    ``coeffs`` are level-shifted DCT coefficients (S, C, 8, 8), ``pixels``
    the source samples (S, C, 8, 8), ``coords`` block (row, col) pairs.
    """

    coeffs: np.ndarray
    pixels: np.ndarray
    coords: np.ndarray
    variance: np.ndarray

    @property
    def n(self):
        return self.coeffs.shape[0]

    @property
    def channels(self):
        return self.coeffs.shape[1]


def _luma(img):
    if img.colorspace is ColorSpace.RGB:
        img = rgb_to_ycbcr(img)
    return img.planes[0]


def block_variance(img):
    """Population variance of the luma plane per 8x8 block, shape (BY, BX)."""
    y = pad_to_blocks(_luma(img)[None])
    blocks = blockify(y)[0]
    return blocks.var(axis=(-2, -1))


def sample_blocks(img, plan):
    var = block_variance(img)
    by, bx = var.shape
    total = by * bx
    s = plan.total_samples
    if s > total:
        raise InvalidPlanError(f"plan asks for {s} blocks, image has {total}")
    order = np.argsort(-var.ravel(), kind="stable")
    n_top = min(plan.n_top, s)
    top = order[:n_top]
    rest = np.sort(order[n_top:])
    rng = np.random.default_rng(plan.rng_seed)
    extra = rng.choice(rest, size=s - n_top, replace=False) if s > n_top else rest[:0]
    chosen = np.concatenate([top, extra]).astype(np.intp)

    planes = pad_to_blocks(img.planes)
    tiles = blockify(planes)  # (C, BY, BX, 8, 8)
    rows, cols = np.divmod(chosen, bx)
    pixels = np.ascontiguousarray(tiles[:, rows, cols].transpose(1, 0, 2, 3))
    return BlockSet(
        coeffs=forward_dct(pixels),
        pixels=pixels,
        coords=np.stack([rows, cols], axis=1),
        variance=var.ravel()[chosen],
    )
