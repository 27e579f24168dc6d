"""The table-emitting network.

Pipeline per forward pass (S samples, C channels, Q tables, E embed dim)::

    zigzag blocks S x C x 64
      -> linear embed          S x C x E      (softplus)
      -> strided conv1d        S x C x 64
      -> reduce over samples   1 x C x 64     (mean, or learned weights)
      -> inverse zigzag        1 x C x 8 x 8
      -> conv2d stack          1 x Q x 8 x 8  (+ positional bias, softplus, >= 1)
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidParamsError, ShapeError
from .jpeg.tables import (ANNEX_K_CHROMA, ANNEX_K_LUMA, UNZIGZAG, ZIGZAG, QuantTableSet,
                          quality_scaled)

INPUT_SCALE = 1.0 / 1024.0
CHECKPOINT_FORMAT = "qtopt-params/1"


@dataclass(frozen=True)
class QNetConfig:
    channels: int = 3
    samples: int = 256
    tables: int = 2
    embed_dim: int = 256
    conv_channels: tuple = (16,)
    kernel: int = 3
    collapse: str = "mean"
    seed: int = 0
    warm_quality: int = 75
    output_gain: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.channels not in (1, 3):
            raise InvalidParamsError("channels must be 1 or 3")
        if self.tables not in (1, 2, 3):
            raise InvalidParamsError("tables must be 1, 2 or 3")
        if self.embed_dim < 64 or self.embed_dim % 64:
            raise InvalidParamsError("embed_dim must be a multiple of 64, at least 64")
        if self.samples < 1:
            raise InvalidParamsError("samples must be >= 1")
        if self.collapse not in ("mean", "weighted"):
            raise InvalidParamsError(f"unknown collapse mode {self.collapse!r}")
        if self.kernel % 2 == 0:
            raise InvalidParamsError("conv kernel must be odd to keep 8x8")


def warm_tables(cfg):
    luma = quality_scaled(ANNEX_K_LUMA, cfg.warm_quality)
    chroma = quality_scaled(ANNEX_K_CHROMA, cfg.warm_quality)
    return np.stack([luma] + [chroma] * (cfg.tables - 1)).astype(np.float64)


def softplus_inverse(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def _uniform_fan_in(rng, shape, fan_in, gain=1.0):
    bound = gain * np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class QNet:
    def __init__(self, cfg, params=None):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg)

    def parameters(self):
        return list(self.params.values())

    def __call__(self, zz_in):
        return forward_tensor(self.cfg, self.params, zz_in)

    def tables(self, blocks, assignment):
        t = self(prepare_input(blocks))
        return export_tables(QuantTableSet(t.data.copy(), assignment))


def init_params(cfg):
    """Fan-in uniform init; output bias warm-starts at the Annex K tables."""
    rng = np.random.default_rng(cfg.seed)
    c, e = cfg.channels, cfg.embed_dim
    stride = e // 64
    p = {}
    p["embed_w"] = _uniform_fan_in(rng, (64, e), 64)
    p["embed_b"] = np.zeros(e)
    p["collapse_w"] = _uniform_fan_in(rng, (c, c, stride), c * stride)
    p["collapse_b"] = np.zeros(c)
    if cfg.collapse == "weighted":
        p["sample_w"] = np.full(cfg.samples, 1.0 / cfg.samples)
    widths = (c,) + cfg.conv_channels + (cfg.tables,)
    k = cfg.kernel
    for i in range(len(widths) - 1):
        last = i == len(widths) - 2
        fan_in = widths[i] * k * k
        gain = cfg.output_gain if last else 1.0
        p[f"conv{i}_w"] = _uniform_fan_in(rng, (widths[i + 1], widths[i], k, k), fan_in, gain)
        p[f"conv{i}_b"] = np.zeros(widths[i + 1])
    p["out_bias"] = softplus_inverse(warm_tables(cfg))
    return {name: Tensor(v, requires_grad=True) for name, v in p.items()}


def prepare_input(blocks):
    """BlockSet -> (S, C, 64) zigzag coefficients scaled by 1/1024."""
    co = np.asarray(blocks.coeffs if hasattr(blocks, "coeffs") else blocks)
    s, c = co.shape[:2]
    return co.reshape(s, c, 64)[..., ZIGZAG] * INPUT_SCALE


def forward_tensor(cfg, params, zz_in):
    x = ad.as_tensor(zz_in)
    if x.ndim != 3 or x.shape[1] != cfg.channels or x.shape[2] != 64:
        raise ShapeError(f"expected (S, {cfg.channels}, 64) input, got {x.shape}")
    s = x.shape[0]
    h = ad.softplus(ad.matmul(x, params["embed_w"]) + params["embed_b"])
    stride = cfg.embed_dim // 64
    h = ad.conv1d(h, params["collapse_w"], params["collapse_b"], stride=stride)
    if cfg.collapse == "weighted":
        w = params["sample_w"]
        if w.shape[0] != s:
            raise ShapeError(f"collapse layer expects {w.shape[0]} samples, got {s}")
        h = ad.tsum(h * ad.reshape(w, (s, 1, 1)), axis=0, keepdims=True)
    else:
        h = ad.mean(h, axis=0, keepdims=True)
    h = ad.reshape(ad.gather(h, UNZIGZAG, axis=-1), (1, cfg.channels, 8, 8))
    n_conv = len(cfg.conv_channels) + 1
    pad = cfg.kernel // 2
    for i in range(n_conv):
        h = ad.conv2d(h, params[f"conv{i}_w"], params[f"conv{i}_b"], padding=pad)
        if i < n_conv - 1:
            h = ad.softplus(h)
    h = ad.reshape(h, (cfg.tables, 8, 8)) + params["out_bias"]
    return ad.clamp_min(ad.softplus(h), 1.0)


def forward(cfg, params, blocks, assignment=None):
    """Continuous QuantTableSet from a BlockSet."""
    t = forward_tensor(cfg, params, prepare_input(blocks))
    if assignment is None:
        assignment = (0,) if cfg.channels == 1 else tuple(min(i, cfg.tables - 1) for i in (0, 1, 2))
    return QuantTableSet(t.data.copy(), assignment)


def export_tables(t):
    return t.exported()


def save_checkpoint(path, cfg, params, extra=None):
    """Write ``<path>.json`` (manifest) and ``<path>.bin`` (float64 LE blob)."""
    path = Path(path)
    entries = []
    offset = 0
    blobs = []
    for name, t in params.items():
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "count": int(arr.size)})
        offset += arr.size
        blobs.append(arr.ravel())
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "dtype": "<f8",
        "config": asdict(cfg),
        "seed": cfg.seed,
        "params": entries,
    }
    if extra:
        manifest["extra"] = extra
    json_path = path.with_suffix(".json")
    bin_path = path.with_suffix(".bin")
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    np.concatenate(blobs).astype("<f8").tofile(bin_path)
    return json_path, bin_path


def load_checkpoint(path):
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise InvalidParamsError(f"unknown checkpoint format {manifest.get('format')!r}")
    blob = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    cfg = QNetConfig(**manifest["config"])
    params = {}
    for e in manifest["params"]:
        arr = blob[e["offset"]:e["offset"] + e["count"]].reshape(e["shape"])
        params[e["name"]] = Tensor(arr.astype(np.float64), requires_grad=True)
    return cfg, params
