"""MS-SSIM, l1, the coefficient-magnitude rate proxy, and the combined loss.

Two MS-SSIM paths exist: a Tensor path used during training and a plain
numpy path (``ms_ssim_np``) used for whole-image measurement. They share the
formulas and are cross-checked in the tests.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInputError, InvalidParamsError

EPS = 1e-8


@dataclass(frozen=True)
class MsSsimParams:
    scales: int = 3
    weights: tuple = ()
    c1: float = 0.01
    c2: float = 0.03
    window: int = 3

    def __post_init__(self):
        if self.scales < 1:
            raise InvalidParamsError("MS-SSIM needs at least one scale")
        if self.window < 3 or self.window % 2 == 0:
            raise InvalidParamsError("window must be odd and >= 3")
        w = tuple(float(v) for v in self.weights) or (1.0 / self.scales,) * self.scales
        if len(w) != self.scales or any(v <= 0 for v in w):
            raise InvalidParamsError(f"need {self.scales} positive scale weights, got {w}")
        object.__setattr__(self, "weights", w)

    @property
    def min_size(self):
        return self.window * 2 ** (self.scales - 1)


def default_alpha():
    i = np.arange(64, dtype=np.float64)
    a = 1.0 + i / 63.0
    a[0] = 1.0
    return a


@dataclass(frozen=True)
class RateParams:
    alpha: np.ndarray = field(default_factory=default_alpha)

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.shape[-1] != 64 or a.ndim > 2:
            raise InvalidParamsError(f"alpha must be (64,) or (C, 64), got {a.shape}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise InvalidParamsError("alpha entries must be finite and >= 0")
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True)
class LossParams:
    beta: float = 0.84
    gamma: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidParamsError(f"beta must lie in [0, 1], got {self.beta}")
        if self.gamma < 0.0:
            raise InvalidParamsError(f"gamma must be >= 0, got {self.gamma}")


@dataclass
class LossBreakdown:
    epoch: int
    msssim: float
    msssim_term: float
    l1: float
    l1_term: float
    rate: float
    rate_term: float
    loss: float
    beta: float
    gamma: float
    temperature: float = 0.0
    clamped: bool = False

    def to_dict(self):
        return asdict(self)


# ------------------------------------------------------------ tensor path


def _box(t, window):
    # t: (C, H, W) -> valid-mode uniform window mean (C, H-w+1, W-w+1)
    c, h, w = t.shape
    k = np.full((1, 1, window, window), 1.0 / (window * window))
    y = ad.conv2d(ad.reshape(t, (c, 1, h, w)), k)
    return ad.reshape(y, (c, y.shape[2], y.shape[3]))


def ssim_cs(x, y, p):
    """Mean SSIM and mean contrast-structure term over windows and channels."""
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    if x.shape != y.shape:
        raise InvalidInputError(f"ssim inputs differ in shape: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = ad.reshape(x, (1,) + x.shape), ad.reshape(y, (1,) + y.shape)
    if min(x.shape[-2:]) < p.window:
        raise InvalidInputError(f"window {p.window} larger than input {x.shape[-2:]}")
    mx, my = _box(x, p.window), _box(y, p.window)
    sxx = _box(x * x, p.window) - mx * mx
    syy = _box(y * y, p.window) - my * my
    sxy = _box(x * y, p.window) - mx * my
    cs_map = (2.0 * sxy + p.c2) / (sxx + syy + p.c2)
    lum = (2.0 * mx * my + p.c1) / (mx * mx + my * my + p.c1)
    return ad.mean(lum * cs_map), ad.mean(cs_map)


def _pool2(t):
    c, h, w = t.shape
    h2, w2 = h // 2, w // 2
    if (h, w) != (2 * h2, 2 * w2):
        t = t[:, :2 * h2, :2 * w2]
    return ad.mean(ad.reshape(t, (c, h2, 2, w2, 2)), axis=(2, 4))


def ms_ssim(x, y, p=MsSsimParams()):
    return _ms_ssim(x, y, p)[0]


def _ms_ssim(x, y, p):
    # also reports whether any per-scale term hit the 1e-8 floor
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    if x.ndim == 2:
        x, y = ad.reshape(x, (1,) + x.shape), ad.reshape(y, (1,) + y.shape)
    if min(x.shape[-2:]) < p.min_size:
        raise InvalidParamsError(
            f"{p.scales} scales with window {p.window} need >= {p.min_size} px, "
            f"input is {x.shape[-2:]}")
    out = None
    clamped = False
    for i in range(p.scales):
        ssim, cs = ssim_cs(x, y, p)
        term = ssim if i == p.scales - 1 else cs
        clamped |= bool(term.data <= EPS)
        factor = ad.power(ad.clamp_min(term, EPS), p.weights[i])
        out = factor if out is None else out * factor
        if i < p.scales - 1:
            x, y = _pool2(x), _pool2(y)
    return out, clamped


def l1(x, y):
    return ad.mean(ad.tabs(ad.as_tensor(x) - ad.as_tensor(y)))


def rate_estimate(q_zz, p=RateParams()):
    """(1/N) * sum over blocks and zigzag index of alpha_i * |Q_n[i]|.

    ``q_zz`` is (N, 64) or (N, C, 64). Channels are summed.
    """
    q = ad.as_tensor(q_zz)
    if q.ndim < 2 or q.shape[0] == 0 or q.shape[-1] != 64:
        raise InvalidInputError(f"rate_estimate needs (N, [C,] 64) blocks, got {q.shape}")
    n = q.shape[0]
    return ad.tsum(ad.tabs(q) * p.alpha) / float(n)


def combined_loss(x, y, q_zz, lp, mp=MsSsimParams(), rp=RateParams(), epoch=0,
                  temperature=0.0):
    """-beta*log(MS-SSIM) + (1-beta)*l1 + gamma*R; returns (loss, breakdown).

    Each MS-SSIM factor is floored at 1e-8 before the power and the log; the
    breakdown records when that guard fired.
    """
    ms, clamped = _ms_ssim(x, y, mp)
    ms_safe = ad.clamp_min(ms, EPS) if ms.data <= EPS else ms
    ms_term = -lp.beta * ad.log(ms_safe)
    d1 = l1(x, y)
    l1_term = (1.0 - lp.beta) * d1
    r = rate_estimate(q_zz, rp)
    r_term = lp.gamma * r
    loss = ms_term + l1_term + r_term
    bd = LossBreakdown(
        epoch=epoch, msssim=float(ms.data), msssim_term=float(ms_term.data),
        l1=float(d1.data), l1_term=float(l1_term.data), rate=float(r.data),
        rate_term=float(r_term.data), loss=float(loss.data), beta=lp.beta,
        gamma=lp.gamma, temperature=temperature, clamped=clamped,
    )
    return loss, bd


# ------------------------------------------------------------ numpy path


def _box_np(a, window):
    h, w = a.shape[-2:]
    ho, wo = h - window + 1, w - window + 1
    acc = np.zeros(a.shape[:-2] + (ho, wo))
    for i in range(window):
        for j in range(window):
            acc += a[..., i:i + ho, j:j + wo]
    return acc / (window * window)


def _ssim_cs_np(x, y, p):
    mx, my = _box_np(x, p.window), _box_np(y, p.window)
    sxx = _box_np(x * x, p.window) - mx * mx
    syy = _box_np(y * y, p.window) - my * my
    sxy = _box_np(x * y, p.window) - mx * my
    cs_map = (2.0 * sxy + p.c2) / (sxx + syy + p.c2)
    lum = (2.0 * mx * my + p.c1) / (mx * mx + my * my + p.c1)
    return float(np.mean(lum * cs_map)), float(np.mean(cs_map))


def ms_ssim_np(x, y, p=MsSsimParams()):
    """MS-SSIM of two (C, H, W) or (H, W) arrays already scaled to [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidInputError(f"ms_ssim inputs differ in shape: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if min(x.shape[-2:]) < p.min_size:
        raise InvalidParamsError(
            f"{p.scales} scales with window {p.window} need >= {p.min_size} px, "
            f"input is {x.shape[-2:]}")
    out = 1.0
    for i in range(p.scales):
        ssim, cs = _ssim_cs_np(x, y, p)
        term = ssim if i == p.scales - 1 else cs
        out *= max(term, EPS) ** p.weights[i]
        if i < p.scales - 1:
            c, h, w = x.shape
            h2, w2 = h // 2, w // 2
            x = x[:, :2 * h2, :2 * w2].reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))
            y = y[:, :2 * h2, :2 * w2].reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))
    return out
