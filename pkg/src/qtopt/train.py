"""Per-image optimization loop: Adam steps, annealing, candidate binning."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .errors import InvalidCandidateError, InvalidParamsError
from .jpeg.entropy import estimate_size_bits
from .jpeg.image import ColorSpace, to_codec_space, ycbcr_to_rgb_matrix
from .jpeg.jfif import encode_quantized, quantize_image, reconstruct_image, to_display
from .jpeg.tables import ZIGZAG, QuantTableSet, default_assignment
from .jpeg.transform import DCT
from .loss import LossParams, MsSsimParams, RateParams, combined_loss, ms_ssim_np
from .qnet import QNet, QNetConfig, prepare_input
from .sampler import SamplePlan, sample_blocks

# ------------------------------------------------------------------ annealing


@dataclass(frozen=True)
class AnnealState:
    beta: float = 0.84
    gamma: float = 0.01
    temperature: float = 1.0
    tau: float = 0.97
    temp_scale: float = 0.95
    heavy_factor: float = 10.0
    beta_floor: float = 0.5
    gamma_cap: float = 1.0


def anneal_update(state, msssim, r_current, r_original):
    """One annealing step.

    Below the acceptable MS-SSIM ``tau`` the distortion weight beta is pushed
    up hard and the temperature is held. At or above ``tau`` beta relaxes by
    ``T * (1 - msssim)``, gamma grows by ``T * r_current / r_original`` and
    the temperature decays by ``temp_scale``.
    """
    if r_original <= 0:
        raise InvalidParamsError("r_original must be positive")
    s = state
    if msssim < s.tau:
        beta = min(1.0, s.beta + s.temperature * (s.tau - msssim) * s.heavy_factor)
        return replace(s, beta=max(s.beta_floor, beta))
    beta = max(s.beta_floor, min(1.0, s.beta - s.temperature * (1.0 - msssim)))
    gamma = min(s.gamma_cap, max(0.0, s.gamma + s.temperature * (r_current / r_original)))
    return replace(s, beta=beta, gamma=gamma, temperature=s.temperature * s.temp_scale)


# ------------------------------------------------------------------ candidates


@dataclass
class Candidate:
    epoch: int
    msssim: float
    rate_bits: float
    size_bytes: int
    tables: QuantTableSet
    data: bytes = field(default=b"", repr=False)

    def summary(self):
        return {
            "epoch": self.epoch,
            "msssim": self.msssim,
            "rate_bits": self.rate_bits,
            "size_bytes": self.size_bytes,
            "tables": json.loads(self.tables.to_json()),
        }


class CandidateBins:
    """MS-SSIM bins over [low, high], each keeping its lowest-rate candidate."""

    def __init__(self, width=0.01, low=0.80, high=1.00):
        n = int(round((high - low) / width))
        if n < 1:
            raise InvalidParamsError("bin range narrower than one bin")
        self.width = width
        self.edges = np.round(low + width * np.arange(n + 1), 12)
        self.edges[-1] = high
        self.best = [None] * n
        self.dropped = 0
        self.events = []

    def __len__(self):
        return len(self.best)

    def index(self, msssim):
        if msssim < self.edges[0]:
            return None
        i = int(np.searchsorted(self.edges, msssim, side="right")) - 1
        return min(i, len(self.best) - 1)

    def populated(self):
        return [i for i, c in enumerate(self.best) if c is not None]


def bin_candidate(bins, cand):
    """Store ``cand`` in its bin if it beats the incumbent's rate strictly."""
    if not 0.0 <= cand.msssim <= 1.0 or math.isnan(cand.msssim):
        raise InvalidCandidateError(f"MS-SSIM {cand.msssim} outside [0, 1]")
    i = bins.index(cand.msssim)
    if i is None:
        bins.dropped += 1
        return bins
    cur = bins.best[i]
    if cur is None or cand.rate_bits < cur.rate_bits:
        bins.best[i] = cand
        bins.events.append((cand.epoch, i, cand.rate_bits))
    return bins


def measure_candidate(img, tables, mp=MsSsimParams(), epoch=0, keep_data=True):
    """Hard encode/decode of the full image with integer tables."""
    t = tables if tables.quantized_export is not None else tables.exported()
    codec = to_codec_space(img)
    q = quantize_image(codec, t)
    planes = reconstruct_image(q, t, codec.height, codec.width, method="int")
    shown = to_display(planes, codec.colorspace, method="int")
    ref = img.planes if img.colorspace is not ColorSpace.YCBCR else to_display(
        img.planes, ColorSpace.YCBCR, method="float").planes
    ms = ms_ssim_np(ref / 255.0, shown.planes / 255.0, mp)
    zz = q.reshape(q.shape[0], -1, 64)[..., ZIGZAG]
    bits = estimate_size_bits(zz)
    enc = encode_quantized(q, t, codec.height, codec.width)
    return Candidate(epoch, float(ms), bits, enc.size_bytes, t,
                     enc.data if keep_data else b"")


# ------------------------------------------------------------------ mosaic


def mosaic_layout(n):
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    return rows, cols


def build_mosaic(blocks, rows, cols, fill=128.0):
    """(S, C, 8, 8) Tensor -> (C, rows*8, cols*8); empty slots hold ``fill``."""
    blocks = ad.as_tensor(blocks)
    s, c = blocks.shape[:2]
    missing = rows * cols - s
    if missing:
        blocks = ad.concat([blocks, Tensor(np.full((missing, c, 8, 8), fill))], axis=0)
    t = ad.reshape(blocks, (rows, cols, c, 8, 8))
    t = ad.transpose(t, (2, 0, 3, 1, 4))
    return ad.reshape(t, (c, rows * 8, cols * 8))


# ------------------------------------------------------------------ driver


@dataclass
class RunRecord:
    config: dict
    seeds: dict
    image: dict
    epochs: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    bin_events: list = field(default_factory=list)
    bins: list = field(default_factory=list)
    dropped: int = 0
    status: str = "ok"
    wall_clock_s: float = 0.0
    best: list = field(default_factory=list, repr=False)
    net: object = field(default=None, repr=False)

    def to_json(self):
        """Deterministic JSON; wall-clock time is excluded."""
        d = {
            "config": self.config,
            "seeds": self.seeds,
            "image": self.image,
            "status": self.status,
            "epochs": self.epochs,
            "candidates": self.candidates,
            "bin_events": self.bin_events,
            "bins": self.bins,
            "dropped": self.dropped,
        }
        return json.dumps(d, indent=1, sort_keys=True) + "\n"


def _to_distortion_space(t, rgb):
    # (C, H, W) codec-space pixels -> [0, 1] in the space distortion is scored
    if rgb:
        c, h, w = t.shape
        offset = np.array([0.0, 128.0, 128.0])[:, None]
        flat = ad.reshape(t, (c, h * w)) - offset
        t = ad.reshape(ad.matmul(ycbcr_to_rgb_matrix(), flat), (c, h, w))
    return t * (1.0 / 255.0)


class Trainer:
    """Holds the fixed per-run state so epochs can be stepped individually."""

    def __init__(self, img, cfg):
        cfg.validate()
        self.cfg = cfg
        self.img = img
        self.codec = to_codec_space(img)
        c = self.codec.channels
        nblocks = math.ceil(self.codec.height / 8) * math.ceil(self.codec.width / 8)
        self.n_samples = min(cfg.samples, nblocks)
        self.plan = SamplePlan(self.n_samples, cfg.top_frac, cfg.seed)
        self.blocks = sample_blocks(self.codec, self.plan)
        self.mp = MsSsimParams(cfg.msssim_scales, tuple(cfg.msssim_weights), cfg.c1, cfg.c2,
                               cfg.msssim_window)
        self.rp = RateParams(np.asarray(cfg.alpha) if cfg.alpha else RateParams().alpha)
        self.rows, self.cols = mosaic_layout(self.n_samples)
        if min(self.rows, self.cols) * 8 < self.mp.min_size:
            raise InvalidParamsError(
                f"{self.n_samples} sampled blocks give a {self.rows * 8}x{self.cols * 8} "
                f"mosaic, MS-SSIM needs {self.mp.min_size} px per side")
        num_tables = 1 if c == 1 else cfg.num_tables
        self.assignment = default_assignment(c, num_tables)
        self.qcfg = QNetConfig(channels=c, samples=self.n_samples, tables=num_tables,
                               embed_dim=cfg.embed_dim, conv_channels=tuple(cfg.conv_channels),
                               collapse=cfg.collapse, seed=cfg.seed,
                               warm_quality=cfg.warm_quality, output_gain=cfg.output_gain)
        self.net = QNet(self.qcfg)
        self.opt = Adam(self.net.parameters(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2,
                        cfg.adam_eps)
        self.x_in = prepare_input(self.blocks)
        self.coeffs = Tensor(self.blocks.coeffs)
        self.rgb = cfg.distortion_space == "rgb" and self.codec.colorspace is ColorSpace.YCBCR
        self.reference = _to_distortion_space(
            build_mosaic(Tensor(self.blocks.pixels), self.rows, self.cols), self.rgb)
        self.anneal = AnnealState(cfg.beta0, cfg.gamma0, cfg.temperature0, cfg.tau,
                                  cfg.temp_scale, cfg.heavy_factor, cfg.beta_floor,
                                  cfg.gamma_cap)
        self.r_original = None
        self.bins = CandidateBins(cfg.bin_width, cfg.bin_low, cfg.bin_high)

    def loss(self, quantizer=None):
        """Forward pass on the sampled blocks; returns (loss, breakdown, tables)."""
        tables = self.net(self.x_in)
        per_ch = ad.gather(tables, list(self.assignment), axis=0)
        if quantizer is None:
            q = ad.soft_quantize(self.coeffs, per_ch, mode=self.cfg.quantizer)
        else:
            q = quantizer(self.coeffs, per_ch)
        pix = ad.matmul(ad.matmul(DCT.T, q * per_ch), DCT) + 128.0
        recon = _to_distortion_space(build_mosaic(pix, self.rows, self.cols), self.rgb)
        q_zz = ad.gather(ad.reshape(q, (self.n_samples, self.codec.channels, 64)), ZIGZAG, -1)
        lp = LossParams(self.anneal.beta, self.anneal.gamma)
        loss, bd = combined_loss(self.reference, recon, q_zz, lp, self.mp, self.rp,
                                 temperature=self.anneal.temperature)
        return loss, bd, tables

    def measure(self, tables_data, epoch):
        t = QuantTableSet(tables_data.copy(), self.assignment).exported()
        return measure_candidate(self.img, t, self.mp, epoch)


def train_image(img, cfg):
    start = time.perf_counter()
    tr = Trainer(img, cfg)
    rec = RunRecord(
        config=cfg.to_dict(),
        seeds={"sampler": cfg.seed, "init": cfg.seed},
        image={"width": img.width, "height": img.height, "channels": img.channels,
               "colorspace": img.colorspace.value, "samples": tr.n_samples},
    )

    def consider(cand):
        rec.candidates.append({
            "epoch": cand.epoch, "msssim": cand.msssim, "rate_bits": cand.rate_bits,
            "size_bytes": cand.size_bytes, "bin": tr.bins.index(cand.msssim),
        })
        bin_candidate(tr.bins, cand)

    for epoch in range(cfg.epochs):
        loss, bd, tables = tr.loss()
        bd.epoch = epoch
        if not np.isfinite(bd.loss):
            rec.status = f"aborted: non-finite loss at epoch {epoch}"
            rec.epochs.append(bd.to_dict())
            break
        if tr.r_original is None:
            tr.r_original = bd.rate if bd.rate > 0 else 1.0
        cand = None
        if epoch % cfg.measure_stride == 0:
            cand = tr.measure(tables.data, epoch)
        loss.backward()
        tr.opt.step()
        ms_now = cand.msssim if cand is not None else bd.msssim
        tr.anneal = anneal_update(tr.anneal, ms_now, bd.rate, tr.r_original)
        if cand is not None:
            consider(cand)
        rec.epochs.append(bd.to_dict())

    if rec.status == "ok":
        final = tr.net(tr.x_in)
        consider(tr.measure(final.data, cfg.epochs))

    rec.dropped = tr.bins.dropped
    rec.bin_events = [list(e) for e in tr.bins.events]
    for i, c in enumerate(tr.bins.best):
        if c is None:
            continue
        entry = {"bin": i, "low": float(tr.bins.edges[i]), "high": float(tr.bins.edges[i + 1])}
        entry.update(c.summary())
        rec.bins.append(entry)
    rec.best = [c for c in tr.bins.best]
    rec.net = tr.net
    rec.wall_clock_s = time.perf_counter() - start
    return rec
