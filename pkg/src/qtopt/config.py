"""Run configuration: one flat dataclass, read from ``key = value`` text."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, QtoptError


@dataclass
class RunConfig:
    # block sampler
    samples: int = 256
    top_frac: float = 0.75
    seed: int = 0
    # training
    epochs: int = 100
    lr: float = 4e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    quantizer: str = "ste"
    distortion_space: str = "rgb"
    measure_stride: int = 1
    # annealing
    beta0: float = 0.84
    gamma0: float = 0.01
    tau: float = 0.97
    temperature0: float = 1.0
    temp_scale: float = 0.95
    heavy_factor: float = 10.0
    beta_floor: float = 0.5
    gamma_cap: float = 1.0
    # candidate bins
    bin_width: float = 0.01
    bin_low: float = 0.80
    bin_high: float = 1.00
    # perceptual loss
    msssim_scales: int = 3
    msssim_window: int = 3
    msssim_weights: tuple = ()
    c1: float = 0.01
    c2: float = 0.03
    alpha: tuple = ()
    # network
    num_tables: int = 2
    embed_dim: int = 256
    conv_channels: tuple = (16,)
    collapse: str = "mean"
    warm_quality: int = 75
    output_gain: float = 0.1

    def validate(self):
        """Check every field against the owning module's preconditions."""
        from .loss import LossParams, MsSsimParams, RateParams
        from .qnet import QNetConfig
        from .sampler import SamplePlan

        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.epochs >= 0, "epochs must be >= 0")
        need(self.lr >= 0, "lr must be >= 0")
        need(0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "Adam betas must be in [0,1)")
        need(self.adam_eps > 0, "adam_eps must be > 0")
        need(self.quantizer in ("ste", "cubic"), "quantizer must be 'ste' or 'cubic'")
        need(self.distortion_space in ("rgb", "codec"), "distortion_space must be rgb|codec")
        need(self.measure_stride >= 1, "measure_stride must be >= 1")
        need(0 < self.tau <= 1, "tau must be in (0, 1]")
        need(self.temperature0 > 0, "temperature0 must be > 0")
        need(0 < self.temp_scale < 1, "temp_scale must be in (0, 1)")
        need(self.heavy_factor >= 0, "heavy_factor must be >= 0")
        need(0 <= self.beta_floor <= 1, "beta_floor must be in [0, 1]")
        need(self.beta_floor <= self.beta0 <= 1, "beta0 must lie in [beta_floor, 1]")
        need(0 <= self.gamma0 <= self.gamma_cap, "gamma0 must lie in [0, gamma_cap]")
        need(self.bin_width > 0, "bin_width must be > 0")
        need(0 <= self.bin_low < self.bin_high <= 1, "need 0 <= bin_low < bin_high <= 1")
        try:
            SamplePlan(self.samples, self.top_frac, self.seed)
            MsSsimParams(self.msssim_scales, tuple(self.msssim_weights), self.c1, self.c2,
                         self.msssim_window)
            if self.alpha:
                RateParams(list(self.alpha))
            LossParams(self.beta0, self.gamma0)
            QNetConfig(channels=3, samples=1, tables=self.num_tables, embed_dim=self.embed_dim,
                       conv_channels=tuple(self.conv_channels), collapse=self.collapse,
                       seed=self.seed, warm_quality=self.warm_quality,
                       output_gain=self.output_gain)
        except QtoptError as exc:
            raise ConfigError(str(exc)) from exc
        need(1 <= self.warm_quality <= 100, "warm_quality must be in 1..100")
        if self.alpha:
            need(len(self.alpha) == 64, "alpha needs 64 entries")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, text):
    f = _FIELDS.get(name)
    if f is None:
        raise ConfigError(f"unknown config key {name!r}")
    default = f.default
    text = text.strip()
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            if not text:
                return ()
            items = [t.strip() for t in text.split(",") if t.strip()]
            if name == "conv_channels":
                return tuple(int(t) for t in items)
            return tuple(float(t) for t in items)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_config_text(text, base=None):
    cfg = base or RunConfig()
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        changes[key] = _coerce(key, value)
    return cfg.replace(**changes)


def load_config(path, base=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` strings (CLI --set) on top of ``cfg``."""
    changes = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        k, v = pair.split("=", 1)
        k = k.strip().replace("-", "_")
        changes[k] = _coerce(k, v)
    return cfg.replace(**changes)


def dump_config(cfg):
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, list):
            v = ",".join(repr(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
