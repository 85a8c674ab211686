"""Pipeline configuration: defaults, JSON config files, CLI overrides.

Keys are dotted names (``band.low``, ``alphas``, ``vit.hidden_dim``,
``train.learning_rate`` ...).  A config file may spell them flat or nested.
Precedence: command-line flag > config file > default.
"""
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InputError
from .magnify import DEFAULT_ALPHAS, HEART_BAND, BandpassSpec
from .stmap import STRIDE_SECONDS, WINDOW_FRAMES
from .train import TrainConfig
from .vit import ViTConfig

# the descriptor dropout rate lives under train.dropout_rate
VIT_KEYS = tuple(f.name for f in fields(ViTConfig) if f.name != "dropout_rate")


@dataclass
class PipelineConfig:
    band: tuple = HEART_BAND
    alphas: tuple = DEFAULT_ALPHAS
    levels: int = 3
    window_frames: int = WINDOW_FRAMES
    stride_s: float = STRIDE_SECONDS
    vit: ViTConfig = field(default_factory=ViTConfig.toy)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 0 < self.band[0] < self.band[1]:
            raise InputError(f"band must satisfy 0 < low < high, got {self.band}")
        if len(self.alphas) != self.levels or any(a < 0 for a in self.alphas):
            raise InputError(f"need {self.levels} non-negative alphas, got {self.alphas}")
        if self.window_frames != WINDOW_FRAMES:
            raise InputError(f"window.frames must be {WINDOW_FRAMES} (the patch sequence length)")
        if self.stride_s <= 0:
            raise InputError("window.stride_s must be positive")

    @property
    def bandpass(self):
        return BandpassSpec(*self.band)

    def to_dict(self):
        out = {"band.low": self.band[0], "band.high": self.band[1], "alphas": list(self.alphas),
               "levels": self.levels, "window.frames": self.window_frames, "window.stride_s": self.stride_s}
        out.update({f"vit.{n}": getattr(self.vit, n) for n in VIT_KEYS})
        out.update({f"train.{f.name}": getattr(self.train, f.name) for f in fields(TrainConfig)})
        return out


def flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config_file(path):
    try:
        return flatten(json.loads(Path(path).read_text()))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc


def build_config(file_values=None, overrides=None):
    """Merge defaults, file values and overrides (later wins) into a PipelineConfig."""
    merged = PipelineConfig().to_dict()
    known = set(merged)
    for layer in (file_values or {}, overrides or {}):
        for k, v in layer.items():
            if v is None:
                continue
            if k not in known:
                raise InputError(f"unknown config key {k!r}")
            merged[k] = v
    vit = {n: int(merged[f"vit.{n}"]) for n in VIT_KEYS}
    tr = {f.name: merged[f"train.{f.name}"] for f in fields(TrainConfig)}
    return PipelineConfig(
        band=(float(merged["band.low"]), float(merged["band.high"])),
        alphas=tuple(float(a) for a in merged["alphas"]),
        levels=int(merged["levels"]),
        window_frames=int(merged["window.frames"]),
        stride_s=float(merged["window.stride_s"]),
        vit=ViTConfig(**vit, dropout_rate=float(merged["train.dropout_rate"])),
        train=TrainConfig(**tr),
    )


def parse_band(text):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise InputError(f"band must look like LOW:HIGH, got {text!r}") from exc
    return lo, hi


def parse_floats(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc
