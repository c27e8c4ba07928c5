"""Configuration: packaged defaults overridable by a user TOML file."""
from __future__ import annotations

import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .retarget import TrainConfig
from .search import CostConfig
from .stitch import StitchConfig


@dataclass(frozen=True)
class Configs:
    cost: CostConfig
    stitch: StitchConfig
    train: TrainConfig


def _packaged_defaults() -> dict:
    data = resources.files("phonosynth.data").joinpath("defaults.toml").read_bytes()
    return tomllib.loads(data.decode("utf-8"))


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def cost_config(doc: dict) -> CostConfig:
    d = doc.get("cost", {})
    return CostConfig(
        c_phoneme=float(d.get("c_phoneme", 1.0)),
        c_viseme=float(d.get("c_viseme", 10.0)),
        c_time=float(d.get("c_time", 4.0)),
        kappa_len=float(d.get("kappa_len", 20.0)),
        max_segment_len=int(d.get("max_segment_len", 6)),
    )


def stitch_config(doc: dict) -> StitchConfig:
    d = doc.get("stitch", {})
    return StitchConfig(
        gaussian_sigma_frames=float(d.get("gaussian_sigma_frames", 1.0)),
        gaussian_radius_frames=int(d.get("gaussian_radius_frames", 2)),
        closure_frames=int(d.get("closure_frames", 2)),
    )


def train_config(doc: dict) -> TrainConfig:
    d = doc.get("train", {})
    return TrainConfig(
        learning_rate=float(d.get("learning_rate", 2e-4)),
        decay_factor=float(d.get("decay_factor", 0.5)),
        decay_period=int(d.get("decay_period", 30)),
        clip_norm=float(d.get("clip_norm", 5.0)),
        batch_size=int(d.get("batch_size", 100)),
        max_epochs=int(d.get("max_epochs", 100)),
        lambda_accel=float(d.get("lambda_accel", 10.0)),
        seed=int(d.get("seed", 0)),
    )


def load_configs(path: str | Path | None = None) -> Configs:
    doc = _packaged_defaults()
    if path is not None:
        with open(path, "rb") as f:
            doc = _merge(doc, tomllib.load(f))
    return Configs(cost=cost_config(doc), stitch=stitch_config(doc), train=train_config(doc))


def load_toml(path: str | Path) -> dict:
    with open(path, "rb") as f:
        return tomllib.load(f)
