"""Strict JSON experiment configuration."""
from __future__ import annotations

import copy
import difflib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .data import RingSpec
from .losses import LossKind, Penalty, PenaltyKind
from .training import AEConfig, GANConfig, TrainSchedule


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "name": None,
    "seed": 0,
    "output_dir": "runs",
    "dtype": "float32",
    "data": {
        "kind": "ring",
        "k": 8,
        "radius": 2.0,
        "sigma": 0.1,
        "n_train": 25_600,
        "images": None,
        "labels": None,
    },
    "model": {
        "z_dim": 2,
        "g_hidden": [128, 128],
        "d_hidden": [128, 128],
        "d1": 64,
        "d2": 128,
        "rf": True,
        "encoder_checkpoint": None,
    },
    "loss": {"kind": "non_saturating", "penalty": "none", "lambda": 10.0},
    "schedule": {
        "preset": "default",
        "g_steps": None,
        "d_steps": None,
        "cycles": 25_000,
        "batch_size": 256,
        "metrics_every": 500,
        "checkpoint_every": 0,
    },
    "optim": {"lr": 2e-4, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8},
    "ae": {"epochs": 30, "noise_std": 0.1, "batch_size": 256, "lr": 1e-3, "beta1": 0.9,
           "beta2": 0.999},
    "eval": {"n_samples": 2500, "n_pairs": 10_000, "threshold": None, "ms_ssim_levels": None,
             "classifier_epochs": 5},
}

PRESETS = {"default": (2, 1), "wgan_gp": (1, 5)}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    output_dir: Path
    dtype: str
    data: dict
    model: dict
    loss: dict
    schedule: dict
    optim: dict
    ae: dict
    eval: dict
    source: Path | None = None

    @property
    def ring(self) -> RingSpec | None:
        if self.data["kind"] != "ring":
            return None
        return RingSpec(self.data["k"], self.data["radius"], self.data["sigma"])

    def train_schedule(self, seed: int | None = None) -> TrainSchedule:
        s = self.schedule
        return TrainSchedule(g_steps=s["g_steps"], d_steps=s["d_steps"], cycles=s["cycles"],
                             batch_size=s["batch_size"], seed=self.seed if seed is None else seed,
                             metrics_every=s["metrics_every"],
                             checkpoint_every=s["checkpoint_every"])

    def gan_config(self, data_dim: int = 2) -> GANConfig:
        m, o = self.model, self.optim
        ring = self.ring
        return GANConfig(
            z_dim=m["z_dim"], data_dim=data_dim, g_hidden=tuple(m["g_hidden"]),
            d_hidden=tuple(m["d_hidden"]), d2=m["d2"],
            g_output="linear" if ring is not None else "tanh",
            loss=LossKind(self.loss["kind"]),
            penalty=Penalty(PenaltyKind(self.loss["penalty"]), self.loss["lambda"]),
            schedule=self.train_schedule(), lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"],
            eps=o["eps"], dtype=self.dtype, ring=ring, eval_samples=self.eval["n_samples"],
            coverage_threshold=self.eval["threshold"])

    def ae_config(self) -> AEConfig:
        a = self.ae
        return AEConfig(epochs=a["epochs"], noise_std=a["noise_std"], batch_size=a["batch_size"],
                        lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"])


def _reject_unknown(given: dict, allowed: dict, where: str) -> None:
    for key in given:
        if key not in allowed:
            hint = difflib.get_close_matches(key, list(allowed), n=1, cutoff=0.5)
            msg = f"unknown key {where}{key!r}"
            if hint:
                msg += f"; did you mean {hint[0]!r}?"
            raise ConfigError(msg)


def _merge(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, DEFAULTS, "")
    out = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if isinstance(DEFAULTS[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object, got {type(value).__name__}")
            _reject_unknown(value, DEFAULTS[key], f"{key}.")
            out[key].update(value)
        else:
            out[key] = value
    return out


def _int(cfg: dict, path: str, lo: int | None = 1, optional: bool = False) -> None:
    section, _, key = path.rpartition(".")
    holder = cfg[section] if section else cfg
    v = holder[key]
    if v is None and optional:
        return
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}, got {v}")


def _num(cfg: dict, path: str, lo: float | None = None, strict: bool = False,
         hi: float | None = None, optional: bool = False) -> None:
    section, _, key = path.rpartition(".")
    holder = cfg[section] if section else cfg
    v = holder[key]
    if v is None and optional:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if lo is not None and (v <= lo if strict else v < lo):
        raise ConfigError(f"{path}: must be {'>' if strict else '>='} {lo}, got {v}")
    if hi is not None and v >= hi:
        raise ConfigError(f"{path}: must be < {hi}, got {v}")
    holder[key] = float(v)


def _choice(cfg: dict, path: str, options) -> None:
    section, _, key = path.rpartition(".")
    v = (cfg[section] if section else cfg)[key]
    if v not in options:
        raise ConfigError(f"{path}: must be one of {sorted(options)}, got {v!r}")


def _widths(cfg: dict, path: str) -> None:
    section, _, key = path.rpartition(".")
    v = cfg[section][key]
    if (not isinstance(v, list) or not v
            or any(isinstance(w, bool) or not isinstance(w, int) or w < 1 for w in v)):
        raise ConfigError(f"{path}: expected a non-empty list of positive integers, got {v!r}")


def validate(cfg: dict, base_dir: Path) -> dict:
    if not isinstance(cfg["name"], str) or not cfg["name"]:
        raise ConfigError("name: a non-empty string is required")
    _int(cfg, "seed", lo=0)
    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        raise ConfigError("output_dir: expected a non-empty path string")
    _choice(cfg, "dtype", {"float32", "float64"})

    d = cfg["data"]
    _choice(cfg, "data.kind", {"ring", "idx"})
    _int(cfg, "data.k")
    _num(cfg, "data.radius", 0.0, strict=True)
    _num(cfg, "data.sigma", 0.0, strict=True)
    _int(cfg, "data.n_train", lo=2)
    for key in ("images", "labels"):
        if d[key] is None:
            continue
        if not isinstance(d[key], str):
            raise ConfigError(f"data.{key}: expected a path string")
        path = Path(d[key])
        if not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"data.{key}: file not found: {path}")
        d[key] = str(path)
    if d["kind"] == "idx" and d["images"] is None:
        raise ConfigError("data.images: required when data.kind is 'idx'")

    m = cfg["model"]
    _int(cfg, "model.z_dim")
    _widths(cfg, "model.g_hidden")
    _widths(cfg, "model.d_hidden")
    _int(cfg, "model.d1")
    _int(cfg, "model.d2")
    if not isinstance(m["rf"], bool):
        raise ConfigError(f"model.rf: expected true or false, got {m['rf']!r}")
    if m["encoder_checkpoint"] is not None:
        if not isinstance(m["encoder_checkpoint"], str):
            raise ConfigError("model.encoder_checkpoint: expected a path string")
        path = Path(m["encoder_checkpoint"])
        m["encoder_checkpoint"] = str(path if path.is_absolute() else base_dir / path)

    _choice(cfg, "loss.kind", {k.value for k in LossKind})
    _choice(cfg, "loss.penalty", {k.value for k in PenaltyKind})
    _num(cfg, "loss.lambda", 0.0)
    if cfg["loss"]["penalty"] != "none" and cfg["loss"]["lambda"] <= 0:
        raise ConfigError("loss.lambda: must be > 0 when a penalty is active")

    s = cfg["schedule"]
    _choice(cfg, "schedule.preset", set(PRESETS))
    g_def, d_def = PRESETS[s["preset"]]
    s["g_steps"] = g_def if s["g_steps"] is None else s["g_steps"]
    s["d_steps"] = d_def if s["d_steps"] is None else s["d_steps"]
    for key in ("g_steps", "d_steps", "cycles", "batch_size", "metrics_every"):
        _int(cfg, f"schedule.{key}")
    _int(cfg, "schedule.checkpoint_every", lo=0)

    _num(cfg, "optim.lr", 0.0)
    _num(cfg, "optim.beta1", 0.0, hi=1.0)
    _num(cfg, "optim.beta2", 0.0, hi=1.0)
    _num(cfg, "optim.eps", 0.0, strict=True)

    _int(cfg, "ae.epochs")
    _int(cfg, "ae.batch_size")
    _num(cfg, "ae.noise_std", 0.0)
    _num(cfg, "ae.lr", 0.0)
    _num(cfg, "ae.beta1", 0.0, hi=1.0)
    _num(cfg, "ae.beta2", 0.0, hi=1.0)

    _int(cfg, "eval.n_samples", lo=2)
    _int(cfg, "eval.n_pairs")
    _num(cfg, "eval.threshold", 0.0, optional=True)
    _int(cfg, "eval.ms_ssim_levels", optional=True)
    if cfg["eval"]["ms_ssim_levels"] is not None and cfg["eval"]["ms_ssim_levels"] > 5:
        raise ConfigError("eval.ms_ssim_levels: must be <= 5")
    _int(cfg, "eval.classifier_epochs")
    return cfg


def loads_config(text: str, base_dir: Path | str = ".", source: Path | None = None
                 ) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        where = f"{source}:" if source else "line "
        raise ConfigError(f"{where}{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    cfg = validate(_merge(raw), Path(base_dir))
    out = Path(cfg["output_dir"])
    if not out.is_absolute():
        out = Path(base_dir) / out
    cfg["output_dir"] = out
    return ExperimentConfig(source=source, **cfg)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: not valid UTF-8 ({e.reason})") from None
    return loads_config(text, path.parent, path)
