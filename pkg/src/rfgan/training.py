"""Denoising-autoencoder pretraining and GAN training with a frozen encoder."""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

from .autodiff import Adam, Parameter, Streams, Tensor, grad, no_grad, save_checkpoint
from .data import RingSampler, RingSpec, corrupt
from .losses import LossKind, Penalty, PenaltyKind, d_loss, g_loss, gradient_penalty
from .metrics import mode_coverage
from .networks import (
    MLP,
    LayerSpec,
    NetworkSpec,
    RFDiscriminator,
    build_mlp_body,
    build_mlp_generator,
)

log = logging.getLogger(__name__)

StepHook = Callable[[str, int, float], None]


class TrainingDiverged(RuntimeError):
    pass


class Sampler(Protocol):
    dim: int

    def sample(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray: ...


@dataclass(frozen=True)
class TrainSchedule:
    g_steps: int = 2
    d_steps: int = 1
    cycles: int = 25_000
    batch_size: int = 256
    seed: int = 0
    metrics_every: int = 500
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("g_steps", "d_steps", "cycles", "batch_size", "metrics_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"schedule.{name} must be positive")
        if self.checkpoint_every < 0:
            raise ValueError("schedule.checkpoint_every must be >= 0")

    @classmethod
    def wgan_gp(cls, **kw) -> "TrainSchedule":
        return cls(g_steps=1, d_steps=5, **kw)


class MetricLog:
    """Rows of (step, metric, value); serialises to a ``step,metric,value`` CSV."""

    def __init__(self) -> None:
        self.rows: list[tuple[int, str, float]] = []
        self._last: dict[str, int] = {}

    def append(self, step: int, name: str, value: float) -> None:
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"metric {name!r} at step {step} is not finite: {value}")
        if step < self._last.get(name, step):
            raise ValueError(f"metric {name!r}: step {step} precedes step {self._last[name]}")
        self._last[name] = step
        self.rows.append((int(step), name, value))

    def series(self, name: str) -> list[tuple[int, float]]:
        return [(s, v) for s, n, v in self.rows if n == name]

    def last(self, name: str) -> float:
        values = self.series(name)
        if not values:
            raise KeyError(name)
        return values[-1][1]

    def names(self) -> list[str]:
        return list(dict.fromkeys(n for _, n, _ in self.rows))

    def to_csv(self) -> str:
        lines = ["step,metric,value"] + [f"{s},{n},{v!r}" for s, n, v in self.rows]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_bytes(self.to_csv().encode("utf-8"))

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, MetricLog) and self.rows == other.rows


def parameter_digest(params: Iterable[Parameter]) -> str:
    """SHA-256 over names, shapes and raw bytes of the given parameters."""
    h = hashlib.sha256()
    for p in params:
        h.update(p.name.encode())
        h.update(str(p.shape).encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


# -- autoencoder pretraining --------------------------------------------------

@dataclass(frozen=True)
class AEConfig:
    epochs: int = 30
    noise_std: float = 0.1
    batch_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("ae.epochs and ae.batch_size must be positive")
        if self.noise_std < 0:
            raise ValueError("ae.noise_std must be >= 0")
        if not self.lr >= 0:
            raise ValueError("ae.lr must be >= 0")


def reconstruction_mse(encoder: MLP, decoder: MLP, data: np.ndarray, batch: int = 4096) -> float:
    total, n = 0.0, 0
    with no_grad():
        for i in range(0, len(data), batch):
            x = data[i:i + batch]
            diff = decoder(encoder(x)).data.astype(np.float64) - x
            total += float((diff * diff).sum())
            n += diff.size
    return total / n


def pretrain_autoencoder(data: np.ndarray, config: AEConfig, rng: np.random.Generator,
                         encoder_spec: NetworkSpec, decoder_spec: NetworkSpec,
                         dtype=np.float32) -> tuple[MLP, MLP, MetricLog]:
    """Fit decode(encode(corrupt(x))) to the clean x by mean squared error.

    The returned encoder is frozen.
    """
    from .networks import build_autoencoder

    data = np.asarray(data, dtype=dtype).reshape(len(data), -1)
    if data.shape[1] != encoder_spec.in_dim:
        raise ValueError(f"data dim {data.shape[1]} != encoder input dim {encoder_spec.in_dim}")
    enc, dec = build_autoencoder(encoder_spec, decoder_spec, rng, dtype)
    params = enc.parameters() + dec.parameters()
    opt = Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    metrics = MetricLog()
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        running, batches = 0.0, 0
        for i in range(0, len(data), config.batch_size):
            clean = data[order[i:i + config.batch_size]]
            noisy = corrupt(clean, config.noise_std, rng)
            diff = dec(enc(noisy)) - Tensor(clean)
            loss = (diff * diff).mean()
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"autoencoder loss became {value} at epoch {epoch}, "
                                       f"step {step}; lower ae.lr or check data scaling")
            opt.step(grad(loss, params))
            running += value
            batches += 1
            step += 1
        metrics.append(epoch, "ae_loss", running / batches)
        metrics.append(epoch, "recon_mse", reconstruction_mse(enc, dec, data))
        log.debug("ae epoch %d loss %.5f", epoch, running / batches)
    enc.freeze()
    return enc, dec, metrics


# -- GAN training -------------------------------------------------------------

@dataclass(frozen=True)
class GANConfig:
    z_dim: int = 2
    data_dim: int = 2
    g_hidden: tuple[int, ...] = (128, 128)
    d_hidden: tuple[int, ...] = (128, 128)
    d2: int = 128
    g_output: str = "linear"
    loss: LossKind = LossKind.NON_SATURATING
    penalty: Penalty = field(default_factory=Penalty)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    dtype: str = "float32"
    ring: RingSpec | None = field(default_factory=RingSpec)
    eval_samples: int = 2500
    coverage_threshold: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind(self.loss))
        if self.penalty.kind is PenaltyKind.WGAN_GP and self.loss is not LossKind.WASSERSTEIN:
            log.warning("WGAN-GP penalty used with %s loss", self.loss.value)
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def generator_spec(self) -> NetworkSpec:
        return build_mlp_generator(self.z_dim, self.g_hidden, self.data_dim, self.g_output)

    def body_spec(self) -> NetworkSpec:
        return build_mlp_body(self.data_dim, self.d_hidden, self.d2)


def _default_sampler(config: GANConfig, streams: Streams) -> Sampler:
    if config.ring is None:
        raise ValueError("no data sampler given and config.ring is None")
    return RingSampler(config.ring, streams["data"], config.np_dtype)


def head_balance_diagnostic(D: RFDiscriminator, real, fake) -> tuple[float, float]:
    """Real-minus-fake margins of the two head contributions.

    Returns ``(mean(h1 @ w1 | real) - mean(h1 @ w1 | fake), same for h2 @ w2)``.
    """
    real, fake = np.asarray(getattr(real, "data", real)), np.asarray(getattr(fake, "data", fake))
    if real.ndim != 2 or real.shape[1] != D.in_dim or fake.ndim != 2 or fake.shape[1] != D.in_dim:
        raise ValueError(f"batches must be (n, {D.in_dim}), got {real.shape} and {fake.shape}")
    with no_grad():
        h1r, h2r = D.features(real)
        h1f, h2f = D.features(fake)
        disc = float((h2r @ D.w2).data.mean()) - float((h2f @ D.w2).data.mean())
        if h1r is None:
            return 0.0, disc
        rep = float((h1r @ D.w1).data.mean()) - float((h1f @ D.w1).data.mean())
    return rep, disc


def _head_magnitudes(D: RFDiscriminator, x: np.ndarray) -> tuple[float, float]:
    with no_grad():
        h1, h2 = D.features(x)
        disc = float(np.abs((h2 @ D.w2).data).mean())
        rep = 0.0 if h1 is None else float(np.abs((h1 @ D.w1).data).mean())
    return rep, disc


def _check(value: float, what: str, cycle: int) -> float:
    if not math.isfinite(value):
        raise TrainingDiverged(f"{what} became {value} at cycle {cycle}")
    return value


def _check_outputs(y: Tensor, what: str, cycle: int) -> Tensor:
    if not np.isfinite(y.data).all():
        raise TrainingDiverged(f"{what} produced non-finite outputs at cycle {cycle}")
    return y


def _save_gan(path, G: MLP, D: RFDiscriminator) -> None:
    state = G.state_dict()
    state.update(D.state_dict())
    save_checkpoint(path, state)


def train_gan(config: GANConfig, encoder: MLP | None = None, data: Sampler | None = None,
              step_hook: StepHook | None = None, checkpoint_dir=None,
              metrics: MetricLog | None = None) -> tuple[MLP, RFDiscriminator, MetricLog]:
    """Alternate D and G updates per the schedule; D sees the frozen encoder features.

    Each cycle performs ``d_steps`` discriminator updates, then ``g_steps``
    generator updates, each on a fresh latent batch.  With ``encoder=None``
    this is the plain GAN.
    """
    sched = config.schedule
    dtype = config.np_dtype
    streams = Streams(sched.seed)
    if encoder is not None and any(p.trainable for p in encoder.parameters()):
        raise ValueError("encoder must be frozen before GAN training")
    data = data if data is not None else _default_sampler(config, streams)
    if data.dim != config.data_dim:
        raise ValueError(f"data dim {data.dim} != config.data_dim {config.data_dim}")

    G = MLP(config.generator_spec(), streams["init.G"], prefix="G", dtype=dtype)
    head = "sigmoid" if config.loss.uses_sigmoid else "linear"
    D = RFDiscriminator(config.body_spec(), encoder, streams["init.D"], head=head, dtype=dtype)
    opt_kw = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    opt_d = Adam(D.parameters(), **opt_kw)
    opt_g = Adam(G.parameters(), **opt_kw)
    z_rng, pen_rng, eval_rng = streams["z"], streams["penalty"], streams["eval"]
    metrics = metrics if metrics is not None else MetricLog()
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    bs = sched.batch_size

    def latent(n: int) -> np.ndarray:
        return z_rng.standard_normal((n, config.z_dim)).astype(dtype)

    d_step = g_step = 0
    for cycle in range(1, sched.cycles + 1):
        for _ in range(sched.d_steps):
            real = data.sample(bs)
            with no_grad():
                fake = G(latent(bs)).data
            out_r, out_f = D.forward(real), D.forward(fake)
            _check_outputs(out_r.y, "discriminator", cycle)
            _check_outputs(out_f.y, "discriminator", cycle)
            loss = d_loss(config.loss, out_r.y, out_f.y)
            d_value = _check(loss.item(), "discriminator loss", cycle)
            pen_value = 0.0
            if config.penalty.active:
                pen = gradient_penalty(config.penalty, D, real, fake, pen_rng)
                pen_value = _check(pen.item(), "gradient penalty", cycle)
                loss = loss + pen
            opt_d.step(grad(loss, opt_d.params))
            d_step += 1
            if step_hook is not None:
                step_hook("d", d_step, d_value + pen_value)
        for _ in range(sched.g_steps):
            loss = g_loss(config.loss, _check_outputs(D(G(latent(bs))), "discriminator", cycle))
            g_value = _check(loss.item(), "generator loss", cycle)
            opt_g.step(grad(loss, opt_g.params))
            g_step += 1
            if step_hook is not None:
                step_hook("g", g_step, g_value)

        if cycle % sched.metrics_every == 0 or cycle == sched.cycles:
            metrics.append(cycle, "d_loss", d_value)
            metrics.append(cycle, "g_loss", g_value)
            if config.penalty.active:
                metrics.append(cycle, "d_penalty", pen_value)
            metrics.append(cycle, "mean_y_real", float(out_r.y.data.mean()))
            metrics.append(cycle, "mean_y_fake", float(out_f.y.data.mean()))
            _log_eval(config, G, D, data, eval_rng, cycle, metrics)
        if ckpt_dir is not None and sched.checkpoint_every and cycle % sched.checkpoint_every == 0:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            _save_gan(ckpt_dir / f"cycle_{cycle:07d}.rfgn", G, D)
    return G, D, metrics


def _log_eval(config: GANConfig, G: MLP, D: RFDiscriminator, data: Sampler,
              rng: np.random.Generator, cycle: int, metrics: MetricLog) -> None:
    dtype = config.np_dtype
    bs = config.schedule.batch_size
    if config.ring is not None and config.data_dim == 2:
        with no_grad():
            z = rng.standard_normal((config.eval_samples, config.z_dim)).astype(dtype)
            samples = G(z).data
        report = mode_coverage(samples, config.ring.means(), config.ring.sigma,
                               config.coverage_threshold)
        metrics.append(cycle, "modes_covered", report.modes_covered)
        metrics.append(cycle, "high_quality_fraction", report.high_quality_fraction)
    if D.encoder is not None:
        real = data.sample(bs, rng)
        with no_grad():
            fake = G(rng.standard_normal((bs, config.z_dim)).astype(dtype)).data
        rep, disc = head_balance_diagnostic(D, real, fake)
        metrics.append(cycle, "repr_margin", rep)
        metrics.append(cycle, "disc_margin", disc)
        rep_abs, disc_abs = _head_magnitudes(D, np.concatenate([real, fake]))
        metrics.append(cycle, "head_abs_repr", rep_abs)
        metrics.append(cycle, "head_abs_disc", disc_abs)


# -- plain GAN reference path ---------------------------------------------------

def plain_discriminator_spec(config: GANConfig) -> NetworkSpec:
    body = config.body_spec()
    head = "sigmoid" if config.loss.uses_sigmoid else "linear"
    return NetworkSpec(body.layers + (LayerSpec(config.d2, 1, head),), role="discriminator",
                       leaky_slope=body.leaky_slope)


def train_plain_gan(config: GANConfig, data: Sampler | None = None,
                    step_hook: StepHook | None = None) -> tuple[MLP, MLP]:
    """Straight-line GAN with an ordinary dense discriminator.

    Kept deliberately independent of RFDiscriminator as the reference that the
    RF path must reproduce exactly when no encoder is attached.
    """
    sched = config.schedule
    dtype = config.np_dtype
    streams = Streams(sched.seed)
    data = data if data is not None else _default_sampler(config, streams)
    G = MLP(config.generator_spec(), streams["init.G"], prefix="G", dtype=dtype)
    D = MLP(plain_discriminator_spec(config), streams["init.D"], prefix="D", dtype=dtype)
    opt_kw = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    opt_d, opt_g = Adam(D.parameters(), **opt_kw), Adam(G.parameters(), **opt_kw)
    z_rng, pen_rng = streams["z"], streams["penalty"]
    bs = sched.batch_size
    d_step = g_step = 0
    for cycle in range(1, sched.cycles + 1):
        for _ in range(sched.d_steps):
            real = data.sample(bs)
            with no_grad():
                fake = G(z_rng.standard_normal((bs, config.z_dim)).astype(dtype)).data
            loss = d_loss(config.loss, D(real), D(fake))
            value = loss.item()
            if config.penalty.active:
                pen = gradient_penalty(config.penalty, D, real, fake, pen_rng)
                value += pen.item()
                loss = loss + pen
            opt_d.step(grad(loss, opt_d.params))
            d_step += 1
            if step_hook is not None:
                step_hook("d", d_step, value)
        for _ in range(sched.g_steps):
            z = z_rng.standard_normal((bs, config.z_dim)).astype(dtype)
            loss = g_loss(config.loss, D(G(z)))
            opt_g.step(grad(loss, opt_g.params))
            g_step += 1
            if step_hook is not None:
                step_hook("g", g_step, loss.item())
    return G, D
