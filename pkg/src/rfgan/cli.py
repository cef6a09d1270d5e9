"""Command-line pipeline: pretrain-ae, train, eval, interpolate, plot.

Every subcommand writes into ``<out>/<subcommand>/`` and always leaves a
``metrics.csv`` there, so two runs with the same config and seed can be
compared byte for byte.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .autodiff import CheckpointError, Streams, load_checkpoint, no_grad, save_checkpoint
from .benchmark import ae_specs
from .classifier import predict_proba, ring_posterior, train_classifier
from .config import ConfigError, ExperimentConfig, parse_config
from .data import (
    ArraySampler,
    IDXFormatError,
    load_idx,
    load_idx_labels,
    normalize_unit_range,
    sample_ring,
)
from .metrics import MS_SSIM_WEIGHTS, MIN_COARSE_SIDE, mode_coverage, pairwise_ms_ssim
from .metrics import proxy_classifier_score
from .networks import MLP
from .svg import emit_scatter_svg
from .training import (
    MetricLog,
    TrainingDiverged,
    parameter_digest,
    pretrain_autoencoder,
    reconstruction_mse,
    train_gan,
)

log = logging.getLogger("rfgan")

AE_FILE = "ae.rfgn"
GAN_FILE = "gan.rfgn"


class CLIError(RuntimeError):
    pass


# -- shared plumbing -----------------------------------------------------------

class Run:
    def __init__(self, cfg: ExperimentConfig, out: Path, seed: int):
        self.cfg, self.out, self.seed = cfg, out, seed
        self.streams = Streams(seed)
        self._images = None

    def dir(self, sub: str) -> Path:
        d = self.out / sub
        d.mkdir(parents=True, exist_ok=True)
        return d

    @property
    def is_ring(self) -> bool:
        return self.cfg.data["kind"] == "ring"

    def images(self) -> tuple[np.ndarray, tuple[int, int], np.ndarray | None]:
        """IDX images scaled to [-1, 1] and flattened, their (H, W), optional labels."""
        if self._images is None:
            raw = load_idx(self.cfg.data["images"])
            labels = None
            if self.cfg.data["labels"] is not None:
                labels = load_idx_labels(self.cfg.data["labels"])
                if len(labels) != len(raw):
                    raise CLIError(f"{len(raw)} images but {len(labels)} labels")
            x = normalize_unit_range(raw).reshape(len(raw), -1).astype(self.cfg.dtype)
            self._images = (x, raw.shape[1:], labels)
        return self._images

    def data_dim(self) -> int:
        return 2 if self.is_ring else self.images()[0].shape[1]

    def gan_config(self):
        from dataclasses import replace
        gc = self.cfg.gan_config(self.data_dim())
        return replace(gc, schedule=replace(gc.schedule, seed=self.seed))

    def generator(self, checkpoint: Path) -> MLP:
        state = _load(checkpoint)
        G = MLP(self.gan_config().generator_spec(), None, prefix="G", dtype=self.cfg.dtype)
        _load_into(G, state, checkpoint)
        return G


def _load(path: Path) -> dict:
    if not Path(path).is_file():
        raise CLIError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _load_into(net: MLP, state: dict, path: Path) -> None:
    try:
        net.load_state_dict(state)
    except (KeyError, ValueError) as e:
        raise CLIError(f"{path}: checkpoint does not match the configured model: {e}") from None


def _finite(values: dict) -> bool:
    return all(v is None or math.isfinite(v) for v in values.values())


def _write_metrics(log_: MetricLog, d: Path) -> None:
    log_.write_csv(d / "metrics.csv")


# -- subcommands ---------------------------------------------------------------

def cmd_pretrain(run: Run, args) -> int:
    cfg = run.cfg
    gc = run.gan_config()
    if run.is_ring:
        data = sample_ring(cfg.ring, cfg.data["n_train"], run.streams["ae.data"], gc.np_dtype)
    else:
        data = run.images()[0]
    enc_spec, dec_spec = ae_specs(gc, cfg.model["d1"])
    enc, dec, metrics = pretrain_autoencoder(data, cfg.ae_config(), run.streams["ae.train"],
                                             enc_spec, dec_spec, gc.np_dtype)
    # oracle: predicting the per-feature mean
    baseline = float(((data - data.mean(axis=0)) ** 2).mean())
    final = reconstruction_mse(enc, dec, data)
    epochs = cfg.ae["epochs"]
    metrics.append(epochs, "mean_predictor_mse", baseline)
    d = run.dir("pretrain-ae")
    state = enc.state_dict()
    state.update(dec.state_dict())
    save_checkpoint(d / AE_FILE, state)
    _write_metrics(metrics, d)
    log.info("pretrain-ae: recon mse %.5f (mean predictor %.5f) -> %s", final, baseline,
             d / AE_FILE)
    return 0 if math.isfinite(final) else 1


def _resolve_encoder(run: Run, flag: str | None) -> Path:
    for candidate in (flag, run.cfg.model["encoder_checkpoint"]):
        if candidate is not None:
            path = Path(candidate)
            if not path.is_file():
                raise CLIError(f"encoder checkpoint required: {path} does not exist")
            return path
    default = run.out / "pretrain-ae" / AE_FILE
    if default.is_file():
        return default
    raise CLIError("encoder checkpoint required: model.rf is true but no encoder was given "
                   "(run pretrain-ae first, pass --encoder, or set model.encoder_checkpoint)")


def cmd_train(run: Run, args) -> int:
    cfg = run.cfg
    gc = run.gan_config()
    encoder = None
    if cfg.model["rf"]:
        path = _resolve_encoder(run, args.encoder)
        enc_spec, _ = ae_specs(gc, cfg.model["d1"])
        encoder = MLP(enc_spec, None, prefix="E", dtype=gc.np_dtype)
        _load_into(encoder, _load(path), path)
        encoder.freeze()
        log.info("train: encoder from %s", path)
    sampler = None
    if not run.is_ring:
        sampler = ArraySampler(run.images()[0], run.streams["train.data"], gc.np_dtype)
    d = run.dir("train")
    before = parameter_digest(encoder.parameters()) if encoder is not None else None
    G, D, metrics = train_gan(gc, encoder=encoder, data=sampler,
                              checkpoint_dir=d / "checkpoints")
    if encoder is not None and parameter_digest(encoder.parameters()) != before:
        raise CLIError("encoder parameters changed during GAN training")
    state = G.state_dict()
    state.update(D.state_dict())
    save_checkpoint(d / GAN_FILE, state)
    _write_metrics(metrics, d)
    log.info("train: %d cycles -> %s", gc.schedule.cycles, d / GAN_FILE)
    return 0


def _checkpoint(run: Run, flag: str | None) -> Path:
    return Path(flag) if flag is not None else run.out / "train" / GAN_FILE


def _ms_ssim_levels(shape: tuple[int, int], requested: int | None) -> int:
    if requested is not None:
        return requested
    for levels in range(len(MS_SSIM_WEIGHTS), 1, -1):
        f = 2 ** (levels - 1)
        if min(-(-s // f) for s in shape) >= MIN_COARSE_SIDE:
            return levels
    return 1


def cmd_eval(run: Run, args) -> int:
    cfg = run.cfg
    gc = run.gan_config()
    G = run.generator(_checkpoint(run, args.checkpoint))
    rng = run.streams["eval"]
    n = cfg.eval["n_samples"]
    with no_grad():
        samples = G(rng.standard_normal((n, gc.z_dim)).astype(gc.np_dtype)).data
    result = {"ms_ssim_mean": None, "modes_covered": None, "high_quality_fraction": None,
              "proxy_score": None}
    if run.is_ring:
        ring = cfg.ring
        report = mode_coverage(samples, ring.means(), ring.sigma, cfg.eval["threshold"])
        result["modes_covered"] = report.modes_covered
        result["high_quality_fraction"] = report.high_quality_fraction
        result["proxy_score"] = proxy_classifier_score(
            ring_posterior(samples, ring.means(), ring.sigma))
    else:
        x, shape, labels = run.images()
        imgs = samples.reshape(n, *shape)
        levels = _ms_ssim_levels(shape, cfg.eval["ms_ssim_levels"])
        result["ms_ssim_mean"] = pairwise_ms_ssim(imgs, cfg.eval["n_pairs"], rng, levels,
                                                  value_range=(-1.0, 1.0))
        if labels is not None:
            clf = train_classifier(x, labels, run.streams["eval.classifier"],
                                   epochs=cfg.eval["classifier_epochs"])
            result["proxy_score"] = proxy_classifier_score(predict_proba(clf, samples))
    metrics = MetricLog()
    for key, value in result.items():
        if value is not None and math.isfinite(value):
            metrics.append(0, key, value)
    d = run.dir("eval")
    (d / "eval.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _write_metrics(metrics, d)
    print(json.dumps(result, sort_keys=True))
    return 0 if _finite(result) else 1


def _vector(text: str | None, dim: int, rng: np.random.Generator, what: str) -> np.ndarray:
    if text is None:
        return rng.standard_normal(dim)
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise CLIError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if v.shape != (dim,):
        raise CLIError(f"{what}: latent dimension is {dim}, got {len(v)} values")
    if not np.isfinite(v).all():
        raise CLIError(f"{what}: values must be finite")
    return v


def interpolate(G: MLP, z0: np.ndarray, z1: np.ndarray, steps: int, dtype
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """G((1 - a) z0 + a z1) for a = i / (steps - 1); rows are evaluated one at a time so the
    endpoints reproduce G(z0) and G(z1) exactly."""
    if steps < 2:
        raise CLIError(f"steps must be >= 2, got {steps}")
    alphas = np.arange(steps) / (steps - 1)
    z = ((1.0 - alphas)[:, None] * z0[None, :] + alphas[:, None] * z1[None, :]).astype(dtype)
    with no_grad():
        x = np.concatenate([G(z[i:i + 1]).data for i in range(steps)])
    return alphas, z, x


def cmd_interpolate(run: Run, args) -> int:
    gc = run.gan_config()
    G = run.generator(_checkpoint(run, args.checkpoint))
    rng = run.streams["interpolate"]
    z0 = _vector(args.z0, gc.z_dim, rng, "--z0")
    z1 = _vector(args.z1, gc.z_dim, rng, "--z1")
    alphas, z, x = interpolate(G, z0, z1, args.steps, gc.np_dtype)
    d = run.dir("interpolate")
    header = ["alpha"] + [f"z{j}" for j in range(z.shape[1])] + [f"x{j}" for j in range(x.shape[1])]
    lines = [",".join(header)]
    metrics = MetricLog()
    for i in range(len(alphas)):
        row = [float(alphas[i])] + [float(v) for v in z[i]] + [float(v) for v in x[i]]
        lines.append(",".join(repr(v) for v in row))
        metrics.append(i, "alpha", float(alphas[i]))
        metrics.append(i, "output_norm", float(np.linalg.norm(x[i].astype(np.float64))))
    (d / "interpolation.csv").write_bytes(("\n".join(lines) + "\n").encode())
    _write_metrics(metrics, d)
    return 0 if np.isfinite(x).all() else 1


def cmd_plot(run: Run, args) -> int:
    if not run.is_ring:
        raise CLIError("plot draws 2D scatter panels and needs data.kind 'ring'")
    cfg = run.cfg
    gc = run.gan_config()
    G = run.generator(_checkpoint(run, args.checkpoint))
    rng = run.streams["plot"]
    n = cfg.eval["n_samples"]
    with no_grad():
        fake = G(rng.standard_normal((n, gc.z_dim)).astype(gc.np_dtype)).data
    real = sample_ring(cfg.ring, n, rng)
    means = cfg.ring.means()
    d = run.dir("plot")
    emit_scatter_svg(fake, means, d / "samples.svg", title=f"{cfg.name}: generated")
    emit_scatter_svg(real, means, d / "real.svg", title=f"{cfg.name}: data")
    report = mode_coverage(fake, means, cfg.ring.sigma, cfg.eval["threshold"])
    metrics = MetricLog()
    metrics.append(0, "n_points", n)
    metrics.append(0, "modes_covered", report.modes_covered)
    metrics.append(0, "high_quality_fraction", report.high_quality_fraction)
    _write_metrics(metrics, d)
    return 0 if np.isfinite(fake).all() else 1


COMMANDS = {
    "pretrain-ae": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "interpolate": cmd_interpolate,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfgan", description="GANs with representative features "
                                "from a pretrained autoencoder")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("pretrain-ae", help="pretrain the denoising autoencoder")
    t = sub.add_parser("train", help="train the GAN (with the frozen encoder if model.rf)")
    t.add_argument("--encoder", help="autoencoder checkpoint (default: <out>/pretrain-ae/ae.rfgn)")
    for name, text in (("eval", "sample-quality metrics"),
                       ("interpolate", "latent-space interpolation"),
                       ("plot", "SVG scatter of samples against the ring means")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--checkpoint", help="GAN checkpoint (default: <out>/train/gan.rfgn)")
        if name == "interpolate":
            s.add_argument("--z0", help="comma-separated start latent (default: random)")
            s.add_argument("--z1", help="comma-separated end latent (default: random)")
            s.add_argument("--steps", type=int, default=9)
    return p


def _threads() -> int:
    raw = os.environ.get("RFGAN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise CLIError(f"RFGAN_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise CLIError(f"RFGAN_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        from threadpoolctl import threadpool_limits
        cfg = parse_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise CLIError("--seed must be >= 0")
        seed = cfg.seed if args.seed is None else args.seed
        out = Path(args.out) if args.out is not None else cfg.output_dir
        run = Run(cfg, out, seed)
        with threadpool_limits(limits=_threads()):
            return COMMANDS[args.command](run, args)
    except (ConfigError, CLIError, CheckpointError, IDXFormatError, TrainingDiverged) as e:
        print(f"rfgan: error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"rfgan: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
