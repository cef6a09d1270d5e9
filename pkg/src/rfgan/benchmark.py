"""The 8-Gaussian ring pipeline: AE pretraining, RF and baseline GAN runs."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Streams
from .data import RingSpec, sample_ring
from .networks import MLP, build_mlp_body, build_mlp_generator
from .training import AEConfig, GANConfig, TrainSchedule, pretrain_autoencoder, train_gan

D1 = 64
AE_TRAIN_SIZE = 25_600


def ae_specs(config: GANConfig, d1: int = D1):
    """Encoder mirrors the D body, decoder mirrors G, with code dim d1."""
    enc = build_mlp_body(config.data_dim, config.d_hidden, d1, role="encoder")
    dec = build_mlp_generator(d1, config.g_hidden, config.data_dim, config.g_output)
    return enc, dec


def pretrain_ring_encoder(config: GANConfig, ae: AEConfig = AEConfig(), seed: int = 0,
                          n_train: int = AE_TRAIN_SIZE, d1: int = D1):
    """Pretrain the denoising AE on a fixed ring sample; returns (encoder, decoder, log, data)."""
    streams = Streams(seed)
    ring = config.ring or RingSpec()
    data = sample_ring(ring, n_train, streams["ae.data"], config.np_dtype)
    enc_spec, dec_spec = ae_specs(config, d1)
    enc, dec, log = pretrain_autoencoder(data, ae, streams["ae.train"], enc_spec, dec_spec,
                                         config.np_dtype)
    return enc, dec, log, data


@dataclass
class RingResult:
    seed: int
    rf: bool
    modes_covered: int
    high_quality_fraction: float
    seconds: float


def run_ring(seed: int, rf: bool, cycles: int = 25_000, encoder: MLP | None = None,
             config: GANConfig | None = None) -> RingResult:
    config = config or GANConfig()
    config = replace(config, schedule=replace(config.schedule, seed=seed, cycles=cycles,
                                              metrics_every=min(config.schedule.metrics_every,
                                                                cycles)))
    t0 = time.process_time()
    if rf and encoder is None:
        encoder = pretrain_ring_encoder(config, seed=seed)[0]
    _, _, log = train_gan(config, encoder=encoder if rf else None)
    return RingResult(seed, rf, int(log.last("modes_covered")),
                      log.last("high_quality_fraction"), time.process_time() - t0)


def mode_collapse_benchmark(seeds=(0, 1, 2, 3, 4), cycles: int = 25_000,
                            config: GANConfig | None = None, progress=None) -> dict:
    """RF and baseline runs over the seeds; returns per-run results and the two verdicts."""
    results = []
    for seed in seeds:
        for rf in (True, False):
            r = run_ring(seed, rf, cycles, config=config)
            results.append(r)
            if progress is not None:
                progress(r)
    rf_modes = [r.modes_covered for r in results if r.rf]
    base_modes = [r.modes_covered for r in results if not r.rf]
    return {
        "results": results,
        "rf_modes": rf_modes,
        "baseline_modes": base_modes,
        "rf_seeds_ge7": sum(m >= 7 for m in rf_modes),
        "rf_median": statistics.median(rf_modes),
        "baseline_median": statistics.median(base_modes),
        "seconds": sum(r.seconds for r in results),
    }


def main() -> None:
    import argparse
    p = argparse.ArgumentParser(description="8-Gaussian ring mode-collapse benchmark")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--cycles", type=int, default=25_000)
    args = p.parse_args()
    out = mode_collapse_benchmark(args.seeds, args.cycles,
                                  progress=lambda r: print(r, flush=True))
    print({k: v for k, v in out.items() if k != "results"})


if __name__ == "__main__":
    main()
