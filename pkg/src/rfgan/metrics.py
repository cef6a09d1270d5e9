"""Sample-quality and diversity metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03
MIN_COARSE_SIDE = 4
SCORE_SNAP = 1e-12


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian taps; the 2-D window is their outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation over the first two axes
    k = len(taps)
    rows = sliding_window_view(img, k, axis=0) @ taps
    return sliding_window_view(rows, k, axis=1) @ taps


def _to_unit(img, value_range: tuple[float, float]) -> np.ndarray:
    lo, hi = value_range
    if hi <= lo:
        raise ValueError("value_range must be increasing")
    return (np.asarray(img, dtype=np.float64) - lo) / (hi - lo)


def _ssim_maps(a: np.ndarray, b: np.ndarray, taps: np.ndarray):
    c1, c2 = K1 ** 2, K2 ** 2
    mu_a, mu_b = _filter(a, taps), _filter(b, taps)
    var_a = _filter(a * a, taps) - mu_a * mu_a
    var_b = _filter(b * b, taps) - mu_b * mu_b
    cov = _filter(a * b, taps) - mu_a * mu_b
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    return lum * cs, cs


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise ValueError(f"images must be (H, W) or (H, W, C), got {a.shape}")


def ssim(a, b, window: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA,
         value_range: tuple[float, float] = (0.0, 1.0)) -> float:
    """Mean single-scale SSIM with an 11x11 Gaussian window and L = 1."""
    a, b = _to_unit(a, value_range), _to_unit(b, value_range)
    _check_pair(a, b)
    if min(a.shape[:2]) < window:
        raise ValueError(f"image {a.shape[:2]} is smaller than the {window}x{window} window")
    full, _ = _ssim_maps(a, b, gaussian_window(window, sigma))
    return float(full.mean())


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2, img.shape[1] // 2
    return img.reshape(h, 2, w, 2, *img.shape[2:]).mean(axis=(1, 3))


def _pad_to_multiple(img: np.ndarray, m: int) -> np.ndarray:
    h, w = img.shape[:2]
    ph, pw = (-h) % m, (-w) % m
    if not ph and not pw:
        return img
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (img.ndim - 2)
    return np.pad(img, pad, mode="edge")


def ms_ssim(a, b, levels: int = 5, window: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA,
            value_range: tuple[float, float] = (0.0, 1.0)) -> float:
    """Multi-scale SSIM over dyadic 2x2 mean-pooled scales.

    Images are edge-padded up to a multiple of 2**(levels-1).  At scales
    smaller than the window, the Gaussian window is truncated to the image
    size.  With fewer than five levels the leading weights are renormalised,
    so ``levels=1`` is plain SSIM.
    """
    if not 1 <= levels <= len(MS_SSIM_WEIGHTS):
        raise ValueError(f"levels must be in 1..{len(MS_SSIM_WEIGHTS)}")
    a, b = _to_unit(a, value_range), _to_unit(b, value_range)
    _check_pair(a, b)
    if levels == 1:
        return ssim(a, b, window, sigma)
    factor = 2 ** (levels - 1)
    a, b = _pad_to_multiple(a, factor), _pad_to_multiple(b, factor)
    if min(a.shape[:2]) // factor < MIN_COARSE_SIDE:
        raise ValueError(f"images of size {a.shape[:2]} are too small for {levels} levels")
    if min(a.shape[:2]) < window:
        raise ValueError(f"image {a.shape[:2]} is smaller than the {window}x{window} window")
    weights = np.asarray(MS_SSIM_WEIGHTS[:levels])
    if levels < len(MS_SSIM_WEIGHTS):
        weights = weights / weights.sum()
    terms = []
    for j in range(levels):
        size = min(window, *a.shape[:2])
        full, cs = _ssim_maps(a, b, gaussian_window(size, sigma))
        value = full.mean() if j == levels - 1 else cs.mean()
        terms.append(max(float(value), 0.0))
        if j < levels - 1:
            a, b = _downsample(a), _downsample(b)
    return float(np.prod(np.power(terms, weights)))


def pairwise_ms_ssim(samples, n_pairs: int, rng: np.random.Generator, levels: int = 5,
                     value_range: tuple[float, float] = (0.0, 1.0)) -> float:
    """Mean MS-SSIM over uniformly drawn unordered pairs of distinct samples."""
    samples = np.asarray(samples)
    if n_pairs <= 0:
        raise ValueError(f"n_pairs must be positive, got {n_pairs}")
    n = len(samples)
    if n < 2:
        raise ValueError("pairwise MS-SSIM needs at least two samples")
    i = rng.integers(0, n, size=n_pairs)
    j = (i + rng.integers(1, n, size=n_pairs)) % n
    scores = [ms_ssim(samples[p], samples[q], levels, value_range=value_range)
              for p, q in zip(i, j)]
    return float(np.mean(scores))


def proxy_classifier_score(class_probs, atol: float = 1e-6) -> float:
    """Inception-style score ``exp(E_x KL(p(y|x) || p(y)))`` for any classifier's outputs."""
    p = np.asarray(class_probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0 or p.shape[1] == 0:
        raise ValueError(f"class_probs must be a non-empty (n, K) array, got {p.shape}")
    if not np.isfinite(p).all() or (p < 0).any():
        raise ValueError("class probabilities must be finite and non-negative")
    if np.abs(p.sum(axis=1) - 1.0).max() > atol:
        raise ValueError("each row of class_probs must sum to 1")
    marginal = p.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(marginal)), 0.0)
    kl = terms.sum(axis=1)
    k = p.shape[1]
    score = float(np.exp(kl.mean()))
    # snap round-off at the two attainable bounds (identical rows, balanced one-hot)
    if score - 1.0 <= SCORE_SNAP:
        return 1.0
    if k - score <= SCORE_SNAP * k:
        return float(k)
    return score


@dataclass
class ModeReport:
    modes_covered: int
    high_quality_fraction: float
    counts: list[int] = field(default_factory=list)
    threshold: float = 0.0


def mode_coverage(samples, means, sigma: float, threshold: float | None = None,
                  radius_sigmas: float = 3.0) -> ModeReport:
    """Assign each sample to its nearest mean; within ``radius_sigmas * sigma`` it is
    high quality.  A mode is covered when it owns at least ``threshold`` high-quality
    samples (default ``n / (10 K)``)."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    mu = np.asarray(means, dtype=np.float64).reshape(-1, 2)
    if len(x) == 0:
        raise ValueError("mode_coverage needs at least one sample")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    if len({tuple(m) for m in mu.tolist()}) != len(mu):
        raise ValueError("mode means must be distinct")
    k = len(mu)
    dist = np.sqrt(((x[:, None, :] - mu[None, :, :]) ** 2).sum(axis=-1))
    nearest = dist.argmin(axis=1)
    good = dist[np.arange(len(x)), nearest] <= radius_sigmas * sigma
    counts = np.bincount(nearest[good], minlength=k)
    if threshold is None:
        threshold = len(x) / (10.0 * k)
    covered = int((counts >= threshold).sum())
    return ModeReport(covered, float(good.mean()), counts.tolist(), float(threshold))
