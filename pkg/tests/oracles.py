"""Independent reference implementations used as test oracles.

Nothing here imports the package's autodiff or metrics code.
"""
from __future__ import annotations

import math

import numpy as np


def central_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """d f / d x by central differences; f maps a float64 array to a float."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f(x)
        x[i] = old - eps
        lo = f(x)
        x[i] = old
        out[i] = (hi - lo) / (2 * eps)
    return out


def rel_error(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.abs(b).max(initial=0.0), np.abs(a).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / scale)


# -- SSIM by explicit loops -----------------------------------------------------

def _window_2d(size: int, sigma: float) -> list[list[float]]:
    c = (size - 1) / 2.0
    g = [math.exp(-((i - c) ** 2) / (2 * sigma * sigma)) for i in range(size)]
    s = sum(g)
    g = [v / s for v in g]
    return [[g[i] * g[j] for j in range(size)] for i in range(size)]


def brute_ssim_terms(a: np.ndarray, b: np.ndarray, size: int, sigma: float = 1.5):
    """(mean SSIM, mean contrast-structure) with a full 2-D window, valid positions only."""
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    w = np.array(_window_2d(size, sigma))
    h, wd = a.shape
    s_sum = cs_sum = 0.0
    count = 0
    for i in range(h - size + 1):
        for j in range(wd - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            mu_a = float((w * pa).sum())
            mu_b = float((w * pb).sum())
            va = float((w * (pa - mu_a) ** 2).sum())
            vb = float((w * (pb - mu_b) ** 2).sum())
            cov = float((w * (pa - mu_a) * (pb - mu_b)).sum())
            cs = (2 * cov + c2) / (va + vb + c2)
            lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
            s_sum += lum * cs
            cs_sum += cs
            count += 1
    return s_sum / count, cs_sum / count


def brute_ms_ssim(a: np.ndarray, b: np.ndarray, levels: int = 5) -> float:
    """Reference MS-SSIM on single-channel images in [0, 1] whose sides are multiples
    of 2**(levels-1)."""
    weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333][:levels]
    total = sum(weights)
    weights = [w / total for w in weights] if levels < 5 else weights
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    value = 1.0
    for j in range(levels):
        size = min(11, *a.shape)
        s, cs = brute_ssim_terms(a, b, size)
        term = s if j == levels - 1 else cs
        value *= max(term, 0.0) ** weights[j]
        if j < levels - 1:
            h, w = a.shape
            a = np.array([[(a[2 * y, 2 * x] + a[2 * y + 1, 2 * x] + a[2 * y, 2 * x + 1]
                            + a[2 * y + 1, 2 * x + 1]) / 4 for x in range(w // 2)]
                          for y in range(h // 2)])
            b = np.array([[(b[2 * y, 2 * x] + b[2 * y + 1, 2 * x] + b[2 * y, 2 * x + 1]
                            + b[2 * y + 1, 2 * x + 1]) / 4 for x in range(w // 2)]
                          for y in range(h // 2)])
    return value


def brute_inception_score(probs) -> float:
    """exp(mean_i sum_k p_ik log(p_ik / pbar_k)) by double loop."""
    n, k = len(probs), len(probs[0])
    marginal = [sum(probs[i][c] for i in range(n)) / n for c in range(k)]
    total = 0.0
    for i in range(n):
        for c in range(k):
            p = probs[i][c]
            if p > 0:
                total += p * math.log(p / marginal[c])
    return math.exp(total / n)


def adam_reference(theta, grads, lr, b1, b2, eps):
    """Textbook Adam applied to a scalar parameter for a list of gradients."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out
