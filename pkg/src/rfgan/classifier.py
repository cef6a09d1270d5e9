"""Small task-specific classifiers feeding the proxy classifier score."""
from __future__ import annotations

import numpy as np
from scipy.special import softmax

from .autodiff import Adam, Tensor, grad, log_softmax, no_grad
from .networks import MLP, LayerSpec, NetworkSpec


def ring_posterior(samples, means, sigma: float) -> np.ndarray:
    """Exact class posterior p(mode | x) under an equal-weight isotropic Gaussian mixture."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    mu = np.asarray(means, dtype=np.float64).reshape(-1, 2)
    d2 = ((x[:, None, :] - mu[None, :, :]) ** 2).sum(axis=-1)
    return softmax(-d2 / (2.0 * sigma * sigma), axis=1)


def classifier_spec(in_dim: int, n_classes: int, hidden: int = 128) -> NetworkSpec:
    return NetworkSpec((LayerSpec(in_dim, hidden, "relu"), LayerSpec(hidden, n_classes)),
                       role="classifier")


def train_classifier(x, labels, rng: np.random.Generator, epochs: int = 5,
                     batch_size: int = 128, hidden: int = 128, lr: float = 1e-3) -> MLP:
    """Softmax MLP fit by cross-entropy; outputs logits."""
    x = np.asarray(x, dtype=np.float32).reshape(len(x), -1)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(x):
        raise ValueError(f"{len(x)} inputs but {len(labels)} labels")
    k = int(labels.max()) + 1
    net = MLP(classifier_spec(x.shape[1], k, hidden), rng, prefix="C")
    opt = Adam(net.parameters(), lr=lr, beta1=0.9)
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for i in range(0, len(x), batch_size):
            idx = order[i:i + batch_size]
            onehot = np.zeros((len(idx), k), dtype=np.float32)
            onehot[np.arange(len(idx)), labels[idx]] = 1.0
            loss = -(log_softmax(net(x[idx])) * Tensor(onehot)).sum() * (1.0 / len(idx))
            opt.step(grad(loss, net.parameters()))
    return net


def predict_proba(net: MLP, x, batch: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32).reshape(len(x), -1)
    with no_grad():
        logits = np.concatenate([net(x[i:i + batch]).data for i in range(0, len(x), batch)])
    return softmax(logits.astype(np.float64), axis=1)
