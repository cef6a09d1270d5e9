"""Adversarial objectives and gradient penalties."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, as_tensor, clip, grad, log, sqrt

LOG_CLAMP = 1e-7


class LossKind(str, enum.Enum):
    MINIMAX = "minimax"
    NON_SATURATING = "non_saturating"
    LEAST_SQUARES = "least_squares"
    WASSERSTEIN = "wasserstein"

    @property
    def uses_sigmoid(self) -> bool:
        return self in (LossKind.MINIMAX, LossKind.NON_SATURATING, LossKind.LEAST_SQUARES)

    @property
    def is_log_loss(self) -> bool:
        return self in (LossKind.MINIMAX, LossKind.NON_SATURATING)


class PenaltyKind(str, enum.Enum):
    NONE = "none"
    WGAN_GP = "wgan_gp"
    DRAGAN = "dragan"


@dataclass(frozen=True)
class Penalty:
    kind: PenaltyKind = PenaltyKind.NONE
    lam: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if self.kind is not PenaltyKind.NONE and not self.lam > 0:
            raise ValueError(f"penalty coefficient must be > 0, got {self.lam}")

    @property
    def active(self) -> bool:
        return self.kind is not PenaltyKind.NONE


def _probs(y, kind: LossKind) -> Tensor:
    y = as_tensor(y)
    d = y.data
    if np.isnan(d).any() or (d < 0).any() or (d > 1).any():
        raise ValueError(f"{kind.value} loss needs discriminator outputs in [0, 1]")
    return clip(y, LOG_CLAMP, 1.0 - LOG_CLAMP)


def d_loss(kind: LossKind | str, real, fake) -> Tensor:
    """Discriminator loss, averaged over the batch (lower is better for D)."""
    kind = LossKind(kind)
    if kind.is_log_loss:
        yr, yf = _probs(real, kind), _probs(fake, kind)
        return -(log(yr).mean() + log(1.0 - yf).mean())
    real, fake = as_tensor(real), as_tensor(fake)
    if kind is LossKind.LEAST_SQUARES:
        return 0.5 * ((real - 1.0) * (real - 1.0)).mean() + 0.5 * (fake * fake).mean()
    return fake.mean() - real.mean()


def g_loss(kind: LossKind | str, fake) -> Tensor:
    """Generator loss on D(G(z)).

    The non-saturating form keeps the 1/2 factor: ``-0.5 * E[log D(G(z))]``.
    """
    kind = LossKind(kind)
    if kind is LossKind.MINIMAX:
        return log(1.0 - _probs(fake, kind)).mean()
    if kind is LossKind.NON_SATURATING:
        return -0.5 * log(_probs(fake, kind)).mean()
    fake = as_tensor(fake)
    if kind is LossKind.LEAST_SQUARES:
        return 0.5 * ((fake - 1.0) * (fake - 1.0)).mean()
    return -fake.mean()


def penalty_points(penalty: Penalty, real: np.ndarray, fake: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Where the input-gradient norm is evaluated.

    WGAN-GP: per-sample random interpolates between real and fake.
    DRAGAN: real points plus uniform noise scaled by half the batch std.
    """
    n = real.shape[0]
    if penalty.kind is PenaltyKind.WGAN_GP:
        eps = rng.uniform(0.0, 1.0, size=(n,) + (1,) * (real.ndim - 1)).astype(real.dtype)
        return eps * real + (1 - eps) * fake
    u = rng.uniform(-1.0, 1.0, size=real.shape).astype(real.dtype)
    return real + (0.5 * real.std()) * u


def input_gradient_norms(critic: Callable[[Tensor], Tensor], points, *,
                         create_graph: bool = True) -> Tensor:
    x = Tensor(np.asarray(getattr(points, "data", points)), requires_grad=True)
    out = critic(x)
    (g,) = grad(out.sum(), [x], create_graph=create_graph)
    axes = tuple(range(1, g.ndim))
    return sqrt((g * g).sum(axis=axes))


def gradient_penalty(penalty: Penalty, critic: Callable[[Tensor], Tensor], real, fake,
                     rng: np.random.Generator) -> Tensor:
    """``lam * E[(||grad_x critic(x_hat)||_2 - 1)^2]``, differentiable w.r.t. the critic."""
    if not penalty.active:
        raise ValueError("gradient_penalty called with penalty 'none'")
    real = np.asarray(getattr(real, "data", real))
    fake = np.asarray(getattr(fake, "data", fake))
    if real.shape != fake.shape:
        raise ValueError(f"real/fake batch shapes differ: {real.shape} vs {fake.shape}")
    if real.shape[0] == 0:
        raise ValueError("gradient penalty on an empty batch")
    norms = input_gradient_norms(critic, penalty_points(penalty, real, fake, rng))
    dev = norms - 1.0
    return penalty.lam * (dev * dev).mean()
