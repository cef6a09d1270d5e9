from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError, ShapeError, Tensor


class Parameter(Tensor):
    """A leaf tensor owned by a network.

    ``trainable=False`` marks frozen weights (e.g. the pretrained encoder):
    they never require grad and the optimizer leaves them bit-identical.
    """

    __slots__ = ("trainable", "name")

    def __init__(self, data, trainable: bool = True, name: str = "", dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.trainable = trainable
        self.name = name
        self.grad = Tensor(np.zeros_like(self.data))

    @property
    def value(self) -> Tensor:
        return Tensor(self.data)

    def freeze(self) -> None:
        self.trainable = False
        self.requires_grad = False
        self.grad = Tensor(np.zeros_like(self.data))

    def assign(self, data) -> None:
        arr = np.asarray(data, dtype=self.data.dtype)
        if arr.shape != self.data.shape:
            raise ShapeError(f"{self.name}: cannot assign shape {arr.shape} to {self.data.shape}")
        # fresh array: tensors that captured the old value stay valid
        self.data = arr.copy()

    def zero_grad(self) -> None:
        self.grad = Tensor(np.zeros_like(self.data))

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, param: Parameter, lr: float = 2e-4, beta1: float = 0.5,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros_like(param.data), np.zeros_like(param.data), 0, lr, beta1, beta2, eps)


def adam_step(param: Parameter, state: AdamState) -> tuple[Parameter, AdamState]:
    """One bias-corrected Adam update from ``param.grad``.  Frozen parameters are a no-op."""
    if not param.trainable:
        return param, state
    g = param.grad.data
    if g.shape != param.shape or state.m.shape != param.shape:
        raise ShapeError(f"{param.name}: gradient/state shape mismatch")
    if not np.isfinite(g).all():
        raise NonFiniteError(f"non-finite gradient for parameter {param.name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1 - b1) * g
    state.v = b2 * state.v + (1 - b2) * (g * g)
    if state.lr == 0:
        return param, state
    m_hat = state.m / (1 - b1 ** state.t)
    v_hat = state.v / (1 - b2 ** state.t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    param.data = (param.data - step).astype(param.dtype, copy=False)
    return param, state


@dataclass
class Adam:
    params: list[Parameter]
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(init=False)

    def __post_init__(self) -> None:
        self.params = [p for p in self.params if p.trainable]
        self.states = [AdamState.fresh(p, self.lr, self.beta1, self.beta2, self.eps)
                       for p in self.params]

    @property
    def steps(self) -> int:
        return self.states[0].t if self.states else 0

    def step(self, grads: list[Tensor] | None = None) -> None:
        if grads is not None:
            for p, g in zip(self.params, grads):
                p.grad = g
        for p, s in zip(self.params, self.states):
            adam_step(p, s)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
