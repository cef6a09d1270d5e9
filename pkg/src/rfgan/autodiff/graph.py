from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .params import Parameter
from .tensor import ShapeError, Tensor, as_tensor


@dataclass
class ComputeGraph:
    """A differentiable function with declared, named inputs.

    ``inputs`` maps each input name to its expected shape; ``None`` in a
    shape position accepts any extent (the batch axis).
    """

    fn: Callable[..., Mapping[str, Tensor]]
    inputs: dict[str, tuple]
    parameters: list[Parameter] = field(default_factory=list)

    def trainable(self) -> list[Parameter]:
        return [p for p in self.parameters if p.trainable]


def forward(graph: ComputeGraph, inputs: Mapping[str, object]) -> dict[str, Tensor]:
    unknown = set(inputs) - set(graph.inputs)
    if unknown:
        raise KeyError(f"unknown input name(s): {sorted(unknown)}")
    missing = set(graph.inputs) - set(inputs)
    if missing:
        raise KeyError(f"missing input(s): {sorted(missing)}")
    feed = {}
    for name, declared in graph.inputs.items():
        t = as_tensor(inputs[name])
        if len(t.shape) != len(declared) or any(
                d is not None and d != n for d, n in zip(declared, t.shape)):
            raise ShapeError(f"input {name!r}: expected shape {declared}, got {t.shape}")
        feed[name] = t
    return dict(graph.fn(**feed))
