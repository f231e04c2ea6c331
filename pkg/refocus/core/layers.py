# refocus/core/layers.py
from typing import Dict, Iterator, List, Tuple

import numpy as np

from refocus.core.tensor import (
    Tensor,
    add,
    add_bias,
    gelu,
    layer_norm,
    matmul,
    parameter,
    relu,
    reshape,
)
from refocus.models.enums import Activation
from refocus.utils import ShapeError


class Module:
    """Parameter container; children and parameters are discovered from attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy arrays into the parameters in place; names and shapes must match exactly."""
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ShapeError(f"parameter names differ: missing {missing}, unexpected {unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"parameter {name}: expected shape {p.shape}, got {arr.shape}")
            p.data[...] = arr


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """Real affine map applied to the last axis."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.d_in = d_in
        self.d_out = d_out
        self.weight = parameter(uniform_init(rng, (d_in, d_out), d_in), name="weight")
        self.bias = parameter(np.zeros(d_out), name="bias")

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"Linear expects last extent {self.d_in}, got {x.shape}")
        lead = x.shape[:-1]
        flat = reshape(x, (-1, self.d_in))
        out = add_bias(matmul(flat, self.weight), self.bias)
        return reshape(out, (*lead, self.d_out))


def activate(x: Tensor, kind: Activation) -> Tensor:
    return relu(x) if kind == Activation.RELU else gelu(x)


class MLP(Module):
    """Two-layer network d_in -> hidden -> d_out."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator,
                 activation: Activation = Activation.GELU):
        self.fc1 = Linear(d_in, hidden, rng)
        self.fc2 = Linear(hidden, d_out, rng)
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(activate(self.fc1(x), self.activation))


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(dim), name="gain")
        self.bias = parameter(np.zeros(dim), name="bias")
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class AddNorm(Module):
    """Post-norm residual: norm(x + net(x))."""

    def __init__(self, net: MLP, dim: int):
        self.net = net
        self.norm = LayerNorm(dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.norm(add(x, self.net(x)))
