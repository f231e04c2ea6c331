# refocus/core/baselines.py
"""Reference forecasters trained and evaluated by the same loop as ReFocus."""
from typing import List, Optional, Tuple

import numpy as np

from refocus.core.ekpb import PickTrace
from refocus.core.layers import Linear, Module
from refocus.core.revin import revin_denormalize, revin_normalize
from refocus.core.tensor import Tensor, as_tensor
from refocus.utils import ShapeError


class PersistenceBaseline(Module):
    """Repeats the last observed value of every channel over the horizon. No parameters."""

    def __init__(self, F: int):
        self.F = F

    def forward(self, X, rng: Optional[np.random.Generator] = None,
                training: bool = False) -> Tuple[Tensor, List[PickTrace]]:
        X = as_tensor(X)
        return Tensor(np.repeat(X.data[..., -1:], self.F, axis=-1)), []


class LinearBaseline(Module):
    """RevIN-wrapped linear map T -> F shared across channels."""

    def __init__(self, T: int, F: int, rng: np.random.Generator, eps: float = 1e-8):
        self.T = T
        self.F = F
        self.eps = eps
        self.proj = Linear(T, F, rng)

    def forward(self, X, rng: Optional[np.random.Generator] = None,
                training: bool = False) -> Tuple[Tensor, List[PickTrace]]:
        X = as_tensor(X)
        if X.shape[-1] != self.T:
            raise ShapeError(f"linear baseline expects T={self.T}, got {X.shape}")
        xn, stats = revin_normalize(X, eps=self.eps)
        return revin_denormalize(self.proj(xn), stats), []
