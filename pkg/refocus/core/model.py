# refocus/core/model.py
"""End-to-end ReFocus: RevIN -> front end -> frequency embedding -> EKPB stack -> head -> denormalize."""
from typing import List, Optional, Tuple

import numpy as np

from refocus.core.ameo import AmeoLayer
from refocus.core.ekpb import EkpbBlock, PickTrace, ekpb_stack
from refocus.core.layers import Linear, Module
from refocus.core.revin import revin_denormalize, revin_normalize
from refocus.core.spectral import ComplexSpectrum, ideal_filter, irfft, mid_band_edges, rfft
from refocus.core.tensor import Tensor, add, add_bias, as_tensor, matmul, parameter, reshape, sub
from refocus.models.enums import FilterKind, FrontEnd, HeadKind
from refocus.models.schemas import ReFocusConfig
from refocus.utils import ContractError, ShapeError, logger


class FreqProjection(Module):
    """Complex (D1//2+1) x (D2//2+1) matrix plus complex bias, stored as real/imag pairs."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.d_in = d_in
        self.d_out = d_out
        h_in, h_out = d_in // 2 + 1, d_out // 2 + 1
        bound = 1.0 / np.sqrt(h_in)
        self.wr = parameter(rng.uniform(-bound, bound, size=(h_in, h_out)), name="wr")
        self.wi = parameter(rng.uniform(-bound, bound, size=(h_in, h_out)), name="wi")
        self.br = parameter(np.zeros(h_out), name="br")
        self.bi = parameter(np.zeros(h_out), name="bi")

    def __call__(self, x) -> Tensor:
        return freq_project(x, self)


def freq_project(x, p: FreqProjection) -> Tensor:
    """irfft(W rfft(x) + b, D2) applied along the last axis."""
    x = as_tensor(x)
    if x.shape[-1] != p.d_in:
        raise ShapeError(f"freq_project expects last extent {p.d_in}, got {x.shape}")
    lead = x.shape[:-1]
    h_in, h_out = p.d_in // 2 + 1, p.d_out // 2 + 1
    spec = rfft(x)
    xr = reshape(spec.re, (-1, h_in))
    xi = reshape(spec.im, (-1, h_in))
    yr = add_bias(sub(matmul(xr, p.wr), matmul(xi, p.wi)), p.br)
    yi = add_bias(add(matmul(xr, p.wi), matmul(xi, p.wr)), p.bi)
    out = ComplexSpectrum(reshape(yr, (*lead, h_out)), reshape(yi, (*lead, h_out)), p.d_out)
    return irfft(out, p.d_out)


class ReFocusModel(Module):
    def __init__(self, config: ReFocusConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.ameo = AmeoLayer(config.K, config.beta) if config.front_end == FrontEnd.AMEO else None
        if config.front_end in (FrontEnd.LOWPASS, FrontEnd.HIGHPASS, FrontEnd.BANDSTOP) and config.T < 8:
            raise ContractError(f"filter front ends need T >= 8, got T={config.T}")
        self.embed = FreqProjection(config.T, config.D, rng)
        self.blocks = [
            EkpbBlock(config.D, config.Q, rng, config.strategy, config.activation)
            for _ in range(config.N)
        ]
        if config.head == HeadKind.FREQ:
            self.head = FreqProjection(config.D, config.F, rng)
        else:
            self.head = Linear(config.D, config.F, rng)
        logger.debug(f"Built ReFocus model with {param_count(self)} parameters")

    def front_end(self, x: Tensor) -> Tensor:
        kind = FrontEnd(self.config.front_end)
        if kind == FrontEnd.AMEO:
            return self.ameo(x)
        if kind == FrontEnd.NONE:
            return x
        n = x.shape[-1]
        mid_lo, mid_hi = mid_band_edges(n)
        if kind == FrontEnd.LOWPASS:
            return ideal_filter(x, (0, mid_lo - 1), FilterKind.LOW)
        if kind == FrontEnd.HIGHPASS:
            return ideal_filter(x, (mid_hi + 1, n // 2), FilterKind.HIGH)
        return ideal_filter(x, (mid_lo - 1, mid_hi + 1), FilterKind.BANDSTOP)

    def forward(self, X, rng: Optional[np.random.Generator] = None,
                training: bool = False) -> Tuple[Tensor, List[PickTrace]]:
        return model_forward(X, self, rng, training)


def model_forward(
    X,
    model: ReFocusModel,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tuple[Tensor, List[PickTrace]]:
    """X: (C, T) or (B, C, T) -> forecast (C, F) or (B, C, F) on the input scale."""
    cfg = model.config
    X = as_tensor(X)
    if X.ndim not in (2, 3) or X.shape[-2:] != (cfg.C, cfg.T):
        raise ShapeError(f"model expects (C, T) = ({cfg.C}, {cfg.T}) windows, got {X.shape}")
    deterministic = cfg.eval_argmax and not training
    xn, stats = revin_normalize(X, eps=cfg.eps)
    h = model.embed(model.front_end(xn))
    h, traces = ekpb_stack(h, model.blocks, rng, deterministic)
    return revin_denormalize(model.head(h), stats), traces


def param_count(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))
