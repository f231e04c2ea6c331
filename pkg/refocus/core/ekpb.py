# refocus/core/ekpb.py
"""Energy-based key-frequency picking block.

Per block: an MLP maps every channel to Q samples, their spectra are compared
across channels bin by bin, one channel's complex value is picked per bin, and
the resulting shared key spectrum is transformed back, projected and added to
every channel before two Add&Norm stages.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from refocus.core.layers import AddNorm, Linear, MLP, Module
from refocus.core.spectral import ComplexSpectrum, energy, irfft, rfft
from refocus.core.tensor import Tensor, add, as_tensor, expand, gather, reshape, softmax
from refocus.models.enums import Activation, PickStrategy
from refocus.utils import ContractError, ShapeError


@dataclass
class PickTrace:
    """Selection probabilities (..., C, bins) and the chosen channel per bin (..., bins)."""
    probabilities: np.ndarray
    chosen_channel: np.ndarray

    def to_dict(self, sample: Optional[int] = None) -> Dict[str, list]:
        probs, chosen = self.probabilities, self.chosen_channel
        if sample is not None and chosen.ndim > 1:
            probs, chosen = probs[sample], chosen[sample]
        return {"probabilities": probs.tolist(), "chosen_channel": chosen.astype(int).tolist()}


class EkpbBlock(Module):
    def __init__(
        self,
        D: int,
        Q: int,
        rng: np.random.Generator,
        strategy: PickStrategy = PickStrategy.SOFTMAX,
        activation: Activation = Activation.GELU,
    ):
        if Q % 2:
            raise ContractError(f"EKPB needs an even Q, got {Q}")
        self.D = D
        self.Q = Q
        self.strategy = PickStrategy(strategy)
        self.entry_map = MLP(D, D, Q, rng, activation)
        self.skip_proj = Linear(D, D, rng)
        self.key_proj = Linear(Q, D, rng)
        self.fuse = AddNorm(MLP(D, D, D, rng, activation), D)
        self.intra = AddNorm(MLP(D, D, D, rng, activation), D)

    def __call__(self, H, rng: Optional[np.random.Generator] = None, deterministic: bool = False):
        return ekpb_forward(H, self, rng, deterministic)


def cross_channel_softmax(E) -> np.ndarray:
    """Softmax over the channel axis (second to last) independently per bin."""
    E = np.asarray(E, dtype=np.float64)
    if (E < 0).any():
        raise ContractError("energies must be non-negative")
    return softmax(Tensor(E), axis=-2).data


def _choose_channels(
    probs: np.ndarray,
    E: np.ndarray,
    strategy: PickStrategy,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    if strategy == PickStrategy.MAX:
        return np.argmax(E, axis=-2)
    if strategy == PickStrategy.MIN:
        return np.argmin(E, axis=-2)
    if rng is None:
        raise ContractError("softmax picking needs an rng")
    cdf = np.cumsum(probs, axis=-2)
    u = rng.random(probs.shape[:-2] + probs.shape[-1:])
    chosen = (np.expand_dims(u, -2) >= cdf).sum(axis=-2)
    return np.minimum(chosen, probs.shape[-2] - 1)


def pick_key_frequency(
    Hf: ComplexSpectrum,
    probs: np.ndarray,
    strategy: PickStrategy,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[ComplexSpectrum, PickTrace]:
    """Pick one channel's complex value per bin; ties go to the lowest channel index.

    Works on (C, bins) or batched (B, C, bins) spectra. Gradients reach only the
    picked entries.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != Hf.re.shape:
        raise ShapeError(f"probabilities {probs.shape} do not match spectrum {Hf.re.shape}")
    if np.abs(probs.sum(axis=-2) - 1.0).max() > 1e-9:
        raise ContractError("probability columns must sum to 1")
    chosen = _choose_channels(probs, energy(Hf), PickStrategy(strategy), rng)
    index = np.expand_dims(chosen, -2)
    bins = Hf.re.shape[-1]
    lead = Hf.re.shape[:-2]
    re = reshape(gather(Hf.re, index, axis=-2), (*lead, 1, bins))
    im = reshape(gather(Hf.im, index, axis=-2), (*lead, 1, bins))
    return ComplexSpectrum(re, im, Hf.n_time), PickTrace(probabilities=probs, chosen_channel=chosen)


def ekpb_forward(
    H,
    block: EkpbBlock,
    rng: Optional[np.random.Generator] = None,
    deterministic: bool = False,
) -> Tuple[Tensor, PickTrace]:
    """H: (C, D) or (B, C, D) -> same shape, plus the pick trace."""
    H = as_tensor(H)
    if H.shape[-1] != block.D or H.ndim not in (2, 3):
        raise ShapeError(f"EKPB expects (C, {block.D}) or (B, C, {block.D}), got {H.shape}")
    C = H.shape[-2]
    lead = H.shape[:-2]
    Hk = block.entry_map(H)
    Hf = rfft(Hk)
    E = energy(Hf)
    probs = cross_channel_softmax(E)
    strategy = block.strategy
    if deterministic and strategy == PickStrategy.SOFTMAX:
        strategy = PickStrategy.MAX
    Kf, trace = pick_key_frequency(Hf, probs, strategy, rng)
    Kt = irfft(Kf, block.Q)
    key = block.key_proj(reshape(Kt, (*lead, block.Q)))
    key_hat = expand(key, -2, C)
    HK = add(block.skip_proj(H), key_hat)
    return block.intra(block.fuse(HK)), trace


def ekpb_stack(
    H: Tensor,
    blocks: List[EkpbBlock],
    rng: Optional[np.random.Generator] = None,
    deterministic: bool = False,
) -> Tuple[Tensor, List[PickTrace]]:
    traces = []
    for block in blocks:
        H, trace = ekpb_forward(H, block, rng, deterministic)
        traces.append(trace)
    return H, traces
