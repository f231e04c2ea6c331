# refocus/core/revin.py
"""Reversible instance normalization and the check of its spectral effect."""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from refocus.core.spectral import dft, energy
from refocus.core.tensor import Tensor, add, as_tensor, div, expand, mul, reduce_mean, shift, sqrt, sub
from refocus.models.enums import DftConvention
from refocus.models.schemas import CheckResult
from refocus.utils import ContractError


@dataclass
class RevinStats:
    """Per-channel mean and population std of one input window."""
    mu: Tensor
    sigma: Tensor
    eps: float

    def __post_init__(self):
        if (self.sigma.data < 0).any():
            raise ContractError("sigma must be non-negative")
        if self.eps == 0 and (self.sigma.data == 0).any():
            raise ContractError("sigma + eps must be positive")


def revin_normalize(X, eps: float = 1e-8) -> Tuple[Tensor, RevinStats]:
    """Per channel (last axis is time): (x - mu) / (sigma + eps)."""
    X = as_tensor(X)
    t = X.shape[-1]
    if t < 2:
        raise ContractError(f"revin_normalize needs T >= 2, got {t}")
    mu = reduce_mean(X, axis=-1)
    centered = sub(X, expand(mu, -1, t))
    sigma = sqrt(reduce_mean(mul(centered, centered), axis=-1))
    stats = RevinStats(mu=mu, sigma=sigma, eps=eps)
    return div(centered, expand(shift(sigma, eps), -1, t)), stats


def revin_denormalize(Y, stats: RevinStats) -> Tensor:
    """y * (sigma + eps) + mu per channel."""
    Y = as_tensor(Y)
    if Y.shape[:-1] != stats.mu.shape:
        raise ContractError(f"stats for {stats.mu.shape} channels cannot denormalize {Y.shape}")
    f = Y.shape[-1]
    return add(mul(Y, expand(shift(stats.sigma, stats.eps), -1, f)), expand(stats.mu, -1, f))


def verify_revin_theorem(
    x,
    tol: float = 1e-9,
    convention: DftConvention = DftConvention.STANDARD,
    dc_tol: float = 1e-15,
) -> List[CheckResult]:
    """Zero DC energy and a 1/sigma^2 energy ratio on every other bin.

    The identity is exact only when sum_t exp(-i 2 pi f t / divisor) vanishes for
    f >= 1, which holds for the standard divisor; results under the T-1 divisor
    are reported but not asserted.
    """
    x = np.asarray(x, dtype=np.float64)
    xhat, stats = revin_normalize(x, eps=0.0)
    sigma = float(stats.sigma.data)
    if sigma == 0:
        raise ContractError("verify_revin_theorem needs a non-constant signal")
    e_x = energy(dft(x, convention))
    e_hat = energy(dft(xhat.data, convention))
    scale = float(e_x.max())
    dc_residual = float(e_hat[0]) / scale
    live = e_x[1:] > 1e-12 * scale
    ratio = np.abs(sigma ** 2 * e_hat[1:][live] / e_x[1:][live] - 1.0)
    ratio_residual = float(ratio.max()) if ratio.size else 0.0
    asserted = convention == DftConvention.STANDARD
    suite = f"revin[{DftConvention(convention).value}]"
    return [
        CheckResult(suite=suite, name="dc_energy", measured=dc_residual, tolerance=dc_tol,
                    passed=dc_residual < dc_tol, asserted=asserted,
                    detail=f"E_xhat(0) relative to max E_x, T={x.size}"),
        CheckResult(suite=suite, name="sigma2_ratio", measured=ratio_residual, tolerance=tol,
                    passed=ratio_residual < tol, asserted=asserted,
                    detail=f"max_f>=1 |sigma^2 E_xhat/E_x - 1|, sigma={sigma:.6g}"),
    ]
