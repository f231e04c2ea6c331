# refocus/core/verify.py
"""Seeded verifier suites behind ``refocus verify``.

Every suite returns CheckResult rows; a row with ``asserted=False`` is
informational and never fails the run.
"""
from typing import Callable, Dict, Iterable, List

import numpy as np

from refocus.core.ameo import g_decay_report, verify_ameo_theorem
from refocus.core.data import synth_mid_gap, synth_shared_key
from refocus.core.ekpb import cross_channel_softmax, pick_key_frequency
from refocus.core.model import ReFocusModel, model_forward
from refocus.core.revin import verify_revin_theorem
from refocus.core.spectral import (
    ComplexSpectrum,
    band_masks,
    energy,
    g_curve,
    ideal_filter,
    mid_band_edges,
    mid_gap_metric,
    rfft,
    rfft_array,
)
from refocus.core.tensor import Tensor, grad_check, grad_check_params, mse_loss
from refocus.core.training import verify_ket_equivalence
from refocus.models.enums import DftConvention, FilterKind, PickStrategy, VerifyScope
from refocus.models.schemas import CheckResult, ReFocusConfig
from refocus.utils import logger

SUITE_SEED = 2024


def _worst(suite: str, name: str, results: Iterable[CheckResult], detail: str = "") -> CheckResult:
    results = list(results)
    worst = max(results, key=lambda r: r.measured)
    return CheckResult(
        suite=suite, name=name, measured=worst.measured, tolerance=worst.tolerance,
        passed=all(r.passed for r in results), asserted=worst.asserted,
        detail=detail or worst.detail,
    )


def _random_signal(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(-5.0, 5.0) + rng.uniform(0.5, 3.0) * rng.standard_normal(n)


def revin_suite(seed: int = SUITE_SEED, signals: int = 100) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    checks = []
    for n in (8, 31, 96):
        batch = [_random_signal(rng, n) for _ in range(signals)]
        for convention in (DftConvention.STANDARD, DftConvention.REDUCED):
            rows = [verify_revin_theorem(x, convention=convention) for x in batch]
            for i, metric in enumerate(("dc_energy", "sigma2_ratio")):
                checks.append(_worst(rows[0][i].suite, f"{metric}[T={n}]", (r[i] for r in rows),
                                     detail=f"worst of {signals} signals"))
    return checks


def ameo_suite(seed: int = SUITE_SEED, signals: int = 20) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    checks = []
    for K in (2, 8, 24):
        for n in (16, 96):
            for beta in (0.1, 0.5, 1.0):
                rows = [verify_ameo_theorem(_random_signal(rng, n), K, beta) for _ in range(signals)]
                checks.append(_worst("ameo", rows[0].name, rows, detail=f"worst of {signals} signals"))
    return checks


def gdecay_suite(K: int = 25, T: int = 96) -> List[CheckResult]:
    _, checks = g_decay_report(K, T, beta=1.0)
    mag = np.abs(g_curve(K, T))
    rise = float(np.max(np.diff(mag[:5]), initial=0.0))
    tail = float(mag[10:].max()) if mag.size > 10 else 0.0
    checks.append(CheckResult(suite="gdecay", name="non_increasing_f0_to_f4", measured=rise,
                              tolerance=1e-12, passed=rise <= 1e-12,
                              detail="largest step-to-step rise of |G(f)| over the main lobe"))
    checks.append(CheckResult(suite="gdecay", name="tail_below_0.2", measured=tail, tolerance=0.2,
                              passed=tail < 0.2, detail="max |G(f)| for f >= 10"))
    return checks


def ket_suite(seed: int = SUITE_SEED) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    checks = []
    for B, C, T in ((2, 3, 96), (4, 7, 48)):
        X = rng.standard_normal((B, C, T))
        Y = rng.standard_normal((B, C, T // 2))
        alpha = rng.normal(0.0, 1.0, size=(B, C))
        perm = np.stack([rng.permutation(C) for _ in range(B)])
        checks.append(verify_ket_equivalence(X, Y, alpha, perm))
    X = rng.standard_normal((2, 3, 96))
    zero = verify_ket_equivalence(X, X[..., :24], np.zeros((2, 3)), np.tile(np.arange(3), (2, 1)))
    checks.append(zero.model_copy(update={"name": "zero_alpha"}))
    X1 = rng.standard_normal((3, 1, 32))
    single = verify_ket_equivalence(X1, X1[..., :8], rng.normal(size=(3, 1)), np.zeros((3, 1), dtype=int))
    checks.append(single.model_copy(update={"name": "single_channel"}))
    return checks


def filter_suite(seed: int = SUITE_SEED, n: int = 96) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    signals = np.stack([synth_mid_gap(n, 3, 0.3, rng)] + [_random_signal(rng, n) for _ in range(4)])
    mid_lo, mid_hi = mid_band_edges(n)
    _, mid, _ = band_masks(n)
    before = np.asarray(mid_gap_metric(signals))
    checks = []
    for kind, band in ((FilterKind.BANDSTOP, (mid_lo - 1, mid_hi + 1)), (FilterKind.LOW, (0, mid_lo - 1))):
        out = ideal_filter(signals, band, kind).data
        mid_energy = float(energy(rfft_array(out))[:, mid].max())
        after = np.asarray(mid_gap_metric(out))
        drop = float((before - after).min())
        checks.append(CheckResult(suite="filter", name=f"{kind.value}_mid_energy", measured=mid_energy,
                                  tolerance=1e-18, passed=mid_energy < 1e-18,
                                  detail="max mid-band bin energy after filtering"))
        checks.append(CheckResult(suite="filter", name=f"{kind.value}_metric_drop", measured=drop,
                                  tolerance=0.0, passed=drop > 0.0,
                                  detail="min decrease of mid_gap_metric (must be > 0)"))
    return checks


def keyfreq_suite(seed: int = SUITE_SEED, draws: int = 100_000) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    ds, truth = synth_shared_key(4, 128, 16, [1, 2], 10.0, rng)
    spec = rfft(ds.values)
    probs = cross_channel_softmax(energy(spec))
    carrier_mass = float(probs[truth.carriers, truth.key_bin].sum())
    _, trace = pick_key_frequency(spec, probs, PickStrategy.MAX)
    chosen = int(trace.chosen_channel[truth.key_bin])

    E = rng.uniform(0.0, 2.0, size=(4, 5))
    law = cross_channel_softmax(E)
    amp = np.sqrt(E)
    batch = ComplexSpectrum(Tensor(np.broadcast_to(amp, (draws, 4, 5))),
                            Tensor(np.zeros((draws, 4, 5))), 8)
    _, mc = pick_key_frequency(batch, np.broadcast_to(law, (draws, 4, 5)), PickStrategy.SOFTMAX, rng)
    freq = np.stack([(mc.chosen_channel == c).mean(axis=0) for c in range(4)])
    gap = float(np.abs(freq - law).max())
    return [
        CheckResult(suite="keyfreq", name="carrier_probability", measured=carrier_mass, tolerance=0.9,
                    passed=carrier_mass > 0.9, detail=f"softmax mass on carriers at bin {truth.key_bin}"),
        CheckResult(suite="keyfreq", name="max_picks_carrier", measured=float(chosen), tolerance=0.0,
                    passed=chosen in truth.carriers, detail=f"channel chosen at bin {truth.key_bin}"),
        CheckResult(suite="keyfreq", name="sampling_law", measured=gap, tolerance=0.01, passed=gap < 0.01,
                    detail=f"max |empirical - softmax| over {draws} draws"),
    ]


def tiny_config() -> ReFocusConfig:
    return ReFocusConfig(C=2, T=8, F=4, D=8, Q=8, N=1, K=3, beta=0.5,
                         strategy=PickStrategy.MAX, seed=SUITE_SEED)


def grad_suite(seed: int = SUITE_SEED, tol: float = 1e-4) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    model = ReFocusModel(tiny_config())
    X = rng.standard_normal((2, 8)) * 2.0 + 1.0
    target = Tensor(rng.standard_normal((2, 4)))

    def loss_of_params():
        return mse_loss(model_forward(X, model)[0], target)

    def loss_of_input(x):
        return mse_loss(model_forward(x, model)[0], target)

    param_err = grad_check_params(loss_of_params, model.parameters())
    input_err = grad_check(loss_of_input, X)
    return [
        CheckResult(suite="grad", name="parameters", measured=param_err, tolerance=tol,
                    passed=param_err < tol, detail="max relative error, all coordinates"),
        CheckResult(suite="grad", name="input", measured=input_err, tolerance=tol,
                    passed=input_err < tol, detail="max relative error w.r.t. the input window"),
    ]


SUITES: Dict[VerifyScope, Callable[[], List[CheckResult]]] = {
    VerifyScope.REVIN: revin_suite,
    VerifyScope.AMEO: ameo_suite,
    VerifyScope.GDECAY: gdecay_suite,
    VerifyScope.KET: ket_suite,
    VerifyScope.FILTER: filter_suite,
    VerifyScope.KEYFREQ: keyfreq_suite,
    VerifyScope.GRAD: grad_suite,
}


def run_suites(scope: VerifyScope) -> List[CheckResult]:
    scope = VerifyScope(scope)
    scopes = list(SUITES) if scope == VerifyScope.ALL else [scope]
    results = []
    for s in scopes:
        logger.info(f"Running verifier suite {s.value}")
        results.extend(SUITES[s]())
    return results


def failures(results: Iterable[CheckResult]) -> List[CheckResult]:
    return [r for r in results if r.asserted and not r.passed]
