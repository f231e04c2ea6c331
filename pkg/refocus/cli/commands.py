# refocus/cli/commands.py
"""Command handlers. Each returns a process exit code; errors propagate to ``refocus.main``."""
import io
import json
import sys
from argparse import Namespace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from refocus.cli.dependencies import (
    PreparedData,
    build_model,
    describe_validation_error,
    get_seed,
    get_storage_service,
    load_experiment,
    model_config,
    prepare_data,
)
from refocus.config import get_settings
from refocus.core.ameo import AmeoLayer
from refocus.core.baselines import PersistenceBaseline
from refocus.core.data import dataset_to_frame, load_csv, synth_dataset
from refocus.core.model import param_count
from refocus.core.report import ReportGenerator
from refocus.core.revin import revin_normalize
from refocus.core.spectral import energy, ideal_filter, mid_band_edges, mid_gap_metric, rfft_array
from refocus.core.training import TrainResult, evaluate, train
from refocus.core.verify import failures, grad_suite, run_suites
from refocus.models.enums import (
    FilterKind,
    FrontEnd,
    KetSchedule,
    PickStrategy,
    ReportFormat,
    SpectrumTransform,
    SplitName,
    SynthKind,
)
from refocus.models.schemas import AblationRow, ExperimentConfig, Metrics, ReFocusConfig, RunMetrics, SynthSpec
from refocus.services.storage import load_checkpoint
from refocus.utils import CheckpointError, ConfigError, ContractError, logger
from refocus.utils.helpers import median

ABLATION_ARMS: Dict[str, Dict] = {
    "ameo+ket": {"front_end": FrontEnd.AMEO, "ket": True, "schedule": KetSchedule.ALTERNATE},
    "ket_only": {"front_end": FrontEnd.NONE, "ket": True, "schedule": KetSchedule.ALTERNATE},
    "ameo_only": {"front_end": FrontEnd.AMEO, "ket": False},
    "neither": {"front_end": FrontEnd.NONE, "ket": False},
    "pseudo_only": {"front_end": FrontEnd.AMEO, "ket": True, "schedule": KetSchedule.PSEUDO_ONLY},
    "real_only": {"front_end": FrontEnd.AMEO, "ket": True, "schedule": KetSchedule.REAL_ONLY},
    "pick_max": {"front_end": FrontEnd.AMEO, "ket": True, "schedule": KetSchedule.ALTERNATE,
                 "strategy": PickStrategy.MAX},
    "pick_min": {"front_end": FrontEnd.AMEO, "ket": True, "schedule": KetSchedule.ALTERNATE,
                 "strategy": PickStrategy.MIN},
}


def _emit(payload, fmt: ReportFormat) -> None:
    """Write rows (list of dicts) or one dict to stdout as CSV or JSON."""
    if ReportFormat(fmt) == ReportFormat.JSON:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return
    rows = payload if isinstance(payload, list) else [payload]
    buf = io.StringIO()
    pd.json_normalize(rows).to_csv(buf, index=False, lineterminator="\n")
    sys.stdout.write(buf.getvalue())


def _metrics_row(metrics: RunMetrics) -> Dict:
    row = {"name": metrics.name, "model": metrics.model.value, "best_epoch": metrics.best_epoch,
           "epochs_run": metrics.epochs_run, "param_count": metrics.param_count,
           "val_mse": metrics.val.mse, "val_mae": metrics.val.mae}
    if metrics.test is not None:
        row.update(test_mse=metrics.test.mse, test_mae=metrics.test.mae)
    if metrics.persistence_test is not None:
        row.update(persistence_test_mse=metrics.persistence_test.mse)
    return row


def run_experiment(exp: ExperimentConfig, seed: int,
                   data: Optional[PreparedData] = None) -> Tuple[RunMetrics, TrainResult, object]:
    """Train one model on one seed and score it on val and test."""
    data = data or prepare_data(exp, seed)
    rcfg = model_config(exp, data.dataset.channels, seed)
    model = build_model(exp.model, rcfg)
    tcfg = exp.train_config().model_copy(update={"seed": seed})
    logger.info(f"Training {exp.model.value} model '{exp.name}' with seed {seed}")
    result = train(model, data.train, data.val, tcfg)
    test = persistence = None
    if data.test:
        test = evaluate(model, data.test, np.random.default_rng(seed))
        persistence = evaluate(PersistenceBaseline(exp.F), data.test)
    metrics = RunMetrics(
        name=exp.name, model=exp.model, best_epoch=result.best_epoch, epochs_run=result.epochs_run,
        param_count=param_count(model), val=result.best_val, test=test, persistence_test=persistence,
    )
    return metrics, result, model


def cmd_train(args: Namespace) -> int:
    exp = load_experiment(args.config)
    seed = get_seed(args.seed, exp)
    storage = get_storage_service(args.out, exp)
    data = prepare_data(exp, seed)
    metrics, result, model = run_experiment(exp, seed, data)

    rcfg = model_config(exp, data.dataset.channels, seed)
    storage.save_checkpoint(exp.model, rcfg.model_dump(mode="json"), result.state)
    storage.save_history(result.history)
    storage.save_json("metrics.json", metrics.model_dump(mode="json"))
    storage.save_json("timing.json", {"mean_forward_seconds_per_batch": result.mean_forward_seconds,
                                      "batches_timed": len(result.forward_seconds)})
    if result.best_trace is not None:
        storage.save_json("pick_trace.json", {"block": 0, "sample": 0, **result.best_trace.to_dict(sample=0)})
    logger.info(f"Artifacts written to {storage.out_dir}")
    _emit(_metrics_row(metrics), args.format)
    return 0


def cmd_eval(args: Namespace) -> int:
    exp = load_experiment(args.config)
    seed = get_seed(args.seed, exp)
    kind, config, state = load_checkpoint(args.checkpoint)
    try:
        rcfg = ReFocusConfig.model_validate(config)
    except ValidationError as e:
        raise ConfigError(f"checkpoint config is invalid: {describe_validation_error(e)}")
    model = build_model(kind, rcfg)
    try:
        model.load_state_dict(state)
    except ContractError as e:
        raise CheckpointError(f"checkpoint does not match the model: {str(e)}")
    data = prepare_data(exp, seed)
    pairs = data.windows(args.split)
    if not pairs:
        raise ContractError(f"split '{SplitName(args.split).value}' has no windows")
    metrics: Metrics = evaluate(model, pairs, np.random.default_rng(rcfg.seed))
    _emit({"split": SplitName(args.split).value, "model": kind.value, **metrics.model_dump()}, args.format)
    return 0


def cmd_verify(args: Namespace) -> int:
    results = run_suites(args.scope)
    report = ReportGenerator()
    if ReportFormat(args.format) == ReportFormat.JSON:
        _emit(report.generate_report(results, args.scope), ReportFormat.JSON)
    else:
        sys.stdout.write(report.render_table(results) + "\n")
    if args.out:
        get_storage_service(args.out).save_json("verify.json", report.generate_report(results, args.scope))
    failed = failures(results)
    for r in failed:
        logger.error(f"Verification failed: {r.suite}/{r.name} measured {r.measured:.3e} tolerance {r.tolerance:.3e}")
    return 1 if failed else 0


def _spectrum_transform(values: np.ndarray, transform: SpectrumTransform, K: int, beta: float) -> np.ndarray:
    transform = SpectrumTransform(transform)
    if transform == SpectrumTransform.NONE:
        return values
    if transform == SpectrumTransform.REVIN:
        return revin_normalize(values, eps=1e-8)[0].data
    if transform == SpectrumTransform.AMEO:
        return AmeoLayer(K, beta)(values).data
    n = values.shape[-1]
    mid_lo, mid_hi = mid_band_edges(n)
    if transform == SpectrumTransform.LOWPASS:
        return ideal_filter(values, (0, mid_lo - 1), FilterKind.LOW).data
    return ideal_filter(values, (mid_hi + 1, n // 2), FilterKind.HIGH).data


def cmd_spectrum(args: Namespace) -> int:
    ds = load_csv(args.input)
    if ds.length < 8:
        raise ContractError(f"spectrum needs at least 8 steps, got {ds.length}")
    after = _spectrum_transform(ds.values, args.transform, args.K, args.beta)
    e_before = energy(rfft_array(ds.values))
    e_after = energy(rfft_array(after))
    bins = e_before.shape[1]
    spectrum = pd.DataFrame({
        "channel": np.repeat(ds.channel_names, bins),
        "f": np.tile(np.arange(bins), ds.channels),
        "energy_before": e_before.ravel(),
        "energy_after": e_after.ravel(),
    })
    gap = pd.DataFrame({
        "channel": ds.channel_names,
        "mid_gap_before": np.atleast_1d(mid_gap_metric(ds.values)),
        "mid_gap_after": np.atleast_1d(mid_gap_metric(after)),
    })
    if args.out:
        storage = get_storage_service(args.out)
        storage.save_frame("spectrum.csv", spectrum)
        storage.save_frame("mid_gap.csv", gap)
    if ReportFormat(args.format) == ReportFormat.JSON:
        _emit({"spectrum": spectrum.to_dict(orient="records"), "mid_gap": gap.to_dict(orient="records")},
              ReportFormat.JSON)
    else:
        _emit(gap.to_dict(orient="records"), ReportFormat.CSV)
    return 0


def cmd_synth(args: Namespace) -> int:
    try:
        spec = SynthSpec(kind=args.kind, channels=args.channels, length=args.length, key_bin=args.key_bin,
                         carriers=args.carriers, snr=None if args.snr <= 0 else args.snr,
                         private_bins=args.private_bins, low_bins=args.low_bins, mid_leak=args.mid_leak)
    except ValidationError as e:
        raise ConfigError(f"invalid synth arguments: {describe_validation_error(e)}")
    seed = get_seed(args.seed)
    frame = dataset_to_frame(synth_dataset(spec, np.random.default_rng(seed)))
    if args.out:
        storage = get_storage_service(args.out)
        target = storage.save_frame(f"synth_{SynthKind(spec.kind).value}.csv", frame)
        logger.info(f"Wrote {target}")
    else:
        frame.to_csv(sys.stdout, index=False, lineterminator="\n")
    return 0


def cmd_gradcheck(args: Namespace) -> int:
    results = grad_suite(seed=get_seed(args.seed), tol=args.tol)
    worst = max(r.measured for r in results)
    _emit([{"check": r.name, "max_rel_error": r.measured, "tolerance": r.tolerance, "passed": r.passed}
           for r in results], args.format)
    logger.info(f"Gradient check max relative error {worst:.3e}")
    return 1 if failures(results) else 0


def run_ablation(exp: ExperimentConfig, seeds: List[int], arms: Optional[List[str]] = None) -> List[AblationRow]:
    """Median val/test metrics of every arm across seeds."""
    arms = arms or list(ABLATION_ARMS)
    unknown = [a for a in arms if a not in ABLATION_ARMS]
    if unknown:
        raise ConfigError(f"unknown ablation arms: {unknown}")
    rows = []
    data_by_seed = {seed: prepare_data(exp, seed) for seed in seeds}
    for arm in arms:
        arm_exp = ExperimentConfig.model_validate({**exp.model_dump(), **ABLATION_ARMS[arm], "name": arm})
        runs = {seed: run_experiment(arm_exp, seed, data_by_seed[seed])[0] for seed in seeds}
        tests = [m.test for m in runs.values() if m.test is not None]
        rows.append(AblationRow(
            arm=arm, front_end=arm_exp.front_end, ket=arm_exp.ket, schedule=arm_exp.schedule,
            strategy=arm_exp.strategy, seeds=list(seeds),
            val_mse=median(m.val.mse for m in runs.values()),
            val_mae=median(m.val.mae for m in runs.values()),
            test_mse=median(t.mse for t in tests) if tests else None,
            test_mae=median(t.mae for t in tests) if tests else None,
            per_seed_val_mse={seed: m.val.mse for seed, m in runs.items()},
        ))
        logger.info(f"Ablation arm {arm}: median val_mse {rows[-1].val_mse:.6f}")
    return rows


def cmd_ablate(args: Namespace) -> int:
    exp = load_experiment(args.config)
    env_seed = get_settings().SEED
    if args.seed is not None or env_seed is not None:
        seeds = [get_seed(args.seed, exp)]
    else:
        seeds = list(exp.seeds)
    rows = run_ablation(exp, seeds, args.arms)
    records = [r.model_dump(mode="json", exclude={"per_seed_val_mse"}) for r in rows]
    storage = get_storage_service(args.out, exp)
    for fmt in exp.formats:
        if ReportFormat(fmt) == ReportFormat.CSV:
            storage.save_frame("ablation.csv", pd.DataFrame(records).assign(
                seeds=[" ".join(str(s) for s in r.seeds) for r in rows]))
        else:
            storage.save_json("ablation.json", [r.model_dump(mode="json") for r in rows])
    _emit(records if ReportFormat(args.format) == ReportFormat.JSON else
          [{**r, "seeds": " ".join(str(s) for s in r["seeds"])} for r in records], args.format)
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "spectrum": cmd_spectrum,
    "synth": cmd_synth,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}
