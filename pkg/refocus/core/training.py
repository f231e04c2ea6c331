# refocus/core/training.py
"""Key-frequency enhanced training: channel mixing, Adam, early stopping and evaluation."""
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from refocus.core.data import WindowPair, stack_windows
from refocus.core.ekpb import PickTrace
from refocus.core.layers import Module
from refocus.core.spectral import irfft_array, rfft_array
from refocus.core.tensor import Tape, Tensor, mse_loss
from refocus.models.enums import KetSchedule
from refocus.models.schemas import CheckResult, EpochRecord, Metrics, TrainConfig
from refocus.utils import ContractError, NumericalError, ShapeError, logger

BatchHook = Callable[[int, int, bool, np.ndarray, np.ndarray], None]


def ket_mix(
    X: np.ndarray,
    Y: np.ndarray,
    alpha_std: float,
    rng: Optional[np.random.Generator] = None,
    alpha: Optional[np.ndarray] = None,
    perm: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """X'_b = X_b + alpha_b * X_b[perm_b]; the same alpha_b and perm_b mix Y_b.

    One permutation and one alpha ~ N(0, alpha_std^2) per channel are drawn for
    every sample unless given.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 3 or Y.ndim != 3 or X.shape[:2] != Y.shape[:2]:
        raise ShapeError(f"ket_mix expects (B, C, T) and (B, C, F), got {X.shape} and {Y.shape}")
    B, C = X.shape[:2]
    if rng is None and (perm is None or alpha is None):
        raise ContractError("ket_mix needs an rng unless alpha and perm are both given")
    if perm is None:
        perm = np.stack([rng.permutation(C) for _ in range(B)]) if B else np.zeros((0, C), dtype=int)
    if alpha is None:
        alpha = rng.normal(0.0, alpha_std, size=(B, C))
    perm = np.asarray(perm, dtype=np.intp)
    alpha = np.asarray(alpha, dtype=np.float64)
    if perm.shape != (B, C) or alpha.shape != (B, C):
        raise ShapeError(f"alpha {alpha.shape} and perm {perm.shape} must both be {(B, C)}")
    idx = perm[:, :, None]
    X_mix = X + alpha[:, :, None] * np.take_along_axis(X, idx, axis=1)
    Y_mix = Y + alpha[:, :, None] * np.take_along_axis(Y, idx, axis=1)
    return X_mix, Y_mix, alpha, perm


def ket_mix_spectral(X: np.ndarray, alpha: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """The same mix written on spectra: irfft(rfft(X) + alpha * rfft(X[perm]))."""
    X = np.asarray(X, dtype=np.float64)
    spec = rfft_array(X)
    mixed = spec + alpha[:, :, None] * np.take_along_axis(spec, np.asarray(perm)[:, :, None], axis=1)
    return irfft_array(mixed, X.shape[-1])


def verify_ket_equivalence(X, Y, alpha, perm, tol: float = 1e-10) -> CheckResult:
    """Max absolute gap between the spectral and the time-domain mix over inputs and targets."""
    X_time, Y_time, _, _ = ket_mix(X, Y, 0.0, alpha=alpha, perm=perm)
    gap = max(
        float(np.abs(ket_mix_spectral(X, alpha, perm) - X_time).max(initial=0.0)),
        float(np.abs(ket_mix_spectral(Y, alpha, perm) - Y_time).max(initial=0.0)),
    )
    shape = tuple(np.shape(X))
    return CheckResult(suite="ket", name=f"spectral_vs_time{shape}", measured=gap,
                       tolerance=tol, passed=gap < tol, detail="max |freq-domain mix - time-domain mix|")


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    lr: float
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params], lr=lr)


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState) -> AdamState:
    """Bias-corrected Adam update applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and Adam state differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is not None and not np.isfinite(g).all():
            logger.error(f"Non-finite gradient for parameter {i} ({p.name}) at step {state.step + 1}")
            raise NumericalError(f"non-finite gradient for parameter {i} ({p.name})")
    state.step += 1
    t = state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p.data) if g is None else g
        if g.shape != p.shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter {p.shape}")
        state.m[i] = state.b1 * state.m[i] + (1 - state.b1) * g
        state.v[i] = state.b2 * state.v[i] + (1 - state.b2) * g ** 2
        m_hat = state.m[i] / (1 - state.b1 ** t)
        v_hat = state.v[i] / (1 - state.b2 ** t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4):
        self.params = list(params)
        self.state = AdamState.for_params(self.params, lr)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class EarlyStopping:
    """Stop when the validation loss has not improved by more than ``min_delta`` for ``patience`` epochs."""

    def __init__(self, patience: int = 3, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.counter = 0
        self.best_loss: Optional[float] = None
        self.early_stop = False

    def __call__(self, val_loss: float) -> bool:
        """Record a loss; True when it is the new best."""
        if self.best_loss is None or self.best_loss - val_loss > self.min_delta:
            self.best_loss = val_loss
            self.counter = 0
            return True
        self.counter += 1
        logger.info(f"Early stopping counter {self.counter} of {self.patience}")
        if self.counter >= self.patience:
            logger.info("Early stopping")
            self.early_stop = True
        return False


@dataclass
class TrainResult:
    history: List[EpochRecord]
    best_epoch: int
    best_val: Metrics
    state: Dict[str, np.ndarray]
    best_trace: Optional[PickTrace] = None
    forward_seconds: List[float] = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def mean_forward_seconds(self) -> float:
        return float(np.mean(self.forward_seconds)) if self.forward_seconds else 0.0


def is_mixed_batch(schedule: KetSchedule, enabled: bool, index: int) -> bool:
    """Alternate starts real: even batches real, odd batches mixed."""
    if not enabled:
        return False
    schedule = KetSchedule(schedule)
    if schedule == KetSchedule.REAL_ONLY:
        return False
    if schedule == KetSchedule.PSEUDO_ONLY:
        return True
    return index % 2 == 1


def _evaluate(
    model: Module,
    pairs: Sequence[WindowPair],
    rng: np.random.Generator,
    batch_size: int,
) -> Tuple[Metrics, Optional[PickTrace]]:
    if not pairs:
        raise ContractError("evaluate needs at least one window")
    sq_sum = 0.0
    abs_sum = 0.0
    count = 0
    first_trace = None
    for start in range(0, len(pairs), batch_size):
        X, Y = stack_windows(pairs[start:start + batch_size])
        pred, traces = model.forward(X, rng, training=False)
        if first_trace is None and traces:
            first_trace = traces[0]
        diff = pred.data - Y
        sq_sum += float((diff ** 2).sum())
        abs_sum += float(np.abs(diff).sum())
        count += diff.size
    return Metrics(mse=sq_sum / count, mae=abs_sum / count), first_trace


def evaluate(
    model: Module,
    pairs: Sequence[WindowPair],
    rng: Optional[np.random.Generator] = None,
    batch_size: int = 256,
) -> Metrics:
    """MSE and MAE over every window, channel and step (standardized scale)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    metrics, _ = _evaluate(model, pairs, rng, batch_size)
    return metrics


def train(
    model: Module,
    train_pairs: Sequence[WindowPair],
    val_pairs: Sequence[WindowPair],
    cfg: TrainConfig,
    on_batch: Optional[BatchHook] = None,
) -> TrainResult:
    """Seeded epoch loop with KET batches, Adam, early stopping and best-epoch restore."""
    if not train_pairs or not val_pairs:
        raise ContractError(
            f"training needs non-empty splits, got {len(train_pairs)} train and {len(val_pairs)} val windows"
        )
    X_all, Y_all = stack_windows(train_pairs)
    shuffle_rng, ket_rng, model_rng = (np.random.default_rng(s)
                                       for s in np.random.SeedSequence(cfg.seed).spawn(3))
    params = model.parameters()
    optimizer = Adam(params, lr=cfg.lr) if params else None
    stopper = EarlyStopping(patience=cfg.patience)
    ket = cfg.ket
    history: List[EpochRecord] = []
    forward_seconds: List[float] = []
    best_state = model.state_dict()
    best_epoch, best_val, best_trace = 0, None, None
    n = X_all.shape[0]
    epochs = cfg.max_epochs if optimizer else 1

    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(n)
        losses = []
        for j, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X_all[idx], Y_all[idx]
            mixed = is_mixed_batch(ket.schedule, ket.enabled, j)
            if mixed:
                xb, yb, _, _ = ket_mix(xb, yb, ket.alpha_std, ket_rng)
            if on_batch is not None:
                on_batch(epoch, j, mixed, xb, yb)
            if optimizer is None:
                pred, _ = model.forward(xb, model_rng, training=True)
                losses.append(float(np.mean((pred.data - yb) ** 2)))
                continue
            optimizer.zero_grad()
            with Tape() as tape:
                tick = time.perf_counter()
                pred, _ = model.forward(xb, model_rng, training=True)
                forward_seconds.append(time.perf_counter() - tick)
                loss = mse_loss(pred, Tensor(yb))
                tape.backward(loss)
            optimizer.step()
            losses.append(loss.item())

        val, trace = _evaluate(model, val_pairs, np.random.default_rng(cfg.seed), 256)
        record = EpochRecord(epoch=epoch, train_loss=float(np.mean(losses)), val_mse=val.mse, val_mae=val.mae)
        history.append(record)
        logger.info(f"Epoch {epoch}: train_loss={record.train_loss:.6f} val_mse={val.mse:.6f} val_mae={val.mae:.6f}")
        if stopper(val.mse):
            best_state = model.state_dict()
            best_epoch, best_val, best_trace = epoch, val, trace
        if stopper.early_stop:
            break

    model.load_state_dict(best_state)
    return TrainResult(history=history, best_epoch=best_epoch, best_val=best_val, state=best_state,
                       best_trace=best_trace, forward_seconds=forward_seconds)
