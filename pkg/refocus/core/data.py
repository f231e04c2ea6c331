# refocus/core/data.py
"""ETT-layout CSV ingestion, chronological splits, standardization, windows and synthetic generators."""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from refocus.models.enums import SplitName, SynthKind
from refocus.models.schemas import SynthSpec
from refocus.utils import ContractError, IngestionError, logger


@dataclass
class Dataset:
    """Channel-major C x L matrix with the channel names in header order."""
    name: str
    channel_names: List[str]
    values: np.ndarray
    note: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.channel_names):
            raise ContractError(
                f"dataset {self.name}: values {self.values.shape} do not match {len(self.channel_names)} channels"
            )
        if not np.isfinite(self.values).all():
            raise ContractError(f"dataset {self.name} contains non-finite values")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Boundaries of train [0, train_end), val [train_end, val_end) and test [val_end, length).

    Val and test segments start ``lookback`` steps early so their first
    targets have context; those extra steps are never targets.
    """
    train_end: int
    val_end: int
    length: int
    lookback: int

    def segment(self, name: SplitName) -> Tuple[int, int]:
        name = SplitName(name)
        if name == SplitName.TRAIN:
            return 0, self.train_end
        if name == SplitName.VAL:
            return max(self.train_end - self.lookback, 0), self.val_end
        return max(self.val_end - self.lookback, 0), self.length

    def target_start(self, name: SplitName) -> int:
        name = SplitName(name)
        if name == SplitName.TRAIN:
            return self.lookback
        start, _ = self.segment(name)
        return start + self.lookback


@dataclass
class WindowPair:
    X: np.ndarray
    Y: np.ndarray
    origin: int


@dataclass
class Scaler:
    """Per-channel affine map fitted on the train segment."""
    mean: np.ndarray
    std: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean[:, None]) / self.std[:, None]

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        return values * self.std[:, None] + self.mean[:, None]


@dataclass
class SharedKeyTruth:
    key_bin: int
    carriers: List[int]
    phases: Dict[int, float] = field(default_factory=dict)
    private_bins: Dict[int, int] = field(default_factory=dict)


def load_csv(path) -> Dataset:
    """Read a CSV whose first column is a timestamp and whose other columns are channels."""
    path = Path(path)
    if not path.is_file():
        logger.error(f"Dataset file not found: {path}")
        raise IngestionError(f"dataset file not found: {path}")
    try:
        # header=None keeps duplicate names visible
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        logger.error(f"Failed to read {path}: {str(e)}")
        raise IngestionError(f"malformed CSV {path}: {str(e)}")

    columns = [str(c).strip() for c in raw.iloc[0]]
    if len(columns) < 2:
        raise IngestionError(f"{path}: header needs a timestamp column and at least one channel")
    if any(not c for c in columns):
        raise IngestionError(f"{path}: header has an empty column name")
    if len(set(columns)) != len(columns):
        raise IngestionError(f"{path}: duplicate column names in header")
    frame = raw.iloc[1:].reset_index(drop=True)
    if frame.empty:
        raise IngestionError(f"{path}: no data rows")
    frame.columns = columns

    channel_names = columns[1:]
    numeric = frame[channel_names].apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
    if bad.to_numpy().any():
        row_pos, col_pos = np.argwhere(bad.to_numpy())[0]
        name = channel_names[col_pos]
        cell = frame.iloc[row_pos][name]
        logger.error(f"Non-numeric cell in {path} at row {row_pos + 1}, column {name}")
        raise IngestionError(f"row {row_pos + 1}, column '{name}': cannot parse {cell!r} as a number")

    stamps = pd.to_datetime(frame[columns[0]], errors="coerce")
    if stamps.isna().any():
        logger.warning(f"{path}: {int(stamps.isna().sum())} timestamps could not be parsed")
    elif not stamps.is_monotonic_increasing:
        logger.warning(f"{path}: timestamps are not in increasing order")

    values = numeric.to_numpy(dtype=np.float64).T
    logger.info(f"Loaded {path.name}: {values.shape[0]} channels x {values.shape[1]} steps")
    return Dataset(name=path.stem, channel_names=channel_names, values=values)


def dataset_to_frame(ds: Dataset, start: str = "2016-07-01 00:00:00", freq: str = "h") -> pd.DataFrame:
    """ETT layout: a ``date`` column followed by one column per channel."""
    frame = pd.DataFrame(ds.values.T, columns=ds.channel_names)
    frame.insert(0, "date", pd.date_range(start=start, periods=ds.length, freq=freq).strftime("%Y-%m-%d %H:%M:%S"))
    return frame


def chronological_split(length: int, ratios: Sequence[float], T: int) -> SplitSpec:
    """Floor boundaries of the ratio split; val and test are extended back by T steps."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ContractError(f"ratios must be three non-negative numbers, got {list(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ContractError(f"ratios must sum to 1, got {sum(ratios)}")
    if length < 1 or T < 0:
        raise ContractError(f"invalid split request: length={length}, T={T}")
    r1, r2 = (Fraction(repr(float(r))) for r in ratios[:2])
    train_end = math.floor(r1 * length)
    val_end = math.floor((r1 + r2) * length)
    return SplitSpec(train_end=train_end, val_end=val_end, length=length, lookback=T)


def standardize(ds: Dataset, split: SplitSpec) -> Tuple[Dataset, Scaler]:
    """Scale every channel by train-segment mean and std (std floored at 1e-8)."""
    start, stop = split.segment(SplitName.TRAIN)
    train = ds.values[:, start:stop]
    if train.shape[1] == 0:
        raise ContractError("standardize needs a non-empty train segment")
    scaler = Scaler(mean=train.mean(axis=1), std=np.maximum(train.std(axis=1), 1e-8))
    scaled = Dataset(name=ds.name, channel_names=list(ds.channel_names),
                     values=scaler.transform(ds.values), note=ds.note)
    return scaled, scaler


def windows(segment: np.ndarray, T: int, F: int, strict: bool = False, offset: int = 0) -> List[WindowPair]:
    """All stride-1 (T, F) windows of a C x len segment in chronological order."""
    segment = np.asarray(segment, dtype=np.float64)
    n = segment.shape[-1]
    count = n - T - F + 1
    if count < 1:
        msg = f"segment of length {n} is shorter than T+F={T + F}"
        if strict:
            raise ContractError(msg)
        logger.warning(f"{msg}; no windows")
        return []
    return [
        WindowPair(X=segment[:, s:s + T], Y=segment[:, s + T:s + T + F], origin=offset + s)
        for s in range(count)
    ]


def split_windows(ds: Dataset, split: SplitSpec, name: SplitName, T: int, F: int,
                  strict: bool = False) -> List[WindowPair]:
    start, stop = split.segment(name)
    return windows(ds.values[:, start:stop], T, F, strict=strict, offset=start)


def stack_windows(pairs: Sequence[WindowPair]) -> Tuple[np.ndarray, np.ndarray]:
    """(B, C, T) inputs and (B, C, F) targets."""
    if not pairs:
        raise ContractError("no windows to stack")
    return np.stack([p.X for p in pairs]), np.stack([p.Y for p in pairs])


# synthetic generators

def synth_shared_key(
    C: int,
    L: int,
    key_bin: int,
    carrier_channels: Sequence[int],
    snr: Optional[float],
    rng: np.random.Generator,
    private_bins: Sequence[int] = (),
) -> Tuple[Dataset, SharedKeyTruth]:
    """Carriers hold a unit sinusoid at ``key_bin`` with a random phase; every channel gets noise.

    ``snr`` is the linear ratio of sinusoid power (1/2) to noise power; None
    means noiseless. ``private_bins[i]`` adds a half-amplitude sinusoid to
    channel i only.
    """
    if not 1 <= key_bin < L / 2:
        raise ContractError(f"key_bin must lie in [1, L/2), got {key_bin} for L={L}")
    carriers = sorted(set(int(c) for c in carrier_channels))
    if any(not 0 <= c < C for c in carriers):
        raise ContractError(f"carrier channels {carriers} out of range for C={C}")
    t = np.arange(L)
    values = np.zeros((C, L))
    phases = {}
    for c in carriers:
        phases[c] = float(rng.uniform(0.0, 2 * np.pi))
        values[c] += np.sin(2 * np.pi * key_bin * t / L + phases[c])
    private = {}
    for c, b in enumerate(private_bins[:C]):
        private[c] = int(b)
        values[c] += 0.5 * np.sin(2 * np.pi * b * t / L + rng.uniform(0.0, 2 * np.pi))
    if snr is not None:
        values += rng.normal(0.0, np.sqrt(0.5 / snr), size=(C, L))
    names = [f"ch{c}" for c in range(C)]
    truth = SharedKeyTruth(key_bin=key_bin, carriers=carriers, phases=phases, private_bins=private)
    return Dataset(name="synth_shared_key", channel_names=names, values=values,
                   note=f"key_bin={key_bin} carriers={carriers} snr={snr}"), truth


def synth_mid_gap(L: int, low_bins: int, mid_leak: float, rng: np.random.Generator) -> np.ndarray:
    """Unit sinusoids at bins 1..low_bins plus one ``mid_leak`` sinusoid at bin round(L/4)."""
    if L < 8:
        raise ContractError(f"synth_mid_gap needs L >= 8, got {L}")
    if not 0 <= low_bins < L / 8:
        raise ContractError(f"low_bins must be below L/8, got {low_bins} for L={L}")
    t = np.arange(L)
    x = np.zeros(L)
    for b in range(1, low_bins + 1):
        x += np.sin(2 * np.pi * b * t / L + rng.uniform(0.0, 2 * np.pi))
    mid = int(round(L / 4))
    x += mid_leak * np.sin(2 * np.pi * mid * t / L + rng.uniform(0.0, 2 * np.pi))
    return x


def synth_dataset(spec: SynthSpec, rng: np.random.Generator) -> Dataset:
    kind = SynthKind(spec.kind)
    if kind == SynthKind.SHARED_KEY:
        ds, _ = synth_shared_key(spec.channels, spec.length, spec.key_bin, spec.carriers,
                                 spec.snr, rng, spec.private_bins)
        return ds
    values = np.stack([synth_mid_gap(spec.length, spec.low_bins, spec.mid_leak, rng)
                       for _ in range(spec.channels)])
    return Dataset(name="synth_mid_gap", channel_names=[f"ch{c}" for c in range(spec.channels)],
                   values=values, note=f"low_bins={spec.low_bins} mid_leak={spec.mid_leak}")
