# refocus/models/schemas.py
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing import List, Dict, Optional
from .enums import (
    Activation,
    FrontEnd,
    HeadKind,
    KetSchedule,
    ModelKind,
    PickStrategy,
    ReportFormat,
    SynthKind,
)

class ReFocusConfig(BaseModel):
    """Architecture hyperparameters of one ReFocus model."""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    C: int = Field(..., ge=1, description="Number of channels")
    T: int = Field(96, ge=2, description="Input (lookback) length")
    F: int = Field(96, ge=1, description="Forecast horizon")
    D: int = Field(128, ge=2, description="Layer dimension")
    Q: int = Field(64, ge=2, description="Spectral dimension of each EKPB")
    N: int = Field(2, ge=1, description="Number of EKPB blocks")
    K: int = Field(25, ge=1, description="AMEO kernel size")
    beta: float = Field(0.5, ge=0.0, le=1.0)
    strategy: PickStrategy = PickStrategy.SOFTMAX
    eps: float = Field(1e-8, ge=0.0)
    seed: int = 2024
    activation: Activation = Activation.GELU
    head: HeadKind = HeadKind.FREQ
    front_end: FrontEnd = FrontEnd.AMEO
    eval_argmax: bool = False

    @model_validator(mode="after")
    def check_dimensions(self) -> "ReFocusConfig":
        if self.T < self.K:
            raise ValueError(f"T ({self.T}) must be at least K ({self.K})")
        if self.D % 2 or self.Q % 2:
            raise ValueError(f"D ({self.D}) and Q ({self.Q}) must be even")
        return self

class KetConfig(BaseModel):
    """Key-frequency enhanced training settings."""
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    alpha_std: float = Field(1.0, ge=0.0)
    schedule: KetSchedule = KetSchedule.ALTERNATE

    @model_validator(mode="after")
    def check_alpha(self) -> "KetConfig":
        if self.enabled and self.alpha_std <= 0:
            raise ValueError("alpha_std must be positive when KET is enabled")
        return self

    @property
    def mixes(self) -> bool:
        return self.enabled and self.schedule != KetSchedule.REAL_ONLY

class TrainConfig(BaseModel):
    """Optimisation and early-stopping settings."""
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(1e-4, gt=0.0)
    batch_size: int = Field(32, ge=1)
    max_epochs: int = Field(20, ge=1)
    patience: int = Field(3, ge=1)
    seed: int = 2024
    ket: KetConfig = Field(default_factory=KetConfig)

class SynthSpec(BaseModel):
    """Synthetic dataset recipe."""
    model_config = ConfigDict(extra="forbid")

    kind: SynthKind = SynthKind.SHARED_KEY
    channels: int = Field(4, ge=1)
    length: int = Field(2000, ge=8)
    key_bin: int = Field(80, ge=1)
    carriers: List[int] = Field(default_factory=lambda: [1, 2])
    snr: Optional[float] = Field(10.0, gt=0.0, description="Linear power ratio; null means noiseless")
    private_bins: List[int] = Field(default_factory=list)
    low_bins: int = Field(3, ge=0)
    mid_leak: float = Field(0.05, ge=0.0)

    @model_validator(mode="after")
    def check_bins(self) -> "SynthSpec":
        if self.kind == SynthKind.SHARED_KEY:
            if not 1 <= self.key_bin < self.length / 2:
                raise ValueError(f"key_bin must lie in [1, length/2), got {self.key_bin}")
            bad = [c for c in self.carriers if not 0 <= c < self.channels]
            if bad:
                raise ValueError(f"carrier channels out of range: {bad}")
        elif self.low_bins >= self.length / 8:
            raise ValueError(f"low_bins must be below length/8, got {self.low_bins}")
        return self

class ExperimentConfig(BaseModel):
    """Flat experiment file: data source, architecture and training keys."""
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    name: str = "experiment"
    dataset: Optional[str] = Field(None, description="Path to an ETT-layout CSV")
    synth: Optional[SynthSpec] = None
    model: ModelKind = ModelKind.REFOCUS
    ratios: List[float] = Field(default_factory=lambda: [0.6, 0.2, 0.2])

    T: int = Field(96, ge=2)
    F: int = Field(96, ge=1)
    D: int = Field(128, ge=2)
    Q: int = Field(64, ge=2)
    N: int = Field(2, ge=1)
    K: int = Field(25, ge=1)
    beta: float = Field(0.5, ge=0.0, le=1.0)
    strategy: PickStrategy = PickStrategy.SOFTMAX
    eps: float = Field(1e-8, ge=0.0)
    activation: Activation = Activation.GELU
    head: HeadKind = HeadKind.FREQ
    front_end: FrontEnd = FrontEnd.AMEO
    eval_argmax: bool = False

    lr: float = Field(1e-4, gt=0.0)
    batch_size: int = Field(32, ge=1)
    max_epochs: int = Field(20, ge=1)
    patience: int = Field(3, ge=1)
    seed: int = 2024
    ket: bool = True
    alpha_std: float = Field(1.0, ge=0.0)
    schedule: KetSchedule = KetSchedule.ALTERNATE

    seeds: List[int] = Field(default_factory=lambda: [2024])
    out_dir: Optional[str] = None
    formats: List[ReportFormat] = Field(default_factory=lambda: [ReportFormat.CSV, ReportFormat.JSON])

    @model_validator(mode="after")
    def check_source(self) -> "ExperimentConfig":
        if (self.dataset is None) == (self.synth is None):
            raise ValueError("exactly one of 'dataset' or 'synth' must be given")
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ValueError("ratios must be three non-negative numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")
        try:
            self.refocus_config(channels=1)
            self.train_config()
        except ValidationError as e:
            raise ValueError(str(e))
        return self

    def refocus_config(self, channels: int) -> ReFocusConfig:
        return ReFocusConfig(
            C=channels, T=self.T, F=self.F, D=self.D, Q=self.Q, N=self.N, K=self.K,
            beta=self.beta, strategy=self.strategy, eps=self.eps, seed=self.seed,
            activation=self.activation, head=self.head, front_end=self.front_end,
            eval_argmax=self.eval_argmax,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs,
            patience=self.patience, seed=self.seed,
            ket=KetConfig(enabled=self.ket, alpha_std=self.alpha_std, schedule=self.schedule),
        )

class CheckResult(BaseModel):
    """One verifier measurement against its tolerance."""
    suite: str
    name: str
    measured: float
    tolerance: float
    passed: bool
    asserted: bool = True
    detail: str = ""

class EpochRecord(BaseModel):
    """Per-epoch training history row."""
    epoch: int
    train_loss: float
    val_mse: float
    val_mae: float

class Metrics(BaseModel):
    """Standardized-scale forecast errors."""
    mse: float
    mae: float

class RunMetrics(BaseModel):
    """Final metrics of one training run."""
    name: str
    model: ModelKind
    best_epoch: int
    epochs_run: int
    param_count: int
    val: Metrics
    test: Optional[Metrics] = None
    persistence_test: Optional[Metrics] = None

class GDecayRow(BaseModel):
    """One bin of the AMEO decay curve."""
    f: int
    abs_g: float
    gain: float
    layer_gain: float

class AblationRow(BaseModel):
    """Median metrics of one ablation arm across seeds."""
    arm: str
    front_end: FrontEnd
    ket: bool
    schedule: KetSchedule
    strategy: PickStrategy
    seeds: List[int]
    val_mse: float
    val_mae: float
    test_mse: Optional[float] = None
    test_mae: Optional[float] = None
    per_seed_val_mse: Dict[int, float] = Field(default_factory=dict)
