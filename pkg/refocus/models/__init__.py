from .enums import (
    Activation,
    DftConvention,
    FilterKind,
    FrontEnd,
    HeadKind,
    KetSchedule,
    ModelKind,
    PickStrategy,
    ReportFormat,
    SpectrumTransform,
    SplitName,
    SynthKind,
    VerifyScope,
)
from .schemas import (
    AblationRow,
    CheckResult,
    EpochRecord,
    ExperimentConfig,
    GDecayRow,
    KetConfig,
    Metrics,
    ReFocusConfig,
    RunMetrics,
    SynthSpec,
    TrainConfig,
)
