from enum import Enum

class PickStrategy(str, Enum):
    SOFTMAX = "softmax"
    MAX = "max"
    MIN = "min"

class KetSchedule(str, Enum):
    ALTERNATE = "alternate"
    PSEUDO_ONLY = "pseudo_only"
    REAL_ONLY = "real_only"

class Activation(str, Enum):
    GELU = "gelu"
    RELU = "relu"

class HeadKind(str, Enum):
    FREQ = "freq"
    LINEAR = "linear"

class FrontEnd(str, Enum):
    AMEO = "ameo"
    NONE = "none"
    LOWPASS = "lowpass"
    HIGHPASS = "highpass"
    BANDSTOP = "bandstop"

class ModelKind(str, Enum):
    REFOCUS = "refocus"
    LINEAR = "linear"
    PERSISTENCE = "persistence"

class FilterKind(str, Enum):
    LOW = "low"
    HIGH = "high"
    BANDSTOP = "bandstop"

class DftConvention(str, Enum):
    STANDARD = "standard"   # divisor T
    REDUCED = "reduced"     # divisor T - 1

class SpectrumTransform(str, Enum):
    NONE = "none"
    REVIN = "revin"
    AMEO = "ameo"
    LOWPASS = "lowpass"
    HIGHPASS = "highpass"

class VerifyScope(str, Enum):
    REVIN = "revin"
    AMEO = "ameo"
    GDECAY = "gdecay"
    KET = "ket"
    FILTER = "filter"
    KEYFREQ = "keyfreq"
    GRAD = "grad"
    ALL = "all"

class SynthKind(str, Enum):
    SHARED_KEY = "shared_key"
    MID_GAP = "mid_gap"

class SplitName(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"

class ReportFormat(str, Enum):
    CSV = "csv"
    JSON = "json"
