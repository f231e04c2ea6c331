from .tensor import Tape, Tensor
from .model import ReFocusModel, model_forward, param_count
from .training import train, evaluate
from .report import ReportGenerator
