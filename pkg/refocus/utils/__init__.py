import logging

# Exception definitions
class RefocusError(Exception):
    """Base exception for ReFocus."""
    pass

class ContractError(RefocusError):
    """Raised when an operation is called outside its preconditions."""
    pass

class ShapeError(ContractError):
    """Raised when operand shapes do not line up."""
    pass

class NumericalError(RefocusError):
    """Raised when an op or a gradient produces NaN or Inf."""
    pass

class IngestionError(RefocusError):
    """Raised when a dataset file cannot be read."""
    pass

class ConfigError(RefocusError):
    """Raised when an experiment configuration is invalid."""
    pass

class VerificationError(RefocusError):
    """Raised when a verifier assertion fails."""
    pass

class StorageError(RefocusError):
    """Raised when artifact storage operations fail."""
    pass

class CheckpointError(StorageError):
    """Raised when a checkpoint is malformed or does not match the model."""
    pass

# Utility functions
def setup_logging(level: str = "INFO") -> None:
    """Setup logging configuration."""
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

# Initialize logger
logger = logging.getLogger("refocus")
