from typing import Dict, Any, Optional
from pathlib import Path
import json
import math
import numpy as np
from refocus.utils import ConfigError, logger

def load_json(path) -> Dict[str, Any]:
    """Parse a JSON object from a file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            content = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"JSON parsing failed for {path}: {str(e)}")
        raise ConfigError(f"{path} is not valid JSON: {str(e)}")
    if not isinstance(content, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return content

def resolve_seed(flag: Optional[int], env: Optional[int], config_seed: int) -> int:
    """--seed flag, then REFOCUS_SEED, then the config file."""
    for seed in (flag, env):
        if seed is not None:
            return int(seed)
    return int(config_seed)

def median(values) -> float:
    """Median of a non-empty sequence; NaN when empty."""
    values = list(values)
    return float(np.median(values)) if values else math.nan
