from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
from refocus.config import get_settings
from refocus.models.enums import ModelKind
from refocus.models.schemas import EpochRecord
from refocus.utils import CheckpointError, StorageError, logger
import numpy as np
import pandas as pd
import json

CHECKPOINT_MAGIC = "REFOCUS-CKPT-1"
HISTORY_COLUMNS = ["epoch", "train_loss", "val_mse", "val_mae"]

class StorageService:
    def __init__(self, out_dir: Optional[str] = None):
        self.settings = get_settings()
        self.out_dir = Path(out_dir or self.settings.OUTPUT_DIR)
        self._ensure_out_dir()

    def _ensure_out_dir(self):
        """Ensure the output directory exists."""
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except Exception as e:
            logger.error(f"Failed to create output directory: {str(e)}")
            raise StorageError(f"Storage initialization failed: {str(e)}")

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def save_json(self, name: str, payload: Any) -> Path:
        """Write a JSON artifact (sorted keys, stable layout)."""
        target = self.path(name)
        try:
            with open(target, "w", encoding="utf-8") as f:
                json.dump(payload, f, indent=2, sort_keys=True)
                f.write("\n")
            return target
        except (OSError, TypeError, ValueError) as e:
            logger.error(f"Failed to write {target}: {str(e)}")
            raise StorageError(f"JSON write failed for {target}: {str(e)}")

    def save_frame(self, name: str, frame: pd.DataFrame) -> Path:
        """Write a CSV artifact without the index."""
        target = self.path(name)
        try:
            frame.to_csv(target, index=False, lineterminator="\n")
            return target
        except OSError as e:
            logger.error(f"Failed to write {target}: {str(e)}")
            raise StorageError(f"CSV write failed for {target}: {str(e)}")

    def save_history(self, history: List[EpochRecord], name: str = "history.csv") -> Path:
        frame = pd.DataFrame([r.model_dump() for r in history], columns=HISTORY_COLUMNS)
        return self.save_frame(name, frame)

    def save_checkpoint(
        self,
        kind: ModelKind,
        config: Dict[str, Any],
        state: Dict[str, np.ndarray],
        name: str = "checkpoint.json",
    ) -> Path:
        """Versioned JSON checkpoint: magic, model kind, config and named parameter arrays."""
        payload = {
            "magic": CHECKPOINT_MAGIC,
            "kind": ModelKind(kind).value,
            "config": config,
            "parameters": {
                key: {"shape": list(arr.shape), "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
                for key, arr in state.items()
            },
        }
        target = self.save_json(name, payload)
        logger.info(f"Saved checkpoint with {len(state)} parameter tensors to {target}")
        return target

def load_checkpoint(path) -> Tuple[ModelKind, Dict[str, Any], Dict[str, np.ndarray]]:
    """Read a checkpoint written by ``StorageService.save_checkpoint``."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as e:
        logger.error(f"Failed to read checkpoint {path}: {str(e)}")
        raise StorageError(f"cannot read checkpoint {path}: {str(e)}")
    except json.JSONDecodeError as e:
        logger.error(f"Checkpoint {path} is not valid JSON: {str(e)}")
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {str(e)}")

    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
    try:
        kind = ModelKind(payload["kind"])
        config = dict(payload["config"])
        state = {}
        for key, entry in payload["parameters"].items():
            shape = tuple(int(s) for s in entry["shape"])
            data = np.asarray(entry["data"], dtype=np.float64)
            if data.size != int(np.prod(shape)):
                raise CheckpointError(f"parameter {key}: {data.size} values for shape {shape}")
            state[key] = data.reshape(shape)
    except (KeyError, TypeError, ValueError) as e:
        logger.error(f"Malformed checkpoint {path}: {str(e)}")
        raise CheckpointError(f"malformed checkpoint {path}: {str(e)}")
    return kind, config, state
