import json

import numpy as np
import pandas as pd
import pytest

from refocus.core.layers import Linear
from refocus.models import EpochRecord, ModelKind
from refocus.services import StorageService, load_checkpoint
from refocus.services.storage import CHECKPOINT_MAGIC, HISTORY_COLUMNS
from refocus.utils import CheckpointError, ConfigError, ShapeError, StorageError
from refocus.utils.helpers import load_json, median, resolve_seed


@pytest.fixture
def storage(tmp_path):
    return StorageService(str(tmp_path / "out"))


class TestCheckpoint:
    def test_round_trip(self, storage, rng):
        layer = Linear(3, 2, rng)
        path = storage.save_checkpoint(ModelKind.LINEAR, {"T": 3, "F": 2}, layer.state_dict())
        kind, config, state = load_checkpoint(path)
        assert kind == ModelKind.LINEAR
        assert config == {"T": 3, "F": 2}
        restored = Linear(3, 2, np.random.default_rng(99))
        restored.load_state_dict(state)
        np.testing.assert_array_equal(restored.weight.data, layer.weight.data)
        np.testing.assert_array_equal(restored.bias.data, layer.bias.data)

    def test_layout(self, storage, rng):
        path = storage.save_checkpoint(ModelKind.REFOCUS, {}, {"w": np.arange(6.0).reshape(2, 3)})
        payload = json.loads(path.read_text())
        assert payload["magic"] == CHECKPOINT_MAGIC
        assert payload["kind"] == "refocus"
        assert payload["parameters"]["w"] == {"shape": [2, 3], "data": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]}

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text(json.dumps({"magic": "OTHER", "kind": "refocus", "config": {}, "parameters": {}}))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_size_mismatch(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text(json.dumps({"magic": CHECKPOINT_MAGIC, "kind": "refocus", "config": {},
                                    "parameters": {"w": {"shape": [2, 2], "data": [1.0, 2.0, 3.0]}}}))
        with pytest.raises(CheckpointError, match="parameter w"):
            load_checkpoint(path)

    def test_missing_fields(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text(json.dumps({"magic": CHECKPOINT_MAGIC, "kind": "refocus"}))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file_is_storage_error(self, tmp_path):
        with pytest.raises(StorageError):
            load_checkpoint(tmp_path / "absent.json")

    def test_shape_mismatch_on_load(self, storage, rng):
        path = storage.save_checkpoint(ModelKind.LINEAR, {}, Linear(3, 2, rng).state_dict())
        _, _, state = load_checkpoint(path)
        with pytest.raises(ShapeError, match="weight"):
            Linear(4, 2, rng).load_state_dict(state)


class TestArtifacts:
    def test_default_out_dir_from_settings(self, tmp_path, monkeypatch):
        monkeypatch.setenv("REFOCUS_OUTPUT_DIR", str(tmp_path / "from_env"))
        from refocus.config import get_settings
        get_settings.cache_clear()
        service = StorageService()
        assert service.out_dir == tmp_path / "from_env"
        assert service.out_dir.is_dir()

    def test_json_is_sorted(self, storage):
        path = storage.save_json("m.json", {"b": 1, "a": 2})
        assert path.read_text() == '{\n  "a": 2,\n  "b": 1\n}\n'

    def test_unserializable_json(self, storage):
        with pytest.raises(StorageError):
            storage.save_json("bad.json", {"x": object()})

    def test_history_columns(self, storage):
        history = [EpochRecord(epoch=1, train_loss=0.5, val_mse=0.4, val_mae=0.3),
                   EpochRecord(epoch=2, train_loss=0.25, val_mse=0.2, val_mae=0.1)]
        frame = pd.read_csv(storage.save_history(history))
        assert list(frame.columns) == HISTORY_COLUMNS
        assert frame["epoch"].tolist() == [1, 2]

    def test_unwritable_out_dir(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(StorageError):
            StorageService(str(blocker / "sub"))


class TestHelpers:
    def test_load_json(self, tmp_path):
        good = tmp_path / "good.json"
        good.write_text('{"T": 8}')
        assert load_json(good) == {"T": 8}
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_json(bad)
        bad.write_text("{")
        with pytest.raises(ConfigError):
            load_json(bad)

    def test_seed_precedence(self):
        assert resolve_seed(1, 2, 3) == 1
        assert resolve_seed(None, 2, 3) == 2
        assert resolve_seed(None, None, 3) == 3
        assert resolve_seed(0, 2, 3) == 0

    def test_median(self):
        assert median([3.0, 1.0, 2.0]) == 2.0
        assert np.isnan(median([]))
