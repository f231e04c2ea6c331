import json

import numpy as np
import pandas as pd
import pytest

from refocus.config import get_settings
from refocus.models import PickStrategy, ReFocusConfig

ETT_COLUMNS = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"]


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    monkeypatch.delenv("REFOCUS_SEED", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def tiny_config():
    return ReFocusConfig(C=2, T=8, F=4, D=8, Q=8, N=1, K=3, beta=0.5, strategy=PickStrategy.MAX, seed=7)


@pytest.fixture
def write_csv(tmp_path):
    """Write a C x L matrix as an ETT-layout CSV and return its path."""
    def _write(values, name="data.csv", columns=None):
        values = np.asarray(values, dtype=float)
        columns = columns or [f"ch{c}" for c in range(values.shape[0])]
        frame = pd.DataFrame(values.T, columns=columns)
        frame.insert(0, "date", pd.date_range("2016-07-01", periods=values.shape[1], freq="h")
                     .strftime("%Y-%m-%d %H:%M:%S"))
        path = tmp_path / name
        frame.to_csv(path, index=False)
        return path
    return _write


@pytest.fixture
def ett_csv(write_csv, rng):
    values = np.cumsum(rng.standard_normal((7, 100)), axis=1) + 10.0
    return write_csv(values, name="ETTh1_slice.csv", columns=ETT_COLUMNS)


@pytest.fixture
def write_config(tmp_path):
    def _write(payload, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return path
    return _write


@pytest.fixture
def toy_experiment():
    return {
        "name": "toy",
        "synth": {"kind": "shared_key", "channels": 3, "length": 300, "key_bin": 15,
                  "carriers": [0, 1], "snr": 20.0},
        "T": 16, "F": 8, "D": 8, "Q": 8, "N": 1, "K": 4, "beta": 0.5,
        "lr": 1e-3, "batch_size": 32, "max_epochs": 2, "patience": 2, "seed": 11,
    }
