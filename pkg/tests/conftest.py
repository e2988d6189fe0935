import os
import warnings
from pathlib import Path

import numpy as np
import pytest

from faultinsight.balancing import BalanceConfig, balance
from faultinsight.data import make_synthetic
from faultinsight.learners import RandomForest

DEFAULT_DATA = Path(__file__).resolve().parents[1] / "data" / "Faults.NNA"


def reference_data_path() -> Path:
    return Path(os.environ.get("FAULTINSIGHT_DATA", DEFAULT_DATA))


@pytest.fixture(scope="session")
def synthetic():
    return make_synthetic(seed=0)


@pytest.fixture(scope="session")
def synthetic_smote(synthetic):
    return balance(synthetic, BalanceConfig("smote", seed=0))


@pytest.fixture(scope="session")
def small_forest(synthetic_smote):
    return RandomForest(n_trees=25, mtry=5, seed=3).fit(synthetic_smote.X, synthetic_smote.y)


@pytest.fixture(autouse=True)
def _quiet_bin_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*bins after merging.*")
        yield


class StubModel:
    """Deterministic probabilistic classifier given by a function of X."""

    def __init__(self, fn, classes):
        self.fn = fn
        self.classes_ = np.asarray(classes)

    def predict_proba(self, X):
        return self.fn(np.asarray(X, dtype=np.float64))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
