"""Shared fixtures: a seeded churn-shaped CSV and small, fast experiment configs."""

import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from config import config_from_dict
from data_model import load_dataset, map_outcome_labels
from experiments import run_suite
from preprocess import dummy_encode

HEADER = [
    "RowNumber",
    "CustomerId",
    "Surname",
    "CreditScore",
    "Geography",
    "Gender",
    "Age",
    "Tenure",
    "Balance",
    "NumOfProducts",
    "HasCrCard",
    "IsActiveMember",
    "EstimatedSalary",
    "Exited",
]

CHURN_DATA = os.getenv("CHURN_DATA")
needs_churn_data = pytest.mark.skipif(
    not (CHURN_DATA and Path(CHURN_DATA).is_file()),
    reason="set CHURN_DATA to the 10000-row bank churn CSV",
)


def synthetic_churn_frame(n: int = 400, seed: int = 0) -> pd.DataFrame:
    """Churn-shaped rows whose outcome depends on Age, activity, products and Germany."""
    rng = np.random.default_rng(seed)
    geography = rng.choice(["France", "Germany", "Spain"], size=n, p=[0.5, 0.25, 0.25])
    age = np.clip(np.round(rng.gamma(9.0, 4.3, size=n)), 18, 92).astype(int)
    active = rng.integers(0, 2, size=n)
    products = rng.choice([1, 2, 3, 4], size=n, p=[0.5, 0.45, 0.04, 0.01])
    balance = np.where(rng.random(n) < 0.36, 0.0, np.round(rng.normal(119000, 30000, n), 2))
    balance = np.maximum(balance, 0.0)
    logit = (
        -2.6
        + 0.075 * (age - 20)
        - 1.1 * active
        + 0.8 * (geography == "Germany")
        + 1.6 * (products >= 3)
        - 0.6 * (products == 2)
        + 0.3 * (balance > 0)
    )
    exited = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(int)
    return pd.DataFrame(
        {
            "RowNumber": np.arange(1, n + 1),
            "CustomerId": 15600000 + np.arange(n),
            "Surname": [f"Name{i}" for i in range(n)],
            "CreditScore": np.clip(np.round(rng.normal(650, 96, n)), 350, 850).astype(int),
            "Geography": geography,
            "Gender": rng.choice(["Female", "Male"], size=n),
            "Age": age,
            "Tenure": rng.integers(0, 11, size=n),
            "Balance": balance,
            "NumOfProducts": products,
            "HasCrCard": rng.integers(0, 2, size=n),
            "IsActiveMember": active,
            "EstimatedSalary": np.round(rng.uniform(11.58, 199992.48, n), 2),
            "Exited": exited,
        },
        columns=HEADER,
    )


@pytest.fixture
def write_churn_csv(tmp_path):
    """Factory: write a synthetic churn CSV and return its path."""

    def write(n: int = 400, seed: int = 0, name: str = "churn.csv") -> Path:
        path = tmp_path / name
        synthetic_churn_frame(n, seed).to_csv(path, index=False)
        return path

    return write


@pytest.fixture
def churn_csv(write_churn_csv) -> Path:
    return write_churn_csv()


@pytest.fixture
def churn_ds(churn_csv):
    return map_outcome_labels(load_dataset(churn_csv))


@pytest.fixture
def churn_table(churn_ds):
    return dummy_encode(churn_ds)


def fast_settings(data_path: Path, out_dir: Path, threads: int = 1) -> dict:
    """Every stage, shrunk to seconds: few folds, tiny forests, short grids."""
    return {
        "run": {
            "data_path": str(data_path),
            "seed": 7,
            "out_dir": str(out_dir),
            "threads": threads,
        },
        "cv": {"folds": 3, "repeats": 1},
        "forest": {"n_trees": 15, "tuning_trees": 8},
        "network": {"max_iter": 60},
        "rfe": {"sizes": [2, 5, 10], "folds": 3, "repeats": 1, "n_trees": 8},
        "grids": {
            "knn": {"k": [5, 9]},
            "cart": {"cp": [0.01, 0.05]},
            "rf": {"mtry": [2, 4]},
            "ann": {"size": [2], "decay": [0.1, 0.5]},
        },
    }


@pytest.fixture
def fast_config(churn_csv, tmp_path):
    return config_from_dict(fast_settings(churn_csv, tmp_path / "run"))


@pytest.fixture(scope="session")
def compare_run(tmp_path_factory):
    """One fast profile + compare suite, shared by the experiment and report tests."""
    root = tmp_path_factory.mktemp("compare")
    path = root / "churn.csv"
    synthetic_churn_frame().to_csv(path, index=False)
    cfg = config_from_dict(fast_settings(path, root / "run"))
    return cfg, run_suite(cfg, ["compare"])
