"""Input validation helpers for the estimator front end."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from mosacd.data import Dataset


def as_categorical_dataset(X, feature_names: Sequence[str] | None = None) -> Dataset:
    """Coerce estimator input into a categorical Dataset.

    Accepts a pandas DataFrame (column labels become variable names), a 2d
    array or nested sequence of tokens (named X0..Xk-1 unless feature_names is
    given), or an existing Dataset.  Every cell is treated as an opaque
    categorical token.
    """
    if isinstance(X, Dataset):
        return X
    try:
        import pandas as pd

        if isinstance(X, pd.DataFrame):
            names = [str(c) for c in X.columns]
            rows = X.astype(str).values.tolist()
            return Dataset.from_rows(names, rows)
    except ImportError:  # pragma: no cover - pandas is a hard dependency
        pass
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ValueError(f"expected 2d tabular input, got shape {arr.shape}")
    if feature_names is None:
        feature_names = [f"X{i}" for i in range(arr.shape[1])]
    if len(feature_names) != arr.shape[1]:
        raise ValueError(
            f"feature_names has {len(feature_names)} entries for {arr.shape[1]} columns"
        )
    rows = [[str(v) for v in row] for row in arr.tolist()]
    return Dataset.from_rows(list(feature_names), rows)


def check_fraction(name: str, value: float, open_interval: bool = False) -> float:
    value = float(value)
    if open_interval and not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {value}")
    if not open_interval and not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
