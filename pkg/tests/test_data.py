from __future__ import annotations

import io
import json

import numpy as np
import pytest

from mosacd.data import (
    DataFormatError,
    Dataset,
    Metadata,
    UNINFORMATIVE_DESCRIPTION,
    mask_descriptions,
)


def test_from_rows_and_round_trip():
    ds = Dataset.from_rows(["a", "b"], [["x", "1"], ["y", "2"], ["x", "1"]])
    assert ds.n_rows == 3
    assert ds.cardinality(0) == 2
    text = ds.to_csv_text()
    again = Dataset.read_csv(io.StringIO(text))
    assert again == ds


def test_csv_round_trip_random_tables(rng):
    for _ in range(20):
        n_cols = int(rng.integers(1, 5))
        n_rows = int(rng.integers(1, 30))
        cols = [f"c{i}" for i in range(n_cols)]
        tokens = ["red", "green", "blue", "0", "1", "weird token, with comma"]
        rows = [
            [tokens[rng.integers(0, len(tokens))] for _ in range(n_cols)]
            for _ in range(n_rows)
        ]
        ds = Dataset.from_rows(cols, rows)
        assert Dataset.read_csv(io.StringIO(ds.to_csv_text())) == ds


def test_empty_dataset_rejected():
    with pytest.raises(DataFormatError):
        Dataset.from_rows(["a"], [])
    with pytest.raises(DataFormatError):
        Dataset.read_csv(io.StringIO(""))


def test_ragged_row_rejected():
    with pytest.raises(DataFormatError):
        Dataset.from_rows(["a", "b"], [["x"]])


def test_duplicate_header_rejected():
    with pytest.raises(DataFormatError):
        Dataset.from_rows(["a", "a"], [["x", "y"]])


def test_metadata_json_round_trip(tmp_path):
    meta = Metadata(data_desc="toy data", descriptions={"a": "first", "b": "second"})
    path = tmp_path / "meta.json"
    meta.save_json(path)
    loaded = Metadata.load_json(path)
    assert loaded == meta
    raw = json.loads(path.read_text())
    assert raw["nodes"]["a"]["description"] == "first"


def test_metadata_partial_warns():
    meta = Metadata(descriptions={"a": "first"})
    with pytest.warns(UserWarning):
        missing = meta.warn_if_partial(["a", "b"])
    assert missing == ["b"]


def test_mask_identity_and_full(rng):
    meta = Metadata(descriptions={f"n{i}": f"desc {i}" for i in range(5)})
    same = mask_descriptions(meta, 0.0, rng)
    assert same.descriptions == meta.descriptions
    gone = mask_descriptions(meta, 1.0, rng)
    assert all(d == UNINFORMATIVE_DESCRIPTION for d in gone.descriptions.values())


def test_mask_half_of_27_is_14():
    meta = Metadata(descriptions={f"n{i}": f"desc {i}" for i in range(27)})
    masked = mask_descriptions(meta, 0.5, np.random.default_rng(3))
    hit = sum(d == UNINFORMATIVE_DESCRIPTION for d in masked.descriptions.values())
    assert hit == 14


def test_mask_deterministic_given_seed():
    meta = Metadata(descriptions={f"n{i}": f"desc {i}" for i in range(10)})
    a = mask_descriptions(meta, 0.4, np.random.default_rng(7))
    b = mask_descriptions(meta, 0.4, np.random.default_rng(7))
    assert a.descriptions == b.descriptions
