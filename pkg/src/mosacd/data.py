"""Tabular categorical datasets, CSV round-tripping, and node metadata."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DataFormatError",
    "Dataset",
    "Metadata",
    "UNINFORMATIVE_DESCRIPTION",
    "mask_descriptions",
]


class DataFormatError(ValueError):
    """Malformed tabular input: ragged rows, duplicate headers, empty data."""


UNINFORMATIVE_DESCRIPTION = "No description available for this variable."


class Dataset:
    """Discrete dataset: every cell is a categorical token.

    Stored as integer codes plus a per-column level table (code -> token).
    Level order is first-appearance order for CSV input and declaration order
    for sampled networks, so code assignment is deterministic.
    """

    def __init__(self, columns: Sequence[str], codes: np.ndarray, levels: Sequence[Sequence[str]]):
        self.columns = list(columns)
        self.codes = np.asarray(codes, dtype=np.int32)
        self.levels = [list(lv) for lv in levels]
        if self.codes.ndim != 2 or self.codes.shape[1] != len(self.columns):
            raise DataFormatError("code matrix shape does not match header")
        if len(self.levels) != len(self.columns):
            raise DataFormatError("level table does not match header")

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    @property
    def n_cols(self) -> int:
        return self.codes.shape[1]

    def cardinality(self, col: int) -> int:
        return len(self.levels[col])

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None

    @classmethod
    def from_rows(cls, columns: Sequence[str], rows: Iterable[Sequence[str]]) -> "Dataset":
        columns = list(columns)
        if len(set(columns)) != len(columns):
            dupes = sorted({c for c in columns if columns.count(c) > 1})
            raise DataFormatError(f"duplicate header names: {dupes}")
        encoders: list[dict[str, int]] = [{} for _ in columns]
        coded: list[list[int]] = []
        for i, row in enumerate(rows):
            row = list(row)
            if len(row) != len(columns):
                raise DataFormatError(
                    f"row {i + 1} has {len(row)} cells, expected {len(columns)}"
                )
            out = []
            for j, token in enumerate(row):
                enc = encoders[j]
                if token not in enc:
                    enc[token] = len(enc)
                out.append(enc[token])
            coded.append(out)
        if not coded:
            raise DataFormatError("dataset has no rows")
        levels = [[tok for tok, _ in sorted(e.items(), key=lambda kv: kv[1])] for e in encoders]
        return cls(columns, np.array(coded, dtype=np.int32), levels)

    def rows(self) -> Iterable[list[str]]:
        for r in range(self.n_rows):
            yield [self.levels[j][self.codes[r, j]] for j in range(self.n_cols)]

    # -- CSV ------------------------------------------------------------

    @classmethod
    def read_csv(cls, path_or_buffer) -> "Dataset":
        if hasattr(path_or_buffer, "read"):
            return cls._read_csv_stream(path_or_buffer)
        with open(path_or_buffer, newline="", encoding="utf-8") as fh:
            return cls._read_csv_stream(fh)

    @classmethod
    def _read_csv_stream(cls, fh) -> "Dataset":
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file: header row is mandatory") from None
        return cls.from_rows(header, reader)

    def write_csv(self, path_or_buffer) -> None:
        if hasattr(path_or_buffer, "write"):
            self._write_csv_stream(path_or_buffer)
            return
        with open(path_or_buffer, "w", newline="", encoding="utf-8") as fh:
            self._write_csv_stream(fh)

    def _write_csv_stream(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows())

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self._write_csv_stream(buf)
        return buf.getvalue()

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Dataset)
            and self.columns == other.columns
            and [list(r) for r in self.rows()] == [list(r) for r in other.rows()]
        )


@dataclass
class Metadata:
    """Display names and free-text descriptions for the variables."""

    data_desc: str = ""
    descriptions: dict[str, str] = field(default_factory=dict)

    def description_for(self, name: str) -> str:
        return self.descriptions.get(name, UNINFORMATIVE_DESCRIPTION)

    def missing_for(self, names: Sequence[str]) -> list[str]:
        return [n for n in names if n not in self.descriptions]

    def warn_if_partial(self, names: Sequence[str]) -> list[str]:
        missing = self.missing_for(names)
        if missing:
            warnings.warn(
                f"metadata is missing descriptions for {len(missing)} node(s): "
                + ", ".join(missing[:5])
                + ("..." if len(missing) > 5 else ""),
                stacklevel=2,
            )
        return missing

    @classmethod
    def load_json(cls, path) -> "Metadata":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        nodes = payload.get("nodes", {})
        descriptions = {name: spec.get("description", "") for name, spec in nodes.items()}
        return cls(data_desc=payload.get("data_desc", ""), descriptions=descriptions)

    def save_json(self, path) -> None:
        payload = {
            "data_desc": self.data_desc,
            "nodes": {name: {"description": d} for name, d in sorted(self.descriptions.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def mask_descriptions(meta: Metadata, fraction: float, rng) -> Metadata:
    """Replace ceil(fraction * |V|) descriptions with the fixed sentinel."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    names = sorted(meta.descriptions)
    k = math.ceil(fraction * len(names))
    masked = set(rng.choice(names, size=k, replace=False)) if k else set()
    new = {
        name: (UNINFORMATIVE_DESCRIPTION if name in masked else desc)
        for name, desc in meta.descriptions.items()
    }
    return Metadata(data_desc=meta.data_desc, descriptions=new)
