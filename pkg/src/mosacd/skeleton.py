"""Level-wise skeleton search with a minimal-sepset record.

Three variants share one search loop.  PC walks live adjacencies in
deterministic order and records the first accepted sepset per deleted edge;
PC-stable freezes adjacency sets at the start of each level, which makes the
result invariant to the node order; CPC enumerates and records every accepted
sepset at the deletion level.  In all cases the sepsets recorded for a nonedge
have the size of the level that deleted it, i.e. they are minimal as produced
by the search.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from mosacd.citest import CiResult, DegenerateTestError
from mosacd.graph import Pdag

__all__ = ["SepsetEntry", "SepsetRecord", "Skeleton", "CiQueryError", "skel_search"]

VARIANTS = ("pc", "pc-stable", "cpc")

CiFunction = Callable[[int, int, frozenset], CiResult]


class CiQueryError(RuntimeError):
    """A CI test failed; carries the offending query."""

    def __init__(self, x: int, y: int, s: frozenset[int], cause: Exception):
        super().__init__(f"CI test failed for ({x}, {y} | {sorted(s)}): {cause}")
        self.query = (x, y, frozenset(s))


@dataclass(frozen=True)
class SepsetEntry:
    sepset: frozenset[int]
    p_value: float


class SepsetRecord:
    """Per nonedge pair, the accepted minimal separating sets with p-values."""

    def __init__(self):
        self._record: dict[tuple[int, int], list[SepsetEntry]] = {}

    @staticmethod
    def _key(x: int, y: int) -> tuple[int, int]:
        return (x, y) if x < y else (y, x)

    def add(self, x: int, y: int, sepset: Iterable[int], p_value: float) -> None:
        entry = SepsetEntry(frozenset(sepset), float(p_value))
        if x in entry.sepset or y in entry.sepset:
            raise ValueError("sepset must not contain the pair itself")
        self._record.setdefault(self._key(x, y), []).append(entry)

    def has_pair(self, x: int, y: int) -> bool:
        return self._key(x, y) in self._record

    def entries(self, x: int, y: int) -> list[SepsetEntry]:
        return list(self._record.get(self._key(x, y), []))

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._record)

    def max_p(self, x: int, y: int) -> float:
        entries = self._record.get(self._key(x, y))
        if not entries:
            raise KeyError(f"no sepsets recorded for pair ({x}, {y})")
        return max(e.p_value for e in entries)

    def membership(self, z: int, x: int, y: int) -> str:
        """Where z stands across the recorded sepsets: all / none / mixed / unknown."""
        entries = self._record.get(self._key(x, y))
        if not entries:
            return "unknown"
        hits = sum(z in e.sepset for e in entries)
        if hits == len(entries):
            return "all"
        if hits == 0:
            return "none"
        return "mixed"

    def statement_count(self) -> int:
        return sum(len(v) for v in self._record.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SepsetRecord):
            return NotImplemented
        norm = lambda rec: {
            k: sorted((tuple(sorted(e.sepset)), e.p_value) for e in v)
            for k, v in rec._record.items()
        }
        return norm(self) == norm(other)

    # -- JSON ------------------------------------------------------------

    def to_json(self, names: Sequence[str] | None = None) -> str:
        def label(i: int):
            return names[i] if names is not None else i

        payload = [
            {
                "pair": [label(a), label(b)],
                "sepsets": [
                    {"s": [label(v) for v in sorted(e.sepset)], "p": e.p_value}
                    for e in entries
                ],
            }
            for (a, b), entries in sorted(self._record.items())
        ]
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str, names: Sequence[str] | None = None) -> "SepsetRecord":
        index = {name: i for i, name in enumerate(names)} if names is not None else None

        def resolve(v):
            return index[v] if index is not None else int(v)

        record = cls()
        for item in json.loads(text):
            a, b = (resolve(v) for v in item["pair"])
            for entry in item["sepsets"]:
                record.add(a, b, [resolve(v) for v in entry["s"]], entry["p"])
        return record


@dataclass
class Skeleton:
    """Undirected adjacency structure plus the sepset record that justified it."""

    graph: Pdag
    sepsets: SepsetRecord

    def undirected_copy(self) -> Pdag:
        return self.graph.copy()


def skel_search(
    ci: CiFunction,
    n_nodes: int,
    variant: str = "pc",
    threshold: float = 0.05,
    max_level: int = 3,
    sepset_scope: str = "neighbors",
) -> Skeleton:
    """Delete edges of the complete graph level by level; record sepsets.

    ``ci(x, y, s)`` must return a CiResult; acceptance is ``p > threshold``.
    A degenerate test (no usable table) counts as acceptance with p = 1.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if sepset_scope not in ("neighbors", "all"):
        raise ValueError(f"sepset_scope must be 'neighbors' or 'all', got {sepset_scope!r}")
    if max_level < 0:
        raise ValueError("max_level must be >= 0")

    g = Pdag.complete(n_nodes)
    record = SepsetRecord()

    def run_test(x: int, y: int, s: tuple[int, ...]) -> float:
        try:
            res = ci(x, y, frozenset(s))
        except DegenerateTestError:
            return 1.0
        except Exception as exc:  # propagate with the offending query attached
            raise CiQueryError(x, y, frozenset(s), exc) from exc
        return res.p_value

    for level in range(max_level + 1):
        if variant == "pc-stable":
            frozen = [g.neighbors(v) for v in range(n_nodes)]
            adj = lambda v: frozen[v]
        else:
            adj = g.neighbors

        level_had_candidates = False
        for x, y in list(g.undirected_edges()):
            if not g.adjacent(x, y):
                continue
            accepted: list[SepsetEntry] = []
            tested: set[tuple[int, ...]] = set()
            for s in _candidate_sets(x, y, level, adj, sepset_scope, n_nodes):
                if s in tested:
                    continue
                tested.add(s)
                level_had_candidates = True
                p = run_test(x, y, s)
                if p > threshold:
                    accepted.append(SepsetEntry(frozenset(s), p))
                    if variant != "cpc":
                        break
            if accepted:
                g.remove_pair(x, y)
                for entry in accepted:
                    record.add(x, y, entry.sepset, entry.p_value)
        if not level_had_candidates:
            break

    return Skeleton(graph=g, sepsets=record)


def _candidate_sets(x, y, level, adj, scope, n_nodes):
    """Size-`level` conditioning sets, deterministic order.

    Neighborhood scope tests subsets of adj(x) minus y first, then subsets of
    adj(y) minus x (duplicates are filtered by the caller); full scope tests
    subsets of everything else.
    """
    if scope == "all":
        pool = [v for v in range(n_nodes) if v not in (x, y)]
        yield from itertools.combinations(pool, level)
        return
    for a, b in ((x, y), (y, x)):
        pool = sorted(adj(a) - {b})
        if len(pool) >= level:
            yield from itertools.combinations(pool, level)
