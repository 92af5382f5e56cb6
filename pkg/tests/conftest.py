from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mosacd.graph import Pdag, random_dag  # noqa: E402


def random_pdag(n: int, rng: np.random.Generator, density: float = 0.4) -> Pdag:
    """Arbitrary mixed graph (no acyclicity promises) for reachability tests."""
    p = Pdag(n)
    for a in range(n):
        for b in range(a + 1, n):
            r = rng.random()
            if r < density / 2:
                p.add_undirected(a, b)
            elif r < density:
                if rng.random() < 0.5:
                    p.add_directed(a, b)
                else:
                    p.add_directed(b, a)
    return p


def seeded_consistent_pdag(n: int, rng: np.random.Generator) -> Pdag:
    """Skeleton + v-structures of a random DAG plus extra truth-directed seeds.

    Closure rules presuppose the v-structures are present; seeding true edges
    on top keeps the graph extendable by the generating DAG itself.
    """
    dag = random_dag(n, 0.5, rng)
    p = Pdag(n)
    for a, b in dag.skeleton_pairs():
        p.add_undirected(a, b)
    for x, z, y in dag.v_structures():
        p._set_arrow(x, z)
        p._set_arrow(y, z)
    for a, b in sorted(dag.edges):
        if p.is_undirected(a, b) and rng.random() < 0.3:
            p._set_arrow(a, b)
    return p


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
