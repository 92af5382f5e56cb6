"""Directed and partially directed graphs over integer node ids.

Nodes are integers ``0..n-1``; display names live in the data layer and are
only needed at serialization time.  ``Dag`` is immutable after construction;
``Pdag`` keeps one mark per unordered pair, so "at most one mark per pair" is
structural rather than checked.  All public operations either return fresh
graphs or leave their inputs untouched, which makes them safe to call
concurrently on shared instances.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "CycleError",
    "EdgeStateError",
    "OrientationConflictError",
    "Dag",
    "Pdag",
    "Triple",
    "has_semi_directed_path",
    "orient",
    "unshielded_triples",
    "d_separated",
    "meek_closure",
    "cpdag_of",
    "random_dag",
    "graph_to_json",
    "graph_from_json",
    "graph_to_text",
    "graph_from_text",
    "graph_to_dot",
]

# Edge marks, relative to the canonical (lo, hi) key of an unordered pair.
UNDIRECTED = 0
FORWARD = 1   # lo -> hi
BACKWARD = 2  # hi -> lo


class CycleError(ValueError):
    """Orientation would close a directed or semi-directed cycle."""

    def __init__(self, message: str, path: Sequence[int] = ()):
        super().__init__(message)
        self.path = tuple(path)


class EdgeStateError(ValueError):
    """Edge is absent or not in the mark state the operation requires."""


class OrientationConflictError(ValueError):
    """A closure rule fired against an already-contradictory graph."""

    def __init__(self, message: str, triple: tuple[int, int, int] | None = None):
        super().__init__(message)
        self.triple = triple


def _key(x: int, y: int) -> tuple[int, int]:
    return (x, y) if x < y else (y, x)


class Dag:
    """Immutable directed acyclic graph; cycles rejected at construction."""

    __slots__ = ("node_count", "edges", "_parents", "_children", "_fingerprint")

    def __init__(self, node_count: int, edges: Iterable[tuple[int, int]]):
        self.node_count = int(node_count)
        edge_set: set[tuple[int, int]] = set()
        parents: list[set[int]] = [set() for _ in range(self.node_count)]
        children: list[set[int]] = [set() for _ in range(self.node_count)]
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise ValueError(f"edge ({a}, {b}) out of range for {self.node_count} nodes")
            if (b, a) in edge_set:
                raise CycleError(f"both ({a},{b}) and ({b},{a}) present", (a, b, a))
            edge_set.add((a, b))
            parents[b].add(a)
            children[a].add(b)
        self.edges = frozenset(edge_set)
        self._parents = tuple(frozenset(p) for p in parents)
        self._children = tuple(frozenset(c) for c in children)
        self._fingerprint: int | None = None
        cycle = self._find_cycle_nodes()
        if cycle:
            raise CycleError("edge set contains a directed cycle", cycle)

    def _find_cycle_nodes(self) -> list[int]:
        indeg = [len(self._parents[v]) for v in range(self.node_count)]
        queue = deque(v for v in range(self.node_count) if indeg[v] == 0)
        seen = 0
        while queue:
            v = queue.popleft()
            seen += 1
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen == self.node_count:
            return []
        return [v for v in range(self.node_count) if indeg[v] > 0]

    def parents(self, v: int) -> frozenset[int]:
        return self._parents[v]

    def children(self, v: int) -> frozenset[int]:
        return self._children[v]

    def neighbors(self, v: int) -> frozenset[int]:
        return self._parents[v] | self._children[v]

    def adjacent(self, x: int, y: int) -> bool:
        return (x, y) in self.edges or (y, x) in self.edges

    def skeleton_pairs(self) -> set[tuple[int, int]]:
        return {_key(a, b) for a, b in self.edges}

    def topological_order(self) -> list[int]:
        indeg = [len(self._parents[v]) for v in range(self.node_count)]
        queue = deque(sorted(v for v in range(self.node_count) if indeg[v] == 0))
        order = []
        while queue:
            v = queue.popleft()
            order.append(v)
            for c in sorted(self._children[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        return order

    def descendants(self, v: int) -> set[int]:
        out: set[int] = set()
        stack = [v]
        while stack:
            u = stack.pop()
            for c in self._children[u]:
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def v_structures(self) -> set[tuple[int, int, int]]:
        """Unshielded colliders (x, z, y) with x < y."""
        out = set()
        for z in range(self.node_count):
            for x, y in itertools.combinations(sorted(self._parents[z]), 2):
                if not self.adjacent(x, y):
                    out.add((x, z, y))
        return out

    def fingerprint(self) -> int:
        """Stable structural hash, used to key reproducible noise draws."""
        if self._fingerprint is None:
            self._fingerprint = hash((self.node_count, tuple(sorted(self.edges))))
        return self._fingerprint

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Dag)
            and self.node_count == other.node_count
            and self.edges == other.edges
        )

    def __hash__(self) -> int:
        return self.fingerprint()

    def __repr__(self) -> str:
        return f"Dag(n={self.node_count}, edges={sorted(self.edges)})"


@dataclass(frozen=True)
class Triple:
    """An x - z - y triple with center z; unshielded means x, y non-adjacent."""

    x: int
    z: int
    y: int
    shielded: bool = False


class Pdag:
    """Mixed graph: one mark (undirected / directed either way) per pair."""

    __slots__ = ("node_count", "_marks", "_adj")

    def __init__(self, node_count: int):
        self.node_count = int(node_count)
        self._marks: dict[tuple[int, int], int] = {}
        self._adj: list[set[int]] = [set() for _ in range(self.node_count)]

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        undirected: Iterable[tuple[int, int]] = (),
        directed: Iterable[tuple[int, int]] = (),
    ) -> "Pdag":
        p = cls(node_count)
        for x, y in undirected:
            p.add_undirected(x, y)
        for x, y in directed:
            p.add_directed(x, y)
        return p

    @classmethod
    def complete(cls, node_count: int) -> "Pdag":
        return cls.from_edges(
            node_count, undirected=itertools.combinations(range(node_count), 2)
        )

    def copy(self) -> "Pdag":
        p = Pdag(self.node_count)
        p._marks = dict(self._marks)
        p._adj = [set(a) for a in self._adj]
        return p

    # -- construction-time mutation; orientation goes through orient() --

    def _check_node(self, v: int) -> None:
        if not (0 <= v < self.node_count):
            raise ValueError(f"unknown node id {v} (graph has {self.node_count} nodes)")

    def add_undirected(self, x: int, y: int) -> None:
        self._check_node(x)
        self._check_node(y)
        if x == y:
            raise ValueError(f"self-loop at node {x}")
        k = _key(x, y)
        if k in self._marks:
            raise EdgeStateError(f"pair {k} already present")
        self._marks[k] = UNDIRECTED
        self._adj[x].add(y)
        self._adj[y].add(x)

    def add_directed(self, x: int, y: int) -> None:
        self.add_undirected(x, y)
        self._set_arrow(x, y)

    def _set_arrow(self, x: int, y: int) -> None:
        k = _key(x, y)
        self._marks[k] = FORWARD if (x, y) == k else BACKWARD

    def remove_pair(self, x: int, y: int) -> None:
        k = _key(x, y)
        if k not in self._marks:
            raise EdgeStateError(f"pair {k} not present")
        del self._marks[k]
        self._adj[x].discard(y)
        self._adj[y].discard(x)

    # -- queries --

    def adjacent(self, x: int, y: int) -> bool:
        return _key(x, y) in self._marks

    def is_undirected(self, x: int, y: int) -> bool:
        return self._marks.get(_key(x, y)) == UNDIRECTED

    def has_arrow(self, x: int, y: int) -> bool:
        """True iff the pair is directed x -> y."""
        k = _key(x, y)
        mark = self._marks.get(k)
        if mark is None or mark == UNDIRECTED:
            return False
        return mark == (FORWARD if (x, y) == k else BACKWARD)

    def neighbors(self, v: int) -> set[int]:
        return set(self._adj[v])

    def parents(self, v: int) -> set[int]:
        return {u for u in self._adj[v] if self.has_arrow(u, v)}

    def children(self, v: int) -> set[int]:
        return {u for u in self._adj[v] if self.has_arrow(v, u)}

    def undirected_neighbors(self, v: int) -> set[int]:
        return {u for u in self._adj[v] if self.is_undirected(u, v)}

    def directed_edges(self) -> list[tuple[int, int]]:
        out = []
        for (a, b), mark in self._marks.items():
            if mark == FORWARD:
                out.append((a, b))
            elif mark == BACKWARD:
                out.append((b, a))
        return sorted(out)

    def undirected_edges(self) -> list[tuple[int, int]]:
        return sorted(k for k, mark in self._marks.items() if mark == UNDIRECTED)

    def edge_count(self) -> int:
        return len(self._marks)

    def skeleton_pairs(self) -> set[tuple[int, int]]:
        return set(self._marks)

    def fully_directed(self) -> bool:
        return all(mark != UNDIRECTED for mark in self._marks.values())

    def to_dag(self) -> Dag:
        if not self.fully_directed():
            raise EdgeStateError("graph still has undirected edges")
        return Dag(self.node_count, self.directed_edges())

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Pdag)
            and self.node_count == other.node_count
            and self._marks == other._marks
        )

    def __repr__(self) -> str:
        return (
            f"Pdag(n={self.node_count}, directed={self.directed_edges()}, "
            f"undirected={self.undirected_edges()})"
        )


def has_semi_directed_path(
    p: Pdag, x: int, y: int, *, skip_pair: tuple[int, int] | None = None
) -> bool:
    """BFS reachability from x to y over undirected and forward-directed edges.

    ``skip_pair`` excludes one unordered pair from traversal; the orientation
    guard uses it so the edge under test cannot certify itself.
    """
    p._check_node(x)
    p._check_node(y)
    if x == y:
        raise ValueError("endpoints must differ")
    banned = _key(*skip_pair) if skip_pair is not None else None
    seen = {x}
    queue = deque([x])
    while queue:
        v = queue.popleft()
        for u in p._adj[v]:
            if u in seen or _key(v, u) == banned or p.has_arrow(u, v):
                continue
            if u == y:
                return True
            seen.add(u)
            queue.append(u)
    return False


def _semi_directed_witness(
    p: Pdag, x: int, y: int, skip_pair: tuple[int, int] | None = None
) -> list[int] | None:
    """One witness path for has_semi_directed_path, for error messages."""
    banned = _key(*skip_pair) if skip_pair is not None else None
    prev = {x: x}
    queue = deque([x])
    while queue:
        v = queue.popleft()
        for u in p._adj[v]:
            if u in prev or _key(v, u) == banned or p.has_arrow(u, v):
                continue
            prev[u] = v
            if u == y:
                path = [y]
                while path[-1] != x:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(u)
    return None


def _checked_set_arrow(p: Pdag, x: int, y: int) -> None:
    """In-place x -> y with the seed-style cycle guard; raises without mutating."""
    if not p.is_undirected(x, y):
        raise EdgeStateError(f"pair ({x}, {y}) is absent or already directed")
    if has_semi_directed_path(p, y, x, skip_pair=(x, y)):
        witness = _semi_directed_witness(p, y, x, skip_pair=(x, y))
        raise CycleError(
            f"orienting {x} -> {y} closes a directed or semi-directed cycle",
            witness or (),
        )
    p._set_arrow(x, y)


def has_directed_path(p: Pdag, x: int, y: int) -> bool:
    """BFS reachability over fully directed edges only."""
    seen = {x}
    queue = deque([x])
    while queue:
        v = queue.popleft()
        for u in p._adj[v]:
            if u in seen or not p.has_arrow(v, u):
                continue
            if u == y:
                return True
            seen.add(u)
            queue.append(u)
    return False


def _rule_set_arrow(p: Pdag, x: int, y: int) -> None:
    """In-place x -> y for closure rules: guards directed cycles only.

    Rule orientations may transiently close broad-sense semi-directed cycles
    that later orientations resolve, so only the directed-cycle guard applies;
    tripping it means the input already encoded a contradiction.
    """
    if not p.is_undirected(x, y):
        raise EdgeStateError(f"pair ({x}, {y}) is absent or already directed")
    if has_directed_path(p, y, x):
        raise CycleError(f"orienting {x} -> {y} closes a directed cycle")
    p._set_arrow(x, y)


def has_arrow_semi_directed_path(
    p: Pdag, x: int, y: int, *, skip_pair: tuple[int, int] | None = None
) -> bool:
    """Is there a *simple* semi-directed path x..y containing >= 1 directed edge?

    Simple-path semantics matter here: a walk revisiting a node can pick up an
    arrow on a detour that no simple path contains.  Implemented as DFS with
    backtracking, pruned to nodes that can still reach y semi-directedly.
    """
    banned = _key(*skip_pair) if skip_pair is not None else None

    # reverse reachability: nodes with any semi-directed path to y
    can_reach = {y}
    queue = deque([y])
    while queue:
        w = queue.popleft()
        for u in p._adj[w]:
            if u in can_reach or _key(u, w) == banned:
                continue
            if p.has_arrow(w, u):  # edge u-w only traversable w -> u
                continue
            can_reach.add(u)
            queue.append(u)
    if x not in can_reach:
        return False

    on_path = {x}

    def dfs(v: int, seen_arrow: bool) -> bool:
        for u in sorted(p._adj[v]):
            if u in on_path or _key(v, u) == banned or p.has_arrow(u, v):
                continue
            arrow = seen_arrow or p.has_arrow(v, u)
            if u == y:
                if arrow:
                    return True
                continue
            if u not in can_reach:
                continue
            on_path.add(u)
            if dfs(u, arrow):
                return True
            on_path.remove(u)
        return False

    return dfs(x, False)


def find_semi_directed_cycle(p: Pdag) -> tuple[int, int] | None:
    """Return an edge on a (semi-)directed cycle, or None if the graph is clean.

    A semi-directed cycle with at least one undirected edge shows up as an
    undirected pair {a, b} with an arrow-bearing simple path b ~> a around it;
    a fully directed cycle shows up on directed pairs.
    """
    for a, b in p.directed_edges():
        if has_directed_path(p, b, a):
            return (a, b)
    for a, b in p.undirected_edges():
        if has_arrow_semi_directed_path(p, b, a, skip_pair=(a, b)):
            return (a, b)
        if has_arrow_semi_directed_path(p, a, b, skip_pair=(a, b)):
            return (a, b)
    return None


def orient(p: Pdag, x: int, y: int) -> Pdag:
    """Return a copy of p with x -> y added.

    Guard: x -> y is illegal iff a semi-directed path y ~> x exists before
    orientation (ignoring the {x, y} edge itself) — the new arrow would close
    that path into a directed or semi-directed cycle.
    """
    q = p.copy()
    _checked_set_arrow(q, x, y)
    return q


def unshielded_triples(p: Pdag) -> list[Triple]:
    """All triples (x, z, y), x < y, with x, y non-adjacent and both adjacent to z."""
    out = []
    for z in range(p.node_count):
        for x, y in itertools.combinations(sorted(p._adj[z]), 2):
            if not p.adjacent(x, y):
                out.append(Triple(x=x, z=z, y=y, shielded=False))
    return out


def d_separated(g: Dag, x: int, y: int, s: Iterable[int]) -> bool:
    """Bayes-ball d-separation decision for single nodes x, y given set s."""
    s = frozenset(s)
    if x == y:
        raise ValueError("endpoints must differ")
    if x in s or y in s:
        raise ValueError("conditioning set overlaps the endpoints")
    for v in (x, y, *s):
        if not (0 <= v < g.node_count):
            raise ValueError(f"unknown node id {v}")

    # ancestors of s (inclusive), for the collider-opening rule
    anc_s: set[int] = set()
    stack = list(s)
    while stack:
        v = stack.pop()
        if v in anc_s:
            continue
        anc_s.add(v)
        stack.extend(g.parents(v))

    # walk states: "up" = arrived against an arrow, "down" = along one
    seen = {(x, "up")}
    queue = deque([(x, "up")])
    while queue:
        v, direction = queue.popleft()
        if v == y:
            return False
        moves: list[tuple[int, str]] = []
        if direction == "up" and v not in s:
            moves += [(u, "up") for u in g.parents(v)]
            moves += [(u, "down") for u in g.children(v)]
        elif direction == "down":
            if v not in s:
                moves += [(u, "down") for u in g.children(v)]
            if v in anc_s:
                moves += [(u, "up") for u in g.parents(v)]
        for move in moves:
            if move not in seen:
                seen.add(move)
                queue.append(move)
    return True


def _meek_rule_witness(g: Pdag, x: int, y: int) -> tuple[int, int, int] | None:
    """Witness triple if some Meek rule compels x -> y, else None."""
    # R1: w -> x, x - y, w and y non-adjacent  =>  x -> y
    for w in g.parents(x):
        if not g.adjacent(w, y):
            return (w, x, y)
    # R2: x -> w -> y with x - y  =>  x -> y
    for w in g.children(x):
        if g.has_arrow(w, y):
            return (x, w, y)
    # R3: x - w1, x - w2, w1 -> y, w2 -> y, w1 and w2 non-adjacent  =>  x -> y
    into_y = [w for w in g.undirected_neighbors(x) if g.has_arrow(w, y)]
    for w1, w2 in itertools.combinations(into_y, 2):
        if not g.adjacent(w1, w2):
            return (w1, y, w2)
    # R4: x - w, w -> v, v -> y, w and y non-adjacent, x adjacent to v  =>  x -> y
    for w in g.undirected_neighbors(x):
        if g.adjacent(w, y):
            continue
        for v in g.children(w):
            if g.has_arrow(v, y) and g.adjacent(x, v):
                return (w, v, y)
    return None


def meek_closure(p: Pdag, strict: bool = True) -> Pdag:
    """Fixed point of Meek's four orientation rules; only adds arrowheads.

    Consistent input cannot trip the cycle guard.  If it does, the input
    already encoded a contradiction: strict mode raises an
    OrientationConflictError naming the triple responsible, tolerant mode
    skips the firing and carries on.
    """
    g = p.copy()
    skipped: set[tuple[int, int]] = set()
    changed = True
    while changed:
        changed = False
        for a, b in g.undirected_edges():
            for x, y in ((a, b), (b, a)):
                if not g.is_undirected(x, y) or (x, y) in skipped:
                    continue
                witness = _meek_rule_witness(g, x, y)
                if witness is None:
                    continue
                try:
                    _rule_set_arrow(g, x, y)
                except CycleError as exc:
                    if strict:
                        raise OrientationConflictError(
                            f"rule closure wants {x} -> {y} but the graph "
                            f"contradicts it at triple {witness}",
                            witness,
                        ) from exc
                    skipped.add((x, y))
                    continue
                changed = True
    return g


def cpdag_of(g: Dag) -> Pdag:
    """The completed PDAG of g: skeleton, v-structures, then Meek closure."""
    p = Pdag(g.node_count)
    for a, b in g.skeleton_pairs():
        p.add_undirected(a, b)
    for x, z, y in g.v_structures():
        p._set_arrow(x, z)
        p._set_arrow(y, z)
    return meek_closure(p)


def random_dag(n: int, edge_prob: float, rng) -> Dag:
    """Random DAG: coin-flip edges over a uniformly random topological order."""
    order = rng.permutation(n)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                edges.append((int(order[i]), int(order[j])))
    return Dag(n, edges)


# -- serialization ----------------------------------------------------------


def _names_or_default(n: int, names: Sequence[str] | None) -> list[str]:
    if names is None:
        return [f"X{i}" for i in range(n)]
    if len(names) != n:
        raise ValueError(f"expected {n} names, got {len(names)}")
    return list(names)


def _split_edges(g: Pdag | Dag) -> tuple[list, list, int]:
    if isinstance(g, Dag):
        return sorted(g.edges), [], g.node_count
    return g.directed_edges(), g.undirected_edges(), g.node_count


def graph_to_json(g: Pdag | Dag, names: Sequence[str] | None = None) -> str:
    directed, undirected, n = _split_edges(g)
    names = _names_or_default(n, names)
    payload = {
        "nodes": names,
        "directed": [[names[a], names[b]] for a, b in directed],
        "undirected": [[names[a], names[b]] for a, b in undirected],
    }
    return json.dumps(payload, indent=2)


def graph_from_json(text: str) -> tuple[Pdag, list[str]]:
    payload = json.loads(text)
    names = list(payload["nodes"])
    index = {name: i for i, name in enumerate(names)}
    if len(index) != len(names):
        raise ValueError("duplicate node names")
    p = Pdag(len(names))
    for a, b in payload.get("undirected", []):
        p.add_undirected(index[a], index[b])
    for a, b in payload.get("directed", []):
        p.add_directed(index[a], index[b])
    return p, names


def graph_to_text(g: Pdag | Dag, names: Sequence[str] | None = None) -> str:
    """Line-oriented format: one `a -> b` or `a -- b` per line."""
    directed, undirected, n = _split_edges(g)
    names = _names_or_default(n, names)
    lines = [f"{names[a]} -> {names[b]}" for a, b in directed]
    lines += [f"{names[a]} -- {names[b]}" for a, b in undirected]
    return "\n".join(lines) + ("\n" if lines else "")


def graph_from_text(text: str, names: Sequence[str]) -> Pdag:
    index = {name: i for i, name in enumerate(names)}
    p = Pdag(len(names))
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        for sep, directed in ((" -> ", True), (" -- ", False)):
            if sep in line:
                a, b = (tok.strip() for tok in line.split(sep, 1))
                if a not in index or b not in index:
                    raise ValueError(f"line {lineno}: unknown node in {line!r}")
                if directed:
                    p.add_directed(index[a], index[b])
                else:
                    p.add_undirected(index[a], index[b])
                break
        else:
            raise ValueError(f"line {lineno}: expected 'a -> b' or 'a -- b', got {line!r}")
    return p


def graph_to_dot(g: Pdag | Dag, names: Sequence[str] | None = None) -> str:
    directed, undirected, n = _split_edges(g)
    names = _names_or_default(n, names)
    lines = ["digraph G {"]
    for name in names:
        lines.append(f'  "{name}";')
    for a, b in directed:
        lines.append(f'  "{names[a]}" -> "{names[b]}";')
    for a, b in undirected:
        lines.append(f'  "{names[a]}" -> "{names[b]}" [dir=none];')
    lines.append("}")
    return "\n".join(lines) + "\n"
