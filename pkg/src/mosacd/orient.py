"""The orientation engine: confidence-ordered propagation and conflict repair.

The inner loop interleaves three monotone rules until nothing changes:
acyclicity propagation over semi-directed paths, sepset-guided orientation of
partially ordered triples (non-collider evidence first), and collider
orientation of fully unordered triples.  Triples are processed in descending
order of the best recorded sepset p-value, so better-supported independence
statements act first.  Remaining edges are resolved by counting, for each
direction, how many recorded independence statements the rule-closed result
would contradict; ties stay undirected.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from mosacd.graph import (
    CycleError,
    EdgeStateError,
    OrientationConflictError,
    Pdag,
    _rule_set_arrow,
    has_arrow_semi_directed_path,
    meek_closure,
    unshielded_triples,
)
from mosacd.skeleton import SepsetRecord

__all__ = [
    "ConflictReport",
    "r2_propagate",
    "ci_supervised",
    "collider_orient",
    "conflict_count",
    "least_conflict",
    "orientation_fixpoint",
    "vote_completion",
]


def _log_conflict(conflicts, kind: str, detail: dict) -> None:
    if conflicts is not None:
        conflicts.append({"kind": kind, **detail})


def _trace(trace, op: str, **info) -> None:
    if trace is not None:
        trace.append({"op": op, **info})


def r2_propagate(p: Pdag, conflicts: list | None = None, trace: list | None = None) -> Pdag:
    """Orient x -> y wherever a semi-directed path x ~> y already carries an arrow.

    The path must avoid the {x, y} edge itself and contain at least one
    directed edge, otherwise the trivial edge (or any undirected detour, e.g.
    in a triangle) would fire the rule unsoundly.  Arrow-bearing paths in both
    directions mean the input is contradictory: that raises a conflict error
    unless a conflict log is supplied, in which case the edge is skipped.
    """
    g = p.copy()
    changed = True
    flagged: set[tuple[int, int]] = set()
    while changed:
        changed = False
        for x, y in g.undirected_edges():
            if not g.is_undirected(x, y):
                continue
            fwd = has_arrow_semi_directed_path(g, x, y, skip_pair=(x, y))
            bwd = has_arrow_semi_directed_path(g, y, x, skip_pair=(x, y))
            if fwd and bwd:
                if conflicts is None:
                    raise OrientationConflictError(
                        f"semi-directed paths both ways across undirected edge ({x}, {y})"
                    )
                if (x, y) not in flagged:
                    flagged.add((x, y))
                    _log_conflict(conflicts, "r2-bidirectional", {"edge": (x, y)})
                continue
            if not (fwd or bwd):
                continue
            a, b = (x, y) if fwd else (y, x)
            try:
                _rule_set_arrow(g, a, b)
            except CycleError:
                _log_conflict(conflicts, "r2-cycle", {"edge": (a, b)})
                continue
            _trace(trace, "r2", edge=(a, b))
            changed = True
    return g


def _ranked_triples(p: Pdag, sigma: SepsetRecord):
    """Unshielded triples that have sepset evidence, best max-p first.

    Ties keep the canonical triple enumeration order (stable sort), which is
    also the documented tie order when every p saturates at 1.
    """
    ranked = []
    for t in unshielded_triples(p):
        if not sigma.has_pair(t.x, t.y):
            continue
        ranked.append((sigma.max_p(t.x, t.y), t))
    ranked.sort(key=lambda item: -item[0])
    return ranked


def ci_supervised(
    p: Pdag, sigma: SepsetRecord, conflicts: list | None = None, trace: list | None = None
) -> Pdag:
    """One sweep over partially ordered triples x -> z - y, best p first.

    Center in every recorded sepset: the triple must stay a non-collider, so
    the undirected edge leaves the center (z -> y).  Center in none: the
    collider completes (y -> z).  Mixed membership defers the triple.
    """
    g = p.copy()
    for max_p, t in _ranked_triples(g, sigma):
        for x, y in ((t.x, t.y), (t.y, t.x)):
            if not (g.has_arrow(x, t.z) and g.is_undirected(t.z, y)):
                continue
            membership = sigma.membership(t.z, t.x, t.y)
            if membership == "all":
                a, b = t.z, y
            elif membership == "none":
                a, b = y, t.z
            else:
                continue
            try:
                _rule_set_arrow(g, a, b)
            except CycleError:
                _log_conflict(
                    conflicts,
                    "sepset-guided-cycle",
                    {"triple": (x, t.z, y), "edge": (a, b), "max_p": max_p},
                )
                continue
            _trace(
                trace,
                "noncollider" if membership == "all" else "collider-completion",
                triple=(x, t.z, y),
                edge=(a, b),
                max_p=max_p,
            )
    return g


def collider_orient(
    p: Pdag, sigma: SepsetRecord, conflicts: list | None = None, trace: list | None = None
) -> Pdag:
    """One sweep over unordered unshielded triples x - z - y, best p first.

    When the center appears in no recorded sepset, the collider x -> z <- y is
    applied: arms already pointing at the center are kept, missing arms are
    oriented atomically.  A triple with an arm directed away from the center,
    or whose completion would close a directed cycle, is skipped and logged.
    """
    g = p.copy()
    for max_p, t in _ranked_triples(g, sigma):
        if sigma.membership(t.z, t.x, t.y) != "none":
            continue
        if g.has_arrow(t.z, t.x) or g.has_arrow(t.z, t.y):
            _log_conflict(
                conflicts,
                "collider-contradicted",
                {"triple": (t.x, t.z, t.y), "max_p": max_p},
            )
            continue
        missing = [arm for arm in (t.x, t.y) if g.is_undirected(arm, t.z)]
        if not missing:
            continue
        attempt = g.copy()
        try:
            for arm in missing:
                _rule_set_arrow(attempt, arm, t.z)
        except CycleError:
            _log_conflict(
                conflicts,
                "collider-cycle",
                {"triple": (t.x, t.z, t.y), "max_p": max_p},
            )
            continue
        g = attempt
        _trace(trace, "collider", triple=(t.x, t.z, t.y), max_p=max_p)
    return g


def orientation_fixpoint(
    p: Pdag, sigma: SepsetRecord, conflicts: list | None = None, trace: list | None = None
) -> Pdag:
    """Inner rule closure: sepset-guided rules to a fixed point, then path
    propagation, repeated until nothing changes.

    Path propagation only consults states already closed under the sepset
    rules.  Consulting it earlier is unsound: a semi-directed path may run
    through an undirected edge whose sepset-compelled direction (not yet
    applied) points against the path, and the resulting orientation would be
    wrong yet permanent.  Every rule only adds arrowheads, so the loop
    terminates within the number of undirected edges.
    """
    g = p
    if conflicts is None:
        conflicts = []  # inner loop always degrades gracefully; caller opts into logs
    while True:
        while True:
            _trace(trace, "sweep")
            nxt = ci_supervised(g, sigma, conflicts=conflicts, trace=trace)
            nxt = collider_orient(nxt, sigma, conflicts=conflicts, trace=trace)
            if nxt == g:
                break
            g = nxt
        # close the sepset decisions under the standard rules before touching
        # path propagation: compelled arrows reachable only through R3/R4
        # must land first, or a path through their still-undirected edge
        # would license a wrong, permanent orientation
        nxt = meek_closure(g, strict=False)
        nxt = r2_propagate(nxt, conflicts=conflicts, trace=trace)
        if nxt == g:
            return g
        g = nxt


@dataclass
class ConflictReport:
    """Contradicted sepset statements for one candidate orientation."""

    candidate: tuple[int, int]
    count: float  # inf when the candidate cannot even be applied or closed
    violations: list[tuple[tuple[int, int], frozenset, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.count != float("inf"):
            assert self.count == len(self.violations)


def _directed_path_avoiding(g: Pdag, a: int, b: int, blocked: frozenset) -> bool:
    """Directed reachability a ~> b whose interior avoids the blocked set."""
    seen = {a}
    queue = deque([a])
    while queue:
        v = queue.popleft()
        for u in g.children(v):
            if u == b:
                return True
            if u in seen or u in blocked:
                continue
            seen.add(u)
            queue.append(u)
    return False


def conflict_count(p: Pdag, sigma: SepsetRecord, candidate: tuple[int, int]) -> ConflictReport:
    """How many recorded independence statements candidate's closure contradicts.

    The candidate arrow is applied, the graph closed under the orientation
    rules, and every statement (x indep y | S) checked: it is contradicted when
    an unshielded triple centered at some z is a collider although z lies in
    every recorded sepset of the pair, is a definite non-collider although z
    lies in none (mixed membership never counts), or when a fully directed
    path connects x and y without passing through S.
    """
    a, b = candidate
    if not p.is_undirected(a, b):
        raise EdgeStateError(f"candidate pair ({a}, {b}) is not undirected")
    closed = p.copy()
    try:
        _rule_set_arrow(closed, a, b)
        closed = meek_closure(closed)
    except (CycleError, OrientationConflictError):
        return ConflictReport(candidate=candidate, count=float("inf"))

    violations = []
    for x, y in sigma.pairs():
        if closed.adjacent(x, y):
            continue
        entries = sigma.entries(x, y)
        gate_violated = False
        for z in sorted(closed.neighbors(x) & closed.neighbors(y)):
            membership = sigma.membership(z, x, y)
            is_collider = closed.has_arrow(x, z) and closed.has_arrow(y, z)
            is_noncollider = closed.has_arrow(z, x) or closed.has_arrow(z, y)
            if (is_collider and membership == "all") or (
                is_noncollider and membership == "none"
            ):
                gate_violated = True
                break
        if gate_violated:
            violations.extend(((x, y), e.sepset, e.p_value) for e in entries)
            continue
        for entry in entries:
            if _directed_path_avoiding(
                closed, x, y, entry.sepset
            ) or _directed_path_avoiding(closed, y, x, entry.sepset):
                violations.append(((x, y), entry.sepset, entry.p_value))
    return ConflictReport(candidate=candidate, count=float(len(violations)), violations=violations)


def least_conflict(
    p: Pdag,
    sigma: SepsetRecord,
    rng,
    conflicts: list | None = None,
    trace: list | None = None,
) -> Pdag:
    """Resolve undirected edges by the direction with strictly fewer conflicts.

    Edges are visited in a seeded random order; ties (including both sides
    impossible) stay undirected.
    """
    g = p.copy()
    edges = g.undirected_edges()
    order = list(rng.permutation(len(edges))) if edges else []
    for idx in order:
        a, b = edges[idx]
        if not g.is_undirected(a, b):
            continue
        forward = conflict_count(g, sigma, (a, b))
        backward = conflict_count(g, sigma, (b, a))
        if forward.count == backward.count:
            continue
        winner = (a, b) if forward.count < backward.count else (b, a)
        report = forward if forward.count < backward.count else backward
        try:
            _rule_set_arrow(g, *winner)
        except CycleError:
            _log_conflict(conflicts, "least-conflict-cycle", {"edge": winner})
            continue
        _trace(
            trace,
            "least-conflict",
            edge=winner,
            counts=(forward.count, backward.count),
            violated=[v[0] for v in report.violations],
        )
    return g


def vote_completion(p: Pdag, vote_table, n_nodes: int | None = None) -> "Pdag":
    """Orient leftover undirected edges along a vote-derived topological order.

    ``vote_table`` is a list of ((a, b), decision, VoteRecord) tuples as
    produced by the seeding stage.  Net directional support per pair becomes a
    weighted arc; the already-directed edges of p join as fixed arcs.  While
    the digraph is cyclic, the weakest removable arc lying on a cycle is
    dropped (ties broken by edge order).  Nodes the votes say nothing about
    fall back to index order.
    """
    n = n_nodes or p.node_count
    arcs: dict[tuple[int, int], float] = {}
    for (a, b), _decision, votes in vote_table:
        counts_uv = 0
        counts_vu = 0
        for order in votes.letters:
            c = votes.direction_counts(votes.variant, order)
            counts_uv += c.get("uv", 0)
            counts_vu += c.get("vu", 0)
        net = counts_uv - counts_vu
        if net > 0:
            arcs[(a, b)] = float(net)
        elif net < 0:
            arcs[(b, a)] = float(-net)
    fixed = set(p.directed_edges())
    for arc in fixed:
        arcs[arc] = float("inf")

    def topological(arc_map):
        children: dict[int, set[int]] = {v: set() for v in range(n)}
        indeg = {v: 0 for v in range(n)}
        for (u, v) in arc_map:
            if v not in children[u]:
                children[u].add(v)
                indeg[v] += 1
        order = []
        ready = sorted(v for v in range(n) if indeg[v] == 0)
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in sorted(children[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        return order if len(order) == n else None

    def on_cycle(arc_map, arc):
        (u, v) = arc
        # arc lies on a cycle iff v reaches u through the remaining arcs
        seen = {v}
        queue = deque([v])
        while queue:
            w = queue.popleft()
            for (s, t) in arc_map:
                if s != w or t in seen:
                    continue
                if t == u:
                    return True
                seen.add(t)
                queue.append(t)
        return False

    while topological(arcs) is None:
        removable = [
            arc for arc in sorted(arcs) if arcs[arc] != float("inf") and on_cycle(arcs, arc)
        ]
        if not removable:
            raise OrientationConflictError("vote digraph cycle consists of fixed arcs")
        weakest = min(removable, key=lambda arc: (arcs[arc], arc))
        del arcs[weakest]

    position = {v: i for i, v in enumerate(topological(arcs))}
    g = p.copy()
    for a, b in g.undirected_edges():
        first, second = (a, b) if position[a] < position[b] else (b, a)
        g._set_arrow(first, second)
    return g
