"""Discrete Bayesian networks: BIF parsing, serialization, ancestral sampling.

The accepted grammar is the dialect that bnlearn's exporter produces:
``network`` / ``variable`` / ``probability`` blocks, discrete variables only,
conditional tables given either as per-configuration rows ``(state, ...) p1,
p2, ...;`` or as a flat ``table ...;``.  ``property`` lines are ignored.  A
flat conditional ``table`` is read as the per-configuration rows concatenated
in declaration order of the parent states (child state fastest).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mosacd.data import Dataset
from mosacd.graph import CycleError, Dag

__all__ = ["BifSyntaxError", "BifSemanticError", "BayesNet", "parse_bif", "serialize_bif"]

ROW_SUM_TOL = 1e-9


class BifSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


class BifSemanticError(ValueError):
    """Structurally valid BIF with inconsistent content."""


@dataclass
class _Token:
    kind: str  # 'word', 'number', 'punct'
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<number>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?(?![\w.-]))
  | (?P<word>[A-Za-z_][\w.-]*|"[^"]*")
  | (?P<punct>[{}()\[\],;|=])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            col = pos - line_start + 1
            raise BifSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, tok.strip('"'), line, pos - line_start + 1))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("punct", "", 1, 1)
            raise BifSyntaxError("unexpected end of input", last.line, last.col)
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise BifSyntaxError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def expect_kind(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise BifSyntaxError(f"expected {kind}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def skip_block(self) -> None:
        """Consume a balanced { ... } block without interpreting it."""
        self.expect("{")
        depth = 1
        while depth:
            tok = self.next()
            if tok.text == "{":
                depth += 1
            elif tok.text == "}":
                depth -= 1

    def skip_property(self) -> None:
        # property lines run to the terminating semicolon
        while self.next().text != ";":
            pass


class BayesNet:
    """Parsed discrete network: states, parent sets, and row-stochastic CPTs.

    ``cpts[v]`` has shape (number of parent configurations, cardinality of v);
    parent configurations are indexed row-major over the parents in declared
    order (last parent fastest).
    """

    def __init__(
        self,
        name: str,
        nodes: Sequence[str],
        states: Sequence[Sequence[str]],
        parents: Sequence[Sequence[int]],
        cpts: Sequence[np.ndarray],
    ):
        self.name = name
        self.nodes = list(nodes)
        self.states = [list(s) for s in states]
        self.parents = [list(p) for p in parents]
        self.cpts = [np.asarray(t, dtype=float) for t in cpts]
        self._validate()
        try:
            self.dag = Dag(
                len(self.nodes),
                [(p, v) for v in range(len(self.nodes)) for p in self.parents[v]],
            )
        except CycleError as exc:
            raise BifSemanticError(f"parent structure is cyclic: {exc}") from exc

    def _validate(self) -> None:
        n = len(self.nodes)
        if not (len(self.states) == len(self.parents) == len(self.cpts) == n):
            raise BifSemanticError("node, state, parent, and CPT counts disagree")
        for v in range(n):
            configs = int(np.prod([len(self.states[p]) for p in self.parents[v]], dtype=object)) if self.parents[v] else 1
            want = (configs, len(self.states[v]))
            if self.cpts[v].shape != want:
                raise BifSemanticError(
                    f"CPT for {self.nodes[v]!r} has shape {self.cpts[v].shape}, expected {want}"
                )
            sums = self.cpts[v].sum(axis=1)
            bad = np.where(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
            if bad.size:
                raise BifSemanticError(
                    f"CPT row {bad[0]} of {self.nodes[v]!r} sums to {sums[bad[0]]!r}, not 1"
                )

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def node_index(self, name: str) -> int:
        try:
            return self.nodes.index(name)
        except ValueError:
            raise KeyError(f"no node named {name!r}") from None

    def cardinality(self, v: int) -> int:
        return len(self.states[v])

    def config_index(self, v: int, parent_states: Sequence[int]) -> int:
        if not self.parents[v]:
            return 0
        dims = [len(self.states[p]) for p in self.parents[v]]
        return int(np.ravel_multi_index(tuple(parent_states), dims))

    def structurally_equal(self, other: "BayesNet") -> bool:
        return (
            self.nodes == other.nodes
            and self.states == other.states
            and self.parents == other.parents
            and all(np.allclose(a, b, atol=1e-12) for a, b in zip(self.cpts, other.cpts))
        )


def parse_bif(text: str) -> BayesNet:
    """Parse the bnlearn BIF dialect; errors carry line/column positions."""
    parser = _Parser(_tokenize(text))
    name = "unknown"
    order: list[str] = []
    states: dict[str, list[str]] = {}
    prob_blocks: list[tuple[str, list[str], list, _Token]] = []

    while parser.peek() is not None:
        tok = parser.next()
        if tok.text == "network":
            name = parser.next().text
            parser.skip_block()
        elif tok.text == "variable":
            var_tok = parser.expect_kind("word")
            if var_tok.text in states:
                raise BifSyntaxError(f"variable {var_tok.text!r} declared twice", var_tok.line, var_tok.col)
            order.append(var_tok.text)
            states[var_tok.text] = _parse_variable_block(parser, var_tok.text)
        elif tok.text == "probability":
            prob_blocks.append(_parse_probability_block(parser))
        else:
            raise BifSyntaxError(f"expected a block keyword, found {tok.text!r}", tok.line, tok.col)

    index = {n: i for i, n in enumerate(order)}
    parents: list[list[int] | None] = [None] * len(order)
    tables: list[np.ndarray | None] = [None] * len(order)

    for child, parent_names, rows, where in prob_blocks:
        if child not in index:
            raise BifSemanticError(f"probability block references undeclared variable {child!r}")
        for p in parent_names:
            if p not in index:
                raise BifSemanticError(
                    f"probability block for {child!r} references undeclared parent {p!r}"
                )
        v = index[child]
        if parents[v] is not None:
            raise BifSemanticError(f"duplicate probability block for {child!r}")
        parent_idx = [index[p] for p in parent_names]
        card = len(states[child])
        dims = [len(states[p]) for p in parent_names]
        n_configs = int(np.prod(dims)) if dims else 1
        table = np.full((n_configs, card), np.nan)
        for row in rows:
            if row[0] == "table":
                values = row[1]
                if len(values) != n_configs * card:
                    raise BifSemanticError(
                        f"table for {child!r} lists {len(values)} values, "
                        f"expected {n_configs * card}"
                    )
                table = np.asarray(values, dtype=float).reshape(n_configs, card)
            else:
                config_states, values = row[1], row[2]
                if len(config_states) != len(parent_names):
                    raise BifSemanticError(
                        f"configuration row for {child!r} names {len(config_states)} "
                        f"states, expected {len(parent_names)}"
                    )
                idx = []
                for pname, sname in zip(parent_names, config_states):
                    try:
                        idx.append(states[pname].index(sname))
                    except ValueError:
                        raise BifSemanticError(
                            f"unknown state {sname!r} of parent {pname!r} in block for {child!r}"
                        ) from None
                if len(values) != card:
                    raise BifSemanticError(
                        f"configuration row for {child!r} lists {len(values)} values, "
                        f"expected {card}"
                    )
                config = int(np.ravel_multi_index(tuple(idx), dims)) if dims else 0
                table[config] = values
        if np.isnan(table).any():
            raise BifSemanticError(f"probability block for {child!r} leaves configurations unset")
        parents[v] = parent_idx
        tables[v] = table

    for v, nm in enumerate(order):
        if parents[v] is None:
            raise BifSemanticError(f"no probability block for variable {nm!r}")

    return BayesNet(name, order, [states[n] for n in order], parents, tables)


def _parse_variable_block(parser: _Parser, var: str) -> list[str]:
    parser.expect("{")
    state_names: list[str] | None = None
    while True:
        tok = parser.next()
        if tok.text == "}":
            break
        if tok.text == "type":
            kind = parser.next()
            if kind.text != "discrete":
                raise BifSyntaxError(
                    f"variable {var!r} has unsupported type {kind.text!r}", kind.line, kind.col
                )
            parser.expect("[")
            count_tok = parser.expect_kind("number")
            parser.expect("]")
            parser.expect("{")
            state_names = []
            while True:
                t = parser.next()
                if t.text == "}":
                    break
                if t.text == ",":
                    continue
                state_names.append(t.text)
            parser.expect(";")
            declared = int(float(count_tok.text))
            if declared != len(state_names):
                raise BifSyntaxError(
                    f"variable {var!r} declares {declared} states but lists {len(state_names)}",
                    count_tok.line,
                    count_tok.col,
                )
        elif tok.text == "property":
            parser.skip_property()
        else:
            raise BifSyntaxError(
                f"unexpected {tok.text!r} in variable block", tok.line, tok.col
            )
    if state_names is None:
        raise BifSemanticError(f"variable {var!r} has no type declaration")
    return state_names


def _parse_probability_block(parser: _Parser):
    where = parser.expect("(")
    child = parser.expect_kind("word").text
    parent_names: list[str] = []
    tok = parser.next()
    if tok.text == "|":
        while True:
            parent_names.append(parser.expect_kind("word").text)
            tok = parser.next()
            if tok.text == ")":
                break
            if tok.text != ",":
                raise BifSyntaxError(f"expected ',' or ')', found {tok.text!r}", tok.line, tok.col)
    elif tok.text != ")":
        raise BifSyntaxError(f"expected '|' or ')', found {tok.text!r}", tok.line, tok.col)

    parser.expect("{")
    rows = []
    while True:
        tok = parser.next()
        if tok.text == "}":
            break
        if tok.text == "table":
            values = _parse_number_list(parser)
            rows.append(("table", values))
        elif tok.text == "(":
            config_states = []
            while True:
                t = parser.next()
                if t.text == ")":
                    break
                if t.text == ",":
                    continue
                config_states.append(t.text)
            values = _parse_number_list(parser)
            rows.append(("config", config_states, values))
        elif tok.text == "property":
            parser.skip_property()
        else:
            raise BifSyntaxError(
                f"malformed probability entry starting at {tok.text!r}", tok.line, tok.col
            )
    return child, parent_names, rows, where


def _parse_number_list(parser: _Parser) -> list[float]:
    values = []
    while True:
        tok = parser.next()
        if tok.text == ";":
            break
        if tok.text == ",":
            continue
        if tok.kind != "number":
            raise BifSyntaxError(f"expected a number, found {tok.text!r}", tok.line, tok.col)
        values.append(float(tok.text))
    return values


def serialize_bif(net: BayesNet) -> str:
    """Emit BIF text that parse_bif accepts and round-trips structurally."""
    out = [f"network {net.name} {{", "}"]
    for v, name in enumerate(net.nodes):
        state_list = ", ".join(net.states[v])
        out.append(f"variable {name} {{")
        out.append(f"  type discrete [ {len(net.states[v])} ] {{ {state_list} }};")
        out.append("}")
    for v, name in enumerate(net.nodes):
        if not net.parents[v]:
            values = ", ".join(_fmt(x) for x in net.cpts[v][0])
            out.append(f"probability ( {name} ) {{")
            out.append(f"  table {values};")
            out.append("}")
            continue
        parent_names = ", ".join(net.nodes[p] for p in net.parents[v])
        out.append(f"probability ( {name} | {parent_names} ) {{")
        dims = [len(net.states[p]) for p in net.parents[v]]
        for config in range(net.cpts[v].shape[0]):
            idx = np.unravel_index(config, dims)
            labels = ", ".join(net.states[p][i] for p, i in zip(net.parents[v], idx))
            values = ", ".join(_fmt(x) for x in net.cpts[v][config])
            out.append(f"  ({labels}) {values};")
        out.append("}")
    return "\n".join(out) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def forward_sample(net: BayesNet, n: int, rng) -> Dataset:
    """Ancestral sampling in topological order; columns follow declaration order."""
    if n < 1:
        raise ValueError("need at least one sample")
    codes = np.empty((n, net.node_count), dtype=np.int32)
    for v in net.dag.topological_order():
        if net.parents[v]:
            dims = [net.cardinality(p) for p in net.parents[v]]
            rows = np.ravel_multi_index(
                tuple(codes[:, p] for p in net.parents[v]), dims
            )
            probs = net.cpts[v][rows]
        else:
            probs = np.broadcast_to(net.cpts[v][0], (n, net.cardinality(v)))
        cum = np.cumsum(probs, axis=1)
        u = rng.random(n)
        codes[:, v] = np.minimum((u[:, None] > cum).sum(axis=1), net.cardinality(v) - 1)
    return Dataset(net.nodes, codes, net.states)


def random_bayesnet(n_nodes: int, edge_prob: float, max_states: int, rng) -> BayesNet:
    """Random net for round-trip and sampling tests."""
    from mosacd.graph import random_dag

    dag = random_dag(n_nodes, edge_prob, rng)
    nodes = [f"v{i}" for i in range(n_nodes)]
    states = [
        [f"s{k}" for k in range(int(rng.integers(2, max_states + 1)))]
        for _ in range(n_nodes)
    ]
    parents = [sorted(dag.parents(v)) for v in range(n_nodes)]
    cpts = []
    for v in range(n_nodes):
        configs = int(np.prod([len(states[p]) for p in parents[v]])) if parents[v] else 1
        raw = rng.dirichlet(np.ones(len(states[v])), size=configs)
        cpts.append(raw)
    return BayesNet("random", nodes, states, parents, cpts)
