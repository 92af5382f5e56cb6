from __future__ import annotations

import numpy as np
import pytest

from mosacd.bayesnet import (
    BayesNet,
    BifSemanticError,
    BifSyntaxError,
    forward_sample,
    parse_bif,
    random_bayesnet,
    serialize_bif,
)

TWO_NODE = """
network toy {
}
variable A {
  type discrete [ 2 ] { yes, no };
}
variable B {
  type discrete [ 2 ] { on, off };
}
probability ( A ) {
  table 0.5, 0.5;
}
probability ( B | A ) {
  (yes) 0.9, 0.1;
  (no) 0.2, 0.8;
}
"""


def test_parse_two_node():
    net = parse_bif(TWO_NODE)
    assert net.nodes == ["A", "B"]
    assert net.states[0] == ["yes", "no"]
    assert net.parents[1] == [0]
    assert np.allclose(net.cpts[0].sum(axis=1), 1.0)
    assert np.allclose(net.cpts[1], [[0.9, 0.1], [0.2, 0.8]])


def test_parse_reports_syntax_position():
    bad = TWO_NODE.replace("probability ( B | A )", "probability B | A")
    with pytest.raises(BifSyntaxError) as err:
        parse_bif(bad)
    assert err.value.line > 1


def test_row_sum_violation_rejected():
    bad = TWO_NODE.replace("0.9, 0.1", "0.9, 0.2")
    with pytest.raises(BifSemanticError):
        parse_bif(bad)


def test_undeclared_variable_rejected():
    bad = TWO_NODE.replace("probability ( B | A )", "probability ( B | C )")
    with pytest.raises(BifSemanticError):
        parse_bif(bad)


def test_cycle_rejected():
    text = """
network loop { }
variable A { type discrete [ 2 ] { a0, a1 }; }
variable B { type discrete [ 2 ] { b0, b1 }; }
probability ( A | B ) { (b0) 0.5, 0.5; (b1) 0.5, 0.5; }
probability ( B | A ) { (a0) 0.5, 0.5; (a1) 0.5, 0.5; }
"""
    with pytest.raises(BifSemanticError):
        parse_bif(text)


def test_property_lines_ignored():
    text = TWO_NODE.replace(
        "type discrete [ 2 ] { yes, no };",
        "type discrete [ 2 ] { yes, no };\n  property position = (100, 200) ;",
    )
    net = parse_bif(text)
    assert net.nodes == ["A", "B"]


def test_conditional_flat_table():
    text = TWO_NODE.replace("(yes) 0.9, 0.1;\n  (no) 0.2, 0.8;", "table 0.9, 0.1, 0.2, 0.8;")
    net = parse_bif(text)
    assert np.allclose(net.cpts[1], [[0.9, 0.1], [0.2, 0.8]])


def test_round_trip_generated_corpus(rng):
    for _ in range(15):
        net = random_bayesnet(int(rng.integers(2, 7)), 0.5, 3, rng)
        text = serialize_bif(net)
        again = parse_bif(text)
        assert again.structurally_equal(net)
        # parse -> serialize -> parse is stable
        assert parse_bif(serialize_bif(again)).structurally_equal(net)


def test_forward_sample_deterministic_node():
    net = BayesNet(
        "point", ["A"], [["s0", "s1"]], [[]], [np.array([[1.0, 0.0]])]
    )
    ds = forward_sample(net, 50, np.random.default_rng(0))
    assert all(row == ["s0"] for row in ds.rows())


def test_forward_sample_fair_coin_within_3_sigma():
    net = BayesNet("coin", ["A"], [["h", "t"]], [[]], [np.array([[0.5, 0.5]])])
    n = 20_000
    ds = forward_sample(net, n, np.random.default_rng(42))
    freq = (ds.codes[:, 0] == 0).mean()
    sigma = 0.5 / np.sqrt(n)
    assert abs(freq - 0.5) < 3 * sigma


def test_forward_sample_deterministic_chain():
    net = parse_bif(
        TWO_NODE.replace("(yes) 0.9, 0.1;\n  (no) 0.2, 0.8;", "(yes) 1.0, 0.0;\n  (no) 0.0, 1.0;")
    )
    ds = forward_sample(net, 200, np.random.default_rng(1))
    assert (ds.codes[:, 0] == ds.codes[:, 1]).all()


def test_forward_sample_seeded_reproducible():
    net = parse_bif(TWO_NODE)
    a = forward_sample(net, 100, np.random.default_rng(5))
    b = forward_sample(net, 100, np.random.default_rng(5))
    assert (a.codes == b.codes).all()


def test_root_marginals_converge(rng):
    for _ in range(3):
        net = random_bayesnet(4, 0.4, 3, rng)
        n = 20_000
        ds = forward_sample(net, n, rng)
        for v in range(net.node_count):
            if net.parents[v]:
                continue
            prior = net.cpts[v][0]
            for k, p in enumerate(prior):
                freq = (ds.codes[:, v] == k).mean()
                sigma = np.sqrt(max(p * (1 - p), 1e-12) / n)
                assert abs(freq - p) < 3 * sigma + 1e-9
