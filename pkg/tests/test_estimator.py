from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mosacd import MosaCD
from mosacd.bayesnet import forward_sample, parse_bif
from mosacd.data import Metadata
from mosacd.expert import ScriptedTruthExpert

TWO_COLLIDER_NET = """
network toy { }
variable a { type discrete [ 2 ] { y, n }; }
variable b { type discrete [ 2 ] { y, n }; }
variable c { type discrete [ 2 ] { y, n }; }
probability ( a ) { table 0.4, 0.6; }
probability ( b ) { table 0.7, 0.3; }
probability ( c | a, b ) {
  (y, y) 0.95, 0.05;
  (y, n) 0.7, 0.3;
  (n, y) 0.6, 0.4;
  (n, n) 0.05, 0.95;
}
"""


@pytest.fixture(scope="module")
def collider_frame():
    net = parse_bif(TWO_COLLIDER_NET)
    data = forward_sample(net, 20_000, np.random.default_rng(0))
    return pd.DataFrame(list(data.rows()), columns=data.columns), net


def test_get_params_round_trip():
    est = MosaCD(skeleton="cpc", ci_threshold=0.01, repeats=7)
    params = est.get_params()
    assert params["skeleton"] == "cpc"
    assert params["ci_threshold"] == 0.01
    cloned = clone(est)
    assert cloned.get_params() == params
    cloned.set_params(skeleton="pc")
    assert cloned.skeleton == "pc"


def test_unfitted_accessors_raise():
    est = MosaCD()
    with pytest.raises(NotFittedError):
        est.graph_json()


def test_fit_recovers_collider_from_dataframe(collider_frame):
    frame, net = collider_frame
    est = MosaCD(skeleton="pc", ci_threshold=0.05).fit(frame)
    assert est.n_features_in_ == 3
    assert est.feature_names_in_ == ["a", "b", "c"]
    assert est.graph_.has_arrow(0, 2)
    assert est.graph_.has_arrow(1, 2)
    assert est.seeds_ is None
    assert est.report_["config_echo"]["skeleton_variant"] == "pc"
    assert ("a", "c") in est.directed_edges_()


def test_fit_accepts_plain_arrays():
    rng = np.random.default_rng(4)
    a = rng.integers(0, 2, 4000)
    b = rng.integers(0, 2, 4000)
    c = np.where(rng.random(4000) < 0.9, a | b, rng.integers(0, 2, 4000))
    X = np.stack([a, b, c], axis=1).astype(str)
    est = MosaCD().fit(X, feature_names=["a", "b", "c"])
    assert est.graph_.adjacent(0, 2)
    assert est.graph_json().startswith("{")


def test_fit_with_expert_orients_reversible_edges(collider_frame):
    frame, net = collider_frame
    expert = ScriptedTruthExpert(net.dag, abstain_rate=0.0, error_rate=0.0, seed=1)
    meta = Metadata(descriptions={n: f"variable {n}" for n in net.nodes})
    est = MosaCD(expert=expert, metadata=meta).fit(frame)
    assert len(est.seeds_) >= 0
    assert est.report_["seeds"]["accepted"] == len(est.seeds_)


def test_invalid_threshold_rejected(collider_frame):
    frame, _ = collider_frame
    with pytest.raises(ValueError):
        MosaCD(ci_threshold=1.5).fit(frame)
