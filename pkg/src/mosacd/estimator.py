"""Scikit-learn style front end for the discovery pipeline."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from mosacd._validation import as_categorical_dataset, check_fraction
from mosacd.citest import g2_test
from mosacd.data import Metadata
from mosacd.graph import graph_to_json
from mosacd.pipeline import MosacdConfig, run_mosacd

__all__ = ["MosaCD"]


class MosaCD(BaseEstimator):
    """Constraint-based structure learner with expert-seeded orientation.

    Fits a partially directed graph over the columns of a categorical dataset:
    skeleton search with a G-squared independence test, optional expert
    seeding of edge directions (any object with the backend ``respond``
    protocol), confidence-ordered propagation, and least-conflict resolution.

    Parameters
    ----------
    skeleton : {"pc", "pc-stable", "cpc"}
        Skeleton search variant.
    ci_threshold : float
        Significance threshold for the independence test.
    max_level : int
        Largest conditioning-set size searched.
    sepset_scope : {"neighbors", "all"}
        Candidate pool for conditioning sets.
    expert : backend or None
        Orientation expert; None disables seeding.
    repeats : int
        Trials per answer order in the seeding votes.
    filter_positional_bias : bool
        Require the majority direction under both answer orders.
    vote_completion : bool
        Orient leftover undirected edges from the aggregated votes.
    metadata : Metadata or None
        Variable descriptions handed to the expert.
    random_state : int
        Seed for the conflict-resolution edge order.
    jobs : int
        Concurrency cap for expert queries.

    Attributes
    ----------
    graph_ : Pdag
        The fitted mixed graph.
    skeleton_ : Skeleton
        Undirected structure plus the sepset record.
    sepsets_ : SepsetRecord
        Convenience alias of ``skeleton_.sepsets``.
    seeds_ : SeedSet or None
        Accepted expert seeds (None without an expert).
    report_ : dict
        Machine-readable run report with the config echo.
    """

    def __init__(
        self,
        skeleton: str = "pc",
        ci_threshold: float = 0.05,
        max_level: int = 3,
        sepset_scope: str = "neighbors",
        expert=None,
        repeats: int = 5,
        filter_positional_bias: bool = True,
        vote_completion: bool = False,
        metadata: Metadata | None = None,
        random_state: int = 0,
        jobs: int = 1,
    ):
        self.skeleton = skeleton
        self.ci_threshold = ci_threshold
        self.max_level = max_level
        self.sepset_scope = sepset_scope
        self.expert = expert
        self.repeats = repeats
        self.filter_positional_bias = filter_positional_bias
        self.vote_completion = vote_completion
        self.metadata = metadata
        self.random_state = random_state
        self.jobs = jobs

    def fit(self, X, y=None, feature_names=None):
        """Learn the graph from a categorical dataset.

        ``X`` may be a pandas DataFrame, a 2d array of tokens, or a Dataset;
        ``y`` is ignored and present for API compatibility.
        """
        check_fraction("ci_threshold", self.ci_threshold, open_interval=True)
        dataset = as_categorical_dataset(X, feature_names)
        config = MosacdConfig(
            skeleton_variant=self.skeleton,
            ci_threshold=self.ci_threshold,
            max_level=self.max_level,
            sepset_scope=self.sepset_scope,
            repeats=self.repeats,
            filter_positional_bias=self.filter_positional_bias,
            rng_seed=self.random_state,
            vote_completion=self.vote_completion,
            jobs=self.jobs,
        )
        meta = self.metadata or Metadata(
            descriptions={name: "" for name in dataset.columns}
        )
        result = run_mosacd(
            ci=lambda x, y_, s: g2_test(dataset, x, y_, s, self.ci_threshold),
            n_nodes=dataset.n_cols,
            names=dataset.columns,
            meta=meta,
            backend=self.expert,
            config=config,
        )
        self.n_features_in_ = dataset.n_cols
        self.feature_names_in_ = list(dataset.columns)
        self.graph_ = result.graph
        self.skeleton_ = result.skeleton
        self.sepsets_ = result.skeleton.sepsets
        self.seeds_ = result.seeding.seeds if result.seeding else None
        self.report_ = result.report()
        self.result_ = result
        return self

    def graph_json(self) -> str:
        """JSON form of the fitted graph with the original column names."""
        check_is_fitted(self, "graph_")
        return graph_to_json(self.graph_, self.feature_names_in_)

    def directed_edges_(self) -> list[tuple[str, str]]:
        check_is_fitted(self, "graph_")
        names = self.feature_names_in_
        return [(names[a], names[b]) for a, b in self.graph_.directed_edges()]
