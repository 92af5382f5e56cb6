"""End-to-end discovery driver: skeleton, seeding, propagation, resolution.

The outer loop alternates the rule-closure fixpoint with least-conflict
resolution until the graph stops changing, then optionally completes the
remaining undirected edges from the seeding votes.  Every run produces a
machine-readable report sufficient to reproduce it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from mosacd.data import Metadata
from mosacd.graph import Pdag, find_semi_directed_cycle, graph_to_json, meek_closure
from mosacd.expert import SeedingConfig, SeedingResult, run_seeding
from mosacd.orient import least_conflict, orientation_fixpoint, vote_completion
from mosacd.skeleton import Skeleton, skel_search

__all__ = ["PipelineError", "MosacdConfig", "MosacdResult", "run_mosacd", "meek_baseline"]


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage tag and partial artifacts."""

    def __init__(self, stage: str, cause: Exception, partial: dict | None = None):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.partial = partial or {}


@dataclass
class MosacdConfig:
    skeleton_variant: str = "pc"
    ci_threshold: float = 0.05
    max_level: int = 3
    sepset_scope: str = "neighbors"
    repeats: int = 5
    filter_positional_bias: bool = True
    rng_seed: int = 0
    vote_completion: bool = False
    max_outer_iterations: int = 100
    jobs: int = 1

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")


@dataclass
class MosacdResult:
    graph: Pdag
    skeleton: Skeleton
    seeding: SeedingResult | None
    conflicts: list[dict]
    iterations: int
    trace: list[dict]
    config: MosacdConfig
    names: list[str]

    def report(self) -> dict:
        seeds = self.seeding.counts() if self.seeding else {"accepted": 0, "rejected": 0, "abstain": 0}
        return {
            "seeds": seeds,
            "iterations": self.iterations,
            "conflicts": self.conflicts,
            "final_graph": {
                "directed": [
                    [self.names[a], self.names[b]] for a, b in self.graph.directed_edges()
                ],
                "undirected": [
                    [self.names[a], self.names[b]] for a, b in self.graph.undirected_edges()
                ],
            },
            "config_echo": asdict(self.config),
        }

    def graph_json(self) -> str:
        return graph_to_json(self.graph, self.names)


def run_mosacd(
    ci: Callable,
    n_nodes: int,
    names: Sequence[str] | None = None,
    meta: Metadata | None = None,
    backend=None,
    config: MosacdConfig | None = None,
    skeleton: Skeleton | None = None,
    logger=None,
) -> MosacdResult:
    """Run the full pipeline; a precomputed skeleton skips stage 1.

    ``ci(x, y, s)`` supplies the CI decisions, ``backend`` the orientation
    expert (None disables seeding and the pipeline reduces to sepset-guided
    propagation alone).
    """
    config = config or MosacdConfig()
    names = list(names) if names is not None else [f"X{i}" for i in range(n_nodes)]
    meta = meta or Metadata()
    conflicts: list[dict] = []
    trace: list[dict] = []

    if skeleton is None:
        try:
            skeleton = skel_search(
                ci,
                n_nodes,
                variant=config.skeleton_variant,
                threshold=config.ci_threshold,
                max_level=config.max_level,
                sepset_scope=config.sepset_scope,
            )
        except Exception as exc:
            raise PipelineError("skeleton", exc) from exc
    sigma = skeleton.sepsets
    graph = skeleton.graph.copy()

    seeding = None
    if backend is not None:
        try:
            seeding = run_seeding(
                graph,
                sigma,
                backend,
                names,
                meta,
                SeedingConfig(
                    repeats=config.repeats,
                    filter_positional_bias=config.filter_positional_bias,
                    jobs=config.jobs,
                ),
                logger=logger,
            )
            graph = seeding.pdag
            if seeding.errors and not seeding.all_votes:
                # individual query failures aggregate, but a backend that
                # answered nothing at all is a stage failure
                from mosacd.expert import BackendError

                raise BackendError(
                    f"no expert query succeeded ({len(seeding.errors)} errors; "
                    f"first: {seeding.errors[0]})"
                )
        except Exception as exc:
            raise PipelineError("seeding", exc, {"skeleton": skeleton}) from exc

    rng = np.random.default_rng(config.rng_seed)
    iterations = 0
    try:
        while iterations < config.max_outer_iterations:
            iterations += 1
            settled = orientation_fixpoint(graph, sigma, conflicts=conflicts, trace=trace)
            resolved = least_conflict(settled, sigma, rng, conflicts=conflicts, trace=trace)
            if resolved == graph:
                graph = resolved
                break
            graph = resolved
    except Exception as exc:
        raise PipelineError("orientation", exc, {"skeleton": skeleton, "seeding": seeding}) from exc

    if config.vote_completion and seeding is not None:
        try:
            graph = vote_completion(graph, seeding.all_votes)
        except Exception as exc:
            raise PipelineError("vote-completion", exc, {"skeleton": skeleton}) from exc

    cycle_edge = find_semi_directed_cycle(graph)
    if cycle_edge is not None:
        raise PipelineError(
            "validation",
            AssertionError(f"output contains a directed or semi-directed cycle at {cycle_edge}"),
            {"skeleton": skeleton, "seeding": seeding},
        )

    return MosacdResult(
        graph=graph,
        skeleton=skeleton,
        seeding=seeding,
        conflicts=conflicts,
        iterations=iterations,
        trace=trace,
        config=config,
        names=names,
    )


def meek_baseline(skeleton: Skeleton) -> Pdag:
    """Classic comparison pipeline: v-structures from the sepset record, then
    rule closure.  Consumes the same skeleton and sepsets as the main method,
    so differences downstream are attributable to orientation strategy alone.
    """
    g = skeleton.graph.copy()
    sigma = skeleton.sepsets
    from mosacd.graph import unshielded_triples

    for t in unshielded_triples(g):
        if sigma.membership(t.z, t.x, t.y) != "none":
            continue
        if g.has_arrow(t.z, t.x) or g.has_arrow(t.z, t.y):
            continue  # contradicted by an earlier decision; leave it
        for arm in (t.x, t.y):
            if g.is_undirected(arm, t.z):
                g._set_arrow(arm, t.z)
    # noisy sepsets can plant contradictory v-structures; close tolerantly
    return meek_closure(g, strict=False)
