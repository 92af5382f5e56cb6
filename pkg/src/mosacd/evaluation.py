"""Orientation metrics and the seeded-ablation experiment runner."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from mosacd.bayesnet import forward_sample, random_bayesnet
from mosacd.citest import NoiseParams, g2_test, noisy_oracle_test
from mosacd.data import Metadata, UNINFORMATIVE_DESCRIPTION
from mosacd.expert import (
    InjectedSeedExpert,
    MaskSensitiveTruthExpert,
    ScriptedTruthExpert,
    SeedSet,
)
from mosacd.graph import Dag, Pdag, cpdag_of, meek_closure, random_dag
from mosacd.pipeline import MosacdConfig, meek_baseline, run_mosacd
from mosacd.skeleton import Skeleton, skel_search

__all__ = [
    "EvalReport",
    "orientation_f1",
    "seed_accuracy",
    "naive_seed_then_meek",
    "AblationConfig",
    "run_ablation",
    "expert_comparison_trials",
    "ablation_rows_to_csv",
]


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    seed_true: int = 0
    seed_false: int = 0
    seed_abstain: int = 0
    undirected_mode: str = "fn-only"
    target: str = "dag"


def _f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def orientation_f1(
    pred: Pdag | Dag,
    truth: Dag,
    undirected_mode: str = "fn-only",
    target: str = "dag",
) -> EvalReport:
    """F1 over directed edges against the true graph.

    A predicted arrow matching a truth arrow is a true positive; reversed or
    absent arrows are false positives; truth arrows not correctly predicted
    are false negatives.  Undirected predictions earn no orientation credit:
    by default they only show up as missed truth edges, while strict mode
    additionally charges each one as a false positive.  With target="cpdag"
    the comparison runs against the completed PDAG of the truth, where an
    undirected prediction matching a reversible edge counts as correct.
    """
    if undirected_mode not in ("fn-only", "strict"):
        raise ValueError(f"unknown undirected_mode {undirected_mode!r}")
    if target not in ("dag", "cpdag"):
        raise ValueError(f"unknown target {target!r}")
    if pred.node_count != truth.node_count:
        raise ValueError(
            f"node sets differ: predicted {pred.node_count}, truth {truth.node_count}"
        )
    if isinstance(pred, Dag):
        pred_directed = set(pred.edges)
        pred_undirected: set[tuple[int, int]] = set()
    else:
        pred_directed = set(pred.directed_edges())
        pred_undirected = set(pred.undirected_edges())

    if target == "dag":
        truth_directed = set(truth.edges)
        tp = len(pred_directed & truth_directed)
        fp = len(pred_directed - truth_directed)
        fn = len(truth_directed) - tp
        if undirected_mode == "strict":
            fp += len(pred_undirected)
    else:
        truth_c = cpdag_of(truth)
        truth_directed = set(truth_c.directed_edges())
        truth_undirected = set(truth_c.undirected_edges())
        tp = len(pred_directed & truth_directed) + len(pred_undirected & truth_undirected)
        fp = len(pred_directed - truth_directed) + len(pred_undirected - truth_undirected)
        fn = len(truth_directed) + len(truth_undirected) - tp
        if undirected_mode == "strict":
            pass  # cpdag target already charges mismatched undirected edges
    precision, recall, f1 = _f1_from_counts(tp, fp, fn)
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        undirected_mode=undirected_mode,
        target=target,
    )


def seed_accuracy(seeds: SeedSet | Sequence[tuple[int, int]], truth: Dag) -> tuple[int, int]:
    """(true, false) seed counts: a seed is true iff the truth has that arrow."""
    pairs = seeds.directed_pairs() if isinstance(seeds, SeedSet) else list(seeds)
    true_count = sum((u, v) in truth.edges for u, v in pairs)
    return true_count, len(pairs) - true_count


def naive_seed_then_meek(skeleton: Skeleton, seed_pairs: Sequence[tuple[int, int]]) -> Pdag:
    """Ablation foil: apply seeds blindly, add v-structures, close tolerantly."""
    g = skeleton.graph.copy()
    for u, v in seed_pairs:
        if g.is_undirected(u, v):
            g._set_arrow(u, v)
    from mosacd.graph import unshielded_triples

    for t in unshielded_triples(g):
        if skeleton.sepsets.membership(t.z, t.x, t.y) != "none":
            continue
        if g.has_arrow(t.z, t.x) or g.has_arrow(t.z, t.y):
            continue
        for arm in (t.x, t.y):
            if g.is_undirected(arm, t.z):
                g._set_arrow(arm, t.z)
    return meek_closure(g, strict=False)


@dataclass
class AblationConfig:
    vary: str  # true_seeds | false_seed_fraction | mask_fraction | sample_size
    grid: Sequence
    trials: int = 10
    n_nodes: int = 7
    edge_prob: float = 0.35
    alpha: float = 0.05
    beta: float = 0.1
    abstain: float = 0.2
    total_seeds: int = 20
    skeleton_variant: str = "cpc"
    ci_threshold: float = 0.05
    max_level: int = 3
    base_seed: int = 0

    VARIANTS = ("true_seeds", "false_seed_fraction", "mask_fraction", "sample_size")

    def __post_init__(self):
        if self.vary not in self.VARIANTS:
            raise ValueError(f"vary must be one of {self.VARIANTS}, got {self.vary!r}")


def _trial_skeleton(dag: Dag, noise_seed: int, config: AblationConfig) -> Skeleton:
    noise = NoiseParams(alpha=config.alpha, beta=config.beta, rng_seed=noise_seed)
    return skel_search(
        lambda x, y, s: noisy_oracle_test(dag, x, y, s, noise),
        dag.node_count,
        variant=config.skeleton_variant,
        threshold=config.ci_threshold,
        max_level=config.max_level,
    )


def _seedable_edges(skeleton: Skeleton, truth: Dag) -> list[tuple[int, int]]:
    """Skeleton edges in their true direction, ready to sample seeds from."""
    out = []
    for a, b in skeleton.graph.undirected_edges():
        if (a, b) in truth.edges:
            out.append((a, b))
        elif (b, a) in truth.edges:
            out.append((b, a))
    return out


def _run_with_expert(skeleton: Skeleton, backend, names, meta, seed: int):
    return run_mosacd(
        ci=None,
        n_nodes=skeleton.graph.node_count,
        names=names,
        meta=meta,
        backend=backend,
        config=MosacdConfig(rng_seed=seed),
        skeleton=skeleton,
    )


def run_ablation(config: AblationConfig) -> list[dict]:
    """Grid x trials sweep; every method consumes the trial's one skeleton.

    Returns one row per (grid value, trial, method) with the evaluation
    metrics; infeasible grid points (more seeds requested than seedable
    edges) degrade to the feasible count and say so in the row.
    """
    rows: list[dict] = []
    vary_index = AblationConfig.VARIANTS.index(config.vary)
    for trial in range(config.trials):
        # one graph and one CI transcript per trial, shared across the whole
        # grid and across methods, so differences are attributable to the
        # varied quantity alone
        master = np.random.default_rng((config.base_seed, vary_index, trial))
        trial_seed = int(master.integers(0, 2**31))
        names = [f"n{i}" for i in range(config.n_nodes)]
        meta = Metadata(
            data_desc="synthetic ablation data",
            descriptions={nm: f"variable {nm}" for nm in names},
        )
        if config.vary == "sample_size":
            net = random_bayesnet(config.n_nodes, config.edge_prob, 3, master)
            dag = net.dag
            trial_skeleton = None
        else:
            dag = random_dag(config.n_nodes, config.edge_prob, master)
            trial_skeleton = _trial_skeleton(dag, trial_seed, config)

        for value_index, value in enumerate(config.grid):
            value_rng = np.random.default_rng(
                (config.base_seed, vary_index, trial, 1000 + value_index)
            )
            if config.vary == "sample_size":
                data = forward_sample(net, int(value), value_rng)
                skeleton = skel_search(
                    lambda x, y, s: g2_test(data, x, y, s, config.ci_threshold),
                    config.n_nodes,
                    variant=config.skeleton_variant,
                    threshold=config.ci_threshold,
                    max_level=config.max_level,
                )
            else:
                skeleton = trial_skeleton

            note = ""
            runs: dict[str, tuple] = {}
            # same stream for every grid value: seed/mask selections nest
            # across the grid instead of resampling, keeping the sweep paired
            inject_rng = np.random.default_rng((config.base_seed, vary_index, trial, 999))
            if config.vary == "true_seeds":
                pool = _seedable_edges(skeleton, dag)
                k = int(value)
                if k > len(pool):
                    note = f"requested {k} seeds, only {len(pool)} seedable"
                    k = len(pool)
                chosen = [pool[i] for i in inject_rng.permutation(len(pool))[:k]]
                backend = InjectedSeedExpert({(u, v): (u, v) for u, v in chosen})
                result = _run_with_expert(skeleton, backend, names, meta, trial_seed)
                runs["mosacd"] = (result.graph, result.seeding.seeds)
                runs["meek"] = (meek_baseline(skeleton), None)
            elif config.vary == "false_seed_fraction":
                pool = _seedable_edges(skeleton, dag)
                total = min(config.total_seeds, len(pool))
                if total < config.total_seeds:
                    note = f"requested {config.total_seeds} seeds, only {total} seedable"
                chosen = [pool[i] for i in inject_rng.permutation(len(pool))[:total]]
                n_false = int(round(float(value) * total))
                decisions = {}
                injected = []
                for i, (u, v) in enumerate(chosen):
                    directed = (v, u) if i < n_false else (u, v)
                    decisions[(u, v)] = directed
                    injected.append(directed)
                backend = InjectedSeedExpert(decisions)
                result = _run_with_expert(skeleton, backend, names, meta, trial_seed)
                runs["mosacd"] = (result.graph, result.seeding.seeds)
                runs["meek"] = (meek_baseline(skeleton), None)
                runs["naive"] = (naive_seed_then_meek(skeleton, injected), injected)
            elif config.vary == "mask_fraction":
                masked_count = math.ceil(float(value) * len(names))
                masked = set(
                    inject_rng.permutation(sorted(names))[:masked_count]
                ) if masked_count else set()
                trial_meta = Metadata(
                    data_desc=meta.data_desc,
                    descriptions={
                        nm: (UNINFORMATIVE_DESCRIPTION if nm in masked else d)
                        for nm, d in meta.descriptions.items()
                    },
                )
                backend = MaskSensitiveTruthExpert(
                    dag, abstain_rate=config.abstain, error_rate=0.0, seed=trial_seed
                )
                result = _run_with_expert(skeleton, backend, names, trial_meta, trial_seed)
                runs["mosacd"] = (result.graph, result.seeding.seeds)
                runs["meek"] = (meek_baseline(skeleton), None)
            else:  # sample_size
                backend = ScriptedTruthExpert(
                    dag, abstain_rate=config.abstain, error_rate=0.0, seed=trial_seed
                )
                result = _run_with_expert(skeleton, backend, names, meta, trial_seed)
                runs["mosacd"] = (result.graph, result.seeding.seeds)
                runs["meek"] = (meek_baseline(skeleton), None)

            for method, (graph, seeds) in runs.items():
                report = orientation_f1(graph, dag)
                if seeds is not None:
                    report.seed_true, report.seed_false = seed_accuracy(seeds, dag)
                rows.append(
                    {
                        "vary": config.vary,
                        "value": value,
                        "trial": trial,
                        "method": method,
                        "f1": report.f1,
                        "precision": report.precision,
                        "recall": report.recall,
                        "tp": report.tp,
                        "fp": report.fp,
                        "fn": report.fn,
                        "seed_true": report.seed_true,
                        "seed_false": report.seed_false,
                        "note": note,
                    }
                )
    return rows


def expert_comparison_trials(
    n_trials: int = 30,
    n_nodes: int = 7,
    edge_prob: float = 0.35,
    alpha: float = 0.05,
    beta: float = 0.1,
    abstain: float = 0.2,
    error_rate: float = 0.0,
    skeleton_variant: str = "cpc",
    base_seed: int = 0,
) -> list[dict]:
    """Paired runs of the full pipeline vs the rule baseline on one skeleton."""
    rows = []
    for trial in range(n_trials):
        master = np.random.default_rng((base_seed, 0xA11CE, trial))
        trial_seed = int(master.integers(0, 2**31))
        dag = random_dag(n_nodes, edge_prob, master)
        names = [f"n{i}" for i in range(n_nodes)]
        meta = Metadata(descriptions={nm: f"variable {nm}" for nm in names})
        noise = NoiseParams(alpha=alpha, beta=beta, rng_seed=trial_seed)
        skeleton = skel_search(
            lambda x, y, s: noisy_oracle_test(dag, x, y, s, noise),
            n_nodes,
            variant=skeleton_variant,
        )
        backend = ScriptedTruthExpert(
            dag, abstain_rate=abstain, error_rate=error_rate, seed=trial_seed
        )
        result = _run_with_expert(skeleton, backend, names, meta, trial_seed)
        baseline = meek_baseline(skeleton)
        mosacd_report = orientation_f1(result.graph, dag)
        rows.append(
            {
                "trial": trial,
                "mosacd_f1": mosacd_report.f1,
                "meek_f1": orientation_f1(baseline, dag).f1,
                "seed_true": seed_accuracy(result.seeding.seeds, dag)[0],
                "seed_false": seed_accuracy(result.seeding.seeds, dag)[1],
            }
        )
    return rows


def ablation_rows_to_csv(rows: Sequence[dict], config_echo: dict | None = None) -> str:
    """Per-row CSV plus mean +/- standard error aggregated per (value, method)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    echo = config_echo or {}
    fields = [
        "vary", "value", "trial", "method", "f1", "precision", "recall",
        "tp", "fp", "fn", "seed_true", "seed_false", "note",
    ]
    echo_keys = sorted(echo)
    writer.writerow(fields + [f"cfg_{k}" for k in echo_keys])
    for row in rows:
        writer.writerow([row[f] for f in fields] + [echo[k] for k in echo_keys])

    groups: dict[tuple, list[float]] = {}
    for row in rows:
        groups.setdefault((row["value"], row["method"]), []).append(row["f1"])
    writer.writerow([])
    writer.writerow(["value", "method", "mean_f1", "stderr_f1", "trials"])
    for (value, method), f1s in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        mean = float(np.mean(f1s))
        stderr = float(np.std(f1s, ddof=1) / math.sqrt(len(f1s))) if len(f1s) > 1 else 0.0
        writer.writerow([value, method, f"{mean:.4f}", f"{stderr:.4f}", len(f1s)])
    return buf.getvalue()
