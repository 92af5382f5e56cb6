"""Command-line entry point.

Subcommands: discover, skeleton, seed, theory, sample, eval, ablate.  Exit
codes: 0 ok, 1 usage, 2 data error, 3 backend error, 4 internal invariant
violation.  Config precedence is CLI flags over config-file values over
defaults, and every run directory receives the effective merged config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from mosacd.bayesnet import BifSemanticError, BifSyntaxError, forward_sample, parse_bif
from mosacd.citest import NoiseParams, g2_test, noisy_oracle_test, oracle_test
from mosacd.data import DataFormatError, Dataset, Metadata
from mosacd.error_model import (
    COLLIDER,
    NONCOLLIDER,
    StylizedModel,
    expected_fpr_table,
    fpr_rows_to_csv,
    level_counts,
    level_probabilities,
    monte_carlo_stylized,
    r_ratio,
    ratio_grid,
)
from mosacd.evaluation import (
    AblationConfig,
    ablation_rows_to_csv,
    orientation_f1,
    run_ablation,
)
from mosacd.expert import BackendError, SeedingConfig, TranscriptLogger, parse_backend_spec, run_seeding
from mosacd.graph import (
    CycleError,
    OrientationConflictError,
    Pdag,
    graph_from_json,
    graph_to_dot,
    graph_to_json,
    graph_to_text,
)
from mosacd.pipeline import MosacdConfig, PipelineError, run_mosacd
from mosacd.skeleton import SepsetRecord, skel_search

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3
EXIT_INTERNAL = 4

_DATA_ERRORS = (
    BifSyntaxError,
    BifSemanticError,
    DataFormatError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
)
_INTERNAL_ERRORS = (OrientationConflictError, CycleError, AssertionError)


def _build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="mosacd", description=__doc__)
    parser.add_argument("--config", help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def add_run_flags(p):
        p.add_argument("--network", help="ground-truth BIF network")
        p.add_argument("--metadata", help="variable-description JSON")
        p.add_argument("--data", help="categorical CSV dataset")
        p.add_argument("--samples", type=int, default=20000,
                       help="forward-sample size when --network supplies the data")
        p.add_argument("--ci", default="g2",
                       help="CI test: g2 | oracle | noisy:<alpha>,<beta>")
        p.add_argument("--skeleton", default="pc", choices=("pc", "pc-stable", "cpc"))
        p.add_argument("--threshold", type=float, default=0.05)
        p.add_argument("--max-level", type=int, default=3)
        p.add_argument("--sepset-scope", default="neighbors", choices=("neighbors", "all"))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")

    p_discover = sub.add_parser("discover", help="run the full pipeline")
    add_run_flags(p_discover)
    p_discover.add_argument("--expert", default="none",
                            help="none | scripted:... | replay:<path> | llm:...")
    p_discover.add_argument("--repeats", type=int, default=5)
    p_discover.add_argument("--no-bias-filter", action="store_true",
                            help="decide from the forward answer order alone")
    p_discover.add_argument("--step5", action="store_true",
                            help="complete leftover edges from the votes")
    p_discover.add_argument("--jobs", type=int, default=1)
    registry["discover"] = p_discover
    p_discover.set_defaults(func=cmd_discover)

    p_skel = sub.add_parser("skeleton", help="run skeleton search only")
    add_run_flags(p_skel)
    registry["skeleton"] = p_skel
    p_skel.set_defaults(func=cmd_skeleton)

    p_seed = sub.add_parser("seed", help="run expert seeding on a saved skeleton")
    p_seed.add_argument("--network", help="ground-truth BIF (for scripted:truth)")
    p_seed.add_argument("--metadata", help="variable-description JSON")
    p_seed.add_argument("--skeleton-graph", required=True, help="graph JSON from `skeleton`")
    p_seed.add_argument("--sigma", required=True, help="sepset JSON from `skeleton`")
    p_seed.add_argument("--expert", required=True)
    p_seed.add_argument("--repeats", type=int, default=5)
    p_seed.add_argument("--no-bias-filter", action="store_true")
    p_seed.add_argument("--jobs", type=int, default=1)
    p_seed.add_argument("--out", required=True)
    registry["seed"] = p_seed
    p_seed.set_defaults(func=cmd_seed)

    p_sample = sub.add_parser("sample", help="forward-sample a network to CSV")
    p_sample.add_argument("--network", required=True)
    p_sample.add_argument("-n", "--samples", type=int, default=20000)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True, help="output CSV path")
    registry["sample"] = p_sample
    p_sample.set_defaults(func=cmd_sample)

    p_eval = sub.add_parser("eval", help="score a predicted graph against truth")
    p_eval.add_argument("--pred", required=True, help="predicted graph JSON")
    p_eval.add_argument("--truth", required=True, help="BIF network or directed graph JSON")
    p_eval.add_argument("--undirected-mode", default="fn-only", choices=("fn-only", "strict"))
    p_eval.add_argument("--target", default="dag", choices=("dag", "cpdag"))
    p_eval.add_argument("--out", help="write the report JSON here instead of stdout")
    registry["eval"] = p_eval
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="run a seeded ablation sweep")
    p_abl.add_argument("--vary", required=True, choices=AblationConfig.VARIANTS)
    p_abl.add_argument("--grid", required=True, help="comma-separated grid values")
    p_abl.add_argument("--trials", type=int, default=10)
    p_abl.add_argument("--nodes", type=int, default=7)
    p_abl.add_argument("--edge-prob", type=float, default=0.35)
    p_abl.add_argument("--alpha", type=float, default=0.05)
    p_abl.add_argument("--beta", type=float, default=0.1)
    p_abl.add_argument("--abstain", type=float, default=0.2)
    p_abl.add_argument("--total-seeds", type=int, default=20)
    p_abl.add_argument("--skeleton", default="cpc", choices=("pc", "pc-stable", "cpc"))
    p_abl.add_argument("--seed", type=int, default=0)
    p_abl.add_argument("--out", required=True, help="output CSV path")
    registry["ablate"] = p_abl
    p_abl.set_defaults(func=cmd_ablate)

    p_theory = sub.add_parser("theory", help="closed-form tables and simulations")
    theory_sub = p_theory.add_subparsers(dest="theory_command", required=True)

    p_ratios = theory_sub.add_parser("ratios", help="error-odds ratio grid")
    p_ratios.add_argument("--M", type=int, required=True)
    p_ratios.add_argument("--l", default="1..3", help="level range, e.g. 1..4 or 2")
    p_ratios.add_argument("--alpha", type=float, default=0.05)
    p_ratios.add_argument("--beta", type=float, default=0.1)
    p_ratios.add_argument("--out", help="output CSV path (default stdout)")
    registry["theory:ratios"] = p_ratios
    p_ratios.set_defaults(func=cmd_theory_ratios)

    p_fpr = theory_sub.add_parser("fpr-table", help="expected false-positive table")
    p_fpr.add_argument("--networks", required=True, help="stats CSV: name,nodes,arcs,avg_degree")
    p_fpr.add_argument("--alpha", type=float, default=0.05)
    p_fpr.add_argument("--beta", type=float, default=0.1)
    p_fpr.add_argument("--lmax", type=int, default=3)
    p_fpr.add_argument("--out", help="output CSV path (default stdout)")
    registry["theory:fpr-table"] = p_fpr
    p_fpr.set_defaults(func=cmd_theory_fpr)

    p_sim = theory_sub.add_parser("simulate", help="Monte Carlo vs closed forms")
    p_sim.add_argument("--M", type=int, required=True)
    p_sim.add_argument("--l", type=int, required=True)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--beta", type=float, default=0.1)
    p_sim.add_argument("--trials", type=float, default=1e5)
    p_sim.add_argument("--truth", default=NONCOLLIDER, choices=(NONCOLLIDER, COLLIDER))
    p_sim.add_argument("--rule", default="pc", choices=("pc", "cpc"))
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", help="output JSON path (default stdout)")
    registry["theory:simulate"] = p_sim
    p_sim.set_defaults(func=cmd_theory_simulate)

    return parser, registry


def _load_inputs(args):
    """Network, metadata, dataset, and node names for a run command."""
    net = None
    if args.network:
        net = parse_bif(Path(args.network).read_text(encoding="utf-8"))
    meta = Metadata.load_json(args.metadata) if args.metadata else Metadata()
    data = None
    if args.data:
        data = Dataset.read_csv(args.data)
    elif net is not None and args.ci == "g2":
        data = forward_sample(net, args.samples, np.random.default_rng(args.seed))
    if data is not None:
        names = data.columns
    elif net is not None:
        names = net.nodes
    else:
        raise ValueError("need --data or --network to define the variables")
    if meta.descriptions:
        meta.warn_if_partial(names)
    return net, meta, data, names


def _build_ci(args, net, data):
    spec = args.ci
    if spec == "g2":
        if data is None:
            raise ValueError("--ci g2 requires --data or a sampled --network")
        return lambda x, y, s: g2_test(data, x, y, s, args.threshold)
    if spec == "oracle":
        if net is None:
            raise ValueError("--ci oracle requires --network")
        return lambda x, y, s: oracle_test(net.dag, x, y, s)
    if spec.startswith("noisy:"):
        if net is None:
            raise ValueError("--ci noisy requires --network")
        alpha_s, _, beta_s = spec[len("noisy:"):].partition(",")
        noise = NoiseParams(alpha=float(alpha_s), beta=float(beta_s or alpha_s), rng_seed=args.seed)
        return lambda x, y, s: noisy_oracle_test(net.dag, x, y, s, noise)
    raise ValueError(f"unknown CI spec {spec!r}")


def _write_effective_config(args, outdir: Path) -> None:
    payload = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")
    }
    (outdir / "config.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")


def _write_graph_artifacts(outdir: Path, graph, names) -> None:
    (outdir / "graph.json").write_text(graph_to_json(graph, names))
    (outdir / "graph.dot").write_text(graph_to_dot(graph, names))
    (outdir / "graph.txt").write_text(graph_to_text(graph, names))


def cmd_discover(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    net, meta, data, names = _load_inputs(args)
    ci = _build_ci(args, net, data)
    backend = parse_backend_spec(args.expert, truth=net.dag if net else None)
    config = MosacdConfig(
        skeleton_variant=args.skeleton,
        ci_threshold=args.threshold,
        max_level=args.max_level,
        sepset_scope=args.sepset_scope,
        repeats=args.repeats,
        filter_positional_bias=not args.no_bias_filter,
        rng_seed=args.seed,
        vote_completion=args.step5,
        jobs=args.jobs,
    )
    logger = None
    if backend is not None:
        logger = TranscriptLogger(outdir / "transcripts.jsonl")
    try:
        result = run_mosacd(
            ci, len(names), names=names, meta=meta, backend=backend,
            config=config, logger=logger,
        )
    finally:
        if logger is not None:
            logger.close()
    _write_effective_config(args, outdir)
    _write_graph_artifacts(outdir, result.graph, names)
    (outdir / "sigma.json").write_text(result.skeleton.sepsets.to_json(names))
    (outdir / "report.json").write_text(json.dumps(result.report(), indent=2) + "\n")
    if result.seeding is not None:
        (outdir / "seeds.json").write_text(result.seeding.seeds.to_json(names))
    print(f"wrote {outdir}/graph.json ({len(result.graph.directed_edges())} directed, "
          f"{len(result.graph.undirected_edges())} undirected)")
    return EXIT_OK


def cmd_skeleton(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    net, meta, data, names = _load_inputs(args)
    ci = _build_ci(args, net, data)
    skeleton = skel_search(
        ci, len(names), variant=args.skeleton, threshold=args.threshold,
        max_level=args.max_level, sepset_scope=args.sepset_scope,
    )
    _write_effective_config(args, outdir)
    _write_graph_artifacts(outdir, skeleton.graph, names)
    (outdir / "sigma.json").write_text(skeleton.sepsets.to_json(names))
    print(f"wrote {outdir}/graph.json ({skeleton.graph.edge_count()} edges)")
    return EXIT_OK


def cmd_seed(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    net = parse_bif(Path(args.network).read_text(encoding="utf-8")) if args.network else None
    meta = Metadata.load_json(args.metadata) if args.metadata else Metadata()
    graph, names = graph_from_json(Path(args.skeleton_graph).read_text(encoding="utf-8"))
    sigma = SepsetRecord.from_json(Path(args.sigma).read_text(encoding="utf-8"), names)
    backend = parse_backend_spec(args.expert, truth=net.dag if net else None)
    if backend is None:
        raise ValueError("the seed command needs a real expert backend")
    config = SeedingConfig(
        repeats=args.repeats,
        filter_positional_bias=not args.no_bias_filter,
        jobs=args.jobs,
    )
    with TranscriptLogger(outdir / "transcripts.jsonl") as logger:
        result = run_seeding(graph, sigma, backend, names, meta, config, logger=logger)
    _write_effective_config(args, outdir)
    (outdir / "seeds.json").write_text(result.seeds.to_json(names))
    _write_graph_artifacts(outdir, result.pdag, names)
    print(f"accepted {len(result.seeds)} seeds; rejected {len(result.rejected)}; "
          f"abstained {result.counts()['abstain']}")
    return EXIT_OK


def cmd_sample(args) -> int:
    net = parse_bif(Path(args.network).read_text(encoding="utf-8"))
    data = forward_sample(net, args.samples, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_csv(out)
    print(f"wrote {out} ({data.n_rows} rows x {data.n_cols} columns)")
    return EXIT_OK


def _load_truth_dag(path: str):
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".bif"):
        net = parse_bif(text)
        return net.dag, net.nodes
    graph, names = graph_from_json(text)
    return graph.to_dag(), names


def cmd_eval(args) -> int:
    pred, pred_names = graph_from_json(Path(args.pred).read_text(encoding="utf-8"))
    truth, truth_names = _load_truth_dag(args.truth)
    if sorted(pred_names) != sorted(truth_names):
        raise DataFormatError("predicted and truth graphs name different variables")
    if pred_names != truth_names:
        remap = {pred_names.index(name): i for i, name in enumerate(truth_names)}
        aligned = Pdag(pred.node_count)
        for a, b in pred.undirected_edges():
            aligned.add_undirected(remap[a], remap[b])
        for a, b in pred.directed_edges():
            aligned.add_directed(remap[a], remap[b])
        pred = aligned
    report = orientation_f1(
        pred, truth, undirected_mode=args.undirected_mode, target=args.target
    )
    payload = json.dumps(report.__dict__, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_ablate(args) -> int:
    grid = []
    for token in args.grid.split(","):
        token = token.strip()
        grid.append(float(token) if "." in token else int(token))
    config = AblationConfig(
        vary=args.vary,
        grid=grid,
        trials=args.trials,
        n_nodes=args.nodes,
        edge_prob=args.edge_prob,
        alpha=args.alpha,
        beta=args.beta,
        abstain=args.abstain,
        total_seeds=args.total_seeds,
        skeleton_variant=args.skeleton,
        base_seed=args.seed,
    )
    rows = run_ablation(config)
    echo = {k: v for k, v in vars(config).items() if k != "grid"}
    echo["grid"] = args.grid
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(ablation_rows_to_csv(rows, config_echo=echo))
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def _parse_level_range(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(spec)]


def cmd_theory_ratios(args) -> int:
    rows = ratio_grid(args.M, _parse_level_range(args.l), args.alpha, args.beta)
    lines = ["M,ell,alpha,beta,r_pc,r_cpc,r_pc_approx,r_cpc_approx,above_one"]
    for row in rows:
        lines.append(
            f"{row['M']},{row['ell']},{row['alpha']},{row['beta']},"
            f"{row.get('r_pc', float('nan')):.6g},{row.get('r_cpc', float('nan')):.6g},"
            f"{row.get('r_pc_approx', float('nan')):.6g},"
            f"{row.get('r_cpc_approx', float('nan')):.6g},{row['above_one']}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_theory_fpr(args) -> int:
    stats = []
    with open(args.networks, encoding="utf-8") as fh:
        import csv as _csv

        for row in _csv.DictReader(fh):
            stats.append({"name": row["name"], "nodes": int(row["nodes"])})
    if not stats:
        raise DataFormatError(f"no network rows in {args.networks}")
    rows = expected_fpr_table(stats, ell_max=args.lmax, alpha=args.alpha, beta=args.beta)
    text = fpr_rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_theory_simulate(args) -> int:
    model = StylizedModel(M=args.M, ell=args.l, alpha=args.alpha, beta=args.beta)
    rng = np.random.default_rng(args.seed)
    tally = monte_carlo_stylized(model, args.truth, args.rule, int(args.trials), rng)
    probs = level_probabilities(level_counts(args.M, args.l, args.truth), args.alpha, args.beta)
    closed_key = "pc" if args.rule == "pc" else "cpc"
    payload = tally.summary()
    payload["closed_form"] = {
        "collider": getattr(probs, f"{closed_key}_collider"),
        "center_saved": getattr(probs, f"{closed_key}_center_saved"),
        "pr_first_hit": probs.pr_first_hit,
        "pr_decision": probs.pr_decision,
    }
    try:
        payload["closed_form"]["r_ratio"] = r_ratio(model, args.rule)
    except ValueError:
        payload["closed_form"]["r_ratio"] = None
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _merge_config_file(args, argv, parser, registry) -> int | None:
    """Overlay config-file values onto flags the user did not pass explicitly."""
    if not args.config:
        return None
    try:
        file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except _DATA_ERRORS as exc:
        print(f"error: cannot read config file: {exc}", file=sys.stderr)
        return EXIT_DATA
    key = args.command
    if key == "theory":
        key = f"theory:{args.theory_command}"
    actions = list(parser._actions) + list(registry.get(key, parser)._actions)
    explicit = set()
    for action in actions:
        for opt in action.option_strings:
            if opt in argv or any(tok.startswith(opt + "=") for tok in argv):
                explicit.add(action.dest)
    for name, value in file_values.items():
        if name not in explicit and hasattr(args, name):
            setattr(args, name, value)
    return None


def main(argv=None) -> int:
    parser, registry = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    failure = _merge_config_file(args, argv, parser, registry)
    if failure is not None:
        return failure

    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except PipelineError as exc:
        cause = exc.__cause__
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(cause, BackendError):
            return EXIT_BACKEND
        if isinstance(cause, _DATA_ERRORS):
            return EXIT_DATA
        if isinstance(cause, _INTERNAL_ERRORS):
            return EXIT_INTERNAL
        return EXIT_INTERNAL
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _INTERNAL_ERRORS as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
