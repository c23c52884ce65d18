"""Experiment command line: train / sweep / limit / bound / probe / distance.

Every command is deterministic for a fixed seed: running it twice with
the same flags produces byte-identical output files. Exit codes: 0
success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_norm_probe
from .data import (DataFormatError, Dataset, load_content_cites,
                   load_pubmed_tab, load_split_files, row_normalize,
                   standard_split)
from .graph import Graph, GraphConstructionError, build_graph, is_connected, \
    read_edge_list
from .models import (ModelConfig, NumericTrainingError, ResidualGCN,
                     ResidualKind, save_checkpoint, train)
from .spectral import (build_limit_report, degree_representation_distance,
                       feature_representation_distance, lazy_limit_bound,
                       eigen_extremes, StationaryDistribution)
from .sparse import lazy_walk_matrix, normalized_adjacency
from .validation import check_features

DATA_DIR_ENV = "GRAPHRES_DATA"

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataResolutionError(RuntimeError):
    pass


def _data_dir(args) -> Path:
    if args.data_dir:
        return Path(args.data_dir)
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def _find(base: Path, candidates) -> Path | None:
    for rel in candidates:
        p = base / rel
        if p.exists():
            return p
    return None


def resolve_dataset(args) -> Dataset:
    """Load and split the dataset named by --dataset."""
    name = args.dataset
    base = _data_dir(args)
    if name.startswith("edgelist:"):
        raise DataResolutionError(
            f"command {args.command!r} needs a full dataset, not an edge list")
    if name in ("cora", "citeseer"):
        content = _find(base, [f"{name}/{name}.content", f"{name}.content"])
        cites = _find(base, [f"{name}/{name}.cites", f"{name}.cites"])
        if content is None or cites is None:
            raise DataResolutionError(
                f"dataset {name!r} not found under {base} "
                f"(need {name}.content and {name}.cites)")
        data = load_content_cites(content, cites)
    elif name == "pubmed":
        node = _find(base, ["pubmed/Pubmed-Diabetes.NODE.paper.tab",
                            "Pubmed-Diabetes.NODE.paper.tab"])
        cites = _find(base, ["pubmed/Pubmed-Diabetes.DIRECTED.cites.tab",
                             "Pubmed-Diabetes.DIRECTED.cites.tab"])
        if node is not None and cites is not None:
            data = load_pubmed_tab(node, cites)
        else:
            content = _find(base, ["pubmed/pubmed.content", "pubmed.content"])
            cites = _find(base, ["pubmed/pubmed.cites", "pubmed.cites"])
            if content is None or cites is None:
                raise DataResolutionError(
                    f"dataset 'pubmed' not found under {base}")
            data = load_content_cites(content, cites)
    else:
        content = _find(base, [f"{name}/{name}.content", f"{name}.content"])
        cites = _find(base, [f"{name}/{name}.cites", f"{name}.cites"])
        if content is None or cites is None:
            raise DataResolutionError(f"unknown dataset {name!r}")
        data = load_content_cites(content, cites)

    data.features = row_normalize(data.features)
    if args.split_files:
        tr, va, te = args.split_files
        return load_split_files(data, tr, va, te)
    return standard_split(data, args.train_per_class, args.val_count,
                          args.test_count, seed=args.split_seed)


def resolve_graph(args) -> Graph:
    """Graph for structural commands: named dataset or edgelist:<path>."""
    if args.dataset.startswith("edgelist:"):
        path = args.dataset.split(":", 1)[1]
        if not Path(path).exists():
            raise DataResolutionError(f"edge list {path!r} does not exist")
        g, _ = read_edge_list(path)
        return g
    return resolve_dataset(args).graph


def _config_from(args, seed=None, layers=None, residual=None) -> ModelConfig:
    return ModelConfig(
        layers=layers if layers is not None else args.layers,
        hidden=args.hidden,
        residual=ResidualKind.parse(residual if residual is not None
                                    else args.residual.split(",")[0]),
        bias=args.bias, dropout=args.dropout, lr=args.lr,
        weight_decay=args.weight_decay, epochs=args.epochs,
        seed=seed if seed is not None else args.seed,
        patience=args.patience, dropout_residual=args.dropout_residual,
        decay_all=args.decay_all,
        probe_every=getattr(args, "probe_every", 0))


def _write_text(path: str | None, text: str):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _require_format(args, *allowed: str):
    fmt = args.format or allowed[0]
    if fmt not in allowed:
        raise UsageError(
            f"command {args.command!r} emits {'/'.join(allowed)}, "
            f"not {fmt!r}")
    return fmt


def cmd_train(args) -> int:
    fmt = _require_format(args, "json", "csv")
    data = resolve_dataset(args)
    config = _config_from(args)
    a_hat = normalized_adjacency(data.graph)
    model = ResidualGCN(config, data.features.shape[1], data.n_classes)
    report = train(config, data, a_hat, model=model)
    if fmt == "csv":
        rows = [[config.layers, config.residual.value, config.seed, r.epoch,
                 repr(r.loss), repr(r.train_acc), repr(r.val_acc),
                 repr(r.test_acc)] for r in report.records]
        _write_csv(args.out, SWEEP_HEADER, rows)
        return 0
    ckpt_path = None
    if args.out:
        ckpt_path = str(Path(args.out).with_suffix("")) + ".ckpt.json"
        save_checkpoint(ckpt_path, model)
    payload = {
        "dataset": args.dataset,
        "config": config.to_json_dict(),
        "checkpoint": ckpt_path,
        **report.to_json_dict(),
    }
    _write_text(args.out, _json_dumps(payload))
    return 0


SWEEP_HEADER = ["depth", "residual", "seed", "epoch", "loss", "train_acc",
                "val_acc", "test_acc"]


def _parse_int_list(text: str, what: str):
    try:
        values = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ValueError(f"{what} must be a comma-separated integer list")
    return values


def cmd_sweep(args) -> int:
    _require_format(args, "csv")
    depths = _parse_int_list(args.depths, "--depths")
    if not depths:
        raise UsageError("--depths must name at least one depth")
    seeds = _parse_int_list(args.seeds, "--seeds") if args.seeds \
        else [args.seed]
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    residuals = [r.strip() for r in args.residual.split(",") if r.strip()]
    if not residuals:
        raise UsageError("--residual must name at least one residual kind")
    data = resolve_dataset(args)
    a_hat = normalized_adjacency(data.graph)
    rows = []
    for depth in depths:
        for residual in residuals:
            for seed in seeds:
                config = _config_from(args, seed=seed, layers=depth,
                                      residual=residual)
                report = train(config, data, a_hat)
                for r in report.records:
                    rows.append([depth, residual, seed, r.epoch, repr(r.loss),
                                 repr(r.train_acc), repr(r.val_acc),
                                 repr(r.test_acc)])
    _write_csv(args.out, SWEEP_HEADER, rows)
    return 0


def _write_csv(path: str | None, header, rows):
    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            dump(fh)
    else:
        dump(sys.stdout)


def _largest_component(g: Graph) -> Graph:
    adj = g.neighbors()
    comp = np.full(g.n, -1, dtype=np.int64)
    current = 0
    for start in range(g.n):
        if comp[start] != -1:
            continue
        stack = [start]
        comp[start] = current
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if comp[v] == -1:
                    comp[v] = current
                    stack.append(v)
        current += 1
    sizes = np.bincount(comp)
    keep = np.flatnonzero(comp == sizes.argmax())
    remap = {int(old): new for new, old in enumerate(keep)}
    edges = [(remap[i], remap[j]) for i, j in g.edges
             if i in remap and j in remap]
    return build_graph(len(keep), edges)


def _limit_payload(args, measure_empirical: bool) -> dict:
    g = resolve_graph(args)
    restricted = False
    if args.largest_component and not is_connected(g):
        g = _largest_component(g)
        restricted = True
    operator = args.operator.replace("-", "_")
    report = build_limit_report(
        g, operator, epsilon=args.epsilon, self_loops=args.self_loops,
        max_iter=args.max_iter, measure_empirical=measure_empirical)
    payload = report.to_json_dict()
    # companion bound for the half-lazy chain on the same graph
    lazy_spectrum = eigen_extremes(lazy_walk_matrix(normalized_adjacency(g)))
    lazy_bound = lazy_limit_bound(
        lazy_spectrum, StationaryDistribution(pi=np.full(g.n, 1.0 / g.n)),
        args.epsilon)
    payload["lazy_bound_depth"] = "inf" if math.isinf(lazy_bound) \
        else int(lazy_bound)
    payload["largest_component_only"] = restricted
    return payload


def cmd_limit(args) -> int:
    _require_format(args, "json")
    _write_text(args.out, _json_dumps(_limit_payload(args, True)))
    return 0


def cmd_bound(args) -> int:
    _require_format(args, "json")
    _write_text(args.out, _json_dumps(_limit_payload(args, False)))
    return 0


PROBE_HEADER = ["epoch", "layer", "norm", "ratio", "delta_hat"]


def _identity_chain_probe(depth: int) -> list[list]:
    """Debug chain of identity adds; every ratio is exactly 1."""
    x = Tensor(np.ones((4, 3)), requires_grad=True)
    zero = Tensor(np.zeros((4, 3)))
    h = x
    inputs = [h]
    for _ in range(depth - 1):
        h = ad.add(h, zero)
        inputs.append(h)
    loss = ad.softmax_cross_entropy(
        h, np.eye(3)[[0, 1, 2, 0]], np.arange(4))
    ad.backward(loss)
    probe = grad_norm_probe(inputs)
    rows = []
    for k, norm in enumerate(probe.norms):
        ratio = probe.ratios[k - 1] if k >= 1 else None
        rows.append([0, k, repr(norm),
                     "" if ratio is None else repr(ratio),
                     "" if probe.delta_hat is None else repr(probe.delta_hat)])
    return rows


def cmd_probe(args) -> int:
    _require_format(args, "csv")
    if args.identity_chain:
        rows = _identity_chain_probe(args.layers)
        _write_csv(args.out, PROBE_HEADER, rows)
        return 0
    data = resolve_dataset(args)
    config = _config_from(args)
    if config.probe_every <= 0:
        config = ModelConfig(**{**config.to_json_dict(), "probe_every": 10})
    a_hat = normalized_adjacency(data.graph)
    report = train(config, data, a_hat)
    rows = []
    deltas = []
    for epoch, probe in report.probes:
        norms = probe["norms"]
        ratios = probe["ratios"]
        delta = probe["delta_hat"]
        if delta is not None:
            deltas.append(delta)
        for k, norm in enumerate(norms):
            ratio = ratios[k - 1] if k >= 1 else None
            rows.append([epoch, k, repr(norm),
                         "" if ratio is None else repr(ratio),
                         "" if delta is None else repr(delta)])
    _write_csv(args.out, PROBE_HEADER, rows)
    summary = {
        "residual": config.residual.value,
        "layers": config.layers,
        "seed": config.seed,
        "samples": len(report.probes),
        "median_delta_hat": float(np.median(deltas)) if deltas else None,
        "max_delta_hat": max(deltas) if deltas else None,
    }
    if args.out:
        Path(str(args.out) + ".summary.json").write_text(
            _json_dumps(summary), encoding="utf-8")
    else:
        sys.stdout.write(_json_dumps(summary))
    return 0


DISTANCE_HEADER = ["i", "j", "degree_distance", "feature_distance"]


def cmd_distance(args) -> int:
    _require_format(args, "csv")
    if args.dataset.startswith("edgelist:"):
        g = resolve_graph(args)
        features = np.eye(g.n)
    else:
        data = resolve_dataset(args)
        g = data.graph
        features = check_features(data.features)
    if g.edge_count == 0:
        raise DataResolutionError("distance diagnostics need at least one edge")
    a_hat = normalized_adjacency(g)
    d_x = features.shape[1]
    rng = np.random.default_rng(args.seed)
    n_pairs = min(args.pairs, g.n * (g.n - 1) // 2)
    if args.all_pairs:
        pairs = [(i, j) for i in range(g.n) for j in range(i + 1, g.n)]
    else:
        pairs = set()
        while len(pairs) < n_pairs:
            i, j = rng.integers(0, g.n, size=2)
            if i == j:
                continue
            pairs.add((min(int(i), int(j)), max(int(i), int(j))))
        pairs = sorted(pairs)
    rows = []
    for i, j in pairs:
        rows.append([i, j,
                     repr(degree_representation_distance(g, i, j, d_x)),
                     repr(feature_representation_distance(a_hat, features,
                                                          i, j))])
    _write_csv(args.out, DISTANCE_HEADER, rows)
    hist = np.bincount(g.degree)
    hist_rows = [[deg, int(count)] for deg, count in enumerate(hist) if count]
    hist_path = str(args.out) + ".degree_hist.csv" if args.out else None
    _write_csv(hist_path, ["degree", "count"], hist_rows)
    return 0


class UsageError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphres",
        description="Graph residual network training and propagation-depth "
                    "analysis on citation networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_flags(p):
        p.add_argument("--dataset", required=True,
                       help="cora | citeseer | pubmed | <name> | "
                            "edgelist:<path>")
        p.add_argument("--data-dir", default=None,
                       help=f"dataset root (default: ${DATA_DIR_ENV} or ./data)")
        p.add_argument("--train-per-class", type=int, default=20,
                       help="training nodes per class (default 20)")
        p.add_argument("--val-count", type=int, default=500,
                       help="validation nodes (default 500)")
        p.add_argument("--test-count", type=int, default=1000,
                       help="test nodes (default 1000)")
        p.add_argument("--split-seed", type=int, default=None,
                       help="permute nodes before splitting (default: "
                            "index order)")
        p.add_argument("--split-files", nargs=3, default=None,
                       metavar=("TRAIN", "VAL", "TEST"),
                       help="explicit index files, one node index per line")

    def add_model_flags(p):
        p.add_argument("--layers", type=int, default=2,
                       help="hidden + output layer count (default 2)")
        p.add_argument("--residual", default="none",
                       help="none | naive | graph-naive | raw | graph-raw | "
                            "lazy-naive (default none)")
        p.add_argument("--bias", action="store_true", default=False,
                       help="enable the layer bias term (default off)")
        p.add_argument("--hidden", type=int, default=16,
                       help="hidden width (default 16)")
        p.add_argument("--dropout", type=float, default=0.5,
                       help="dropout rate (default 0.5)")
        p.add_argument("--lr", type=float, default=0.01,
                       help="Adam step size (default 0.01)")
        p.add_argument("--weight-decay", type=float, default=5e-4,
                       help="L2 coefficient on layer-1 weights (default 5e-4)")
        p.add_argument("--epochs", type=int, default=200,
                       help="training epochs (default 200)")
        p.add_argument("--patience", type=int, default=10,
                       help="early-stopping patience on validation loss, "
                            "0 disables (default 10)")
        p.add_argument("--seed", type=int, default=0,
                       help="master seed (default 0)")
        p.add_argument("--dropout-residual", action="store_true",
                       default=False,
                       help="apply dropout to the residual branch too")
        p.add_argument("--decay-all", action="store_true", default=False,
                       help="apply weight decay to every parameter, not "
                            "just layer-1 weights")

    def add_out_flags(p):
        p.add_argument("--out", default=None,
                       help="output file (default: stdout)")
        p.add_argument("--format", choices=["csv", "json"], default=None,
                       help="output format (train: json or csv; other "
                            "commands are fixed)")

    p_train = sub.add_parser("train", help="one training run -> JSON report")
    add_data_flags(p_train)
    add_model_flags(p_train)
    add_out_flags(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_sweep = sub.add_parser("sweep",
                             help="depth x residual x seed grid -> CSV curves")
    add_data_flags(p_sweep)
    add_model_flags(p_sweep)
    add_out_flags(p_sweep)
    p_sweep.add_argument("--depths", required=True,
                         help="comma-separated depth list, e.g. 1,2,3")
    p_sweep.add_argument("--seeds", default=None,
                         help="comma-separated seed list (default: --seed)")
    p_sweep.set_defaults(fn=cmd_sweep)

    def add_spectral_flags(p):
        p.add_argument("--epsilon", type=float, default=1e-4,
                       help="convergence tolerance (default 1e-4)")
        p.add_argument("--operator", default="normalized",
                       choices=["normalized", "random-walk", "lazy"],
                       help="propagation operator (default normalized)")
        p.add_argument("--self-loops", action=argparse.BooleanOptionalAction,
                       default=True,
                       help="random-walk self loops (default on)")
        p.add_argument("--max-iter", type=int, default=10000,
                       help="empirical iteration cap (default 10000)")
        p.add_argument("--largest-component", action="store_true",
                       default=False,
                       help="analyze the largest connected component")

    p_limit = sub.add_parser("limit",
                             help="spectrum, bounds and measured depth -> JSON")
    add_data_flags(p_limit)
    add_spectral_flags(p_limit)
    add_out_flags(p_limit)
    p_limit.set_defaults(fn=cmd_limit)

    p_bound = sub.add_parser("bound",
                             help="closed-form bounds only (no iteration)")
    add_data_flags(p_bound)
    add_spectral_flags(p_bound)
    add_out_flags(p_bound)
    p_bound.set_defaults(fn=cmd_bound)

    p_probe = sub.add_parser("probe",
                             help="gradient-norm ratios per layer -> CSV")
    add_data_flags(p_probe)
    add_model_flags(p_probe)
    add_out_flags(p_probe)
    p_probe.add_argument("--probe-every", type=int, default=10,
                         help="sample every P epochs (default 10)")
    p_probe.add_argument("--identity-chain", action="store_true",
                         default=False,
                         help="probe a debug identity chain instead of "
                              "training")
    p_probe.set_defaults(fn=cmd_probe)

    p_dist = sub.add_parser("distance",
                            help="degree/feature separation diagnostics -> CSV")
    add_data_flags(p_dist)
    add_out_flags(p_dist)
    p_dist.add_argument("--pairs", type=int, default=1000,
                        help="sampled node pairs (default 1000)")
    p_dist.add_argument("--all-pairs", action="store_true", default=False,
                        help="enumerate every pair instead of sampling")
    p_dist.add_argument("--seed", type=int, default=0,
                        help="pair-sampling seed (default 0)")
    p_dist.set_defaults(fn=cmd_distance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with code 2
    except (DataResolutionError, DataFormatError, GraphConstructionError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(parser.format_usage(), end="", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericTrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.last_probe is not None:
            print("last gradient-norm probe:", file=sys.stderr)
            print(json.dumps(exc.last_probe, indent=2), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
