"""Command-line entry point.

Subcommands: metrics, sample, train, predict, eval, sweep, gen-fixture,
convert. Exit codes: 0 success, 1 validation/usage error, 2 internal
error. All randomness derives from --seed; every output directory gets a
manifest carrying the config hash and seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import convert as convert_mod
from . import plots, synth
from .exceptions import MeguideError, ValidationError
from .gcn import load_checkpoint, save_checkpoint
from .graph import load_dataset, save_dataset
from .metrics import (
    EdgeSmoothnessCache,
    compute_metrics_report,
    connection_failure_distance,
    feature_smoothness_graph,
)
from .prediction import (
    aggregate_representations,
    build_test_set,
    predict,
    train_predictor,
)
from .samplers import (
    SamplerConfig,
    resolve_steps,
    sample_one,
    subgraph_from_record,
    subgraph_to_record,
)
from .training import TrainConfig, rho_sweep, train


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; our contract reserves 2 for
    # internal errors and uses 1 for anything the caller can fix
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _dict_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def _resolve_dataset(spec: str) -> Path:
    p = Path(spec)
    if p.is_dir():
        return p
    root = os.environ.get("MEGUIDE_DATA_DIR")
    if root:
        candidate = Path(root) / spec
        if candidate.is_dir():
            return candidate
    raise ValidationError(f"dataset directory not found: {spec}")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _train_pool_metrics(g, pool_cap: int, seed: int, threads: int = 1):
    lam_f = feature_smoothness_graph(g)
    pool = np.flatnonzero(g.train_mask)
    if pool.size == 0:
        pool = np.flatnonzero(g.labels >= 0)
    lam_d, used = connection_failure_distance(
        g, pool, pool_cap=pool_cap, rng=np.random.default_rng(seed), threads=threads
    )
    return lam_f, lam_d, used


# ---------------------------------------------------------------------------
# subcommands


def cmd_metrics(args) -> int:
    bundle = load_dataset(_resolve_dataset(args.dataset),
                          row_normalize=args.normalize_features)
    report = compute_metrics_report(
        bundle.graph,
        pool=args.pool,
        pool_cap=args.pool_cap,
        seed=args.seed,
        emit_edge_smoothness=args.emit_edge_smoothness,
        threads=args.threads,
    )
    payload = {"dataset": bundle.name, "provenance": bundle.provenance,
               "seed": args.seed}
    payload.update(report.to_dict())
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.figures and report.edge_smoothness is not None:
        values = list(report.edge_smoothness.values())
        fig = plots.render_smoothness_histogram(
            values, args.rho * report.lambda_f,
            Path(args.figures) / "edge_smoothness.png",
        )
        print(f"wrote {fig}", file=sys.stderr)
    return 0


def cmd_sample(args) -> int:
    bundle = load_dataset(_resolve_dataset(args.dataset),
                          row_normalize=args.normalize_features)
    g = bundle.graph
    cfg = SamplerConfig(
        kind=args.sampler,
        rho=args.rho,
        target_size=args.target_size,
        min_size=args.min_size,
        edge_mode=args.edge_mode,
        roots=args.roots,
        seed=args.seed,
    )
    lam_f = lam_d = 0.0
    cache = None
    if cfg.kind == "meguide":
        lam_f, lam_d, _ = _train_pool_metrics(g, args.pool_cap, args.seed,
                                              args.threads)
        cache = EdgeSmoothnessCache(g)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for k in range(1, args.count + 1):
        rng = np.random.default_rng(args.seed + k)
        sub = sample_one(g, cfg, rng, lambda_d=lam_d, lambda_f=lam_f, cache=cache)
        rec = subgraph_to_record(sub)
        rec["seed"] = args.seed + k
        _write_json(out / f"subgraph_{k - 1:04d}.json", rec)
        records.append(rec)
    manifest = {
        "dataset": bundle.name,
        "seed": args.seed,
        "count": args.count,
        "sampler": asdict(cfg),
        "config_hash": _dict_hash(asdict(cfg)),
        "lambda_f": lam_f,
        "lambda_d": lam_d,
        "expansion_steps": resolve_steps(cfg, lam_d) if cfg.kind == "meguide" else None,
        "roots": [r["root"] for r in records],
        "sizes": [len(r["nodes"]) for r in records],
        "warnings": [r["warning"] for r in records if r["warning"]],
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {args.count} subgraphs to {out}")
    return 0


def _load_train_config(args) -> TrainConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    cfg = TrainConfig.from_dict(data)
    if args.seed is not None:
        cfg = TrainConfig.from_dict({**data, "seed": args.seed})
    return cfg


def _write_history_csv(history, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "val_accuracy"])
        for it, loss, val in history:
            writer.writerow([
                it,
                "" if loss is None else f"{loss:.6f}",
                "" if val is None else f"{val:.6f}",
            ])


def cmd_train(args) -> int:
    bundle = load_dataset(_resolve_dataset(args.dataset),
                          row_normalize=args.normalize_features)
    cfg = _load_train_config(args)
    lam_f, lam_d, _ = _train_pool_metrics(
        bundle.graph, cfg.pool_cap, cfg.seed, args.threads
    )
    model, batch, report, history = train(bundle.graph, cfg,
                                          metrics=(lam_f, lam_d))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "run_report.json", report.to_dict())
    save_checkpoint(
        model,
        out / "checkpoint.bin",
        meta={"seed": cfg.seed, "config_hash": cfg.config_hash()},
    )
    batch_dir = out / "batch"
    batch_dir.mkdir(exist_ok=True)
    for k, sub in enumerate(batch):
        _write_json(batch_dir / f"subgraph_{k:04d}.json", subgraph_to_record(sub))
    _write_json(
        batch_dir / "manifest.json",
        {
            "dataset": bundle.name,
            "seed": cfg.seed,
            "config_hash": cfg.config_hash(),
            "count": len(batch),
            "sampler": asdict(cfg.sampler_config()),
            "lambda_f": report.lambda_f,
            "lambda_d": report.lambda_d,
            "expansion_steps": report.expansion_steps,
            "roots": [int(s.root) for s in batch],
            "sizes": [s.num_nodes for s in batch],
        },
    )
    _write_history_csv(history, out / "history.csv")
    fig = plots.render_training_curves(history, out / "figures" / "training_curves.png")
    _write_json(
        out / "manifest.json",
        {
            "seed": cfg.seed,
            "config_hash": cfg.config_hash(),
            "config": cfg.to_dict(),
            "files": [
                "run_report.json",
                "checkpoint.bin",
                "batch/",
                "history.csv",
                str(fig.relative_to(out)),
            ],
        },
    )
    print(
        f"test_accuracy={report.final_test_accuracy:.4f} "
        f"best_val={report.best_val_accuracy:.4f} "
        f"iterations={report.iterations_run} wall={report.wall_time_seconds:.1f}s"
    )
    return 0


def _load_batch_dir(batch_dir: Path):
    manifest_path = batch_dir / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"no manifest.json in {batch_dir}")
    manifest = json.loads(manifest_path.read_text())
    subs = []
    for k in range(manifest["count"]):
        rec = json.loads((batch_dir / f"subgraph_{k:04d}.json").read_text())
        subs.append(subgraph_from_record(rec))
    return subs, manifest


def cmd_predict(args) -> int:
    bundle = load_dataset(_resolve_dataset(args.dataset),
                          row_normalize=args.normalize_features)
    g = bundle.graph
    model, meta = load_checkpoint(args.checkpoint)
    batch_dir = Path(args.batch_manifest)
    if (batch_dir / "batch").is_dir():
        batch_dir = batch_dir / "batch"
    batch, manifest = _load_batch_dir(batch_dir)
    scfg = SamplerConfig(**manifest["sampler"])
    tset = build_test_set(
        g,
        batch,
        scfg,
        manifest["lambda_d"],
        manifest["lambda_f"],
        rng=np.random.default_rng(manifest["seed"] + manifest["count"] + 1),
    )
    agg = aggregate_representations(model, tset, g)
    train_nodes = np.flatnonzero(g.train_mask)
    train_rows = np.asarray([agg.node_index[int(n)] for n in train_nodes])
    head = train_predictor(
        agg.H_agg,
        g.labels[agg.nodes],
        train_rows,
        epochs=args.predictor_epochs,
    )
    labels_out, probs = predict(head, agg, agg.nodes)
    payload = {
        "dataset": bundle.name,
        "seed": manifest["seed"],
        "config_hash": manifest.get("config_hash", meta.get("config_hash", "")),
        "extras_count": tset.extras_count,
        "nodes": {
            str(int(n)): {
                "label": int(lab),
                "probs": [round(float(p), 6) for p in row],
            }
            for n, lab, row in zip(agg.nodes.tolist(), labels_out.tolist(), probs)
        },
    }
    _write_json(Path(args.out), payload)
    print(f"wrote predictions for {len(payload['nodes'])} nodes to {args.out}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_dataset(_resolve_dataset(args.dataset))
    g = bundle.graph
    payload = json.loads(Path(args.predictions).read_text())
    nodes = payload["nodes"]
    test_nodes = np.flatnonzero(g.test_mask & (g.labels >= 0))
    hits = total = 0
    for n in test_nodes.tolist():
        rec = nodes.get(str(n))
        if rec is None:
            raise ValidationError(f"test node {n} missing from predictions")
        hits += int(rec["label"] == int(g.labels[n]))
        total += 1
    acc = hits / total if total else 0.0
    print(json.dumps({"test_accuracy": round(acc, 6), "num_test_nodes": total}))
    return 0


def cmd_sweep(args) -> int:
    bundle = load_dataset(_resolve_dataset(args.dataset),
                          row_normalize=args.normalize_features)
    cfg = _load_train_config(args)
    rhos = [float(x) for x in args.rhos.split(",") if x.strip()]
    results = rho_sweep(bundle.graph, rhos, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "test_accuracy", "best_val_accuracy",
                         "iterations", "wall_time_seconds"])
        for rho, rep in results:
            writer.writerow([
                rho,
                f"{rep.final_test_accuracy:.6f}",
                f"{rep.best_val_accuracy:.6f}",
                rep.iterations_run,
                f"{rep.wall_time_seconds:.3f}",
            ])
    for rho, rep in results:
        _write_json(out / f"report_rho{rho:g}.json", rep.to_dict())
    fig = plots.render_sweep(
        [r for r, _ in results],
        [rep.final_test_accuracy for _, rep in results],
        out / "figures" / "sweep.png",
    )
    _write_json(
        out / "manifest.json",
        {
            "seed": cfg.seed,
            "config_hash": cfg.config_hash(),
            "rhos": rhos,
            "files": ["sweep.csv", str(fig.relative_to(out))]
            + [f"report_rho{r:g}.json" for r in rhos],
        },
    )
    best = max(results, key=lambda t: t[1].final_test_accuracy)
    print(f"best rho={best[0]:g} test_accuracy={best[1].final_test_accuracy:.4f}")
    return 0


def cmd_gen_fixture(args) -> int:
    if args.kind == "two-cluster":
        bundle = synth.two_cluster_bundle(
            synth.TwoClusterParams(
                n_nodes=args.nodes, gap=args.gap, noise=args.noise, seed=args.seed
            )
        )
    elif args.kind == "citation":
        bundle = synth.citation_bundle(
            synth.CitationParams(n_nodes=args.nodes, seed=args.seed)
        )
    elif args.kind == "path":
        bundle = synth.path_bundle(args.nodes)
    else:
        raise ValidationError(f"unknown fixture kind {args.kind!r}")
    out = Path(args.out)
    save_dataset(bundle, out, cache=args.cache)
    _write_json(
        out / "meta.json",
        {
            "name": bundle.name,
            "provenance": bundle.provenance,
            "seed": args.seed,
            "num_nodes": bundle.graph.num_nodes,
            "num_edges": bundle.graph.num_edges,
            "num_classes": bundle.graph.num_classes,
            "feature_dim": bundle.graph.feature_dim,
        },
    )
    print(f"wrote fixture {bundle.name} to {out}")
    return 0


def cmd_convert(args) -> int:
    bundle = convert_mod.convert_planetoid(
        args.raw, args.name, args.out, cache=args.cache
    )
    _write_json(
        Path(args.out) / "meta.json",
        {
            "name": bundle.name,
            "provenance": bundle.provenance,
            "num_nodes": bundle.graph.num_nodes,
            "num_edges": bundle.graph.num_edges,
            "num_classes": bundle.graph.num_classes,
            "feature_dim": bundle.graph.feature_dim,
        },
    )
    g = bundle.graph
    print(
        f"converted {args.name}: {g.num_nodes} nodes, {g.num_edges} edges, "
        f"{g.num_classes} classes, d={g.feature_dim}"
    )
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="meguide", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("metrics", help="compute the two sampling metrics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool", choices=["train", "all-labeled"], default="train")
    p.add_argument("--pool-cap", type=int, default=2000)
    p.add_argument("--emit-edge-smoothness", action="store_true")
    p.add_argument("--normalize-features", action="store_true")
    p.add_argument("--rho", type=float, default=0.3,
                   help="threshold multiplier drawn on the histogram figure")
    p.add_argument("--out")
    p.add_argument("--figures")
    common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sample", help="write sampled subgraphs as JSON")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sampler", choices=["meguide", "random", "bfs"],
                   default="meguide")
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--target-size", type=int, default=None)
    p.add_argument("--min-size", type=int, default=2)
    p.add_argument("--edge-mode", choices=["expansion-edges", "induced-closure"],
                   default="expansion-edges")
    p.add_argument("--roots", choices=["train", "all"], default="train")
    p.add_argument("--all-roots", dest="roots", action="store_const", const="all")
    p.add_argument("--pool-cap", type=int, default=2000)
    p.add_argument("--normalize-features", action="store_true")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train a GCN on subgraph mini-batches")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--normalize-features", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="aggregation-based prediction")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--batch-manifest", required=True,
                   help="directory with subgraph JSONs and manifest.json")
    p.add_argument("--normalize-features", action="store_true")
    p.add_argument("--predictor-epochs", type=int, default=300)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against the test mask")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train once per rho value")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config")
    p.add_argument("--normalize-features", action="store_true")
    p.add_argument("--rhos", required=True, help="comma-separated rho values")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-fixture", help="write a synthetic dataset")
    p.add_argument("kind", choices=["two-cluster", "citation", "path"])
    p.add_argument("--nodes", type=int, default=200)
    p.add_argument("--gap", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--cache", action="store_true")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_gen_fixture)

    p = sub.add_parser("convert", help="convert raw planetoid files")
    p.add_argument("--raw", required=True)
    p.add_argument("--name", required=True, help="dataset name, e.g. cora")
    p.add_argument("--cache", action="store_true")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MeguideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
