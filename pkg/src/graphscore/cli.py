"""Command-line pipeline driver.

Subcommands: ``score`` (run a scoring method over a dataset manifest),
``eval`` (AUROC/FPR95 reports from score files), ``synth`` (write a
synthetic dataset), and ``cluster-prompts`` (reduce prompt pools to
prototype files). Every subcommand accepts ``--config <json>`` plus
long-form flag overrides; flags win. The only environment variable read is
GRAPHSCORE_LOG (log level).
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import metrics, store, synth
from .baselines import BaselineConfig, cosine_scores, manifold_score
from .graph import GraphConfig, build_adjacency
from .prompts import (
    cluster_prompts,
    load_pooled_matrix,
    load_prompt_pools,
    load_prototypes,
    mean_prototypes,
    save_prototypes,
)
from .propagation import PropagationConfig, run_gsp
from .store import l2_normalize, load_labels, load_matrix

log = logging.getLogger("graphscore")

METHODS = ("gsp", "cosine", "manifold", "score_prop_only", "gsp_no_cluster", "gsp_no_neg")
_CLUSTERED = frozenset({"gsp", "gsp_no_neg"})
_SELF_TRAIN = frozenset({"gsp", "gsp_no_cluster"})


@dataclass(frozen=True)
class RunConfig:
    manifest: str
    method: str = "gsp"
    k: int = 10
    clusters: int = 3
    alpha: float = 0.5
    iterations: int = 5
    m_percent: float = 5.0
    tau: float = 1.0
    seed: int = 0
    out: str = "runs"

    def __post_init__(self):
        if self.method not in METHODS + ("all",):
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS + ('all',)}")

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest, "method": self.method, "k": self.k,
            "clusters": self.clusters, "alpha": self.alpha,
            "iterations": self.iterations, "m_percent": self.m_percent,
            "tau": self.tau, "seed": self.seed, "out": self.out,
        }


@dataclass
class DatasetBundle:
    unlabeled: object
    labeled: object
    labels: object
    pool: object
    prototypes: object
    flags: object
    c_in: int
    class_names: tuple


def load_dataset(manifest_path) -> DatasetBundle:
    """Load and normalize everything a manifest references."""
    manifest = store.load_manifest(manifest_path)
    unlabeled = l2_normalize(load_matrix(manifest.unlabeled))
    labeled = labels = None
    if manifest.labeled is not None:
        labeled = l2_normalize(load_matrix(manifest.labeled))
        labels = load_labels(manifest.labels, labeled, manifest.c_in)
    pool = prototypes = None
    if manifest.prompt_pools is not None:
        pool = load_prompt_pools(manifest.prompt_pools)
    elif manifest.pool_matrix is not None:
        pool = load_pooled_matrix(manifest.pool_matrix, manifest.pool_boundaries)
    else:
        prototypes = load_prototypes(manifest.prototypes, manifest.prototype_classes)
    flags = store.load_flags(manifest.flags) if manifest.flags is not None else None
    if pool is not None and pool.n_classes != manifest.c_in:
        raise ValueError(f"prompt pool has {pool.n_classes} classes, manifest says {manifest.c_in}")
    return DatasetBundle(unlabeled=unlabeled, labeled=labeled, labels=labels,
                         pool=pool, prototypes=prototypes, flags=flags,
                         c_in=manifest.c_in, class_names=manifest.class_names)


def resolve_prototypes(bundle: DatasetBundle, method: str, clusters: int, seed: int):
    """Prototypes for a method: clustered or averaged pools, or as supplied."""
    if bundle.pool is None:
        return bundle.prototypes
    if method in _CLUSTERED and clusters > 1:
        return cluster_prompts(bundle.pool, clusters, seed)
    return mean_prototypes(bundle.pool)


def compute_scores(method: str, prototypes, labeled, unlabeled, cfg: RunConfig):
    """Dispatch one scoring method; returns (scores, diagnostics)."""
    if method == "cosine":
        t0 = time.perf_counter()
        scores = cosine_scores(unlabeled, prototypes, BaselineConfig(temperature=cfg.tau))
        diag = {"method": method, "timing_s": {"total": time.perf_counter() - t0}}
        return scores, diag
    if method == "manifold":
        t0 = time.perf_counter()
        adj = build_adjacency(prototypes, labeled, unlabeled, k=cfg.k)
        t1 = time.perf_counter()
        scores = manifold_score(adj)
        t2 = time.perf_counter()
        diag = {
            "method": method,
            "timing_s": {"build_graph": t1 - t0, "dijkstra": t2 - t1, "total": t2 - t0},
        }
        return scores, diag
    prop_cfg = PropagationConfig(alpha=cfg.alpha, iterations=cfg.iterations,
                                 m_percent=cfg.m_percent)
    scores, diag = run_gsp(prototypes, labeled, unlabeled, prop_cfg,
                           GraphConfig(k=cfg.k), self_train=method in _SELF_TRAIN)
    diag["method"] = method
    return scores, diag


def cmd_score(cfg: RunConfig) -> int:
    bundle = load_dataset(cfg.manifest)
    methods = METHODS if cfg.method == "all" else (cfg.method,)
    results = []
    for method in methods:
        prototypes = resolve_prototypes(bundle, method, cfg.clusters, cfg.seed)
        scores, diag = compute_scores(method, prototypes, bundle.labeled,
                                      bundle.unlabeled, cfg)
        diag["run_config"] = cfg.to_dict()
        results.append((method, scores, diag))
        log.info("scored method=%s n=%d", method, len(scores))

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for method, scores, diag in results:
        store.save_vector(scores, out / f"scores_{method}.npy")
        with open(out / f"diagnostics_{method}.json", "w", encoding="utf-8") as f:
            json.dump(diag, f, indent=2)
            f.write("\n")
    if cfg.method == "all" and bundle.flags is not None:
        rows = []
        for method, scores, _ in results:
            report = metrics.evaluate(scores, bundle.flags, method, cfg.to_dict())
            rows.append((method, report.auroc, report.fpr95))
        _write_report_csv(rows, out / "ablation.csv")
    return 0


def _write_report_csv(rows, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("method,auroc,fpr95\n")
        for method, auc, fpr in rows:
            f.write(f"{method},{auc:.6f},{fpr:.6f}\n")


def cmd_eval(scores_paths, flags_path, out_dir, names=None) -> int:
    flags = store.load_flags(flags_path)
    names = names or [Path(p).stem for p in scores_paths]
    if len(names) != len(scores_paths):
        raise ValueError("need one name per scores file")
    reports = []
    for name, path in zip(names, scores_paths):
        scores = store.load_vector(path)
        if scores.size != flags.size:
            raise ValueError(
                f"{path}: {scores.size} scores but {flags.size} flags"
            )
        reports.append(metrics.evaluate(scores, flags, method=name))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump([r.to_dict() for r in reports], f, indent=2)
        f.write("\n")
    _write_report_csv([(r.method, r.auroc, r.fpr95) for r in reports], out / "report.csv")
    for r in reports:
        print(f"{r.method}: auroc={r.auroc:.4f} fpr95={r.fpr95:.4f}")
    return 0


def _load_json(path, what):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}"
            ) from exc


def cmd_synth(spec_path, out_dir) -> int:
    doc = _load_json(spec_path, "synth spec")
    preset = doc.pop("preset", None)
    if preset is not None:
        factories = {
            "blob_benchmark": synth.blob_benchmark_spec,
            "bridge_benchmark": synth.bridge_benchmark_spec,
        }
        if preset not in factories:
            raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(factories)}")
        base = factories[preset](seed=int(doc.pop("seed", 0)))
        spec = synth.SynthSpec(**{**base.__dict__, **doc})
    else:
        if "id_counts" in doc:
            doc["id_counts"] = tuple(doc["id_counts"])
        spec = synth.SynthSpec(**doc)
    data = synth.generate(spec)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_prototypes(data.prototypes, out / "prototypes.npy", out / "prototype_classes.json")
    store.save_matrix(data.unlabeled, out / "unlabeled.npy")
    store.save_flags(data.is_id, out / "flags.csv")
    manifest = {
        "unlabeled": "unlabeled.npy",
        "prototypes": "prototypes.npy",
        "prototype_classes": "prototype_classes.json",
        "flags": "flags.csv",
        "C_in": spec.n_classes,
        "class_names": [f"class_{c}" for c in range(spec.n_classes)],
    }
    if data.labeled is not None:
        store.save_matrix(data.labeled, out / "labeled.npy")
        store.save_labels(data.labels, out / "labels.csv")
        manifest["labeled"] = "labeled.npy"
        manifest["labels"] = "labels.csv"
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"wrote synthetic dataset to {out}")
    return 0


def cmd_cluster_prompts(pool_paths, clusters, seed, out_dir) -> int:
    if any(n_c < 1 for n_c in clusters):
        raise ValueError(f"cluster counts must be >= 1, got {clusters}")
    pool = load_prompt_pools(pool_paths)
    results = [
        (n_c, cluster_prompts(pool, n_c, seed) if n_c > 1 else mean_prototypes(pool))
        for n_c in clusters
    ]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    many = len(clusters) > 1
    for n_c, protos in results:
        suffix = f"_nc{n_c}" if many else ""
        save_prototypes(protos, out / f"prototypes{suffix}.npy",
                        out / f"prototype_classes{suffix}.json")
    return 0


def _merged(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphscore",
                                     description="Graph-based OOD scoring over embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score a dataset manifest")
    p_score.add_argument("--config", help="JSON run configuration")
    p_score.add_argument("--manifest", help="dataset manifest path")
    p_score.add_argument("--method", choices=METHODS + ("all",))
    p_score.add_argument("--k", type=int, help="KNN neighbor count")
    p_score.add_argument("--clusters", type=int, help="prototypes per class")
    p_score.add_argument("--alpha", type=float)
    p_score.add_argument("--iters", type=int, dest="iterations")
    p_score.add_argument("--m-percent", type=float, dest="m_percent")
    p_score.add_argument("--tau", type=float)
    p_score.add_argument("--seed", type=int)
    p_score.add_argument("--out", help="output directory")

    p_eval = sub.add_parser("eval", help="AUROC/FPR95 report from score files")
    p_eval.add_argument("--config", help="JSON run configuration")
    p_eval.add_argument("--scores", nargs="+", help="1-D NPY score files")
    p_eval.add_argument("--flags", help="ground-truth flags CSV")
    p_eval.add_argument("--names", nargs="+", help="method name per scores file")
    p_eval.add_argument("--out", help="output directory")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--config", help="JSON run configuration")
    p_synth.add_argument("--spec", help="synth spec JSON")
    p_synth.add_argument("--out", help="output directory")

    p_cluster = sub.add_parser("cluster-prompts", help="cluster prompt pools into prototypes")
    p_cluster.add_argument("--config", help="JSON run configuration")
    p_cluster.add_argument("--pools", nargs="+", help="one pool NPY per class")
    p_cluster.add_argument("--clusters", type=int, nargs="+")
    p_cluster.add_argument("--seed", type=int)
    p_cluster.add_argument("--out", help="output directory")
    return parser


def _dispatch(args) -> int:
    config = _load_json(args.config, "config") if args.config else {}
    if args.command == "score":
        manifest = _merged(args, config, "manifest", None)
        if manifest is None:
            raise FileNotFoundError("no manifest given (use --manifest or config)")
        cfg = RunConfig(
            manifest=str(manifest),
            method=_merged(args, config, "method", "gsp"),
            k=int(_merged(args, config, "k", 10)),
            clusters=int(_merged(args, config, "clusters", 3)),
            alpha=float(_merged(args, config, "alpha", 0.5)),
            iterations=int(_merged(args, config, "iterations", 5)),
            m_percent=float(_merged(args, config, "m_percent", 5.0)),
            tau=float(_merged(args, config, "tau", 1.0)),
            seed=int(_merged(args, config, "seed", 0)),
            out=str(_merged(args, config, "out", "runs")),
        )
        return cmd_score(cfg)
    if args.command == "eval":
        scores = _merged(args, config, "scores", None)
        flags = _merged(args, config, "flags", None)
        if not scores or flags is None:
            raise ValueError("eval needs --scores and --flags")
        return cmd_eval(scores, flags, _merged(args, config, "out", "runs"),
                        names=_merged(args, config, "names", None))
    if args.command == "synth":
        spec = _merged(args, config, "spec", None)
        if spec is None:
            raise ValueError("synth needs --spec")
        return cmd_synth(spec, _merged(args, config, "out", "synth_out"))
    if args.command == "cluster-prompts":
        pools = _merged(args, config, "pools", None)
        if not pools:
            raise ValueError("cluster-prompts needs --pools")
        clusters = _merged(args, config, "clusters", [3])
        return cmd_cluster_prompts(pools, [int(c) for c in clusters],
                                   int(_merged(args, config, "seed", 0)),
                                   _merged(args, config, "out", "prototypes_out"))
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    level = os.environ.get("GRAPHSCORE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
