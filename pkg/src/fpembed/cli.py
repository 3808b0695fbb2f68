"""Command-line entry point: one binary, subcommand per pipeline stage, plus
`pipeline` to chain them under a declarative run configuration.

Exit codes: 0 success, 1 validation error (bad flags/config), 2 runtime
failure (stage named on stderr).  Progress goes to stderr; artifacts to the
paths given; `--json-summary` writes machine-readable run metadata.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import generate as gen
from . import graphs as graphs_mod
from . import index as index_mod
from .simulate import (
    SimConfig,
    read_behavior_corpus,
    simulate,
    write_behavior_corpus,
)
from . import vae as vae_mod
from . import walks as walks_mod
from .errors import DimMismatch, FpembedError, MalformedInput, StaleCache
from .floorplan import (
    CorpusProfile,
    parse_floorplan,
    read_corpus,
    serialize_floorplan,
    synth_corpus,
    write_corpus,
)

DEFAULT_PATHS = {
    "corpus": "corpus.fpjsonl",
    "behavior": "behavior.jsonl",
    "norm_stats": "norm_stats.json",
    "graphs": "graphs.jsonl",
    "walks": "walks.jsonl",
    "checkpoint": "model.fgvae",
    "embeddings": "embeddings.jsonl",
    "reports": "reports",
}


@dataclass(frozen=True)
class RunConfig:
    """Declarative pipeline configuration; seeds must be explicit."""

    feature_set: str = "full"
    hidden: int = vae_mod.DEFAULT_HIDDEN
    latent: int = vae_mod.DEFAULT_LATENT
    paths: dict = field(default_factory=lambda: dict(DEFAULT_PATHS))
    corpus_count: int = 300
    profile: CorpusProfile = field(default_factory=CorpusProfile)
    seeds: dict = field(default_factory=dict)  # keys: corpus, init
    sim: SimConfig = field(default_factory=SimConfig)
    walk: walks_mod.WalkConfig = field(default_factory=walks_mod.WalkConfig)
    train: vae_mod.TrainConfig = field(default_factory=vae_mod.TrainConfig)
    walk_store_format: str = "jsonl"
    cluster_min_pts: int = 5
    cluster_eps: float | None = None
    knn_k: int = 5

    @staticmethod
    def from_json(doc: dict) -> "RunConfig":
        for section in ("seeds", "sim", "walk", "train"):
            if section not in doc:
                raise MalformedInput(f"run config is missing {section!r}")
        for key in ("corpus", "init"):
            if key not in doc["seeds"]:
                raise MalformedInput(f"run config seeds must include {key!r}")
        for section in ("sim", "walk", "train"):
            if "seed" not in doc[section]:
                raise MalformedInput(f"run config {section!r} must carry a seed")
        paths = dict(DEFAULT_PATHS)
        paths.update(doc.get("paths", {}))
        corpus_doc = doc.get("corpus", {})
        profile = (CorpusProfile.from_json(corpus_doc["profile"])
                   if "profile" in corpus_doc else CorpusProfile())
        cluster_doc = doc.get("cluster", {})
        eps = cluster_doc.get("eps")
        return RunConfig(
            feature_set=doc.get("feature_set", "full"),
            hidden=int(doc.get("hidden", vae_mod.DEFAULT_HIDDEN)),
            latent=int(doc.get("latent", vae_mod.DEFAULT_LATENT)),
            paths=paths,
            corpus_count=int(corpus_doc.get("count", 300)),
            profile=profile,
            seeds={k: int(v) for k, v in doc["seeds"].items()},
            sim=SimConfig.from_json(doc["sim"]),
            walk=walks_mod.WalkConfig.from_json(doc["walk"]),
            train=vae_mod.TrainConfig.from_json(doc["train"]),
            walk_store_format=doc.get("walk_store_format", "jsonl"),
            cluster_min_pts=int(cluster_doc.get("min_pts", 5)),
            cluster_eps=None if eps is None else float(eps),
            knn_k=int(doc.get("knn_k", 5)),
        )

    def to_json(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "hidden": self.hidden,
            "latent": self.latent,
            "paths": dict(self.paths),
            "corpus": {"count": self.corpus_count,
                       "profile": self.profile.to_json()},
            "seeds": dict(self.seeds),
            "sim": self.sim.to_json(),
            "walk": self.walk.to_json(),
            "train": self.train.to_json(),
            "walk_store_format": self.walk_store_format,
            "cluster": {"min_pts": self.cluster_min_pts, "eps": self.cluster_eps},
            "knn_k": self.knn_k,
        }


class _Validation(Exception):
    """Bad flags or config; maps to exit 1."""


class _StageFailure(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _progress(stage: str, msg: str) -> None:
    print(f"[{stage}] {msg}", file=sys.stderr)


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _StageFailure:
        raise
    except Exception as err:
        raise _StageFailure(stage, err) from err


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_summary(path, doc) -> None:
    if path:
        _write_json(path, doc)


def _read_corpus_any(path):
    """fpjsonl, or a single fpjson document spanning the whole file."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        json.loads(data)
        single = True
    except json.JSONDecodeError:
        single = False
    if single:
        return [parse_floorplan(data)]
    return read_corpus(path)


# ---------------------------------------------------------------- stages


def _stage_simulate(plans, cfg: SimConfig):
    items = []
    for fp in plans:
        items.append((fp.id, simulate(fp, cfg)))
    return items


def _stage_build_graphs(plans, behavior_by_plan, stats, feature_set):
    out = []
    for fp in plans:
        behavior = behavior_by_plan.get(fp.id, {})
        out.append(graphs_mod.build_graph(fp, behavior, stats, feature_set))
    return out


def _stage_embed(model, meta, walksets, model_hash):
    if meta.node_dim != model.node_dim:
        raise DimMismatch(
            f"walk store rows are {meta.node_dim}-dim, model wants {model.node_dim}")
    mains, proxies = [], []
    for ws in walksets:
        main_vec = vae_mod.embed_graph(model, ws, range(ws.proxy_run))
        proxy_vec = vae_mod.embed_graph(model, ws, [ws.proxy_run])
        mains.append(index_mod.EmbeddingRecord(
            graph_id=ws.graph_id, kind="main", vector=main_vec,
            model_hash=model_hash))
        proxies.append(index_mod.EmbeddingRecord(
            graph_id=ws.graph_id, kind="proxy", vector=proxy_vec,
            model_hash=model_hash))
    return index_mod.EmbeddingStore(tuple(mains) + tuple(proxies))


def _stage_cluster(store, graphs_by_id, eps, min_pts):
    mains = store.of_kind("main")
    if eps is None:
        eps = index_mod.default_eps(mains, k=min_pts)
    labels = index_mod.dbscan(mains, eps, min_pts)
    report = index_mod.cluster_stats(labels, graphs_by_id)
    return eps, labels, report


def _train_progress(entry) -> None:
    parts = " ".join(
        f"{k} {entry[k]:.6f}" for k in sorted(entry) if k != "epoch")
    _progress("train", f"epoch {entry['epoch']}: {parts}")


# ---------------------------------------------------------------- handlers


def cmd_ingest(args) -> int:
    plans = _stage("ingest", _read_corpus_any, args.infile)
    _stage("ingest", write_corpus, args.out, plans)
    _progress("ingest", f"{len(plans)} floorplans -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "ingest", "count": len(plans), "out": args.out})
    return 0


def cmd_synth(args) -> int:
    try:
        profile = CorpusProfile(
            name=args.name,
            room_count=_parse_range(args.rooms, int),
            extra_edges=args.extra_edges,
            side_range=_parse_range(args.side, float),
            spread=args.spread,
        )
    except ValueError as err:
        raise _Validation(str(err)) from None
    plans = _stage("synth", synth_corpus, args.count, args.seed, profile)
    _stage("synth", write_corpus, args.out, plans)
    _progress("synth", f"{len(plans)} floorplans -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "synth", "count": len(plans), "out": args.out})
    return 0


def cmd_simulate(args) -> int:
    try:
        cfg = SimConfig(
            density_area=args.density_area,
            agent_speed=args.agent_speed,
            door_service_rate=args.door_rate,
            timeout=args.timeout,
            seed=args.seed,
        )
    except ValueError as err:
        raise _Validation(str(err)) from None
    plans = _stage("simulate", read_corpus, args.corpus)
    items = _stage("simulate", _stage_simulate, plans, cfg)
    _stage("simulate", write_behavior_corpus, args.out, items)
    _progress("simulate", f"{len(items)} plans -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "simulate", "count": len(items), "out": args.out})
    return 0


def cmd_build_graph(args) -> int:
    if args.feature_set not in graphs_mod.FEATURE_SETS:
        raise _Validation(f"unknown feature set {args.feature_set!r}")
    plans = _stage("build-graph", read_corpus, args.corpus)
    behavior = {}
    if args.behavior:
        behavior = _stage("build-graph", read_behavior_corpus,
                          args.behavior)
    if args.stats:
        stats = _stage("build-graph", graphs_mod.read_norm_stats, args.stats)
    else:
        corpus = [(fp, behavior.get(fp.id, {})) for fp in plans]
        stats = _stage("build-graph", graphs_mod.fit_norm_stats, corpus)
        if args.stats_out:
            _stage("build-graph", graphs_mod.write_norm_stats,
                   args.stats_out, stats)
    built = _stage("build-graph", _stage_build_graphs, plans, behavior, stats,
                   args.feature_set)
    _stage("build-graph", graphs_mod.write_graphs, args.out, built)
    _progress("build-graph", f"{len(built)} graphs -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "build-graph", "count": len(built),
        "feature_set": args.feature_set, "out": args.out})
    return 0


def cmd_walk(args) -> int:
    try:
        cfg = walks_mod.WalkConfig(kind=args.kind, length=args.len,
                                   runs=args.runs, p=args.p, q=args.q,
                                   seed=args.seed)
    except ValueError as err:
        raise _Validation(str(err)) from None
    if args.store_format not in ("jsonl", "binary"):
        raise _Validation(f"unknown store format {args.store_format!r}")
    built = _stage("walk", graphs_mod.read_graphs, args.graphs)
    if not built:
        raise _StageFailure("walk", MalformedInput("graph store is empty"))
    walksets = _stage("walk", walks_mod.generate_corpus_walks, built, cfg)
    meta = walks_mod.WalkStoreMeta(
        config=cfg,
        node_dim=built[0].node_dim,
        feature_set=built[0].feature_set,
        norm_stats_hash=built[0].norm_stats_hash,
    )
    _stage("walk", walks_mod.write_walks, args.out, meta, walksets,
           args.store_format)
    n_pairs = sum(len(ws.all_pairs()) for ws in walksets)
    _progress("walk", f"{n_pairs} sequence pairs -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "walk", "pairs": n_pairs, "out": args.out})
    return 0


def cmd_train(args) -> int:
    try:
        cfg = vae_mod.TrainConfig(epochs=args.epochs, lr=args.lr,
                                  batch_size=args.batch_size, seed=args.seed,
                                  shuffle=not args.no_shuffle)
    except ValueError as err:
        raise _Validation(str(err)) from None
    meta, walksets = _stage("train", walks_mod.read_walks, args.walks)
    stats = _stage("train", graphs_mod.read_norm_stats, args.stats)
    if stats.content_hash() != meta.norm_stats_hash:
        raise _StageFailure("train", StaleCache(
            "norm stats file does not match the walk store"))
    model = _stage("train", vae_mod.init_model, meta.feature_set, stats,
                   meta.config, args.hidden, args.latent, args.init_seed)
    result = _stage("train", vae_mod.train, model, walksets, cfg,
                    _train_progress)
    model_hash = _stage("train", vae_mod.save_model, args.model_out,
                        result.model, result.history)
    _progress("train", f"checkpoint -> {args.model_out} ({model_hash[:12]})")
    _write_summary(args.json_summary, {
        "command": "train", "model_hash": model_hash,
        "history": result.history, "out": args.model_out})
    return 0


def cmd_embed(args) -> int:
    meta, walksets = _stage("embed", walks_mod.read_walks, args.walks)
    model, _, model_hash = _stage("embed", vae_mod.load_model, args.model,
                                  meta.feature_set)
    store = _stage("embed", _stage_embed, model, meta, walksets, model_hash)
    _stage("embed", index_mod.write_embeddings, args.out, store)
    _progress("embed", f"{len(store.records)} records -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "embed", "records": len(store.records),
        "dim": store.dim, "out": args.out})
    return 0


def cmd_query(args) -> int:
    store = _stage("query", index_mod.read_embeddings, args.embeddings)
    try:
        rec = store.by_key(args.graph, args.kind)
    except KeyError:
        raise _StageFailure("query", KeyError(
            f"no {args.kind!r} record for graph {args.graph!r}")) from None
    ranked = _stage("query", index_mod.knn, store, rec.vector, args.k)
    for pos, (gid, kind, dist) in enumerate(ranked, start=1):
        print(f"{pos}  {gid}  {kind}  {dist:.6g}")
    _write_summary(args.json_summary, {
        "command": "query", "graph": args.graph, "kind": args.kind,
        "neighbors": [
            {"rank": i + 1, "graph_id": g, "kind": k, "distance": d}
            for i, (g, k, d) in enumerate(ranked)
        ]})
    return 0


def _rank_cell_label(args):
    if args.walks:
        meta, _ = walks_mod.read_walks(args.walks)
        return meta.config.kind, meta.config.length
    return args.walk_kind, args.walk_len


def cmd_eval_ranks(args) -> int:
    store = _stage("eval-ranks", index_mod.read_embeddings, args.embeddings)
    kind, length = _stage("eval-ranks", _rank_cell_label, args)
    report = _stage("eval-ranks", index_mod.proxy_rank_eval,
                    store.of_kind("main"), store.of_kind("proxy"),
                    kind, length)
    _stage("eval-ranks", _write_json, args.out_json,
           index_mod.rank_report_json(report))
    text = index_mod.rank_report_text(report)
    with open(args.out_text, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="", file=sys.stderr)
    _write_summary(args.json_summary, {
        "command": "eval-ranks", "report": index_mod.rank_report_json(report)})
    return 0


def cmd_cluster(args) -> int:
    store = _stage("cluster", index_mod.read_embeddings, args.embeddings)
    built = _stage("cluster", graphs_mod.read_graphs, args.graphs)
    graphs_by_id = {g.graph_id: g for g in built}
    eps, labels, report = _stage("cluster", _stage_cluster, store,
                                 graphs_by_id, args.eps, args.min_pts)
    _stage("cluster", _write_json, args.out_json,
           index_mod.cluster_report_json(report))
    with open(args.out_text, "w", encoding="utf-8") as fh:
        fh.write(index_mod.cluster_report_text(report))
    if args.labels_out:
        _stage("cluster", _write_json, args.labels_out, {
            "eps": eps, "min_pts": args.min_pts, "labels": labels})
    n_clusters = len(report.clusters)
    _progress("cluster", f"{n_clusters} clusters (eps {eps:.6g})")
    _write_summary(args.json_summary, {
        "command": "cluster", "eps": eps, "min_pts": args.min_pts,
        "clusters": n_clusters,
        "report": index_mod.cluster_report_json(report)})
    return 0


def cmd_project(args) -> int:
    store = _stage("project", index_mod.read_embeddings, args.embeddings)
    points = _stage("project", index_mod.project_2d, store.of_kind("main"))
    labels = None
    if args.labels:
        with open(args.labels, "r", encoding="utf-8") as fh:
            labels = json.load(fh)["labels"]
    csv_text = index_mod.projection_csv(points, labels)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    _progress("project", f"{len(points)} points -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "project", "points": len(points), "out": args.out})
    return 0


def _find_walkset(walksets, graph_id):
    for ws in walksets:
        if ws.graph_id == graph_id:
            return ws
    raise KeyError(f"graph {graph_id!r} not in walk store")


def cmd_generate_posterior(args) -> int:
    meta, walksets = _stage("generate-posterior", walks_mod.read_walks,
                            args.walks)
    model, _, _ = _stage("generate-posterior", vae_mod.load_model, args.model,
                         meta.feature_set)
    plans = _stage("generate-posterior", read_corpus, args.corpus)
    by_id = {fp.id: fp for fp in plans}
    if args.graph not in by_id:
        raise _StageFailure("generate-posterior", KeyError(
            f"graph {args.graph!r} not in corpus"))
    ws = _stage("generate-posterior", _find_walkset, walksets, args.graph)
    plan = _stage("generate-posterior", gen.generate_from_graph, model, ws,
                  by_id[args.graph], args.run, args.seed)
    with open(args.out, "wb") as fh:
        fh.write(serialize_floorplan(plan.floorplan))
        fh.write(b"\n")
    _progress("generate-posterior",
              f"anchor {plan.anchor}, overlaps {plan.overlaps} -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "generate-posterior", "graph": args.graph,
        "run": args.run, "anchor": plan.anchor, "overlaps": plan.overlaps,
        "room_areas": {str(k): v for k, v in sorted(plan.room_areas.items())},
        "out": args.out})
    return 0


def _parse_pair_ref(text: str):
    parts = text.rsplit(":", 2)
    if len(parts) != 3:
        raise _Validation(
            f"expected GRAPH:RUN:START, got {text!r}")
    try:
        return parts[0], int(parts[1]), int(parts[2])
    except ValueError:
        raise _Validation(f"run and start must be integers in {text!r}") from None


def cmd_generate_homotopy(args) -> int:
    ref_a = _parse_pair_ref(args.a)
    ref_b = _parse_pair_ref(args.b)
    if not 0.0 <= args.lam <= 1.0:
        raise _Validation("--lambda must lie in [0, 1]")
    meta, walksets = _stage("generate-homotopy", walks_mod.read_walks,
                            args.walks)
    model, _, _ = _stage("generate-homotopy", vae_mod.load_model, args.model,
                         meta.feature_set)
    built = _stage("generate-homotopy", graphs_mod.read_graphs, args.graphs)
    graphs_by_id = {g.graph_id: g for g in built}

    def lookup(ref):
        ws = _find_walkset(walksets, ref[0])
        return ws, ws.pair(ref[1], ref[2])

    (ws_a, pair_a) = _stage("generate-homotopy", lookup, ref_a)
    (_, pair_b) = _stage("generate-homotopy", lookup, ref_b)
    decoded = _stage("generate-homotopy", gen.homotopy, model, pair_a, pair_b,
                     args.lam)
    if ref_a[0] not in graphs_by_id:
        raise _StageFailure("generate-homotopy", KeyError(
            f"graph {ref_a[0]!r} not in graph store"))
    g = graphs_by_id[ref_a[0]]
    if g.norm_stats_hash != model.norm_stats.content_hash():
        raise _StageFailure("generate-homotopy", StaleCache(
            "graph store and checkpoint disagree on normalization stats"))
    result = _stage("generate-homotopy", gen.splice_sequence, ws_a, g,
                    decoded, model.norm_stats)
    _stage("generate-homotopy", graphs_mod.write_graphs, args.out,
           [result.graph])
    diff_text = "\n".join(result.diff) + ("\n" if result.diff else "")
    if args.diff_out:
        with open(args.diff_out, "w", encoding="utf-8") as fh:
            fh.write(diff_text)
    else:
        print(diff_text, end="")
    _progress("generate-homotopy",
              f"{len(result.diff)} attribute changes -> {args.out}")
    _write_summary(args.json_summary, {
        "command": "generate-homotopy", "a": args.a, "b": args.b,
        "lambda": args.lam, "changes": list(result.diff), "out": args.out})
    return 0


def cmd_gradcheck(args) -> int:
    reports = []
    worst = 0.0
    for i in range(args.configs):
        seed = args.seed + i
        report = _stage("gradcheck", vae_mod.gradcheck_toy, seed, args.tol)
        reports.append(report)
        worst = max(worst, report.max_rel_err)
        status = "pass" if report.passed else "FAIL"
        _progress("gradcheck",
                  f"config seed {seed}: max rel err {report.max_rel_err:.3e} "
                  f"[{status}]")
    ok = all(r.passed for r in reports)
    print(f"gradcheck {'PASS' if ok else 'FAIL'}: worst {worst:.3e} "
          f"(tolerance {args.tol:g})")
    _write_summary(args.json_summary, {
        "command": "gradcheck", "tolerance": args.tol, "passed": ok,
        "max_rel_err": worst})
    return 0 if ok else 2


def cmd_pipeline(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise _Validation(f"cannot read config: {err}") from None
    try:
        cfg = RunConfig.from_json(doc)
    except (MalformedInput, ValueError, KeyError) as err:
        raise _Validation(f"bad run config: {err}") from None
    if args.seed is not None:
        cfg = _override_seeds(cfg, args.seed)
    if args.epochs is not None:
        cfg = _override_train(cfg, epochs=args.epochs)

    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)

    def path_of(key: str) -> str:
        p = cfg.paths[key]
        return p if os.path.isabs(p) else os.path.join(out_dir, p)

    reports_dir = path_of("reports")
    os.makedirs(reports_dir, exist_ok=True)

    # corpus
    plans = _stage("synth", synth_corpus, cfg.corpus_count,
                   cfg.seeds["corpus"], cfg.profile)
    _stage("synth", write_corpus, path_of("corpus"), plans)
    _progress("synth", f"{len(plans)} floorplans")

    # behavior
    items = _stage("simulate", _stage_simulate, plans, cfg.sim)
    _stage("simulate", write_behavior_corpus, path_of("behavior"), items)
    behavior_by_plan = dict(items)
    _progress("simulate", f"{len(items)} plans simulated")

    # graphs
    stats = _stage("build-graph", graphs_mod.fit_norm_stats,
                   [(fp, behavior_by_plan[fp.id]) for fp in plans])
    _stage("build-graph", graphs_mod.write_norm_stats, path_of("norm_stats"),
           stats)
    built = _stage("build-graph", _stage_build_graphs, plans, behavior_by_plan,
                   stats, cfg.feature_set)
    _stage("build-graph", graphs_mod.write_graphs, path_of("graphs"), built)
    _progress("build-graph", f"{len(built)} graphs ({cfg.feature_set})")

    # walks
    walksets = _stage("walk", walks_mod.generate_corpus_walks, built, cfg.walk)
    meta = walks_mod.WalkStoreMeta(
        config=cfg.walk, node_dim=built[0].node_dim,
        feature_set=cfg.feature_set, norm_stats_hash=stats.content_hash())
    _stage("walk", walks_mod.write_walks, path_of("walks"), meta, walksets,
           cfg.walk_store_format)
    _progress("walk", f"{sum(len(ws.all_pairs()) for ws in walksets)} pairs")

    # train
    model = _stage("train", vae_mod.init_model, cfg.feature_set, stats,
                   cfg.walk, cfg.hidden, cfg.latent, cfg.seeds["init"])
    result = _stage("train", vae_mod.train, model, walksets, cfg.train,
                    _train_progress)
    model_hash = _stage("train", vae_mod.save_model, path_of("checkpoint"),
                        result.model, result.history)
    _progress("train", f"checkpoint hash {model_hash[:12]}")

    # embeddings
    store = _stage("embed", _stage_embed, result.model, meta, walksets,
                   model_hash)
    _stage("embed", index_mod.write_embeddings, path_of("embeddings"), store)
    _progress("embed", f"{len(store.records)} records")

    # rank evaluation
    report = _stage("eval-ranks", index_mod.proxy_rank_eval,
                    store.of_kind("main"), store.of_kind("proxy"),
                    cfg.walk.kind, cfg.walk.length)
    _stage("eval-ranks", _write_json,
           os.path.join(reports_dir, "rank_report.json"),
           index_mod.rank_report_json(report))
    with open(os.path.join(reports_dir, "rank_report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(index_mod.rank_report_text(report))

    # clustering
    graphs_by_id = {g.graph_id: g for g in built}
    eps, labels, cluster_report = _stage("cluster", _stage_cluster, store,
                                         graphs_by_id, cfg.cluster_eps,
                                         cfg.cluster_min_pts)
    _stage("cluster", _write_json,
           os.path.join(reports_dir, "cluster_report.json"),
           index_mod.cluster_report_json(cluster_report))
    with open(os.path.join(reports_dir, "cluster_report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(index_mod.cluster_report_text(cluster_report))
    _stage("cluster", _write_json, os.path.join(reports_dir, "labels.json"),
           {"eps": eps, "min_pts": cfg.cluster_min_pts, "labels": labels})

    # projection
    points = _stage("project", index_mod.project_2d, store.of_kind("main"))
    with open(os.path.join(reports_dir, "projection.csv"), "w",
              encoding="utf-8") as fh:
        fh.write(index_mod.projection_csv(points, labels))

    summary = {
        "command": "pipeline",
        "config": cfg.to_json(),
        "counts": {
            "floorplans": len(plans),
            "graphs": len(built),
            "pairs": sum(len(ws.all_pairs()) for ws in walksets),
            "embeddings": len(store.records),
            "clusters": len(cluster_report.clusters),
        },
        "model_hash": model_hash,
        "final_loss": result.history[-1]["total"] if result.history else None,
        "rank_report": index_mod.rank_report_json(report),
        "cluster_mean": index_mod.cluster_report_json(cluster_report)["mean"],
    }
    _write_json(os.path.join(reports_dir, "summary.json"), summary)
    _write_summary(args.json_summary, summary)
    _progress("pipeline", "done")
    return 0


def _override_seeds(cfg: RunConfig, seed: int) -> RunConfig:
    from dataclasses import replace

    return replace(
        cfg,
        seeds={"corpus": seed, "init": seed},
        sim=SimConfig.from_json({**cfg.sim.to_json(), "seed": seed}),
        walk=walks_mod.WalkConfig.from_json({**cfg.walk.to_json(), "seed": seed}),
        train=vae_mod.TrainConfig.from_json({**cfg.train.to_json(), "seed": seed}),
    )


def _override_train(cfg: RunConfig, epochs: int) -> RunConfig:
    from dataclasses import replace

    return replace(cfg, train=vae_mod.TrainConfig.from_json(
        {**cfg.train.to_json(), "epochs": epochs}))


def _parse_range(text: str, conv):
    lo, _, hi = text.partition(":")
    if not _:
        raise ValueError(f"expected LO:HI, got {text!r}")
    return (conv(lo), conv(hi))


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse default exits 2; validation errors are exit 1 here
        self.print_usage(sys.stderr)
        raise _Validation(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fpembed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--json-summary", default=None,
                       help="write machine-readable run metadata to this path")
        return p

    p = add("ingest", cmd_ingest, "validate and canonicalize a floorplan corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = add("synth", cmd_synth, "generate a synthetic floorplan corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=300)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--name", default="synth")
    p.add_argument("--rooms", default="3:9", help="LO:HI room count")
    p.add_argument("--extra-edges", type=int, default=1)
    p.add_argument("--side", default="2.0:8.0", help="LO:HI room side length")
    p.add_argument("--spread", type=float, default=30.0)

    p = add("simulate", cmd_simulate, "run the evacuation simulator")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--density-area", type=float, default=4.0)
    p.add_argument("--agent-speed", type=float, default=1.33)
    p.add_argument("--door-rate", type=float, default=1.0)
    p.add_argument("--timeout", type=float, default=300.0)

    p = add("build-graph", cmd_build_graph, "build attributed graphs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--behavior", default=None)
    p.add_argument("--feature-set", default="full",
                   choices=list(graphs_mod.FEATURE_SETS))
    p.add_argument("--out", required=True)
    p.add_argument("--stats", default=None,
                   help="reuse an existing normalization stats file")
    p.add_argument("--stats-out", default=None,
                   help="where to write fitted normalization stats")

    p = add("walk", cmd_walk, "generate random-walk sequences")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", default="rw2", choices=list(walks_mod.WALK_KINDS))
    p.add_argument("--len", type=int, default=5)
    p.add_argument("--runs", type=int, default=11)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--store-format", default="jsonl",
                   choices=["jsonl", "binary"])

    p = add("train", cmd_train, "train the sequence VAE")
    p.add_argument("--walks", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=vae_mod.DEFAULT_HIDDEN)
    p.add_argument("--latent", type=int, default=vae_mod.DEFAULT_LATENT)
    p.add_argument("--no-shuffle", action="store_true")

    p = add("embed", cmd_embed, "embed graphs (main + proxy vectors)")
    p.add_argument("--model", required=True)
    p.add_argument("--walks", required=True)
    p.add_argument("--out", required=True)

    p = add("query", cmd_query, "nearest neighbors of a stored embedding")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--kind", default="main", choices=list(index_mod.KINDS))
    p.add_argument("--k", type=int, default=5)

    p = add("eval-ranks", cmd_eval_ranks, "self/proxy rank histograms")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-text", required=True)
    p.add_argument("--walks", default=None,
                   help="walk store used to label the report cell")
    p.add_argument("--walk-kind", default="rw2")
    p.add_argument("--walk-len", type=int, default=5)

    p = add("cluster", cmd_cluster, "DBSCAN over main embeddings + stats")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-text", required=True)
    p.add_argument("--labels-out", default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--min-pts", type=int, default=5)

    p = add("project", cmd_project, "2D PCA projection CSV")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", default=None)

    p = add("generate-posterior", cmd_generate_posterior,
            "regenerate a floorplan from posterior samples")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--walks", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--run", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("generate-homotopy", cmd_generate_homotopy,
            "interpolate two walks in latent space and splice the result")
    p.add_argument("--model", required=True)
    p.add_argument("--walks", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--a", required=True, help="GRAPH:RUN:START")
    p.add_argument("--b", required=True, help="GRAPH:RUN:START")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--diff-out", default=None)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient check")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs", type=int, default=5)

    p = add("pipeline", cmd_pipeline, "run every stage from one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="run")
    p.add_argument("--seed", type=int, default=None,
                   help="override every seed in the config")
    p.add_argument("--epochs", type=int, default=None,
                   help="override training epochs")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _Validation as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except _Validation as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except _StageFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FpembedError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
