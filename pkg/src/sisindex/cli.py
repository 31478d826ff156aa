"""Command-line entry point: ``sisindex <subcommand> ...``.

File formats
------------
taxonomy.json        {"format_version": 1, "num_child", "num_big", "assignment": [big id per child]}
*_probs.jsonl        {"item_id", "space": "child"|"big", "values": [...]} per line
*_features.jsonl     {"item_id", "kind": "dense", "vector": [...]}
                     or {"item_id", "kind": "keypoints", "dim", "descriptors": [[...], ...]}
ground_truth.jsonl   {"query_id", "relevant": {item_id: grade}} per line
index.json           {"format_version": 1, "num_blocks", "alpha", "item_count",
                      "blocks": [[[item_id, confidence], ...], ...]}
ivf.json             {"format_version": 1, "nlist", "seed", "centroids", "cells": [[item_id, ...], ...]}
results.jsonl        {"query_id", "score_kind", "adjusted", "entries": [[item_id, S] | [item_id, S, C, S_C]],
                      "s_real", "run": {...}, "t_idx"?} per line
scopes.jsonl         {"query_id", "selected": [[block, confidence], ...], "s_real", "members": [...]}
report.json          per-query AP / Recall / S_real / timings plus aggregates
sweep.csv            alpha,beta,mAP,Recall,Ratio_scope,Ratio_time

Every subcommand also writes ``<output>.manifest.json`` recording its argv,
resolved parameters, inputs, output digests and timestamps. ``--replay
MANIFEST`` re-executes the recorded command.

Errors are reported on stderr as one line: ``error code=<CODE> message="..."``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__, datagen, evaluation
from . import index as sis
from . import ivf
from .errors import FormatError, RangeError, SisError, ValidationError
from .features import load_store
from .retrieval import linear_scan, make_scorer, rank_positions, rank_scope, read_results, result_to_json
from .taxonomy import BIG, ClassProbabilities, load_taxonomy


class UsageError(SisError):
    code = "USAGE_ERROR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers -----------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(path, args, argv, inputs, outputs, started) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "replay")}
    doc = {
        "tool": "sisindex",
        "version": __version__,
        "subcommand": args.command,
        "argv": list(argv),
        "parameters": params,
        "seed": params.get("seed"),
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.isfile(p)},
        "outputs": {p: _sha256(p) for p in outputs},
        "started": started,
        "finished": _now(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _positive_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _data_path(args, attr, default_name):
    explicit = getattr(args, attr, None)
    if explicit:
        return explicit
    if getattr(args, "data", None):
        return os.path.join(args.data, default_name)
    raise UsageError(f"--{attr.replace('_', '-')} or --data is required")


class MissingInput(SisError):
    code = "MISSING_FILE"


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise MissingInput(f"no such file: {path}") from None


def _exists(*paths):
    for p in paths:
        if p and not os.path.exists(p):
            raise MissingInput(f"no such file: {p}")


def _query_matrix(args):
    tax_path = _data_path(args, "taxonomy", datagen.TAXONOMY_FILE)
    q_path = _data_path(args, "queries", datagen.QUERY_PROBS_FILE)
    _exists(tax_path, q_path)
    taxonomy = load_taxonomy(_read_text(tax_path))
    ids, big = datagen.probs_matrix(datagen.read_probs(q_path), taxonomy)
    return tax_path, q_path, ids, big


def _scorer(args):
    return make_scorer(args.metric, args.ratio)


def _top_k(args):
    if args.top_k < 0:
        raise RangeError("--top-k must be >= 0 (0 = full ranking)")
    return None if args.top_k == 0 else args.top_k


def _map_queries(fn, n, threads):
    if threads <= 1:
        return [fn(j) for j in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _best_time(fn, repeats):
    best, out = float("inf"), None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def _scope_line(qid, selected, member_ids) -> str:
    return json.dumps(
        {"query_id": qid, "selected": [list(s) for s in selected], "s_real": len(member_ids), "members": member_ids},
        separators=(",", ":"),
    )


# -- subcommands -------------------------------------------------------------

def cmd_generate(args):
    cfg = datagen.GenConfig(
        seed=args.seed, num_child=args.child, num_big=args.big, n_items=args.items, n_queries=args.queries,
        skew=args.skew, group_size=args.group_size, prob_concentration=args.concentration,
        feature_kind=args.feature, dim=args.dim, kp_min=args.kp_min, kp_max=args.kp_max, noise=args.noise,
    )
    ds = datagen.generate(cfg)
    outputs = datagen.write_dataset(ds, args.out)
    return [], outputs, os.path.join(args.out, "manifest.json")


def cmd_build(args):
    tax_path = _data_path(args, "taxonomy", datagen.TAXONOMY_FILE)
    probs_path = _data_path(args, "probs", datagen.DB_PROBS_FILE)
    _exists(tax_path, probs_path)
    taxonomy = load_taxonomy(_read_text(tax_path))
    ids, big = datagen.probs_matrix(datagen.read_probs(probs_path), taxonomy)
    if args.alpha < 1:
        raise RangeError(f"--alpha={args.alpha} must be >= 1")
    index = sis.build_from_matrix(ids, big, args.alpha)
    sis.save(index, args.out)
    return [tax_path, probs_path], [args.out], None


def cmd_query(args):
    _exists(args.index)
    index = sis.load(args.index)
    tax_path, q_path, qids, big = _query_matrix(args)
    if not 1 <= args.beta <= index.num_blocks:
        raise RangeError(f"--beta={args.beta} outside [1, {index.num_blocks}]")
    feat_path = _data_path(args, "features", datagen.DB_FEATURES_FILE)
    qfeat_path = _data_path(args, "query_features", datagen.QUERY_FEATURES_FILE)
    _exists(feat_path, qfeat_path)
    store, qstore = load_store(feat_path), load_store(qfeat_path)
    scorer, top_k = _scorer(args), _top_k(args)
    name = "SIS+Confidence" if args.adjust else "SIS"
    run = {"index": name, "detector": scorer.name, "b_total": index.num_blocks, "b_selected": args.beta,
           "alpha": index.alpha, "beta": args.beta, "adjust": args.adjust, "metric": args.metric,
           "ratio": args.ratio}

    def one(j):
        qp = ClassProbabilities(qids[j], big[j], BIG)
        q = qstore.record(qids[j])

        def go():
            scope = sis.select_scope(qp, args.beta, index)
            return scope, rank_scope(q, scope, store, scorer, adjust=args.adjust, top_k=top_k)

        return _best_time(go, args.repeats if args.timing else 1)

    done = _map_queries(one, len(qids), args.threads)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for (scope, res), t in done:
            extra = {"s_real": scope.s_real, "run": run}
            if args.timing:
                extra["t_idx"] = t
            fh.write(result_to_json(res, **extra) + "\n")
    outputs = [args.out]
    if args.scopes:
        with open(args.scopes, "w", encoding="utf-8", newline="\n") as fh:
            for (scope, _), _t in done:
                fh.write(_scope_line(scope.query_id, scope.selected, scope.member_ids()) + "\n")
        outputs.append(args.scopes)
    return [args.index, tax_path, q_path, feat_path, qfeat_path], outputs, None


def cmd_linear_scan(args):
    feat_path = _data_path(args, "features", datagen.DB_FEATURES_FILE)
    qfeat_path = _data_path(args, "query_features", datagen.QUERY_FEATURES_FILE)
    _exists(feat_path, qfeat_path)
    store, qstore = load_store(feat_path), load_store(qfeat_path)
    scorer, top_k = _scorer(args), _top_k(args)
    run = {"index": "LinearScan", "detector": scorer.name, "b_total": None, "b_selected": None,
           "metric": args.metric, "ratio": args.ratio}
    qids = list(qstore.item_ids)

    def one(j):
        q = qstore.record(qids[j])
        return _best_time(lambda: linear_scan(q, store, scorer, top_k=top_k), args.repeats if args.timing else 1)

    done = _map_queries(one, len(qids), args.threads)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for res, t in done:
            extra = {"s_real": len(store), "run": run}
            if args.timing:
                extra["t_idx"] = t
            fh.write(result_to_json(res, **extra) + "\n")
    return [feat_path, qfeat_path], [args.out], None


def cmd_ivf_build(args):
    feat_path = _data_path(args, "features", datagen.DB_FEATURES_FILE)
    _exists(feat_path)
    index = ivf.ivf_build(load_store(feat_path), args.nlist, seed=args.seed, max_iters=args.max_iters)
    ivf.save(index, args.out)
    return [feat_path], [args.out], None


def cmd_ivf_query(args):
    _exists(args.index)
    index = ivf.load(args.index)
    feat_path = _data_path(args, "features", datagen.DB_FEATURES_FILE)
    qfeat_path = _data_path(args, "query_features", datagen.QUERY_FEATURES_FILE)
    _exists(feat_path, qfeat_path)
    store, qstore = load_store(feat_path), load_store(qfeat_path)
    if store.item_ids != index.item_ids:
        raise ValidationError("feature store does not match the IVF index items")
    if not 1 <= args.nprobe <= index.nlist:
        raise RangeError(f"--nprobe={args.nprobe} outside [1, {index.nlist}]")
    scorer, top_k = make_scorer(args.metric), _top_k(args)
    run = {"index": "IVF-Flat", "detector": scorer.name, "b_total": index.nlist, "b_selected": args.nprobe,
           "nlist": index.nlist, "nprobe": args.nprobe, "metric": args.metric, "ratio": None}
    qids = list(qstore.item_ids)

    def one(j):
        q = qstore.record(qids[j])

        def go():
            pos = ivf.ivf_scope(q.payload, index, args.nprobe)
            return pos, rank_positions(q, store, pos, scorer, None, top_k)

        return _best_time(go, args.repeats if args.timing else 1)

    done = _map_queries(one, len(qids), args.threads)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for (pos, res), t in done:
            extra = {"s_real": int(len(pos)), "run": run}
            if args.timing:
                extra["t_idx"] = t
            fh.write(result_to_json(res, **extra) + "\n")
    outputs = [args.out]
    if args.scopes:
        with open(args.scopes, "w", encoding="utf-8", newline="\n") as fh:
            for qid, ((pos, _), _t) in zip(qids, done):
                fh.write(_scope_line(qid, [], [store.item_ids[p] for p in pos.tolist()]) + "\n")
        outputs.append(args.scopes)
    return [args.index, feat_path, qfeat_path], outputs, None


def _read_scopes(path) -> dict[str, list[str]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                try:
                    doc = json.loads(line)
                    out[doc["query_id"]] = doc["members"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise FormatError(f"{path}: bad scope record: {exc}") from None
    return out


def cmd_eval(args):
    _exists(args.results)
    gt_path = _data_path(args, "ground_truth", datagen.GROUND_TRUTH_FILE)
    feat_path = _data_path(args, "features", datagen.DB_FEATURES_FILE)
    _exists(gt_path, feat_path)
    gt = evaluation.read_ground_truth(gt_path)
    store = load_store(feat_path)
    results = read_results(args.results)
    if not results:
        raise ValidationError("results file is empty")
    run = results[0].extra.get("run", {})
    is_linear = run.get("index") == "LinearScan"
    scopes = None
    if args.scopes:
        _exists(args.scopes)
        scopes = _read_scopes(args.scopes)
    elif not is_linear:
        raise UsageError("--scopes is required for indexed runs")

    timed = all("t_idx" in r.extra for r in results) and args.timing
    t_whl = {}
    inputs = [args.results, gt_path, feat_path, args.scopes]
    if timed and not is_linear:
        qfeat_path = _data_path(args, "query_features", datagen.QUERY_FEATURES_FILE)
        _exists(qfeat_path)
        inputs.append(qfeat_path)
        qstore = load_store(qfeat_path)
        scorer = make_scorer(run.get("metric", "l2"), run.get("ratio") or 0.8)
        for r in results:
            q = qstore.record(r.query_id)
            _, t_whl[r.query_id] = _best_time(lambda: linear_scan(q, store, scorer, top_k=None), args.repeats)

    everything = set(store.item_ids)
    rows, short = [], 0
    for r in results:
        members = everything if is_linear else set(scopes.get(r.query_id, ()))
        if not is_linear and r.query_id not in scopes:
            raise ValidationError(f"no scope recorded for query {r.query_id}")
        s_real = len(members)
        if len(r) < s_real:
            short += 1
        rel = gt.relevance(r.query_id, r.ranked_ids)
        n_gt = gt.n_gt(r.query_id)
        t_idx = r.extra["t_idx"] if timed else None
        rows.append(evaluation.QueryRow(
            r.query_id,
            evaluation.literal_ap_from_grades(rel, n_gt),
            evaluation.standard_ap_from_grades(rel, n_gt),
            evaluation.query_recall(r.query_id, members, gt),
            s_real,
            t_idx,
            (t_idx if is_linear else t_whl[r.query_id]) if timed else None,
        ))
    if short:
        print(f"warning: {short} result lists are shorter than their scope; rerun with --top-k 0 "
              "to score the full ranking", file=sys.stderr)
    config = dict(run)
    config.setdefault("index", "LinearScan" if is_linear else "SIS")
    fingerprint = hashlib.sha256(
        ("\n".join(store.item_ids) + "\0" + "\n".join(r.query_id for r in results)).encode()
    ).hexdigest()[:16]
    report = evaluation.EvalReport(args.name or config["index"], len(store), fingerprint, config, rows)
    evaluation.save_report(report, args.out)
    agg = report.aggregates()
    print("  ".join(f"{k}={'-' if v is None else format(v, '.6g')}" for k, v in agg.items()))
    return [p for p in inputs if p], [args.out], None


def cmd_sweep(args):
    ds = datagen.read_dataset(args.data)
    for a in args.alpha:
        if a < 1:
            raise RangeError(f"alpha={a} must be >= 1")
    for b in args.beta:
        if not 1 <= b <= ds.taxonomy.num_big:
            raise RangeError(f"beta={b} outside [1, {ds.taxonomy.num_big}]")
    rows = evaluation.sweep(ds, args.alpha, args.beta, _scorer(args), timing=args.timing, repeats=args.repeats)
    text = evaluation.sweep_csv(rows)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return [os.path.join(args.data, n) for n in sorted(os.listdir(args.data))], [args.out], None


def cmd_compare(args):
    _exists(*args.reports)
    reports = [evaluation.load_report(p) for p in args.reports]
    doc = evaluation.compare(reports)
    table = evaluation.format_table(doc)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    outputs = [args.out]
    if args.text:
        with open(args.text, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table)
        outputs.append(args.text)
    sys.stdout.write(table)
    return list(args.reports), outputs, None


def cmd_inspect(args):
    _exists(args.index)
    index = sis.load(args.index)
    sizes = index.block_sizes
    lines = [
        f"blocks={index.num_blocks} alpha={index.alpha} items={index.item_count} postings={int(sizes.sum())}",
        f"occupancy: min={int(sizes.min())} max={int(sizes.max())} mean={sizes.mean():.2f} "
        f"empty={int(np.count_nonzero(sizes == 0))}",
        "block  size",
    ]
    lines += [f"{b:5d}  {int(s)}" for b, s in enumerate(sizes)]
    inputs = [args.index]
    if args.data or args.queries:
        tax_path, q_path, qids, big = _query_matrix(args)
        inputs += [tax_path, q_path]
        beta = args.beta
        if not 1 <= beta <= index.num_blocks:
            raise RangeError(f"--beta={beta} outside [1, {index.num_blocks}]")
        s = [sis.select_scope(ClassProbabilities(q, big[j], BIG), beta, index).s_real for j, q in enumerate(qids)]
        e_s = sis.expected_scope(index.item_count, index.num_blocks, beta)
        lines.append(f"beta={beta}  E_s={e_s:.2f}  mean S_real={np.mean(s):.2f}  "
                     f"E_s/N_d={e_s / index.item_count:.4f}  mean Ratio_scope={np.mean(s) / index.item_count:.4f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    outputs = []
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        outputs.append(args.out)
    return inputs, outputs, None


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sisindex", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help, aliases=()):
        sp = sub.add_parser(name, help=help, aliases=list(aliases), description=help)
        sp.set_defaults(func=func, command=name)
        return sp

    def data_opts(sp, *which):
        sp.add_argument("--data", help="dataset directory written by `generate`")
        flags = {
            "taxonomy": "taxonomy.json",
            "probs": "database probabilities (jsonl)",
            "queries": "query probabilities (jsonl)",
            "features": "database features (jsonl)",
            "query-features": "query features (jsonl)",
            "ground-truth": "ground truth (jsonl)",
        }
        for w in which:
            sp.add_argument(f"--{w}", help=f"{flags[w]}; defaults to the file inside --data")

    def scorer_opts(sp):
        sp.add_argument("--metric", choices=["l2", "cosine", "keypoints"], default="l2")
        sp.add_argument("--ratio", type=float, default=0.8, help="ratio-test threshold for keypoints")

    def run_opts(sp, top_k=True):
        if top_k:
            sp.add_argument("--top-k", type=int, default=100, help="entries kept per query (0 = full ranking)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--repeats", type=int, default=3, help="timing repeats (minimum is kept)")
        sp.add_argument("--no-timing", dest="timing", action="store_false", help="omit timing fields")

    g = add("generate", cmd_generate, "generate a synthetic dataset bundle", aliases=["gen"])
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--items", type=int, default=2000)
    g.add_argument("--queries", type=int, default=200)
    g.add_argument("--big", type=int, default=50, help="number of Big Classes (N_p)")
    g.add_argument("--child", type=int, default=None, help="number of child classes (default 4 x --big)")
    g.add_argument("--skew", type=float, default=1.0, help="Zipf exponent of the Big-Class distribution")
    g.add_argument("--group-size", type=int, default=5)
    g.add_argument("--concentration", type=float, default=0.07)
    g.add_argument("--feature", choices=["dense", "keypoints"], default="dense")
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--kp-min", type=int, default=5)
    g.add_argument("--kp-max", type=int, default=50)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--out", required=True, help="output directory")

    b = add("build", cmd_build, "build a SIS index from database probabilities")
    data_opts(b, "taxonomy", "probs")
    b.add_argument("--alpha", type=int, default=5, help="Database Expansion Factor (DEF)")
    b.add_argument("--out", required=True)

    q = add("query", cmd_query, "select scopes and rank them (SIS)")
    q.add_argument("--index", required=True)
    data_opts(q, "taxonomy", "queries", "features", "query-features")
    q.add_argument("--beta", type=int, default=5, help="Query Expansion Factor (QEF)")
    q.add_argument("--adjust", action="store_true", help="confidence-adjust scores (SIS+Confidence)")
    scorer_opts(q)
    run_opts(q)
    q.add_argument("--out", required=True, help="results (jsonl)")
    q.add_argument("--scopes", help="also write scope membership (jsonl)")

    ls = add("linear-scan", cmd_linear_scan, "exhaustively rank the whole database")
    data_opts(ls, "features", "query-features")
    scorer_opts(ls)
    run_opts(ls)
    ls.add_argument("--out", required=True)

    ib = add("ivf-build", cmd_ivf_build, "train an IVF-Flat baseline index")
    data_opts(ib, "features")
    ib.add_argument("--nlist", type=int, default=100, help="number of cells (b_total)")
    ib.add_argument("--seed", type=int, default=0)
    ib.add_argument("--max-iters", type=int, default=25)
    ib.add_argument("--out", required=True)

    iq = add("ivf-query", cmd_ivf_query, "query the IVF-Flat baseline")
    iq.add_argument("--index", required=True)
    data_opts(iq, "features", "query-features")
    iq.add_argument("--nprobe", type=int, default=10, help="cells probed (b_selected)")
    iq.add_argument("--metric", choices=["l2", "cosine"], default="l2")
    run_opts(iq)
    iq.add_argument("--out", required=True)
    iq.add_argument("--scopes")

    e = add("eval", cmd_eval, "compute mAP, Recall, Ratio_scope and Ratio_time for a results file")
    e.add_argument("--results", required=True)
    e.add_argument("--scopes")
    data_opts(e, "features", "query-features", "ground-truth")
    e.add_argument("--name")
    e.add_argument("--repeats", type=int, default=3)
    e.add_argument("--no-timing", dest="timing", action="store_false")
    e.add_argument("--out", required=True)

    s = add("sweep", cmd_sweep, "evaluate SIS over an alpha x beta grid")
    s.add_argument("--data", required=True)
    s.add_argument("--alpha", type=_positive_list, default=[1, 3, 5, 10])
    s.add_argument("--beta", type=_positive_list, default=[1, 3, 5, 10])
    scorer_opts(s)
    run_opts(s, top_k=False)
    s.add_argument("--out", required=True)

    c = add("compare", cmd_compare, "tabulate several evaluation reports")
    c.add_argument("--reports", nargs="+", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--text")

    i = add("inspect", cmd_inspect, "block occupancy and expected vs real scope size")
    i.add_argument("--index", required=True)
    data_opts(i, "taxonomy", "queries")
    i.add_argument("--beta", type=int, default=5)
    i.add_argument("--out")
    return p


def run(argv) -> int:
    argv = list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.replay:
        with open(args.replay, encoding="utf-8") as fh:
            try:
                argv = json.load(fh)["argv"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise FormatError(f"{args.replay}: not a manifest ({exc})") from None
        args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        raise UsageError("a subcommand is required (see --help)")
    if getattr(args, "threads", 1) < 1:
        raise RangeError("--threads must be >= 1")
    if args.command == "generate" and args.child is None:
        args.child = 4 * args.big
    started = _now()
    inputs, outputs, manifest = args.func(args)
    if manifest is None and outputs:
        manifest = outputs[0] + ".manifest.json"
    if manifest is not None:
        _write_manifest(manifest, args, argv, inputs, outputs, started)
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except SisError as exc:
        code = exc.code
        msg = str(exc)
    except FileNotFoundError as exc:
        code, msg = "MISSING_FILE", str(exc)
    except OSError as exc:
        code, msg = "IO_ERROR", str(exc)
    print(f"error code={code} message={json.dumps(msg)}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
