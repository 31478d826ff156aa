"""Acceptance checks. Each test prints one ``PASS``/``FAIL`` line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or ``python tests/test_acceptance.py``.
"""

import json
import math
import sys
import time

import numpy as np
import pytest

from sisindex import index as sis
from sisindex.cli import main as cli_main
from sisindex.datagen import GenConfig, generate, write_dataset
from sisindex.evaluation import (
    COMPARE_COLUMNS,
    GroundTruth,
    average_precision,
    evaluate_ivf,
    evaluate_linear,
    evaluate_sis,
    mean_ap,
    precision_at_k,
    ratio_scope,
    recall,
    save_report,
    sweep,
)
from sisindex.ivf import ivf_build
from sisindex.retrieval import DenseScorer, KeypointScorer, linear_scan, rank_scope
from sisindex.taxonomy import ClassProbabilities

SEED42 = GenConfig(seed=42, n_items=2000, n_queries=200, num_big=50, num_child=200)


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def ds42():
    return generate(SEED42)


def brute_union(probs, index, beta):
    """Scope recount straight from the block member lists."""
    chosen = np.argsort(-probs, kind="stable")[:beta]
    members = set()
    for b in chosen.tolist():
        members.update(i for i, _ in index.block(b))
    return members


def test_oracle_equivalence(ds42, capsys):
    start = time.perf_counter()
    idx = sis.build_from_matrix(ds42.db_ids, ds42.db_big(), 5)
    scorer = DenseScorer("l2")
    mismatched = 0
    for j, qid in enumerate(ds42.query_ids):
        q = ds42.query_record(j)
        scope = sis.select_scope(ClassProbabilities(qid, ds42.query_big()[j], "big"), idx.num_blocks, idx)
        a = rank_scope(q, scope, ds42.db_features, scorer, adjust=False, top_k=None)
        b = linear_scan(q, ds42.db_features, scorer, top_k=None)
        mismatched += not a.same_ranking(b)
    took = time.perf_counter() - start
    verdict(capsys, 1, mismatched == 0 and took < 60,
            f"{len(ds42.query_ids) - mismatched}/{len(ds42.query_ids)} rankings identical, {took:.2f}s")


def test_posting_conservation(ds42, capsys):
    sums = {}
    for alpha in (1, 3, 5, 10):
        idx = sis.build_from_matrix(ds42.db_ids, ds42.db_big(), alpha)
        sums[alpha] = int(sum(len(idx.block(b)) for b in range(idx.num_blocks)))
    ok = all(v == a * ds42.n_items for a, v in sums.items())
    verdict(capsys, 2, ok, f"block totals {sums} for N_d={ds42.n_items}")


def test_scope_law(ds42, capsys):
    alpha = beta = 5
    idx = sis.build_from_matrix(ds42.db_ids, ds42.db_big(), alpha)
    qb = ds42.query_big()
    bad = 0
    sizes = []
    for j, qid in enumerate(ds42.query_ids):
        scope = sis.select_scope(ClassProbabilities(qid, qb[j], "big"), beta, idx)
        bad += set(scope.member_ids()) != brute_union(qb[j], idx, beta) or scope.s_real != len(scope.members)
        sizes.append(scope.s_real)
    lower = sis.expected_scope(ds42.n_items, idx.num_blocks, beta) / ds42.n_items
    skewed = ratio_scope(sizes, ds42.n_items)

    flat = generate(GenConfig(seed=42, n_items=2000, n_queries=200, num_big=50, num_child=200, skew=0.0))
    idx1 = sis.build_from_matrix(flat.db_ids, flat.db_big(), 1)
    flat_dev = {}
    for b in (1, 3, 5, 10):
        s = [sis.select_scope(p, b, idx1).s_real for p in flat.query_big()]
        target = b / idx1.num_blocks
        flat_dev[b] = ratio_scope(s, flat.n_items) / target - 1
    ok = bad == 0 and lower < skewed < 1 and all(abs(d) <= 0.25 for d in flat_dev.values())
    verdict(capsys, 3, ok,
            f"{bad} recount mismatches; skewed mean Ratio_scope {skewed:.4f} vs E_s/N_d {lower:.4f}; "
            f"uniform deviation from beta/N_p " + ", ".join(f"b{b}={d:+.3f}" for b, d in flat_dev.items()))


def test_self_recall(ds42, capsys):
    db = ds42.db_big()
    missing = 0
    checked = 0
    for alpha in (1, 3, 5):
        idx = sis.build_from_matrix(ds42.db_ids, db, alpha)
        for beta in sorted({alpha, alpha + 2, 10}):
            for k, item in enumerate(ds42.db_ids):
                checked += 1
                scope = sis.select_scope(ClassProbabilities(item, db[k], "big"), beta, idx)
                missing += k not in set(scope.positions.tolist())
    verdict(capsys, 4, missing == 0, f"{checked - missing}/{checked} items found in their own scope")


def test_sweep_monotone(ds42, capsys):
    grid = (1, 3, 5, 10)
    rows = {(r.alpha, r.beta): r for r in sweep(ds42, grid, grid, DenseScorer("l2"), timing=False)}
    violations = 0
    for col in ("Recall", "Ratio_scope"):
        for fixed in grid:
            along_beta = [getattr(rows[fixed, b], col) for b in grid]
            along_alpha = [getattr(rows[a, fixed], col) for a in grid]
            for seq in (along_beta, along_alpha):
                violations += sum(x > y for x, y in zip(seq, seq[1:]))
    # per-query scope nesting in beta
    idx = sis.build_from_matrix(ds42.db_ids, ds42.db_big(), 5)
    for j, p in enumerate(ds42.query_big()):
        prev = frozenset()
        for b in grid:
            cur = sis.select_scope(p, b, idx).members
            violations += not prev <= cur
            prev = cur
    verdict(capsys, 5, violations == 0,
            f"{violations} monotonicity violations; Recall {rows[1, 1].Recall:.3f}->{rows[10, 10].Recall:.3f}, "
            f"Ratio_scope {rows[1, 1].Ratio_scope:.3f}->{rows[10, 10].Ratio_scope:.3f}")


def test_table_structure(ds42, capsys, tmp_path):
    scorer = DenseScorer("l2")
    lin = evaluate_linear(ds42, scorer, repeats=1)
    idx = sis.build_from_matrix(ds42.db_ids, ds42.db_big(), 5)
    sis_rep = evaluate_sis(ds42, idx, 5, scorer, repeats=1)
    nlist = 20
    full_ivf = evaluate_ivf(ds42, ivf_build(ds42.db_features, nlist, seed=0), nlist, repeats=1)
    for name, rep in (("lin", lin), ("sis", sis_rep), ("ivf", full_ivf)):
        save_report(rep, tmp_path / f"{name}.json")
    rc = cli_main(["compare", "--reports", *(str(tmp_path / f"{n}.json") for n in ("lin", "sis", "ivf")),
                   "--out", str(tmp_path / "cmp.json"), "--text", str(tmp_path / "cmp.txt")])
    doc = json.loads((tmp_path / "cmp.json").read_text())
    header = (tmp_path / "cmp.txt").read_text().splitlines()[0].split()
    linear_row = doc["rows"][0]
    ok = (
        rc == 0
        and doc["columns"] == list(COMPARE_COLUMNS) == header
        and (linear_row["Recall"], linear_row["Ratio_scope"], linear_row["Ratio_time"]) == (1.0, 1.0, 1.0)
        and full_ivf.mAP == lin.mAP
        and full_ivf.recall == 1.0
    )
    verdict(capsys, 6, ok,
            f"columns {header}; linear row {linear_row['Recall']}/{linear_row['Ratio_scope']}/"
            f"{linear_row['Ratio_time']}; IVF nprobe=nlist mAP {full_ivf.mAP!r} vs linear {lin.mAP!r}, "
            f"Recall {full_ivf.recall}")


def test_tradeoff_direction(capsys):
    big = generate(GenConfig(seed=42, n_items=20000, n_queries=200, num_big=50, num_child=200))
    idx = sis.build_from_matrix(big.db_ids, big.db_big(), 5)
    rep = evaluate_sis(big, idx, 5, DenseScorer("l2"), repeats=3)
    ok = 0.4 <= rep.ratio_scope <= 0.6 and rep.ratio_time < 0.8
    verdict(capsys, 7, ok, f"N_d=20000 alpha=beta=5: Ratio_scope {rep.ratio_scope:.4f}, "
                           f"Ratio_time {rep.ratio_time:.4f}, Recall {rep.recall:.4f}")


def _graded(grades, extra_gt=0):
    ids = [f"r{i}" for i in range(len(grades))]
    rel = {i: float(g) for i, g in zip(ids, grades) if g > 0}
    for k in range(extra_gt):
        rel[f"unretrieved{k}"] = 1.0
    return ("q", ids), GroundTruth({"q": rel})


def test_metric_hand_cases(capsys):
    checks = []
    r, gt = _graded([1, 0, 1])
    checks.append(("precision [1,0,1]@3", precision_at_k(r, gt, 3), 2 / 3, 0.0))
    r, gt = _graded([1, 1, 1])
    checks.append(("precision all relevant", precision_at_k(r, gt, 3), 1.0, 0.0))
    r, gt = _graded([0.5, 0.5])
    checks.append(("precision graded", precision_at_k(r, gt, 2), 0.5, 0.0))
    r, gt = _graded([1, 1])
    checks.append(("AP [1,1]", average_precision(r, gt), 1.0, 1e-9))
    r, gt = _graded([1, 0, 1])
    checks.append(("AP [1,0,1] N_gt=2", average_precision(r, gt), (1 + 0.5 + 2 / 3) / 2, 1e-9))
    r, gt = _graded([0, 0], extra_gt=1)
    checks.append(("AP [0,0]", average_precision(r, gt), 0.0, 1e-9))
    checks.append(("mAP [1]", mean_ap([1.0]), 1.0, 0.0))
    checks.append(("mAP [0,1]", mean_ap([0.0, 1.0]), 0.5, 0.0))
    aps = np.random.default_rng(0).random(100).tolist()
    checks.append(("mAP random", mean_ap(aps), math.fsum(aps) / 100, 1e-12))
    gt4 = GroundTruth({"q": {"a": 1.0, "b": 1.0, "c": 1.0, "d": 1.0}})
    checks.append(("Recall full", recall({"q": {"a", "b", "c", "d"}}, gt4), 1.0, 0.0))
    checks.append(("Recall half", recall({"q": {"a", "b"}}, gt4), 0.5, 0.0))
    failed = [name for name, got, want, tol in checks if not abs(got - want) <= tol]
    verdict(capsys, 8, not failed, f"{len(checks) - len(failed)}/{len(checks)} hand cases"
                                   + (f"; failed {failed}" if failed else ""))


def _ratio_oracle(q, x, ratio=0.8):
    if not len(q) or not len(x):
        return 0
    count = 0
    for a in q.tolist():
        dists = [math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b))) for b in x.tolist()]
        if len(dists) == 1:
            count += dists[0] == 0.0
            continue
        d = sorted(dists)
        count += d[0] < ratio * d[1]
    return count


def test_keypoint_path(capsys):
    kp = generate(GenConfig(seed=42, n_items=1000, n_queries=20, num_big=20, num_child=60,
                            feature_kind="keypoints", kp_min=5, kp_max=50, dim=16))
    counts = kp.db_features.descriptor_counts()
    idx = sis.build_from_matrix(kp.db_ids, kp.db_big(), 3)
    scorer = KeypointScorer(0.8)
    rng = np.random.default_rng(42)
    results = []
    for j, qid in enumerate(kp.query_ids):
        scope = sis.select_scope(ClassProbabilities(qid, kp.query_big()[j], "big"), 3, idx)
        results.append((kp.query_record(j), rank_scope(kp.query_record(j), scope, kp.db_features, scorer,
                                                        top_k=None)))
    mismatches = 0
    for _ in range(50):
        q, res = results[int(rng.integers(len(results)))]
        entries = res.entries
        e = entries[int(rng.integers(len(entries)))]
        stored = kp.db_features.record(e.item_id).payload
        mismatches += e.score != _ratio_oracle(np.asarray(q.payload), np.asarray(stored))
    ok = mismatches == 0 and counts.min() >= 5 and counts.max() <= 50
    verdict(capsys, 9, ok, f"descriptor counts {counts.min()}-{counts.max()}; "
                           f"{50 - mismatches}/50 sampled pairs equal the double-loop oracle")


def test_persistence_byte_stable(capsys, tmp_path):
    blobs = []
    for run in ("a", "b"):
        ds = generate(SEED42)
        write_dataset(ds, tmp_path / run)
        idx = sis.build_from_matrix(ds.db_ids, ds.db_big(), 5)
        sis.save(idx, tmp_path / run / "index.json")
        reloaded = sis.load(tmp_path / run / "index.json")
        sis.save(reloaded, tmp_path / run / "index2.json")
        blobs.append(((tmp_path / run / "index.json").read_bytes(), (tmp_path / run / "index2.json").read_bytes(),
                      reloaded == idx))
    (a1, a2, ea), (b1, b2, eb) = blobs
    ok = a1 == b1 == a2 == b2 and ea and eb
    verdict(capsys, 10, ok, f"index files {len(a1)} bytes; cross-run identical {a1 == b1}, "
                            f"reload identical {a1 == a2 and b1 == b2}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
