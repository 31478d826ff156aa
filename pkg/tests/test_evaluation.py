import math

import numpy as np
import pytest

from sisindex import index as sis
from sisindex.errors import RangeError, ValidationError
from sisindex.evaluation import (
    COMPARE_COLUMNS,
    EvalReport,
    GroundTruth,
    QueryRow,
    average_precision,
    compare,
    evaluate_ivf,
    evaluate_linear,
    evaluate_sis,
    format_table,
    mean_ap,
    precision_at_k,
    ratio_scope,
    ratio_time,
    recall,
    recompute_from_scopes,
    standard_average_precision,
    sweep,
    sweep_csv,
)
from sisindex.ivf import ivf_build
from sisindex.retrieval import DenseScorer


def ranking(grades):
    """A ranking whose i-th entry has the given grade, plus matching ground truth."""
    ids = [f"r{i}" for i in range(len(grades))]
    return ("q", ids), {i: g for i, g in zip(ids, grades) if g > 0}


def gt_for(rel, n_gt=None):
    if n_gt is not None:
        # pad with relevant items that were not retrieved
        rel = dict(rel)
        k = 0
        while sum(rel.values()) < n_gt:
            rel[f"missing{k}"] = 1.0
            k += 1
    return GroundTruth({"q": rel})


def test_precision_hand_cases():
    r, rel = ranking([1, 0, 1])
    assert precision_at_k(r, gt_for(rel), 3) == 2 / 3
    r, rel = ranking([1, 1, 1, 1])
    assert precision_at_k(r, gt_for(rel), 4) == 1.0
    r, rel = ranking([0.5, 0.5])
    assert precision_at_k(r, gt_for(rel), 2) == 0.5


def test_precision_errors():
    r, rel = ranking([1, 0])
    with pytest.raises(RangeError):
        precision_at_k(r, gt_for(rel), 0)
    with pytest.raises(RangeError):
        precision_at_k(r, gt_for(rel), 3)


def test_ap_hand_cases():
    r, rel = ranking([1, 1])
    assert average_precision(r, gt_for(rel, 2)) == 1.0
    r, rel = ranking([1, 0, 1])
    expected = (1 + 0.5 + 2 / 3) / 2
    ap = average_precision(r, gt_for(rel, 2))
    assert abs(ap - expected) <= 1e-9 and ap > 1
    r, _ = ranking([0, 0])
    assert average_precision(r, gt_for({}, 1)) == 0.0


def test_ap_empty_list():
    assert average_precision(("q", []), gt_for({"x": 1.0})) == 0.0


def test_standard_ap_is_conventional():
    r, rel = ranking([1, 0, 1])
    assert standard_average_precision(r, gt_for(rel, 2)) == pytest.approx((1 + 2 / 3) / 2, abs=1e-12)


def test_mean_ap(rng):
    assert mean_ap([1.0]) == 1.0
    assert mean_ap([0.0, 1.0]) == 0.5
    aps = rng.random(100).tolist()
    total = 0.0
    for a in aps:
        total += a
    assert abs(mean_ap(aps) - total / 100) <= 1e-12
    with pytest.raises(ValidationError):
        mean_ap([])


def test_recall_cases():
    gt = GroundTruth({"q": {"a": 1.0, "b": 1.0, "c": 1.0, "d": 1.0}})
    assert recall({"q": {"a", "b", "c", "d", "z"}}, gt) == 1.0
    assert recall({"q": {"a", "c"}}, gt) == 0.5
    with pytest.raises(ValidationError):
        recall({"other": {"a"}}, gt)


def test_recall_graded_mass():
    gt = GroundTruth({"q": {"a": 1.0, "b": 0.5}})
    assert recall({"q": {"b"}}, gt) == pytest.approx(0.5 / 1.5)


def test_ground_truth_validation():
    with pytest.raises(ValidationError):
        GroundTruth({"q": {"a": 1.5}})
    with pytest.raises(ValidationError):
        GroundTruth({"q": {"a": 0.0}})


def test_ratio_scope_cases(rng):
    assert ratio_scope([10, 10, 10], 10) == 1.0
    assert ratio_scope([1] * 5, 10) == 0.1
    s = rng.integers(0, 500, 50).tolist()
    assert ratio_scope(s, 500) == pytest.approx(sum(x / 500 for x in s) / 50, abs=1e-15)


def test_ratio_time_cases():
    assert ratio_time([0.2, 0.3], [0.2, 0.3]) == 1.0
    assert ratio_time([0.1, 0.2], [0.2, 0.4]) == 0.5
    with pytest.raises(RangeError):
        ratio_time([0.1], [0.0])


def test_recall_matches_brute_force_recount(seed42_ds):
    ds = seed42_ds
    idx = sis.build_from_matrix(ds.db_ids, ds.db_big(), 5)
    rep, scopes, _ = evaluate_sis(ds, idx, 5, DenseScorer("l2"), timing=False, return_scopes=True)
    per_query = []
    lost = total = 0.0
    for qid, scope in zip(ds.query_ids, scopes):
        members = set(scope.member_ids())
        rel = ds.ground_truth.grades(qid)
        hit = sum(g for i, g in rel.items() if i in members)
        per_query.append(hit / sum(rel.values()))
        lost += sum(g for i, g in rel.items() if i not in members) / sum(rel.values())
        total += 1
    assert rep.recall == pytest.approx(sum(per_query) / len(per_query), abs=1e-12)
    assert rep.recall == pytest.approx(1 - lost / total, abs=1e-12)
    rec, rs = recompute_from_scopes({q: s.member_ids() for q, s in zip(ds.query_ids, scopes)},
                                    ds.ground_truth, ds.n_items)
    assert rec == rep.recall and rs == rep.ratio_scope


def test_full_scope_sis_map_equals_linear(small_ds):
    ds = small_ds
    idx = sis.build_from_matrix(ds.db_ids, ds.db_big(), 2)
    sis_rep = evaluate_sis(ds, idx, idx.num_blocks, DenseScorer("l2"), timing=False)
    lin = evaluate_linear(ds, DenseScorer("l2"), timing=False)
    assert sis_rep.mAP == lin.mAP
    assert sis_rep.recall == 1.0 == lin.recall
    assert lin.ratio_scope == 1.0


def test_metrics_deterministic(small_ds):
    ds = small_ds
    idx = sis.build_from_matrix(ds.db_ids, ds.db_big(), 3)
    a = evaluate_sis(ds, idx, 3, DenseScorer("l2"), timing=False).to_document()
    b = evaluate_sis(ds, idx, 3, DenseScorer("l2"), timing=False).to_document()
    assert a == b


def test_measured_ratio_time_sane(seed42_ds):
    idx = sis.build_from_matrix(seed42_ds.db_ids, seed42_ds.db_big(), 3)
    rep = evaluate_sis(seed42_ds, idx, 3, DenseScorer("l2"), repeats=3)
    assert 0 < rep.ratio_time < 1.5


def test_sweep_rows_and_monotonicity(small_ds):
    rows = sweep(small_ds, [1, 3, 5, 10], [1, 3, 5, 10], DenseScorer("l2"), timing=False)
    assert len(rows) == 16
    table = {(r.alpha, r.beta): r for r in rows}
    for a in (1, 3, 5, 10):
        rec = [table[a, b].Recall for b in (1, 3, 5, 10)]
        assert rec == sorted(rec)
    assert table[1, 1].Ratio_scope <= table[10, 10].Ratio_scope
    single = sweep(small_ds, [5], [5], DenseScorer("l2"), timing=False)[0]
    idx = sis.build_from_matrix(small_ds.db_ids, small_ds.db_big(), 5)
    rep = evaluate_sis(small_ds, idx, 5, DenseScorer("l2"), timing=False)
    assert (single.mAP, single.Recall, single.Ratio_scope) == (rep.mAP, rep.recall, rep.ratio_scope)
    text = sweep_csv([single])
    assert text.splitlines()[0] == "alpha,beta,mAP,Recall,Ratio_scope,Ratio_time"
    with pytest.raises(ValidationError):
        sweep(small_ds, [], [1], DenseScorer("l2"))


def test_compare_table(small_ds):
    ds = small_ds
    scorer = DenseScorer("l2")
    lin = evaluate_linear(ds, scorer, timing=True, repeats=1)
    idx = sis.build_from_matrix(ds.db_ids, ds.db_big(), 5)
    s = evaluate_sis(ds, idx, 5, scorer, timing=True, repeats=1)
    v = evaluate_ivf(ds, ivf_build(ds.db_features, 8, seed=0), 3, timing=True, repeats=1)
    doc = compare([lin, s, v])
    assert doc["columns"] == list(COMPARE_COLUMNS)
    rows = doc["rows"]
    assert [r["Index"] for r in rows] == ["LinearScan", "SIS", "IVF-Flat"]
    assert (rows[0]["Recall"], rows[0]["Ratio_scope"], rows[0]["Ratio_time"]) == (1.0, 1.0, 1.0)
    for row, rep in zip(rows, (lin, s, v)):
        assert row["mAP"] == rep.mAP and row["Recall"] == rep.recall
        assert row["Ratio_scope"] == rep.ratio_scope and row["Ratio_time"] == rep.ratio_time
    assert (rows[1]["b_total"], rows[1]["b_selected"]) == (idx.num_blocks, 5)
    assert (rows[2]["b_total"], rows[2]["b_selected"]) == (8, 3)
    lines = format_table(doc).splitlines()
    assert lines[0].split() == list(COMPARE_COLUMNS) and len(lines) == 5


def test_compare_errors():
    with pytest.raises(ValidationError):
        compare([])
    a = EvalReport("a", 10, "x", {}, [QueryRow("q", 1.0, 1.0, 1.0, 10)])
    b = EvalReport("b", 10, "y", {}, [QueryRow("q", 1.0, 1.0, 1.0, 10)])
    with pytest.raises(ValidationError):
        compare([a, b])


def test_report_roundtrip(tmp_path, small_ds):
    from sisindex.evaluation import load_report, save_report

    rep = evaluate_linear(small_ds, DenseScorer("l2"), timing=False)
    save_report(rep, tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back.to_document() == rep.to_document()
