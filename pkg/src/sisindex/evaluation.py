"""Retrieval metrics, timed evaluation runs, DEF/QEF sweeps and comparison tables."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, RangeError, ValidationError

REPORT_FORMAT_VERSION = 1


class GroundTruth:
    """Graded relevance per query: ``{query_id: {item_id: grade}}`` with grades in [0, 1]."""

    def __init__(self, grades: Mapping[str, Mapping[str, float]]):
        self._grades: dict[str, dict[str, float]] = {}
        for qid, items in grades.items():
            clean = {}
            for item_id, g in items.items():
                g = float(g)
                if not 0.0 <= g <= 1.0:
                    raise ValidationError(f"{qid}/{item_id}: grade {g} outside [0, 1]")
                clean[item_id] = g
            if not any(g > 0 for g in clean.values()):
                raise ValidationError(f"query {qid} has no ground truth")
            self._grades[qid] = clean

    def __contains__(self, qid):
        return qid in self._grades

    def __len__(self):
        return len(self._grades)

    def __iter__(self):
        return iter(self._grades)

    def __eq__(self, other):
        return isinstance(other, GroundTruth) and self._grades == other._grades

    def grades(self, qid: str) -> dict[str, float]:
        try:
            return self._grades[qid]
        except KeyError:
            raise ValidationError(f"no ground truth for query {qid!r}") from None

    def n_gt(self, qid: str) -> float:
        """Total positive grade mass of the query's ground truth."""
        return math.fsum(g for g in self.grades(qid).values() if g > 0)

    def relevance(self, qid: str, ranked_ids: Sequence[str]) -> np.ndarray:
        g = self.grades(qid)
        return np.fromiter((g.get(i, 0.0) for i in ranked_ids), dtype=np.float64, count=len(ranked_ids))


def write_ground_truth(gt: GroundTruth, path, order: Iterable[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid in order if order is not None else gt:
            fh.write(json.dumps({"query_id": qid, "relevant": gt.grades(qid)}, separators=(",", ":")) + "\n")


def read_ground_truth(path) -> GroundTruth:
    grades = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                grades[doc["query_id"]] = doc["relevant"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}: bad ground-truth record: {exc}") from None
    return GroundTruth(grades)


# -- per-query metrics ---------------------------------------------------------

def _ranking(ranked) -> tuple[str, list[str]]:
    if isinstance(ranked, tuple):
        return ranked[0], list(ranked[1])
    return ranked.query_id, ranked.ranked_ids


def precision_from_grades(grades: Sequence[float], k: int) -> float:
    grades = np.asarray(grades, dtype=np.float64)
    if k < 1:
        raise RangeError("k must be >= 1")
    if k > grades.shape[0]:
        raise RangeError(f"k={k} exceeds the {grades.shape[0]} ranked entries")
    return math.fsum(grades[:k].tolist()) / k


def literal_ap_from_grades(grades: Sequence[float], n_gt: float) -> float:
    """Sum of precision@k over every rank of the list, divided by the ground-truth mass.

    Not clamped: precision at non-relevant ranks is included, so the value can exceed 1.
    """
    grades = np.asarray(grades, dtype=np.float64)
    if n_gt <= 0:
        raise ValidationError("ground-truth mass must be positive")
    if grades.size == 0:
        return 0.0
    prec = np.cumsum(grades) / np.arange(1, grades.size + 1)
    return math.fsum(prec.tolist()) / n_gt


def standard_ap_from_grades(grades: Sequence[float], n_gt: float) -> float:
    """Conventional AP (precision sampled at relevant ranks only). Not the index's headline metric."""
    grades = np.asarray(grades, dtype=np.float64)
    if n_gt <= 0:
        raise ValidationError("ground-truth mass must be positive")
    if grades.size == 0:
        return 0.0
    prec = np.cumsum(grades) / np.arange(1, grades.size + 1)
    return math.fsum((prec * grades).tolist()) / n_gt


def precision_at_k(ranked, gt: GroundTruth, k: int) -> float:
    qid, ids = _ranking(ranked)
    return precision_from_grades(gt.relevance(qid, ids), k)


def average_precision(ranked, gt: GroundTruth) -> float:
    qid, ids = _ranking(ranked)
    return literal_ap_from_grades(gt.relevance(qid, ids), gt.n_gt(qid))


def standard_average_precision(ranked, gt: GroundTruth) -> float:
    qid, ids = _ranking(ranked)
    return standard_ap_from_grades(gt.relevance(qid, ids), gt.n_gt(qid))


def mean_ap(aps: Sequence[float]) -> float:
    if len(aps) == 0:
        raise ValidationError("mAP over an empty query set")
    return math.fsum(aps) / len(aps)


def query_recall(qid: str, members, gt: GroundTruth) -> float:
    """Fraction of the query's ground-truth mass that lies inside ``members``."""
    grades = gt.grades(qid)
    recalled = math.fsum(g for i, g in grades.items() if g > 0 and i in members)
    return recalled / gt.n_gt(qid)


def recall(scopes: Mapping[str, Iterable[str]], gt: GroundTruth) -> float:
    """Mean recalled ground-truth fraction; ``scopes`` maps query id to its scope members."""
    if not scopes:
        raise ValidationError("recall over an empty query set")
    values = []
    for qid, members in scopes.items():
        if qid not in gt:
            raise ValidationError(f"no ground truth for query {qid!r}")
        members = members if isinstance(members, (set, frozenset)) else set(members)
        values.append(query_recall(qid, members, gt))
    return math.fsum(values) / len(values)


def ratio_scope(s_reals: Sequence[int], n_items: int) -> float:
    if n_items <= 0:
        raise RangeError("n_items must be positive")
    if len(s_reals) == 0:
        raise ValidationError("ratio_scope over an empty query set")
    return math.fsum(s / n_items for s in s_reals) / len(s_reals)


def ratio_time(t_idx: Sequence[float], t_whl: Sequence[float]) -> float:
    if len(t_idx) != len(t_whl) or len(t_idx) == 0:
        raise ValidationError("ratio_time needs matching, non-empty timing lists")
    if any(t <= 0 for t in t_whl):
        raise RangeError("whole-scan time must be positive")
    return math.fsum(a / b for a, b in zip(t_idx, t_whl)) / len(t_idx)


# -- reports -----------------------------------------------------------------

@dataclass
class QueryRow:
    query_id: str
    ap: float
    ap_standard: float
    recall: float
    s_real: int
    t_idx: float | None = None
    t_whl: float | None = None


@dataclass
class EvalReport:
    name: str
    n_items: int
    dataset: str
    config: dict
    rows: list[QueryRow] = field(default_factory=list)

    @property
    def mAP(self) -> float:
        return mean_ap([r.ap for r in self.rows])

    @property
    def mAP_standard(self) -> float:
        return mean_ap([r.ap_standard for r in self.rows])

    @property
    def recall(self) -> float:
        return math.fsum(r.recall for r in self.rows) / len(self.rows)

    @property
    def ratio_scope(self) -> float:
        return ratio_scope([r.s_real for r in self.rows], self.n_items)

    @property
    def ratio_time(self) -> float | None:
        if any(r.t_idx is None or r.t_whl is None for r in self.rows):
            return None
        return ratio_time([r.t_idx for r in self.rows], [r.t_whl for r in self.rows])

    def aggregates(self) -> dict:
        return {
            "mAP": self.mAP,
            "mAP_standard": self.mAP_standard,
            "Recall": self.recall,
            "Ratio_scope": self.ratio_scope,
            "Ratio_time": self.ratio_time,
            "N_t": len(self.rows),
        }

    def to_document(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "name": self.name,
            "n_items": self.n_items,
            "dataset": self.dataset,
            "config": self.config,
            "aggregates": self.aggregates(),
            "queries": [asdict(r) for r in self.rows],
        }

    @classmethod
    def from_document(cls, doc: dict) -> "EvalReport":
        if doc.get("format_version") != REPORT_FORMAT_VERSION:
            raise FormatError(f"report format_version {doc.get('format_version')!r} not supported")
        try:
            return cls(doc["name"], doc["n_items"], doc["dataset"], doc["config"],
                       [QueryRow(**r) for r in doc["queries"]])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed report: {exc}") from None


def save_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_document(), fh, indent=1)
        fh.write("\n")


def load_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        try:
            return EvalReport.from_document(json.load(fh))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None


# -- timed runs --------------------------------------------------------------

def _timed(fn, repeats: int):
    best, out = math.inf, None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def linear_times(ds, scorer, repeats: int = 3) -> np.ndarray:
    """Minimum wall-clock linear-scan time per query (full ranking)."""
    from .retrieval import linear_scan

    times = np.empty(len(ds.query_ids))
    for j in range(len(ds.query_ids)):
        q = ds.query_record(j)
        _, times[j] = _timed(lambda: linear_scan(q, ds.db_features, scorer, top_k=None), repeats)
    return times


def _report_rows(ds, results, members, s_reals, t_idx, t_whl) -> list[QueryRow]:
    gt = ds.ground_truth
    rows = []
    for j, qid in enumerate(ds.query_ids):
        ids = results[j].ranked_ids
        rel = gt.relevance(qid, ids)
        n_gt = gt.n_gt(qid)
        rows.append(QueryRow(
            qid,
            literal_ap_from_grades(rel, n_gt),
            standard_ap_from_grades(rel, n_gt),
            query_recall(qid, members[j], gt),
            int(s_reals[j]),
            None if t_idx is None else float(t_idx[j]),
            None if t_whl is None else float(t_whl[j]),
        ))
    return rows


def evaluate_linear(ds, scorer, timing: bool = True, repeats: int = 3, name: str = "LinearScan") -> EvalReport:
    from .retrieval import linear_scan

    results, times = [], []
    for j in range(len(ds.query_ids)):
        q = ds.query_record(j)
        res, t = _timed(lambda: linear_scan(q, ds.db_features, scorer, top_k=None), repeats if timing else 1)
        results.append(res)
        times.append(t)
    everything = frozenset(ds.db_features.item_ids)
    t = times if timing else None
    # the reference run is its own baseline: t_idx == t_whl by construction
    rows = _report_rows(ds, results, [everything] * len(results), [ds.n_items] * len(results), t, t)
    config = {"index": name, "detector": scorer.name, "b_total": None, "b_selected": None}
    return EvalReport(name, ds.n_items, ds.fingerprint(), config, rows)


def evaluate_sis(ds, index, beta: int, scorer, adjust: bool = False, timing: bool = True, repeats: int = 3,
                 t_whl=None, name: str | None = None, return_scopes: bool = False):
    from .index import select_scope
    from .retrieval import rank_scope
    from .taxonomy import BIG, ClassProbabilities

    big = ds.query_big()
    results, scopes, t_idx = [], [], []
    for j, qid in enumerate(ds.query_ids):
        q = ds.query_record(j)
        qp = ClassProbabilities(qid, big[j], BIG)

        def run():
            scope = select_scope(qp, beta, index)
            return scope, rank_scope(q, scope, ds.db_features, scorer, adjust=adjust, top_k=None)

        (scope, res), t = _timed(run, repeats if timing else 1)
        scopes.append(scope)
        results.append(res)
        t_idx.append(t)
    if timing and t_whl is None:
        t_whl = linear_times(ds, scorer, repeats)
    name = name or ("SIS+Confidence" if adjust else "SIS")
    rows = _report_rows(
        ds, results, [s.members for s in scopes], [s.s_real for s in scopes],
        t_idx if timing else None, t_whl if timing else None,
    )
    config = {
        "index": name, "detector": scorer.name, "b_total": index.num_blocks, "b_selected": beta,
        "alpha": index.alpha, "beta": beta, "adjust": adjust,
    }
    report = EvalReport(name, ds.n_items, ds.fingerprint(), config, rows)
    return (report, scopes, results) if return_scopes else report


def evaluate_ivf(ds, ivf_index, nprobe: int, metric: str = "l2", timing: bool = True, repeats: int = 3,
                 t_whl=None, name: str = "IVF-Flat", return_scopes: bool = False):
    from .ivf import ivf_scope
    from .retrieval import DenseScorer, rank_positions

    scorer = DenseScorer(metric)
    ids = ds.db_features.item_ids
    results, members, s_reals, t_idx = [], [], [], []
    for j in range(len(ds.query_ids)):
        q = ds.query_record(j)

        def run():
            pos = ivf_scope(q.payload, ivf_index, nprobe)
            return pos, rank_positions(q, ds.db_features, pos, scorer, None, None)

        (pos, res), t = _timed(run, repeats if timing else 1)
        results.append(res)
        members.append(frozenset(ids[p] for p in pos.tolist()))
        s_reals.append(len(pos))
        t_idx.append(t)
    if timing and t_whl is None:
        t_whl = linear_times(ds, scorer, repeats)
    rows = _report_rows(ds, results, members, s_reals, t_idx if timing else None, t_whl if timing else None)
    config = {"index": name, "detector": scorer.name, "b_total": ivf_index.nlist, "b_selected": nprobe,
              "nlist": ivf_index.nlist, "nprobe": nprobe, "seed": ivf_index.seed}
    report = EvalReport(name, ds.n_items, ds.fingerprint(), config, rows)
    return (report, members, results) if return_scopes else report


def recompute_from_scopes(scopes: Mapping[str, Iterable[str]], gt: GroundTruth, n_items: int) -> tuple[float, float]:
    """Recall and Ratio_scope from persisted scope membership alone (no re-scoring)."""
    materialized = {q: set(m) for q, m in scopes.items()}
    return recall(materialized, gt), ratio_scope([len(m) for m in materialized.values()], n_items)


# -- sweep -------------------------------------------------------------------

SWEEP_COLUMNS = ("alpha", "beta", "mAP", "Recall", "Ratio_scope", "Ratio_time")


@dataclass
class SweepRow:
    alpha: int
    beta: int
    mAP: float
    Recall: float
    Ratio_scope: float
    Ratio_time: float | None


def sweep(ds, alphas: Sequence[int], betas: Sequence[int], scorer, timing: bool = True,
          repeats: int = 3) -> list[SweepRow]:
    """Evaluate SIS over the alpha x beta grid, one index build per alpha."""
    from .index import build_from_matrix

    if not alphas or not betas:
        raise ValidationError("sweep grid must be non-empty")
    t_whl = linear_times(ds, scorer, repeats) if timing else None
    rows = []
    for alpha in alphas:
        index = build_from_matrix(ds.db_ids, ds.db_big(), alpha)
        for beta in betas:
            rep = evaluate_sis(ds, index, beta, scorer, timing=timing, repeats=repeats, t_whl=t_whl)
            rows.append(SweepRow(alpha, beta, rep.mAP, rep.recall, rep.ratio_scope, rep.ratio_time))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r.alpha, r.beta, repr(r.mAP), repr(r.Recall), repr(r.Ratio_scope),
                    "" if r.Ratio_time is None else repr(r.Ratio_time)])
    return buf.getvalue()


# -- comparison table ----------------------------------------------------------

COMPARE_COLUMNS = ("Index", "Detector", "b_total", "b_selected", "mAP", "Recall", "Ratio_scope", "Ratio_time")


def compare(runs: Sequence[EvalReport]) -> dict:
    """Comparison document with one row per run, columns as in ``COMPARE_COLUMNS``."""
    if not runs:
        raise ValidationError("nothing to compare")
    datasets = {(r.dataset, r.n_items) for r in runs}
    if len(datasets) != 1:
        raise ValidationError(f"runs come from different datasets: {sorted(datasets)}")
    queries = {tuple(q.query_id for q in r.rows) for r in runs}
    if len(queries) != 1:
        raise ValidationError("runs evaluate different query sets")
    rows = []
    for r in runs:
        rows.append({
            "Index": r.config.get("index", r.name),
            "Detector": r.config.get("detector", "-"),
            "b_total": r.config.get("b_total"),
            "b_selected": r.config.get("b_selected"),
            "mAP": r.mAP,
            "Recall": r.recall,
            "Ratio_scope": r.ratio_scope,
            "Ratio_time": r.ratio_time,
        })
    return {"columns": list(COMPARE_COLUMNS), "dataset": runs[0].dataset, "n_items": runs[0].n_items, "rows": rows}


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3f}" if not v.is_integer() else f"{v:g}"
    return str(v)


def format_table(doc: dict) -> str:
    """Aligned plain-text rendering of a comparison document."""
    cols = doc["columns"]
    body = [[_cell(row[c]) for c in cols] for row in doc["rows"]]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"
