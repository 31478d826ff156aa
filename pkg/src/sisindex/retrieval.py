"""Instance retrieval over a scope, linear scan, and semantic retrieval."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import FormatError, MissingFeatureError, RangeError, ValidationError
from .features import DENSE, KEYPOINTS, FeatureRecord, FeatureStore
from .index import Scope, SisIndex, _query_values, select_blocks

SIMILARITY = "similarity"
DISTANCE = "distance"

DEFAULT_TOP_K = 100


def _vec(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def score_dense(a, b, metric: str = "l2") -> tuple[float, str]:
    a, b = _vec(a), _vec(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    one = np.zeros(1, dtype=np.int64)
    if metric == "l2":
        return float(kernels.l2_rows(a[None, :], b, one)[0]), DISTANCE
    if metric == "cosine":
        na, nb = np.sqrt((a * a).sum()), np.sqrt((b * b).sum())
        if na == 0 or nb == 0:
            raise ValidationError("cosine similarity of a zero vector is undefined")
        return float(kernels.cosine_rows(a[None, :], np.array([na]), b, float(nb), one)[0]), SIMILARITY
    raise ValidationError(f"unknown metric {metric!r}")


def score_keypoints(q, x, ratio_threshold: float = 0.8) -> tuple[int, str]:
    """Count query descriptors passing the nearest/second-nearest ratio test against ``x``."""
    if not 0 < ratio_threshold <= 1:
        raise RangeError(f"ratio_threshold={ratio_threshold} outside (0, 1]")
    q, x = np.asarray(q, dtype=np.float64), np.asarray(x, dtype=np.float64)
    if q.ndim != 2 or x.ndim != 2 or (q.shape[0] and x.shape[0] and q.shape[1] != x.shape[1]):
        raise ValidationError(f"descriptor dimension mismatch: {q.shape} vs {x.shape}")
    if q.shape[0] == 0 or x.shape[0] == 0:
        return 0, SIMILARITY
    count = kernels.keypoint_counts(
        _vec(q), _vec(x), np.array([0, x.shape[0]], dtype=np.int64), np.zeros(1, dtype=np.int64), ratio_threshold
    )
    return int(count[0]), SIMILARITY


def adjust_score(S: float, C: float, score_kind: str) -> float:
    """Fold the block confidence into a raw score (multiply similarities, divide distances)."""
    if not C > 0:
        raise RangeError(f"block confidence must be positive, got {C}")
    if score_kind == SIMILARITY:
        return S * C
    if score_kind == DISTANCE:
        return S / C
    raise ValidationError(f"unknown score kind {score_kind!r}")


# -- scorers -----------------------------------------------------------------

class DenseScorer:
    def __init__(self, metric: str = "l2"):
        if metric not in ("l2", "cosine"):
            raise ValidationError(f"unknown dense metric {metric!r}")
        self.metric = metric
        self.score_kind = DISTANCE if metric == "l2" else SIMILARITY
        self.payload_kind = DENSE

    @property
    def name(self) -> str:
        return f"dense-{self.metric}"

    def __call__(self, query: FeatureRecord, store: FeatureStore, positions: np.ndarray) -> np.ndarray:
        q = query.payload
        if self.metric == "l2":
            return kernels.l2_rows(store.matrix, q, positions)
        qnorm = float(np.sqrt((q * q).sum()))
        if qnorm == 0 or (positions.size and np.any(store.norms[positions] == 0)):
            raise ValidationError("cosine similarity of a zero vector is undefined")
        return kernels.cosine_rows(store.matrix, store.norms, q, qnorm, positions)


class KeypointScorer:
    score_kind = SIMILARITY
    payload_kind = KEYPOINTS

    def __init__(self, ratio_threshold: float = 0.8):
        if not 0 < ratio_threshold <= 1:
            raise RangeError(f"ratio_threshold={ratio_threshold} outside (0, 1]")
        self.ratio_threshold = ratio_threshold

    @property
    def name(self) -> str:
        return f"keypoints-ratio{self.ratio_threshold:g}"

    def __call__(self, query: FeatureRecord, store: FeatureStore, positions: np.ndarray) -> np.ndarray:
        q = query.payload
        if q.shape[0] == 0:
            return np.zeros(len(positions), dtype=np.float64)
        counts = kernels.keypoint_counts(q, store.matrix, store.offsets, positions, self.ratio_threshold)
        return counts.astype(np.float64)


def make_scorer(metric: str = "l2", ratio_threshold: float = 0.8):
    """Scorer for ``metric`` in {"l2", "cosine", "keypoints"}."""
    if metric == "keypoints":
        return KeypointScorer(ratio_threshold)
    return DenseScorer(metric)


# -- ranking -----------------------------------------------------------------

class Entry(NamedTuple):
    item_id: str
    score: float
    adjusted: float | None
    confidence: float | None


@dataclass(frozen=True, eq=False)
class RankedResult:
    """A ranking held as arrays over store positions; ``entries`` materializes tuples."""

    query_id: str
    score_kind: str
    item_ids: tuple[str, ...] = field(repr=False)
    order: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    adjusted: np.ndarray | None = field(repr=False, default=None)
    confidence: np.ndarray | None = field(repr=False, default=None)

    def __len__(self):
        return int(self.order.shape[0])

    @property
    def ranked_ids(self) -> list[str]:
        ids = self.item_ids
        return [ids[p] for p in self.order.tolist()]

    @property
    def entries(self) -> list[Entry]:
        ids = self.ranked_ids
        if self.adjusted is None:
            return [Entry(i, s, None, None) for i, s in zip(ids, self.scores.tolist())]
        return [
            Entry(i, s, a, c)
            for i, s, a, c in zip(ids, self.scores.tolist(), self.adjusted.tolist(), self.confidence.tolist())
        ]

    def same_ranking(self, other: "RankedResult") -> bool:
        """Entrywise identity of ids and raw scores (bitwise)."""
        return (
            self.score_kind == other.score_kind
            and self.ranked_ids == other.ranked_ids
            and self.scores.tobytes() == other.scores.tobytes()
        )


def _check_query(query: FeatureRecord, store: FeatureStore, scorer) -> None:
    if query.kind != store.kind or query.kind != scorer.payload_kind:
        raise ValidationError(
            f"payload kind mismatch: query {query.kind}, store {store.kind}, scorer {scorer.payload_kind}"
        )
    if query.dim != store.dim and not (query.kind == KEYPOINTS and query.payload.shape[0] == 0):
        raise ValidationError(f"query dimension {query.dim} != store dimension {store.dim}")


def rank_positions(query: FeatureRecord, store: FeatureStore, positions: np.ndarray, scorer,
                   confidence: np.ndarray | None = None, top_k: int | None = DEFAULT_TOP_K) -> RankedResult:
    """Score ``store`` rows at ``positions`` (sorted, distinct) and order them."""
    _check_query(query, store, scorer)
    if top_k is not None and top_k < 1:
        raise RangeError(f"top_k={top_k} must be positive")
    positions = np.ascontiguousarray(positions, dtype=np.int64)
    raw = np.asarray(scorer(query, store, positions), dtype=np.float64)
    kind = scorer.score_kind
    adjusted = None
    if confidence is not None:
        if np.any(confidence <= 0):
            raise RangeError("block confidences must be positive to adjust scores")
        adjusted = raw * confidence if kind == SIMILARITY else raw / confidence
    key = raw if adjusted is None else adjusted
    # positions follow item-id order, so they double as the tie-breaker
    order = np.lexsort((positions, -key if kind == SIMILARITY else key))
    if top_k is not None:
        order = order[:top_k]
    return RankedResult(
        query.item_id,
        kind,
        store.item_ids,
        positions[order],
        raw[order],
        None if adjusted is None else adjusted[order],
        None if confidence is None else np.asarray(confidence, dtype=np.float64)[order],
    )


def scope_positions(scope: Scope, store: FeatureStore) -> np.ndarray:
    """Map scope members onto store positions."""
    if scope.item_ids is store.item_ids or scope.item_ids == store.item_ids:
        return scope.positions
    ids = scope.item_ids
    try:
        pos = np.fromiter((store._where[ids[p]] for p in scope.positions.tolist()), dtype=np.int64, count=scope.s_real)
    except KeyError as exc:
        raise MissingFeatureError(f"no feature for scope member {exc.args[0]!r}") from None
    return pos


def rank_scope(query: FeatureRecord, scope: Scope, features: FeatureStore, scorer=None,
               adjust: bool = False, top_k: int | None = DEFAULT_TOP_K) -> RankedResult:
    """Rank every scope member once by instance similarity, optionally confidence-adjusted."""
    scorer = scorer or DenseScorer("l2")
    pos = scope_positions(scope, features)
    conf = scope.confidence
    if pos is not scope.positions:
        # store order may differ from index order when the two id sets differ
        perm = np.argsort(pos, kind="stable")
        pos, conf = pos[perm], conf[perm]
    return rank_positions(query, features, pos, scorer, conf if adjust else None, top_k)


def linear_scan(query: FeatureRecord, features: FeatureStore, scorer=None,
                top_k: int | None = DEFAULT_TOP_K) -> RankedResult:
    scorer = scorer or DenseScorer("l2")
    return rank_positions(query, features, _all_positions(len(features)), scorer, None, top_k)


_ARANGE_CACHE: dict[int, np.ndarray] = {}


def _all_positions(n: int) -> np.ndarray:
    arr = _ARANGE_CACHE.get(n)
    if arr is None:
        arr = np.arange(n, dtype=np.int64)
        arr.setflags(write=False)
        _ARANGE_CACHE[n] = arr
    return arr


def semantic_retrieve(query_probs, beta: int, index: SisIndex) -> list[tuple[int, str, float]]:
    """Highest-confidence item of each selected block, blocks in query-confidence order."""
    _, values = _query_values(query_probs)
    out = []
    for b, _ in select_blocks(values, beta, index.num_blocks):
        lo, hi = index.block_off[b], index.block_off[b + 1]
        if hi > lo:
            out.append((b, index.item_ids[index.post_pos[lo]], float(index.post_conf[lo])))
    return out


# -- results file --------------------------------------------------------------

def result_to_json(result: RankedResult, **extra) -> str:
    doc = {"query_id": result.query_id, "score_kind": result.score_kind, "adjusted": result.adjusted is not None}
    ids = result.ranked_ids
    if result.adjusted is None:
        doc["entries"] = [[i, s] for i, s in zip(ids, result.scores.tolist())]
    else:
        doc["entries"] = [
            [i, s, c, a]
            for i, s, c, a in zip(ids, result.scores.tolist(), result.confidence.tolist(), result.adjusted.tolist())
        ]
    doc.update(extra)
    return json.dumps(doc, separators=(",", ":"))


@dataclass
class ResultRecord:
    """A ranking read back from a results file."""

    query_id: str
    score_kind: str
    entries: list[Entry]
    extra: dict = field(default_factory=dict)

    @property
    def ranked_ids(self) -> list[str]:
        return [e.item_id for e in self.entries]

    def __len__(self):
        return len(self.entries)


def result_from_json(line: str) -> ResultRecord:
    try:
        doc = json.loads(line)
        qid, kind, adjusted, raw = doc.pop("query_id"), doc.pop("score_kind"), doc.pop("adjusted"), doc.pop("entries")
        if adjusted:
            entries = [Entry(i, float(s), float(a), float(c)) for i, s, c, a in raw]
        else:
            entries = [Entry(i, float(s), None, None) for i, s in raw]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad result record: {exc}") from None
    return ResultRecord(qid, kind, entries, doc)


def read_results(path) -> list[ResultRecord]:
    with open(path, encoding="utf-8") as fh:
        return [result_from_json(line) for line in fh if line.strip()]
