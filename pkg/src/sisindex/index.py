"""The Semantic Indexing Structure: top-alpha block postings and top-beta scopes."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import FormatError, RangeError, ValidationError, VersionError
from .taxonomy import BIG, ClassProbabilities, top_k_indices

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class SisIndex:
    """Per-Big-Class posting lists of ``(item, confidence)``.

    Items are addressed internally by their position in ``item_ids`` (sorted
    ascending), so "ties by item id" and "ties by position" coincide. Postings
    are held in CSR form: block ``b`` owns ``post_pos[block_off[b]:block_off[b+1]]``.
    """

    num_blocks: int
    alpha: int
    item_ids: tuple[str, ...] = field(repr=False)
    post_pos: np.ndarray = field(repr=False)
    post_conf: np.ndarray = field(repr=False)
    block_off: np.ndarray = field(repr=False)
    format_version: int = INDEX_FORMAT_VERSION

    @property
    def item_count(self) -> int:
        return len(self.item_ids)

    @property
    def block_sizes(self) -> np.ndarray:
        return np.diff(self.block_off)

    def block(self, b: int) -> list[tuple[str, float]]:
        lo, hi = self.block_off[b], self.block_off[b + 1]
        return [(self.item_ids[p], float(c)) for p, c in zip(self.post_pos[lo:hi], self.post_conf[lo:hi])]

    @property
    def blocks(self) -> list[list[tuple[str, float]]]:
        return [self.block(b) for b in range(self.num_blocks)]

    def position(self, item_id: str) -> int:
        i = int(np.searchsorted(self._ids_array, item_id))
        if i >= len(self.item_ids) or self.item_ids[i] != item_id:
            raise KeyError(item_id)
        return i

    @property
    def _ids_array(self) -> np.ndarray:
        cached = self.__dict__.get("_ids_cache")
        if cached is None:
            cached = np.array(self.item_ids, dtype=object)
            object.__setattr__(self, "_ids_cache", cached)
        return cached

    def __eq__(self, other):
        if not isinstance(other, SisIndex):
            return NotImplemented
        return (
            self.num_blocks == other.num_blocks
            and self.alpha == other.alpha
            and self.format_version == other.format_version
            and self.item_ids == other.item_ids
            and np.array_equal(self.block_off, other.block_off)
            and np.array_equal(self.post_pos, other.post_pos)
            # bitwise float comparison
            and self.post_conf.tobytes() == other.post_conf.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Scope:
    """Deduplicated union of the query's selected blocks.

    ``positions`` are sorted item positions; ``confidence[i]`` is the largest
    query-side confidence among the selected blocks containing that item.
    """

    query_id: str
    selected: tuple[tuple[int, float], ...]
    positions: np.ndarray = field(repr=False)
    confidence: np.ndarray = field(repr=False)
    item_ids: tuple[str, ...] = field(repr=False, default=())

    @property
    def s_real(self) -> int:
        return int(self.positions.shape[0])

    @property
    def members(self) -> frozenset[str]:
        return frozenset(self.item_ids[p] for p in self.positions)

    def member_ids(self) -> list[str]:
        return [self.item_ids[p] for p in self.positions]


def _as_matrix(items: Sequence[tuple[str, ClassProbabilities | np.ndarray]]):
    ids, rows = [], []
    for item_id, probs in items:
        if isinstance(probs, ClassProbabilities):
            if probs.space != BIG:
                raise ValidationError(f"{item_id}: index build needs Big-Class probabilities")
            probs = probs.values
        ids.append(item_id)
        rows.append(np.asarray(probs, dtype=np.float64))
    widths = {r.shape for r in rows}
    if len(widths) != 1 or len(next(iter(widths))) != 1:
        raise ValidationError("all probability vectors must have one common length")
    return ids, np.vstack(rows)


def build(items, alpha: int, num_blocks: int | None = None) -> SisIndex:
    """Post every item into the blocks of its top-``alpha`` Big Classes.

    ``items`` is a sequence of ``(item_id, probabilities)``; alternatively pass
    a tuple ``(ids, matrix)`` via :func:`build_from_matrix`.
    """
    items = list(items)
    if not items:
        raise ValidationError("cannot build an index over zero items")
    ids, probs = _as_matrix(items)
    return build_from_matrix(ids, probs, alpha, num_blocks)


def build_from_matrix(ids: Sequence[str], probs: np.ndarray, alpha: int, num_blocks: int | None = None) -> SisIndex:
    probs = np.asarray(probs, dtype=np.float64)
    n = len(ids)
    if n == 0:
        raise ValidationError("cannot build an index over zero items")
    if probs.ndim != 2 or probs.shape[0] != n:
        raise ValidationError(f"probability matrix shape {probs.shape} does not match {n} ids")
    if num_blocks is not None and probs.shape[1] != num_blocks:
        raise ValidationError(f"probability width {probs.shape[1]} != num_blocks {num_blocks}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise ValidationError("probabilities must be finite and nonnegative")
    num_blocks = probs.shape[1]
    if len(set(ids)) != n:
        seen = set()
        dup = next(i for i in ids if i in seen or seen.add(i))
        raise ValidationError(f"duplicate item id {dup!r}")
    if alpha < 1:
        raise RangeError(f"alpha={alpha} must be >= 1")
    if alpha > num_blocks:
        warnings.warn(f"alpha={alpha} exceeds {num_blocks} blocks; clamped", stacklevel=2)
        alpha = num_blocks

    order = sorted(range(n), key=ids.__getitem__)
    sorted_ids = tuple(ids[i] for i in order)
    probs = probs[order]

    top = top_k_indices(probs, alpha)  # (n, alpha)
    block_of = top.ravel()
    pos_of = np.repeat(np.arange(n, dtype=np.int64), alpha)
    conf_of = np.take_along_axis(probs, top, axis=1).ravel()
    # block ascending, then confidence descending, then position ascending
    perm = np.lexsort((pos_of, -conf_of, block_of))
    counts = np.bincount(block_of, minlength=num_blocks)
    block_off = np.zeros(num_blocks + 1, dtype=np.int64)
    np.cumsum(counts, out=block_off[1:])
    return _frozen(num_blocks, alpha, sorted_ids, pos_of[perm], conf_of[perm], block_off)


def _frozen(num_blocks, alpha, item_ids, post_pos, post_conf, block_off) -> SisIndex:
    post_pos = np.ascontiguousarray(post_pos, dtype=np.int64)
    post_conf = np.ascontiguousarray(post_conf, dtype=np.float64)
    block_off = np.ascontiguousarray(block_off, dtype=np.int64)
    for a in (post_pos, post_conf, block_off):
        a.setflags(write=False)
    return SisIndex(int(num_blocks), int(alpha), tuple(item_ids), post_pos, post_conf, block_off)


def _query_values(query_probs) -> tuple[str, np.ndarray]:
    if isinstance(query_probs, ClassProbabilities):
        if query_probs.space != BIG:
            raise ValidationError(f"{query_probs.item_id}: query needs Big-Class probabilities")
        return query_probs.item_id, query_probs.values
    return "", np.asarray(query_probs, dtype=np.float64)


def select_blocks(values: np.ndarray, beta: int, num_blocks: int) -> list[tuple[int, float]]:
    if values.shape != (num_blocks,):
        raise ValidationError(f"query has {values.shape[0]} confidences, index has {num_blocks} blocks")
    if not 1 <= beta <= num_blocks:
        raise RangeError(f"beta={beta} outside [1, {num_blocks}]")
    top = top_k_indices(values, beta)
    return [(int(b), float(values[b])) for b in top]


def select_scope(query_probs, beta: int, index: SisIndex) -> Scope:
    """Union of the posting lists of the query's top-``beta`` blocks."""
    query_id, values = _query_values(query_probs)
    selected = select_blocks(values, beta, index.num_blocks)
    blocks = np.array([b for b, _ in selected], dtype=np.int64)
    qconf = np.array([c for _, c in selected], dtype=np.float64)
    positions, conf = kernels.union_blocks(
        index.post_pos, index.post_conf, index.block_off, blocks, qconf, index.item_count
    )
    return Scope(query_id, tuple(selected), positions, conf, index.item_ids)


def expected_scope(n_items: int, num_blocks: int, beta: int) -> float:
    """Idealized scope size under an even spread of items over blocks."""
    if num_blocks <= 0:
        raise RangeError("num_blocks must be positive")
    return beta * n_items / num_blocks


def scope_ratio(s_real: int, n_items: int) -> float:
    if n_items <= 0:
        raise RangeError("n_items must be positive")
    if not 0 <= s_real <= n_items:
        raise RangeError(f"s_real={s_real} outside [0, {n_items}]")
    return s_real / n_items


# -- persistence -------------------------------------------------------------

def to_document(index: SisIndex) -> dict:
    blocks = []
    for b in range(index.num_blocks):
        lo, hi = index.block_off[b], index.block_off[b + 1]
        blocks.append([[index.item_ids[p], float(c)] for p, c in zip(index.post_pos[lo:hi].tolist(), index.post_conf[lo:hi])])
    return {
        "format_version": index.format_version,
        "num_blocks": index.num_blocks,
        "alpha": index.alpha,
        "item_count": index.item_count,
        "blocks": blocks,
    }


def dumps(index: SisIndex) -> str:
    # json writes floats with repr(), the shortest round-trip form
    return json.dumps(to_document(index), separators=(",", ":")) + "\n"


def loads(text: str | bytes) -> SisIndex:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"index is not valid JSON: {exc}") from None
    return from_document(doc)


def from_document(doc) -> SisIndex:
    if not isinstance(doc, dict):
        raise FormatError("index document must be an object")
    if "format_version" not in doc:
        raise FormatError("index document has no format_version")
    if doc["format_version"] != INDEX_FORMAT_VERSION:
        raise VersionError(f"index format_version {doc['format_version']!r} not supported")
    try:
        num_blocks, alpha, item_count, blocks = (doc[k] for k in ("num_blocks", "alpha", "item_count", "blocks"))
    except KeyError as exc:
        raise FormatError(f"index document missing field {exc}") from None
    if not isinstance(blocks, list) or len(blocks) != num_blocks:
        raise FormatError(f"expected {num_blocks} blocks")
    try:
        all_ids = sorted({entry[0] for blk in blocks for entry in blk})
    except (TypeError, IndexError):
        raise FormatError("malformed posting entry") from None
    if len(all_ids) != item_count:
        raise FormatError(f"postings reference {len(all_ids)} items, item_count={item_count}")
    where = {item_id: i for i, item_id in enumerate(all_ids)}
    pos, conf, off = [], [], [0]
    for blk in blocks:
        for entry in blk:
            if len(entry) != 2 or not isinstance(entry[1], (int, float)):
                raise FormatError(f"malformed posting entry {entry!r}")
            pos.append(where[entry[0]])
            conf.append(float(entry[1]))
        off.append(len(pos))
    index = _frozen(num_blocks, alpha, all_ids, np.array(pos, dtype=np.int64), np.array(conf), np.array(off))
    validate(index)
    return index


def validate(index: SisIndex) -> None:
    """Check the structural invariants; raise FormatError on violation."""
    sizes = index.block_sizes
    if int(sizes.sum()) != index.alpha * index.item_count:
        raise FormatError(
            f"{int(sizes.sum())} postings, expected alpha*N_d = {index.alpha * index.item_count}"
        )
    per_item = np.bincount(index.post_pos, minlength=index.item_count)
    if np.any(per_item != index.alpha):
        raise FormatError("some item is not posted to exactly alpha blocks")
    for b in range(index.num_blocks):
        lo, hi = index.block_off[b], index.block_off[b + 1]
        p, c = index.post_pos[lo:hi], index.post_conf[lo:hi]
        if len(np.unique(p)) != len(p):
            raise FormatError(f"block {b} has duplicate items")
        ok = (c[:-1] > c[1:]) | ((c[:-1] == c[1:]) & (p[:-1] < p[1:]))
        if not np.all(ok):
            raise FormatError(f"block {b} postings are out of order")


def save(index: SisIndex, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(index))


def load(path) -> SisIndex:
    with open(path, "rb") as fh:
        return loads(fh.read())


def block_histogram(index: SisIndex) -> np.ndarray:
    return index.block_sizes.copy()


def scopes_for(queries: Iterable, beta: int, index: SisIndex) -> list[Scope]:
    return [select_scope(q, beta, index) for q in queries]
