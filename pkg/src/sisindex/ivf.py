"""IVF-Flat baseline: k-means coarse quantizer with nprobe-style probing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import FormatError, RangeError, ValidationError, VersionError
from .features import DENSE, FeatureRecord, FeatureStore
from .retrieval import DEFAULT_TOP_K, DenseScorer, RankedResult, rank_positions

IVF_FORMAT_VERSION = 1


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    diff = X - centers[0]
    d2 = (diff * diff).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        # d2 > 0 somewhere because k <= number of distinct vectors
        pick = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        pick = min(pick, n - 1)
        while d2[pick] == 0:
            pick = (pick + 1) % n
        centers[c] = X[pick]
        diff = X - centers[c]
        np.minimum(d2, (diff * diff).sum(axis=1), out=d2)
    return centers


def kmeans(vectors, k: int, max_iters: int = 25, seed: int = 0, tol: float = 1e-4) -> np.ndarray:
    """k-means++ seeding followed by Lloyd iterations.

    Stops at a fixed point of the assignment, after ``max_iters`` updates, or
    once the Frobenius norm of the centroid shift falls below ``tol`` times the
    centroid norm. Empty clusters keep their previous centroid.
    """
    X = np.ascontiguousarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("kmeans needs a non-empty (n, d) matrix")
    if max_iters < 1:
        raise RangeError("max_iters must be >= 1")
    if k < 1:
        raise RangeError("k must be >= 1")
    distinct = np.unique(X, axis=0).shape[0]
    if k > distinct:
        raise RangeError(f"k={k} exceeds the {distinct} distinct vectors")
    rng = np.random.default_rng(seed)
    centers = np.ascontiguousarray(_kmeans_pp(X, k, rng))
    labels = None
    for _ in range(max_iters):
        new_labels = kernels.nearest_centroid(X, centers)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=k)
        updated = centers.copy()
        nonempty = counts > 0
        updated[nonempty] = sums[nonempty] / counts[nonempty, None]
        shift = np.linalg.norm(updated - centers)
        scale = np.linalg.norm(centers)
        centers = np.ascontiguousarray(updated)
        if shift <= tol * max(scale, np.finfo(float).tiny):
            break
    return centers


@dataclass(frozen=True, eq=False)
class IvfIndex:
    nlist: int
    seed: int
    centroids: np.ndarray = field(repr=False)
    item_ids: tuple[str, ...] = field(repr=False)
    cells: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def item_count(self) -> int:
        return len(self.item_ids)

    @property
    def cell_sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.cells], dtype=np.int64)

    def cell_members(self, c: int) -> list[str]:
        return [self.item_ids[p] for p in self.cells[c].tolist()]

    def __eq__(self, other):
        if not isinstance(other, IvfIndex):
            return NotImplemented
        return (
            self.nlist == other.nlist
            and self.seed == other.seed
            and self.item_ids == other.item_ids
            and self.centroids.tobytes() == other.centroids.tobytes()
            and len(self.cells) == len(other.cells)
            and all(np.array_equal(a, b) for a, b in zip(self.cells, other.cells))
        )

    __hash__ = None


def ivf_build(features: FeatureStore, nlist: int, seed: int = 0, max_iters: int = 25) -> IvfIndex:
    if features.kind != DENSE:
        raise ValidationError("IVF-Flat needs fixed-size dense features; keypoint sets are unsupported")
    if not 1 <= nlist <= len(features):
        raise RangeError(f"nlist={nlist} outside [1, {len(features)}]")
    centroids = kmeans(features.matrix, nlist, max_iters=max_iters, seed=seed)
    return _assemble(nlist, seed, centroids, features)


def _assemble(nlist, seed, centroids, features: FeatureStore) -> IvfIndex:
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    labels = kernels.nearest_centroid(features.matrix, centroids)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(nlist + 1))
    cells = tuple(np.ascontiguousarray(order[bounds[c]:bounds[c + 1]], dtype=np.int64) for c in range(nlist))
    centroids.setflags(write=False)
    for cell in cells:
        cell.setflags(write=False)
    return IvfIndex(nlist, seed, centroids, features.item_ids, cells)


def probe_order(query: np.ndarray, index: IvfIndex) -> np.ndarray:
    """Non-empty cells by ascending centroid distance (ties to the smaller id)."""
    diff = index.centroids - np.asarray(query, dtype=np.float64)
    dist = np.sqrt((diff * diff).sum(axis=1))
    order = np.lexsort((np.arange(index.nlist), dist))
    sizes = index.cell_sizes
    return order[sizes[order] > 0]


def ivf_scope(query: np.ndarray, index: IvfIndex, nprobe: int) -> np.ndarray:
    """Sorted positions of the items in the ``nprobe`` nearest non-empty cells."""
    if not 1 <= nprobe <= index.nlist:
        raise RangeError(f"nprobe={nprobe} outside [1, {index.nlist}]")
    cells = probe_order(query, index)[:nprobe]
    if len(cells) == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate([index.cells[c] for c in cells]))


def ivf_query(query: FeatureRecord, index: IvfIndex, features: FeatureStore, nprobe: int,
              metric: str = "l2", top_k: int | None = DEFAULT_TOP_K) -> tuple[RankedResult, int]:
    if features.item_ids != index.item_ids:
        raise ValidationError("feature store does not match the IVF index items")
    positions = ivf_scope(query.payload, index, nprobe)
    result = rank_positions(query, features, positions, DenseScorer(metric), None, top_k)
    return result, int(positions.shape[0])


# -- persistence -------------------------------------------------------------

def to_document(index: IvfIndex) -> dict:
    return {
        "format_version": IVF_FORMAT_VERSION,
        "nlist": index.nlist,
        "seed": index.seed,
        "centroids": index.centroids.tolist(),
        "cells": [index.cell_members(c) for c in range(index.nlist)],
    }


def dumps(index: IvfIndex) -> str:
    return json.dumps(to_document(index), separators=(",", ":")) + "\n"


def loads(text) -> IvfIndex:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"IVF index is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise FormatError("IVF index document has no format_version")
    if doc["format_version"] != IVF_FORMAT_VERSION:
        raise VersionError(f"IVF format_version {doc['format_version']!r} not supported")
    try:
        nlist, seed, centroids, cells = doc["nlist"], doc["seed"], doc["centroids"], doc["cells"]
        centroids = np.array(centroids, dtype=np.float64)
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"malformed IVF index: {exc}") from None
    if centroids.ndim != 2 or centroids.shape[0] != nlist or len(cells) != nlist:
        raise FormatError("centroid/cell counts disagree with nlist")
    item_ids = tuple(sorted(i for cell in cells for i in cell))
    if len(set(item_ids)) != len(item_ids):
        raise FormatError("an item appears in more than one cell")
    where = {i: p for p, i in enumerate(item_ids)}
    arrays = []
    for cell in cells:
        arr = np.array(sorted(where[i] for i in cell), dtype=np.int64)
        arr.setflags(write=False)
        arrays.append(arr)
    centroids.setflags(write=False)
    return IvfIndex(int(nlist), int(seed), centroids, item_ids, tuple(arrays))


def save(index: IvfIndex, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(index))


def load(path) -> IvfIndex:
    with open(path, "rb") as fh:
        return loads(fh.read())
