"""Instance features (dense vectors or variable-size keypoint sets) and their store."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, MissingFeatureError, ValidationError

DENSE = "dense"
KEYPOINTS = "keypoints"


@dataclass(frozen=True, eq=False)
class FeatureRecord:
    """One item's feature.

    ``payload`` is a 1-D vector for ``kind == "dense"`` and an ``(m, d)``
    descriptor matrix (``m`` may be 0 and varies per item) for ``"keypoints"``.
    """

    item_id: str
    kind: str
    payload: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.payload, dtype=np.float64)
        if self.kind == DENSE:
            if arr.ndim != 1 or arr.size == 0:
                raise ValidationError(f"{self.item_id}: dense payload must be a non-empty vector")
        elif self.kind == KEYPOINTS:
            if arr.size == 0 and arr.ndim != 2:
                raise ValidationError(f"{self.item_id}: empty keypoint sets need an explicit (0, d) shape")
            if arr.ndim != 2:
                raise ValidationError(f"{self.item_id}: keypoint payload must be a 2-D descriptor list")
        else:
            raise ValidationError(f"{self.item_id}: unknown payload kind {self.kind!r}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{self.item_id}: non-finite feature values")
        arr.setflags(write=False)
        object.__setattr__(self, "payload", arr)

    @classmethod
    def dense(cls, item_id: str, vector) -> "FeatureRecord":
        return cls(item_id, DENSE, vector)

    @classmethod
    def keypoints(cls, item_id: str, descriptors, dim: int | None = None) -> "FeatureRecord":
        arr = np.asarray(descriptors, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, dim if dim is not None else (arr.shape[-1] if arr.ndim == 2 else 0))
        return cls(item_id, KEYPOINTS, arr)

    @property
    def dim(self) -> int:
        return int(self.payload.shape[-1])

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.item_id == other.item_id
            and self.kind == other.kind
            and self.payload.shape == other.payload.shape
            and self.payload.tobytes() == other.payload.tobytes()
        )

    __hash__ = None


class FeatureStore:
    """Read-only, position-addressed storage for one dataset's features.

    Dense payloads are packed into an ``(n, D)`` matrix; keypoint payloads are
    concatenated into one descriptor matrix with per-item offsets.
    """

    def __init__(self, records: Iterable[FeatureRecord]):
        records = sorted(records, key=lambda r: r.item_id)
        if not records:
            raise ValidationError("feature store is empty")
        kinds = {r.kind for r in records}
        if len(kinds) != 1:
            raise ValidationError("feature store mixes dense and keypoint payloads")
        dims = {r.dim for r in records}
        if len(dims) != 1:
            raise ValidationError(f"inconsistent feature dimensions {sorted(dims)}")
        self.kind = kinds.pop()
        self.dim = dims.pop()
        self.item_ids: tuple[str, ...] = tuple(r.item_id for r in records)
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValidationError("duplicate item ids in feature store")
        self._where = {item_id: i for i, item_id in enumerate(self.item_ids)}
        if self.kind == DENSE:
            self.matrix = np.ascontiguousarray(np.vstack([r.payload for r in records]))
            self.norms = np.sqrt((self.matrix * self.matrix).sum(axis=1))
            self.offsets = None
        else:
            counts = np.array([r.payload.shape[0] for r in records], dtype=np.int64)
            self.offsets = np.zeros(len(records) + 1, dtype=np.int64)
            np.cumsum(counts, out=self.offsets[1:])
            self.matrix = np.ascontiguousarray(
                np.vstack([r.payload for r in records]) if self.offsets[-1] else np.zeros((0, self.dim))
            )
            self.norms = None
        for arr in (self.matrix, self.norms, self.offsets):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return len(self.item_ids)

    def __contains__(self, item_id):
        return item_id in self._where

    def position(self, item_id: str) -> int:
        try:
            return self._where[item_id]
        except KeyError:
            raise MissingFeatureError(f"no feature for item {item_id!r}") from None

    def positions(self, item_ids: Sequence[str]) -> np.ndarray:
        return np.fromiter((self.position(i) for i in item_ids), dtype=np.int64, count=len(item_ids))

    def record(self, item_id: str) -> FeatureRecord:
        i = self.position(item_id)
        if self.kind == DENSE:
            return FeatureRecord(item_id, DENSE, self.matrix[i])
        return FeatureRecord(item_id, KEYPOINTS, self.matrix[self.offsets[i]:self.offsets[i + 1]])

    def records(self) -> list[FeatureRecord]:
        return [self.record(i) for i in self.item_ids]

    def descriptor_counts(self) -> np.ndarray:
        if self.kind != KEYPOINTS:
            raise ValidationError("descriptor counts only exist for keypoint stores")
        return np.diff(self.offsets)


# -- JSON-lines I/O ----------------------------------------------------------

def record_to_json(rec: FeatureRecord) -> str:
    doc = {"item_id": rec.item_id, "kind": rec.kind}
    if rec.kind == DENSE:
        doc["vector"] = rec.payload.tolist()
    else:
        doc["dim"] = rec.dim
        doc["descriptors"] = rec.payload.tolist()
    return json.dumps(doc, separators=(",", ":"))


def record_from_json(line: str) -> FeatureRecord:
    try:
        doc = json.loads(line)
        item_id, kind = doc["item_id"], doc["kind"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"bad feature record: {exc}") from None
    if kind == DENSE:
        return FeatureRecord.dense(item_id, doc.get("vector"))
    if kind == KEYPOINTS:
        return FeatureRecord.keypoints(item_id, doc.get("descriptors"), doc.get("dim"))
    raise FormatError(f"{item_id}: unknown payload kind {kind!r}")


def write_features(records: Iterable[FeatureRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def read_features(path) -> list[FeatureRecord]:
    with open(path, encoding="utf-8") as fh:
        return [record_from_json(line) for line in fh if line.strip()]


def load_store(path) -> FeatureStore:
    return FeatureStore(read_features(path))
