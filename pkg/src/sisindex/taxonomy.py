"""Child-class to Big-Class mapping and confidence aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, RangeError, ValidationError, VersionError

TAXONOMY_FORMAT_VERSION = 1

CHILD = "child"
BIG = "big"


@dataclass(frozen=True, eq=False)
class BigClassMap:
    """Surjective assignment of ``num_child`` child classes onto ``num_big`` Big Classes."""

    num_child: int
    num_big: int
    assignment: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or a.shape[0] != self.num_child:
            raise ValidationError(
                f"assignment has {a.size} entries, expected num_child={self.num_child}"
            )
        if self.num_child <= 0 or self.num_big <= 0:
            raise ValidationError("num_child and num_big must be positive")
        if a.size and (not np.issubdtype(a.dtype, np.integer)):
            raise ValidationError("assignment values must be integers")
        a = a.astype(np.int64)
        if a.min() < 0 or a.max() >= self.num_big:
            bad = int(a[(a < 0) | (a >= self.num_big)][0])
            raise RangeError(f"Big-Class id {bad} outside [0, {self.num_big})")
        counts = np.bincount(a, minlength=self.num_big)
        unused = np.flatnonzero(counts == 0)
        if unused.size:
            raise ValidationError(f"Big Class {int(unused[0])} has no child classes")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        counts.setflags(write=False)
        object.__setattr__(self, "_counts", counts)

    @property
    def children_per_big(self) -> np.ndarray:
        """Number of child classes under each Big Class."""
        return self._counts

    def children_of(self, big_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == big_id)

    def __eq__(self, other):
        if not isinstance(other, BigClassMap):
            return NotImplemented
        return (
            self.num_child == other.num_child
            and self.num_big == other.num_big
            and np.array_equal(self.assignment, other.assignment)
        )

    __hash__ = None

    @classmethod
    def identity(cls, n: int) -> "BigClassMap":
        return cls(n, n, np.arange(n))

    def to_document(self) -> dict:
        return {
            "format_version": TAXONOMY_FORMAT_VERSION,
            "num_child": self.num_child,
            "num_big": self.num_big,
            "assignment": [int(v) for v in self.assignment],
        }


def load_taxonomy(document: str | bytes | Mapping) -> BigClassMap:
    """Parse a taxonomy document (JSON text or an already-decoded mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise FormatError(f"taxonomy is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise FormatError("taxonomy document must be an object")
    missing = [k for k in ("format_version", "num_child", "num_big", "assignment") if k not in document]
    if missing:
        raise FormatError(f"taxonomy missing fields: {', '.join(missing)}")
    if document["format_version"] != TAXONOMY_FORMAT_VERSION:
        raise VersionError(
            f"taxonomy format_version {document['format_version']!r} not supported "
            f"(expected {TAXONOMY_FORMAT_VERSION})"
        )
    num_child, num_big, assignment = document["num_child"], document["num_big"], document["assignment"]
    if not isinstance(num_child, int) or not isinstance(num_big, int):
        raise FormatError("num_child and num_big must be integers")
    if not isinstance(assignment, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in assignment
    ):
        raise FormatError("assignment must be a list of integers")
    if len(assignment) != num_child:
        raise FormatError(f"assignment has {len(assignment)} entries, num_child={num_child}")
    return BigClassMap(num_child, num_big, np.array(assignment, dtype=np.int64))


def dump_taxonomy(taxonomy: BigClassMap) -> str:
    return json.dumps(taxonomy.to_document(), separators=(",", ":")) + "\n"


@dataclass(frozen=True, eq=False)
class ClassProbabilities:
    """Confidence vector of one item, in child-class or Big-Class space."""

    item_id: str
    values: np.ndarray = field(repr=False)
    space: str = BIG

    def __post_init__(self):
        if self.space not in (CHILD, BIG):
            raise ValidationError(f"unknown probability space {self.space!r}")
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValidationError(f"{self.item_id}: probabilities must be a non-empty vector")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError(f"{self.item_id}: probabilities must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def check_normalized(self, tol: float = 1e-6) -> None:
        total = math.fsum(self.values.tolist())
        if abs(total - 1.0) > tol:
            raise ValidationError(f"{self.item_id}: probabilities sum to {total}, not 1")

    def __eq__(self, other):
        if not isinstance(other, ClassProbabilities):
            return NotImplemented
        return (
            self.item_id == other.item_id
            and self.space == other.space
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def aggregate_matrix(child_probs: np.ndarray, taxonomy: BigClassMap) -> np.ndarray:
    """Row-wise Big-Class confidences for an ``(n, num_child)`` matrix.

    Children are added in ascending child-id order so the result does not
    depend on the matrix layout.
    """
    child_probs = np.asarray(child_probs, dtype=np.float64)
    if child_probs.ndim != 2 or child_probs.shape[1] != taxonomy.num_child:
        raise ValidationError(
            f"expected probabilities of width {taxonomy.num_child}, got shape {child_probs.shape}"
        )
    out = np.zeros((child_probs.shape[0], taxonomy.num_big), dtype=np.float64)
    for j, big in enumerate(taxonomy.assignment):
        out[:, big] += child_probs[:, j]
    return out


def aggregate(probs: ClassProbabilities, taxonomy: BigClassMap) -> ClassProbabilities:
    if probs.space != CHILD:
        raise ValidationError(f"{probs.item_id}: aggregate expects child-space probabilities")
    if probs.values.shape[0] != taxonomy.num_child:
        raise ValidationError(
            f"{probs.item_id}: {probs.values.shape[0]} child confidences, taxonomy has {taxonomy.num_child}"
        )
    big = aggregate_matrix(probs.values[None, :], taxonomy)[0]
    return ClassProbabilities(probs.item_id, big, BIG)


def to_big_space(probs: ClassProbabilities, taxonomy: BigClassMap) -> ClassProbabilities:
    """Aggregate child-space input; pass Big-Class input through after a width check."""
    if probs.space == CHILD:
        return aggregate(probs, taxonomy)
    if probs.values.shape[0] != taxonomy.num_big:
        raise ValidationError(
            f"{probs.item_id}: {probs.values.shape[0]} Big-Class confidences, taxonomy has {taxonomy.num_big}"
        )
    return probs


def top_k_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values; ties go to the smaller index."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[-1]
    if not 1 <= k <= n:
        raise RangeError(f"k={k} outside [1, {n}]")
    # stable sort keeps ascending index order among equal confidences
    return np.argsort(-values, axis=-1, kind="stable")[..., :k]


def top_k(probs: ClassProbabilities | Sequence[float] | np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top-``k`` Big Classes as ``(id, confidence)`` pairs, best first."""
    values = probs.values if isinstance(probs, ClassProbabilities) else np.asarray(probs, dtype=np.float64)
    idx = top_k_indices(values, k)
    return [(int(i), float(values[i])) for i in idx]
