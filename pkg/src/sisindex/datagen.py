"""Reproducible synthetic datasets with controllable semantic skew.

Items come in instance groups. Every group has a true child class, drawn so
that its Big Class follows a Zipf law, and a feature prototype. Database items
and queries are noisy draws from a group; a query's ground truth is every
database item of its group (grade 1).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FormatError, RangeError, ValidationError
from .evaluation import GroundTruth, read_ground_truth, write_ground_truth
from .features import DENSE, KEYPOINTS, FeatureRecord, FeatureStore, read_features, write_features
from .taxonomy import BIG, CHILD, BigClassMap, ClassProbabilities, aggregate_matrix, dump_taxonomy, load_taxonomy

TAXONOMY_FILE = "taxonomy.json"
DB_PROBS_FILE = "db_probs.jsonl"
QUERY_PROBS_FILE = "query_probs.jsonl"
DB_FEATURES_FILE = "db_features.jsonl"
QUERY_FEATURES_FILE = "query_features.jsonl"
GROUND_TRUTH_FILE = "ground_truth.jsonl"
CONFIG_FILE = "config.json"


@dataclass(frozen=True)
class GenConfig:
    seed: int = 42
    num_child: int = 200
    num_big: int = 50
    n_items: int = 2000
    n_queries: int = 200
    skew: float = 1.0
    group_size: int = 5
    prob_concentration: float = 0.07
    feature_kind: str = DENSE
    dim: int = 32
    kp_min: int = 5
    kp_max: int = 50
    noise: float = 0.05

    def __post_init__(self):
        for name in ("num_child", "num_big", "n_items", "n_queries", "group_size", "dim"):
            if getattr(self, name) < 1:
                raise RangeError(f"{name} must be positive")
        if self.skew < 0:
            raise RangeError("skew must be >= 0")
        if not 0 <= self.prob_concentration <= 1:
            raise RangeError("prob_concentration must lie in [0, 1]")
        if self.noise < 0:
            raise RangeError("noise must be >= 0")
        if self.group_size > self.n_items:
            raise ValidationError(f"group_size={self.group_size} exceeds n_items={self.n_items}")
        if self.num_big > self.num_child:
            raise ValidationError(f"num_big={self.num_big} exceeds num_child={self.num_child}")
        if self.feature_kind not in (DENSE, KEYPOINTS):
            raise ValidationError(f"unknown feature kind {self.feature_kind!r}")
        if self.feature_kind == KEYPOINTS and not 0 <= self.kp_min <= self.kp_max:
            raise RangeError("need 0 <= kp_min <= kp_max")

    @property
    def n_groups(self) -> int:
        return -(-self.n_items // self.group_size)


@dataclass
class Dataset:
    """A generated (or loaded) benchmark bundle; all probabilities are child-space."""

    config: GenConfig | None
    taxonomy: BigClassMap
    db_ids: list[str]
    db_probs: np.ndarray = field(repr=False)
    query_ids: list[str] = field(repr=False)
    query_probs: np.ndarray = field(repr=False)
    db_features: FeatureStore = field(repr=False)
    query_features: FeatureStore = field(repr=False)
    ground_truth: GroundTruth = field(repr=False)
    db_groups: np.ndarray | None = field(repr=False, default=None)
    query_groups: np.ndarray | None = field(repr=False, default=None)

    @property
    def n_items(self) -> int:
        return len(self.db_ids)

    def db_big(self) -> np.ndarray:
        return self._big("_db_big", self.db_probs)

    def query_big(self) -> np.ndarray:
        return self._big("_query_big", self.query_probs)

    def _big(self, attr, probs):
        cached = self.__dict__.get(attr)
        if cached is None:
            cached = aggregate_matrix(probs, self.taxonomy) if probs.shape[1] == self.taxonomy.num_child else probs
            self.__dict__[attr] = cached
        return cached

    def query_probabilities(self) -> list[ClassProbabilities]:
        big = self.query_big()
        return [ClassProbabilities(q, big[i], BIG) for i, q in enumerate(self.query_ids)]

    def query_record(self, i: int) -> FeatureRecord:
        return self.query_features.record(self.query_ids[i])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for part in (self.db_ids, self.query_ids):
            h.update("\n".join(part).encode())
            h.update(b"\0")
        return h.hexdigest()[:16]


def make_taxonomy(num_child: int, num_big: int, rng: np.random.Generator) -> BigClassMap:
    """Random surjective map: each Big Class gets one child, the rest are spread at random."""
    assignment = np.concatenate([np.arange(num_big), rng.integers(0, num_big, num_child - num_big)])
    rng.shuffle(assignment)
    return BigClassMap(num_child, num_big, assignment)


def zipf_weights(n: int, skew: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** skew
    return w / w.sum()


def _probability_rows(true_child: np.ndarray, group_mix: np.ndarray, taxonomy: BigClassMap,
                      concentration: float, rng: np.random.Generator) -> np.ndarray:
    """``concentration`` on the true Big Class's children, the rest spread over the
    other Big Classes by a per-item Dirichlet blended with the group background.

    Leftover mass is drawn per Big Class and split evenly among its children, so
    Big Classes with many children are not favoured.
    """
    n = true_child.shape[0]
    own = rng.dirichlet(np.ones(taxonomy.num_big), size=n)
    background = 0.5 * group_mix + 0.5 * own
    big_of_true = taxonomy.assignment[true_child]
    background[np.arange(n), big_of_true] = 0.0
    background /= background.sum(axis=1, keepdims=True)
    big = (1.0 - concentration) * background
    big[np.arange(n), big_of_true] += concentration
    per_child = big[:, taxonomy.assignment] / taxonomy.children_per_big[taxonomy.assignment]
    return per_child / per_child.sum(axis=1, keepdims=True)


def generate(config: GenConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    taxonomy = make_taxonomy(config.num_child, config.num_big, rng)
    n_groups = config.n_groups

    # Zipf over a random ranking of the Big Classes
    big_rank = rng.permutation(config.num_big)
    group_big = big_rank[rng.choice(config.num_big, size=n_groups, p=zipf_weights(config.num_big, config.skew))]
    group_child = np.array([rng.choice(taxonomy.children_of(b)) for b in group_big], dtype=np.int64)
    group_mix = rng.dirichlet(np.ones(config.num_big), size=n_groups)

    db_groups = np.arange(config.n_items) // config.group_size
    query_groups = rng.integers(0, n_groups, config.n_queries)

    db_probs = _probability_rows(group_child[db_groups], group_mix[db_groups], taxonomy, config.prob_concentration, rng)
    query_probs = _probability_rows(
        group_child[query_groups], group_mix[query_groups], taxonomy, config.prob_concentration, rng
    )

    width = len(str(max(config.n_items, config.n_queries) - 1))
    db_ids = [f"db{i:0{width}d}" for i in range(config.n_items)]
    query_ids = [f"q{i:0{width}d}" for i in range(config.n_queries)]

    if config.feature_kind == DENSE:
        db_feats, query_feats = _dense_features(config, n_groups, db_groups, query_groups, rng)
    else:
        db_feats, query_feats = _keypoint_features(config, n_groups, db_groups, query_groups, rng)
    db_records = [FeatureRecord(i, config.feature_kind, f) for i, f in zip(db_ids, db_feats)]
    query_records = [FeatureRecord(i, config.feature_kind, f) for i, f in zip(query_ids, query_feats)]

    members: dict[int, list[str]] = {}
    for item_id, g in zip(db_ids, db_groups.tolist()):
        members.setdefault(g, []).append(item_id)
    gt = GroundTruth({q: {i: 1.0 for i in members[g]} for q, g in zip(query_ids, query_groups.tolist())})

    return Dataset(
        config, taxonomy, db_ids, db_probs, query_ids, query_probs,
        FeatureStore(db_records), FeatureStore(query_records), gt, db_groups, query_groups,
    )


def _dense_features(config, n_groups, db_groups, query_groups, rng):
    prototypes = rng.standard_normal((n_groups, config.dim))
    db = prototypes[db_groups] + config.noise * rng.standard_normal((len(db_groups), config.dim))
    qs = prototypes[query_groups] + config.noise * rng.standard_normal((len(query_groups), config.dim))
    return list(db), list(qs)


def _keypoint_features(config, n_groups, db_groups, query_groups, rng):
    proto = rng.standard_normal((n_groups, config.kp_max, config.dim))

    def draw(group):
        m = int(rng.integers(config.kp_min, config.kp_max + 1))
        # mostly noisy copies of the group's descriptors, some clutter
        from_proto = rng.random(m) < 0.7
        picks = proto[group, rng.integers(0, config.kp_max, m)]
        clutter = rng.standard_normal((m, config.dim))
        out = np.where(from_proto[:, None], picks + config.noise * rng.standard_normal((m, config.dim)), clutter)
        return out.reshape(m, config.dim)

    return [draw(g) for g in db_groups], [draw(g) for g in query_groups]


def distribution_report(probs: np.ndarray, taxonomy: BigClassMap) -> np.ndarray:
    """Histogram of top-1 Big-Class assignments (child- or Big-space rows accepted)."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size == 0:
        return np.zeros(taxonomy.num_big, dtype=np.int64)
    if probs.ndim != 2:
        raise ValidationError("expected a 2-D probability matrix")
    big = aggregate_matrix(probs, taxonomy) if probs.shape[1] == taxonomy.num_child else probs
    if big.shape[1] != taxonomy.num_big:
        raise ValidationError(f"probability width {probs.shape[1]} fits neither class space")
    top1 = np.argsort(-big, axis=1, kind="stable")[:, 0]
    return np.bincount(top1, minlength=taxonomy.num_big)


# -- bundle I/O ---------------------------------------------------------------

def _write_probs(path, ids, probs, space):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item_id, row in zip(ids, probs):
            fh.write(json.dumps({"item_id": item_id, "space": space, "values": row.tolist()}, separators=(",", ":")) + "\n")


def read_probs(path) -> list[ClassProbabilities]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                out.append(ClassProbabilities(doc["item_id"], doc["values"], doc.get("space", CHILD)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}: bad probability record: {exc}") from None
    return out


def probs_matrix(records: list[ClassProbabilities], taxonomy: BigClassMap) -> tuple[list[str], np.ndarray]:
    """Stack records into a Big-Class matrix, aggregating child-space rows."""
    spaces = {r.space for r in records}
    if len(spaces) > 1:
        raise ValidationError("probability file mixes child and big spaces")
    ids = [r.item_id for r in records]
    if not records:
        return ids, np.zeros((0, taxonomy.num_big))
    mat = np.vstack([r.values for r in records]) if len({r.values.shape for r in records}) == 1 else None
    if mat is None:
        raise ValidationError("probability vectors have differing lengths")
    if spaces == {CHILD}:
        return ids, aggregate_matrix(mat, taxonomy)
    if mat.shape[1] != taxonomy.num_big:
        raise ValidationError(f"Big-Class vectors of width {mat.shape[1]}, taxonomy has {taxonomy.num_big}")
    return ids, mat


def write_dataset(ds: Dataset, directory) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []

    def path(name):
        p = os.path.join(directory, name)
        paths.append(p)
        return p

    with open(path(TAXONOMY_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_taxonomy(ds.taxonomy))
    if ds.config is not None:
        with open(path(CONFIG_FILE), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(asdict(ds.config), sort_keys=True, indent=1) + "\n")
    space = CHILD if ds.db_probs.shape[1] == ds.taxonomy.num_child else BIG
    _write_probs(path(DB_PROBS_FILE), ds.db_ids, ds.db_probs, space)
    _write_probs(path(QUERY_PROBS_FILE), ds.query_ids, ds.query_probs, space)
    write_features((ds.db_features.record(i) for i in ds.db_ids), path(DB_FEATURES_FILE))
    write_features((ds.query_features.record(i) for i in ds.query_ids), path(QUERY_FEATURES_FILE))
    write_ground_truth(ds.ground_truth, path(GROUND_TRUTH_FILE), order=ds.query_ids)
    return paths


def read_dataset(directory) -> Dataset:
    def path(name):
        return os.path.join(directory, name)

    with open(path(TAXONOMY_FILE), encoding="utf-8") as fh:
        taxonomy = load_taxonomy(fh.read())
    config = None
    if os.path.exists(path(CONFIG_FILE)):
        with open(path(CONFIG_FILE), encoding="utf-8") as fh:
            config = GenConfig(**json.load(fh))
    db = read_probs(path(DB_PROBS_FILE))
    qs = read_probs(path(QUERY_PROBS_FILE))
    for recs in (db, qs):
        if len({r.values.shape for r in recs}) > 1:
            raise ValidationError("probability vectors have differing lengths")
    db_probs = np.vstack([r.values for r in db])
    query_probs = np.vstack([r.values for r in qs])
    return Dataset(
        config, taxonomy, [r.item_id for r in db], db_probs, [r.item_id for r in qs], query_probs,
        FeatureStore(read_features(path(DB_FEATURES_FILE))),
        FeatureStore(read_features(path(QUERY_FEATURES_FILE))),
        read_ground_truth(path(GROUND_TRUTH_FILE)),
    )
