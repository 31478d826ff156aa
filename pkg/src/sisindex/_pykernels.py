"""Pure numpy implementations of the compiled kernels (same signatures)."""

import numpy as np


def l2_rows(X, q, idx):
    diff = X[idx] - q
    return np.sqrt((diff * diff).sum(axis=1))


def cosine_rows(X, norms, q, qnorm, idx):
    return (X[idx] * q).sum(axis=1) / (norms[idx] * qnorm)


def _ratio_count(Q, cand, ratio):
    if Q.shape[0] == 0 or cand.shape[0] == 0:
        return 0
    diff = Q[:, None, :] - cand[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    if cand.shape[0] == 1:
        return int(np.count_nonzero(dist[:, 0] == 0.0))
    two = np.partition(dist, 1, axis=1)[:, :2]
    return int(np.count_nonzero(two[:, 0] < ratio * two[:, 1]))


def keypoint_counts(Q, P, offsets, idx, ratio):
    out = np.empty(len(idx), dtype=np.int64)
    for i, r in enumerate(idx):
        out[i] = _ratio_count(Q, P[offsets[r]:offsets[r + 1]], ratio)
    return out


def union_blocks(post_pos, post_conf, block_off, blocks, qconf, n_items):
    parts = [post_pos[block_off[b]:block_off[b + 1]] for b in blocks]
    if not parts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    pos = np.concatenate(parts)
    conf = np.repeat(np.asarray(qconf, dtype=np.float64), [len(p) for p in parts])
    # group by position, highest confidence first within each group
    order = np.lexsort((-conf, pos))
    pos, conf = pos[order], conf[order]
    first = np.ones(len(pos), dtype=bool)
    first[1:] = pos[1:] != pos[:-1]
    return pos[first].astype(np.int64), conf[first]


def nearest_centroid(X, C):
    best = np.full(X.shape[0], np.inf)
    arg = np.zeros(X.shape[0], dtype=np.int64)
    for c in range(C.shape[0]):
        diff = X - C[c]
        dist = np.sqrt((diff * diff).sum(axis=1))
        closer = dist < best
        best[closer] = dist[closer]
        arg[closer] = c
    return arg
