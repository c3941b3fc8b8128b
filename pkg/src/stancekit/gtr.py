"""Ward clustering over paired document-topic vectors and cluster lookups."""

from __future__ import annotations

import random
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import StanceExample
from .embed import EmbeddingStore, TfIdfModel, doc_vector, pair_vector, topic_vector
from .errors import BadK, BadRange, DimMismatch, MissingEmbedding, TruncatedFile, UnassignedExample


def point_id(doc_id: str, topic_key: str) -> str:
    return f"{doc_id}\t{topic_key}"


def build_points(
    examples: Sequence[StanceExample],
    store: EmbeddingStore,
    tfidf: TfIdfModel,
) -> tuple[np.ndarray, list[str]]:
    """Paired [v_d; v_t] vectors, one per unique (document, topic) pair."""
    seen: dict[str, np.ndarray] = {}
    for ex in examples:
        pid = point_id(ex.doc_id, ex.topic_key)
        if pid in seen:
            continue
        if ex.doc_id not in store.sep_docs:
            raise MissingEmbedding(f"no separate document embedding for {ex.doc_id}")
        if ex.topic_key not in store.sep_topics:
            raise MissingEmbedding(f"no separate topic embedding for {ex.topic_key!r}")
        v_d = doc_vector(store.sep_docs[ex.doc_id], tfidf)
        v_t = topic_vector(store.sep_topics[ex.topic_key])
        seen[pid] = pair_vector(v_d, v_t)
    ids = list(seen)
    return np.stack([seen[p] for p in ids]), ids


@dataclass
class ClusterModel:
    """Result of Ward agglomeration down to k clusters.

    ``assignments`` maps point ids to cluster indices 0..k-1;
    ``merge_log`` records (smaller id, larger id, merge cost) in order,
    where ids are the internal agglomeration ids (merged clusters keep the
    smaller id). Costs are the within-cluster SSE increase of each merge.
    """

    k: int
    dim: int
    centroids: np.ndarray  # (k, dim)
    assignments: dict[str, int]
    merge_log: tuple[tuple[int, int, float], ...]


def _ward_merge_chain(points: np.ndarray, stop_k: int) -> list[tuple[int, int, float]]:
    """Lance-Williams agglomeration from singletons down to stop_k clusters.

    Cost between clusters a, b is the SSE increase of merging them,
    n_a n_b / (n_a + n_b) * ||mean_a - mean_b||^2. Ties break on the lowest
    (smaller id, larger id) pair; merged clusters keep the smaller id.
    """
    n = len(points)
    sq_norms = np.einsum("ij,ij->i", points, points)
    d2 = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (points @ points.T)
    np.maximum(d2, 0.0, out=d2)
    cost = 0.5 * d2  # singleton merge cost is half the squared distance
    sizes = np.ones(n)
    inf = np.inf
    cost[np.tril_indices(n)] = inf  # active candidates live in the upper triangle

    merges: list[tuple[int, int, float]] = []
    idx = np.arange(n)
    for _ in range(n - stop_k):
        flat = int(np.argmin(cost))  # row-major argmin = lowest (i, j) among ties
        i, j = divmod(flat, n)
        best = float(cost[i, j])
        merges.append((i, j, best))

        ni, nj = sizes[i], sizes[j]
        # Lance-Williams update of every other active cluster's cost to i∪j
        c_i = np.where(idx < i, cost[idx, i], cost[i, idx])
        c_j = np.where(idx < j, cost[idx, j], cost[j, idx])
        active = np.isfinite(c_i) & np.isfinite(c_j)
        active[i] = active[j] = False
        ks = idx[active]
        nk = sizes[ks]
        new_cost = ((ni + nk) * c_i[ks] + (nj + nk) * c_j[ks] - nk * best) / (ni + nj + nk)
        cost[np.minimum(ks, i), np.maximum(ks, i)] = new_cost
        sizes[i] = ni + nj
        cost[j, :] = inf
        cost[:, j] = inf
    return merges


def _labels_from_chain(n: int, merges: Sequence[tuple[int, int, float]]) -> np.ndarray:
    """Cluster index per point after replaying merges; indices follow sorted
    surviving internal ids."""
    owner = np.arange(n)
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for i, j, _ in merges:
        members[i].extend(members.pop(j))
    labels = np.empty(n, dtype=np.int64)
    for index, cid in enumerate(sorted(members)):
        for p in members[cid]:
            labels[p] = index
    return labels


def ward_cluster(points: np.ndarray, ids: Sequence[str], k: int) -> ClusterModel:
    """Agglomerate ``points`` (one row per id) into k clusters."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if len(ids) != n:
        raise DimMismatch(f"{n} points vs {len(ids)} ids")
    if not 1 <= k <= n:
        raise BadK(f"k={k} outside [1, {n}]")
    merges = _ward_merge_chain(points, k)
    labels = _labels_from_chain(n, merges)
    centroids = np.zeros((k, points.shape[1]))
    for c in range(k):
        centroids[c] = points[labels == c].mean(axis=0)
    assignments = {pid: int(labels[i]) for i, pid in enumerate(ids)}
    return ClusterModel(
        k=k,
        dim=points.shape[1],
        centroids=centroids,
        assignments=assignments,
        merge_log=tuple(merges),
    )


def assign_r(v_dt: np.ndarray, model: ClusterModel) -> tuple[int, np.ndarray]:
    """Nearest centroid index (ties to the lowest) and that centroid."""
    if v_dt.shape != (model.dim,):
        raise DimMismatch(f"query {v_dt.shape} vs centroids (*, {model.dim})")
    diffs = model.centroids - v_dt
    idx = int(np.argmin(np.einsum("ij,ij->i", diffs, diffs)))
    return idx, model.centroids[idx].copy()


def within_cluster_sse(points: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for c in np.unique(labels):
        cluster = points[labels == c]
        total += float(((cluster - cluster.mean(axis=0)) ** 2).sum())
    return total


def select_k(
    train_points: np.ndarray,
    train_ids: Sequence[str],
    dev_points: np.ndarray,
    trials: int = 20,
    k_range: tuple[int, int] = (50, 300),
    rng_seed: int = 0,
) -> tuple[int, list[tuple[int, float]]]:
    """Sample cluster counts uniformly and keep the one with the lowest
    summed squared distance from dev points to their assigned centroids.

    Duplicate sampled values are evaluated once. Returns the winning k and
    the (k, dev SSD) table sorted by k.
    """
    train_points = np.asarray(train_points, dtype=np.float64)
    dev_points = np.asarray(dev_points, dtype=np.float64)
    lo, hi = k_range
    if trials < 1 or lo < 1 or hi < lo or hi > len(train_points):
        raise BadRange(f"range [{lo}, {hi}] with {trials} trials invalid for N={len(train_points)}")
    rng = random.Random(rng_seed)
    ks = sorted({rng.randint(lo, hi) for _ in range(trials)})
    chain = _ward_merge_chain(train_points, min(ks))
    n = len(train_points)
    table: list[tuple[int, float]] = []
    for k in ks:
        labels = _labels_from_chain(n, chain[: n - k])
        centroids = np.stack([train_points[labels == c].mean(axis=0) for c in range(k)])
        d2 = (
            np.einsum("ij,ij->i", dev_points, dev_points)[:, None]
            + np.einsum("ij,ij->i", centroids, centroids)[None, :]
            - 2.0 * dev_points @ centroids.T
        )
        table.append((k, float(np.maximum(d2, 0.0).min(axis=1).sum())))
    best_k = min(table, key=lambda row: (row[1], row[0]))[0]
    return best_k, table


@dataclass(frozen=True)
class ClusterStats:
    size: int
    unique_topics: int
    label_counts: tuple[int, int, int]


def cluster_stats(model: ClusterModel, examples: Sequence[StanceExample]) -> dict[int, ClusterStats]:
    """Example counts, unique topics, and label histogram per cluster."""
    sizes: Counter[int] = Counter()
    topics: dict[int, set[str]] = defaultdict(set)
    label_hist: dict[int, list[int]] = defaultdict(lambda: [0, 0, 0])
    for ex in examples:
        pid = point_id(ex.doc_id, ex.topic_key)
        if pid not in model.assignments:
            raise UnassignedExample(f"example {ex.example_id} has no cluster assignment")
        c = model.assignments[pid]
        sizes[c] += 1
        topics[c].add(ex.topic_key)
        label_hist[c][int(ex.label)] += 1
    return {
        c: ClusterStats(size=sizes[c], unique_topics=len(topics[c]), label_counts=tuple(label_hist[c]))
        for c in sorted(sizes)
    }


# --- persistence ---------------------------------------------------------------
# u32 k | u32 dim | k*dim little-endian f32 centroids | u32 assignment count |
# (length-prefixed key, u32 cluster)* | u32 merge count | (u32 a, u32 b, f64 cost)*


def save_cluster_model(model: ClusterModel, path: str) -> None:
    out: list[bytes] = [struct.pack("<II", model.k, model.dim)]
    out.append(np.ascontiguousarray(model.centroids, dtype="<f4").tobytes())
    out.append(struct.pack("<I", len(model.assignments)))
    for key in sorted(model.assignments):
        raw = key.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", model.assignments[key]))
    out.append(struct.pack("<I", len(model.merge_log)))
    for a, b, cost in model.merge_log:
        out.append(struct.pack("<IId", a, b, cost))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_cluster_model(path: str) -> ClusterModel:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFile(f"{path}: need {n} bytes at offset {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    k, dim = struct.unpack("<II", take(8))
    centroids = np.frombuffer(take(k * dim * 4), dtype="<f4").reshape(k, dim).astype(np.float64)
    count = struct.unpack("<I", take(4))[0]
    assignments: dict[str, int] = {}
    for _ in range(count):
        key_len = struct.unpack("<I", take(4))[0]
        key = take(key_len).decode("utf-8")
        assignments[key] = struct.unpack("<I", take(4))[0]
    merge_count = struct.unpack("<I", take(4))[0]
    merge_log = tuple(struct.unpack("<IId", take(16)) for _ in range(merge_count))
    return ClusterModel(k=k, dim=dim, centroids=centroids, assignments=assignments, merge_log=merge_log)
