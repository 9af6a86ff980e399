"""Failure-reason clustering: TF-IDF, k-means pre-clustering, keyword
extraction, centroid merging, and the distribution report.

The three stages share one representation: TF-IDF vectors drive both the
pre-clustering and the per-cluster keywords. Manual refinement is replaced
by deterministic threshold and minimum-size rules, and the report carries a
lineage map so merges stay auditable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import DomainError, SchemaError

FAILURE_TYPES = ("unsolvable", "difficulty_decreased")

_TOKEN_RE = re.compile(r"[0-9a-z]+")


@dataclass(frozen=True)
class FailureDoc:
    trajectory_id: str
    failure_type: str
    reason_text: str

    def __post_init__(self):
        if self.failure_type not in FAILURE_TYPES:
            raise DomainError(f"failure_type must be one of {FAILURE_TYPES}")
        if not self.reason_text:
            raise DomainError("reason_text must be non-empty")


def read_failure_docs(path) -> list[FailureDoc]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                docs.append(
                    FailureDoc(
                        trajectory_id=str(obj["trajectory_id"]),
                        failure_type=obj["failure_type"],
                        reason_text=obj["reason_text"],
                    )
                )
            except (ValueError, KeyError, TypeError, DomainError) as exc:
                raise SchemaError(str(exc), line=lineno) from exc
    return docs


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than 2."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


def tfidf(docs: Sequence[str]):
    """TF-IDF matrix (rows L2-normalized) plus the sorted vocabulary.

    tf is the raw count and idf = ln((1 + N) / (1 + df)) + 1. Documents whose
    tokens are all dropped become zero rows; if no document contributes any
    token the vocabulary is empty and that is an error.
    """
    if not docs:
        raise DomainError("need at least one document")
    tokenized = [tokenize(d) for d in docs]
    vocabulary = sorted({t for tokens in tokenized for t in tokens})
    if not vocabulary:
        raise DomainError("all documents tokenized to nothing; vocabulary is empty")
    index = {t: j for j, t in enumerate(vocabulary)}
    n_docs = len(docs)
    matrix = np.zeros((n_docs, len(vocabulary)))
    df = np.zeros(len(vocabulary))
    for i, tokens in enumerate(tokenized):
        for t in tokens:
            matrix[i, index[t]] += 1.0
        for j in set(index[t] for t in tokens):
            df[j] += 1.0
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    matrix *= idf
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    matrix /= norms
    return sparse.csr_matrix(matrix), vocabulary


def _as_dense(X) -> np.ndarray:
    if sparse.issparse(X):
        return np.asarray(X.todense(), dtype=float)
    return np.asarray(X, dtype=float)


def _sse(X: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    return float(np.sum((X - centroids[assignments]) ** 2))


def _plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted sampling of initial centers."""
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((X - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total == 0.0:
            centers.append(X[rng.integers(n)])
            continue
        centers.append(X[rng.choice(n, p=d2 / total)])
    return np.array(centers)


@dataclass(frozen=True)
class KmeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    sse_trace: tuple[float, ...]
    iterations: int

    @property
    def sse(self) -> float:
        return self.sse_trace[-1]


def kmeans(X, k: int, seed: int = 0, max_iter: int = 100) -> KmeansResult:
    """Lloyd's algorithm with k-means++ seeding; deterministic given (X, k, seed).

    Iterates to an assignment fixpoint or ``max_iter``. Clusters that empty
    out are re-seeded from the point farthest from its current centroid. The
    SSE trace (one entry per assignment pass) never increases — Lloyd is a
    local method, so restarts across seeds are still needed for a global
    optimum.
    """
    X = _as_dense(X)
    n = X.shape[0]
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if k > n:
        raise DomainError(f"k={k} exceeds the {n} available points")
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(X, k, rng)

    def assign(cents: np.ndarray) -> np.ndarray:
        distances = ((X[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        return distances.argmin(axis=1)

    assignments = assign(centroids)
    trace = [_sse(X, centroids, assignments)]
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        new_centroids = centroids.copy()
        for j in range(k):
            members = X[assignments == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
        # Re-seed empty clusters from the farthest point.
        for j in range(k):
            if not np.any(assignments == j):
                residuals = np.sum((X - new_centroids[assignments]) ** 2, axis=1)
                new_centroids[j] = X[int(residuals.argmax())]
        centroids = new_centroids
        new_assignments = assign(centroids)
        trace.append(_sse(X, centroids, new_assignments))
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    return KmeansResult(
        assignments=assignments,
        centroids=centroids,
        sse_trace=tuple(trace),
        iterations=iterations,
    )


def extract_keywords(cluster_rows, vocabulary: Sequence[str], m: int = 5) -> list[str]:
    """Top-m terms by mean TF-IDF weight within the cluster.

    Ties break lexicographically; zero-weight terms never appear.
    """
    rows = _as_dense(cluster_rows)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[0] == 0:
        raise DomainError("cluster must be non-empty")
    means = rows.mean(axis=0)
    ranked = sorted(
        (j for j in range(len(vocabulary)) if means[j] > 0),
        key=lambda j: (-means[j], vocabulary[j]),
    )
    return [vocabulary[j] for j in ranked[:m]]


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(1.0 - np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class Cluster:
    cluster_id: str
    label: str
    member_ids: tuple[int, ...]
    keywords: tuple[str, ...]
    size: int


@dataclass(frozen=True)
class ClusterReport:
    clusters: tuple[Cluster, ...]
    merged_from: dict[str, tuple[str, ...]]

    def to_dict(self) -> dict:
        return {
            "clusters": [
                {
                    "id": c.cluster_id,
                    "label": c.label,
                    "member_ids": list(c.member_ids),
                    "keywords": list(c.keywords),
                    "size": c.size,
                }
                for c in self.clusters
            ],
            "merged_from": {k: list(v) for k, v in self.merged_from.items()},
        }


def _pool_keywords(groups: Sequence[int], keywords: Sequence[Sequence[str]]) -> tuple[str, ...]:
    # Rank pooled terms by the best rank they held in any member cluster.
    best: dict[str, int] = {}
    for g in groups:
        for rank, term in enumerate(keywords[g]):
            if term not in best or rank < best[term]:
                best[term] = rank
    return tuple(sorted(best, key=lambda t: (best[t], t)))


def _label(pooled: Sequence[str]) -> str:
    return " / ".join(pooled[:3]) if pooled else "(no keywords)"


def merge_clusters(
    centroids,
    keywords: Sequence[Sequence[str]],
    members: Sequence[Sequence[int]],
    distance_threshold: float = 0.5,
    min_size: int = 2,
) -> ClusterReport:
    """Agglomerate pre-clusters, then fold undersized ones into neighbors.

    Average-linkage merging over cosine distance between the original
    centroids runs until no pair is closer than ``distance_threshold``; a
    threshold of 0 therefore merges nothing but exact duplicates never, and
    identical centroids always merge under any positive threshold.
    Afterwards, clusters below ``min_size`` merge into their nearest
    neighbor until none remain (or only one cluster is left). Labels come
    from the merged keyword pools and ``merged_from`` records the lineage.
    """
    centroids = _as_dense(centroids)
    n = centroids.shape[0]
    if n < 1:
        raise DomainError("need at least one cluster")
    if len(keywords) != n or len(members) != n:
        raise DomainError("centroids, keywords, and members must align")
    pair_distance = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = cosine_distance(centroids[i], centroids[j])
            pair_distance[i, j] = pair_distance[j, i] = d

    groups: list[list[int]] = [[i] for i in range(n)]

    def linkage(a: Sequence[int], b: Sequence[int]) -> float:
        return float(np.mean([pair_distance[i, j] for i in a for j in b]))

    # Stage: average-linkage agglomeration.
    while len(groups) > 1:
        best = None
        for x in range(len(groups)):
            for y in range(x + 1, len(groups)):
                d = linkage(groups[x], groups[y])
                if best is None or d < best[0]:
                    best = (d, x, y)
        if best is None or best[0] >= distance_threshold:
            break
        _, x, y = best
        groups[x] = groups[x] + groups[y]
        del groups[y]

    # Stage: consolidate small clusters into their nearest neighbor.
    def group_centroid(group: Sequence[int]) -> np.ndarray:
        sizes = np.array([len(members[g]) for g in group], dtype=float)
        if sizes.sum() == 0:
            sizes[:] = 1.0
        return np.average(centroids[list(group)], axis=0, weights=sizes)

    def group_size(group: Sequence[int]) -> int:
        return sum(len(members[g]) for g in group)

    while len(groups) > 1:
        sizes = [group_size(g) for g in groups]
        small = [i for i, s in enumerate(sizes) if s < min_size]
        if not small:
            break
        idx = min(small, key=lambda i: sizes[i])
        cents = [group_centroid(g) for g in groups]
        nearest = min(
            (j for j in range(len(groups)) if j != idx),
            key=lambda j: cosine_distance(cents[idx], cents[j]),
        )
        groups[nearest] = groups[nearest] + groups[idx]
        del groups[idx]

    clusters = []
    merged_from: dict[str, tuple[str, ...]] = {}
    for out_idx, group in enumerate(groups):
        pooled = _pool_keywords(group, keywords)
        member_ids = tuple(sorted(i for g in group for i in members[g]))
        cluster_id = f"m{out_idx:02d}"
        clusters.append(
            Cluster(
                cluster_id=cluster_id,
                label=_label(pooled),
                member_ids=member_ids,
                keywords=pooled[:5],
                size=len(member_ids),
            )
        )
        merged_from[cluster_id] = tuple(f"c{g:02d}" for g in sorted(group))
    return ClusterReport(clusters=tuple(clusters), merged_from=merged_from)


def default_k(n_docs: int) -> int:
    return max(1, min(20, n_docs // 10))


def default_min_size(n_docs: int) -> int:
    return max(2, n_docs // 100)


def cluster_failures(
    docs: Sequence[FailureDoc],
    *,
    k: int | None = None,
    seed: int = 0,
    distance_threshold: float = 0.5,
    min_size: int | None = None,
    keywords_per_cluster: int = 5,
) -> ClusterReport:
    """End-to-end pipeline: vectorize, pre-cluster, extract keywords, merge."""
    if not docs:
        raise DomainError("need at least one failure doc")
    matrix, vocabulary = tfidf([d.reason_text for d in docs])
    dense = _as_dense(matrix)
    n = len(docs)
    k = default_k(n) if k is None else min(k, n)
    min_size = default_min_size(n) if min_size is None else min_size
    result = kmeans(dense, k, seed=seed)
    members = [
        [i for i in range(n) if result.assignments[i] == j] for j in range(k)
    ]
    # Drop empty pre-clusters (possible when k-means converges degenerately).
    keep = [j for j in range(k) if members[j]]
    centroids = result.centroids[keep]
    members = [members[j] for j in keep]
    keywords = [
        extract_keywords(dense[m], vocabulary, keywords_per_cluster) for m in members
    ]
    return merge_clusters(
        centroids,
        keywords,
        members,
        distance_threshold=distance_threshold,
        min_size=min_size,
    )


@dataclass(frozen=True)
class DistributionRow:
    failure_type: str
    label: str
    count: int


def failure_distribution(
    docs: Sequence[FailureDoc], report: ClusterReport
) -> list[DistributionRow]:
    """Counts per (failure type, cluster), sorted descending within type."""
    rows = []
    for failure_type in FAILURE_TYPES:
        counts = []
        for cluster in report.clusters:
            count = sum(
                1 for i in cluster.member_ids if docs[i].failure_type == failure_type
            )
            if count:
                counts.append(DistributionRow(failure_type, cluster.label, count))
        counts.sort(key=lambda r: (-r.count, r.label))
        rows.extend(counts)
    return rows


def distribution_table(rows: Sequence[DistributionRow]) -> str:
    """Aligned text table of the failure distribution."""
    if not rows:
        return "(no failures)\n"
    type_width = max(len("Failure Type"), *(len(r.failure_type) for r in rows))
    label_width = max(len("Failure Subtype"), *(len(r.label) for r in rows))
    lines = [
        f"{'Failure Type':<{type_width}}  {'Failure Subtype':<{label_width}}  Count",
        "-" * (type_width + label_width + 9),
    ]
    previous_type = None
    for r in rows:
        shown = r.failure_type if r.failure_type != previous_type else ""
        lines.append(f"{shown:<{type_width}}  {r.label:<{label_width}}  {r.count:>5}")
        previous_type = r.failure_type
    return "\n".join(lines) + "\n"
