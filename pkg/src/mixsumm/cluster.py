"""k-means topic groups, few-shot / unlabeled splits and distant-cluster pairs."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document, LabeledExample, with_split

log = logging.getLogger(__name__)


class ClusteringError(ValueError):
    pass


class SamplingError(ValueError):
    pass


@dataclass
class ClusterModel:
    T: int
    centroids: np.ndarray
    assignments: dict[str, int]
    seed: int
    metric: str = "euclidean"
    normalized: bool = True
    objective_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    def members(self, cluster: int) -> list[str]:
        return [d for d, c in self.assignments.items() if c == cluster]

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "T": self.T,
            "centroids": self.centroids.tolist(),
            "assignments": self.assignments,
            "seed": self.seed,
            "metric": self.metric,
            "normalized": self.normalized,
            "objective_history": self.objective_history,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterModel":
        return cls(
            T=obj["T"],
            centroids=np.asarray(obj["centroids"], dtype=float),
            assignments={k: int(v) for k, v in obj["assignments"].items()},
            seed=obj["seed"],
            metric=obj.get("metric", "euclidean"),
            normalized=obj.get("normalized", True),
            objective_history=list(obj.get("objective_history", [])),
            n_iter=obj.get("n_iter", 0),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClusterModel":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True, order=True)
class ClusterPair:
    a: int
    b: int

    def __post_init__(self):
        if self.a >= self.b:
            raise ValueError(f"cluster pair must satisfy a < b, got ({self.a}, {self.b})")


@dataclass
class FewShotSplit:
    labeled: list[LabeledExample]
    unlabeled: list[Document]

    @property
    def k(self) -> int:
        return len(self.labeled)

    @property
    def m(self) -> int:
        return len(self.unlabeled)


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    v = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms > 0, norms, 1.0)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, T: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[centers]).min(1)
    for _ in range(1, T):
        total = d2.sum()
        if total <= 0:
            raise ClusteringError("fewer distinct vectors than clusters")
        nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, _sq_dists(x, x[[nxt]])[:, 0])
    return x[centers].copy()


def kmeans(vectors: np.ndarray, T: int, seed: int = 0, max_iters: int = 100,
           ids: Sequence[str] | None = None, normalize: bool = False) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeding.

    ``objective_history[t]`` is the sum of squared distances after the t-th
    assignment step; it never increases. Stops when assignments repeat or
    after ``max_iters`` iterations. Empty clusters are re-seeded at the point
    farthest from its current centroid.
    """
    x = np.asarray(vectors, dtype=float)
    if normalize:
        x = l2_normalize(x)
    n = len(x)
    if T < 2:
        raise ClusteringError("T must be >= 2")
    if n < T:
        raise ClusteringError(f"need at least T={T} vectors, got {n}")
    if np.allclose(x, x[0]):
        raise ClusteringError("degenerate input: all vectors are identical")
    if len(np.unique(x, axis=0)) < T:
        raise ClusteringError(f"degenerate input: fewer than T={T} distinct vectors")
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, T, rng)

    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(x, centroids)
        new_labels = d.argmin(1)
        history.append(float(d[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        point_cost = d[np.arange(n), labels]
        for c in range(T):
            mask = labels == c
            if mask.any():
                centroids[c] = x[mask].mean(0)
            else:
                far = int(point_cost.argmax())
                centroids[c] = x[far]
                labels[far] = c
                point_cost[far] = 0.0
    # the reported assignment is always the nearest centroid
    final = _sq_dists(x, centroids).argmin(1)
    return ClusterModel(
        T=T,
        centroids=centroids,
        assignments={i: int(c) for i, c in zip(ids, final)},
        seed=seed,
        normalized=normalize,
        objective_history=history,
        n_iter=it,
    )


def per_cluster_quota(sizes: Sequence[int], k: int) -> list[int]:
    """Even split of ``k`` over clusters; remainder to the largest clusters (ties to lower index).

    Clusters too small for their share give up the shortfall, which is
    redistributed to clusters with spare members, largest spare first.
    """
    T = len(sizes)
    if sum(sizes) < k:
        raise SamplingError(f"requested k={k} but only {sum(sizes)} documents are available")
    base, rem = divmod(k, T)
    order = sorted(range(T), key=lambda c: (-sizes[c], c))
    quota = [base] * T
    for c in order[:rem]:
        quota[c] += 1
    short = 0
    for c in range(T):
        if quota[c] > sizes[c]:
            log.warning("cluster %d has %d members, short of its quota %d", c, sizes[c], quota[c])
            short += quota[c] - sizes[c]
            quota[c] = sizes[c]
    while short:
        spare = sorted((c for c in range(T) if sizes[c] > quota[c]), key=lambda c: (-(sizes[c] - quota[c]), c))
        for c in spare:
            if not short:
                break
            quota[c] += 1
            short -= 1
    return quota


def sample_fewshot(model: ClusterModel, examples: Sequence[LabeledExample], k: int,
                   seed: int) -> list[LabeledExample]:
    """Draw ``k`` labeled examples spread evenly over the clusters."""
    rng = np.random.default_rng(seed)
    by_cluster: list[list[LabeledExample]] = [[] for _ in range(model.T)]
    for ex in examples:
        if ex.id in model.assignments:
            by_cluster[model.assignments[ex.id]].append(ex)
    quota = per_cluster_quota([len(b) for b in by_cluster], k)
    out: list[LabeledExample] = []
    for members, q in zip(by_cluster, quota):
        if q:
            picks = rng.choice(len(members), size=q, replace=False)
            out.extend(members[i] for i in sorted(picks))
    return out


def sample_random(examples: Sequence[LabeledExample], k: int, seed: int) -> list[LabeledExample]:
    """Uniform k-sample ignoring clusters (the random few-shot baseline)."""
    if k > len(examples):
        raise SamplingError(f"requested k={k} but only {len(examples)} documents are available")
    rng = np.random.default_rng(seed)
    return [examples[i] for i in sorted(rng.choice(len(examples), size=k, replace=False))]


def sample_unlabeled(train: Sequence[LabeledExample], fewshot: Sequence[LabeledExample], m: int,
                     seed: int) -> list[Document]:
    """Uniform ``m`` documents from ``train`` minus the few-shot set, labels stripped."""
    taken = {ex.id for ex in fewshot}
    pool = [ex.document for ex in train if ex.id not in taken]
    if m > len(pool):
        raise SamplingError(f"requested m={m} unlabeled documents but the pool has {len(pool)}")
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(pool), size=m, replace=False)) if m else []
    return [with_split(pool[i], "unlabeled") for i in picks]


def centroid_distances(model: ClusterModel) -> np.ndarray:
    return np.sqrt(_sq_dists(model.centroids, model.centroids))


def distant_pairs(model: ClusterModel) -> list[ClusterPair]:
    """Pair every cluster with its farthest cluster; unordered and de-duplicated."""
    if model.T < 2:
        raise ClusteringError("T must be >= 2")
    dist = centroid_distances(model)
    pairs: set[ClusterPair] = set()
    for i in range(model.T):
        row = dist[i].copy()
        row[i] = -np.inf
        j = int(row.argmax())
        pairs.add(ClusterPair(min(i, j), max(i, j)))
    return sorted(pairs)
