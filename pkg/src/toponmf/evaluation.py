"""Clustering of the reduced representation and partition-agreement scores.

The reduced matrix H (rank x cells) is clustered with restarted
k-means++; cluster labels are compared against true labels through a
contingency table (ARI, NMI, purity) and through the optimal
cluster-to-class assignment (accuracy). Per-sample residue/similarity
scores quantify inter-class separation and intra-class cohesion.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .data import LabelVector


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.intp)
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.labels.size and self.labels.max() >= self.centroids.shape[0]:
            raise ValueError("cluster index exceeds centroid count")

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(m))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(m, p=d2 / total))
        else:
            idx = int(np.argmax(d2))
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iters: int):
    centers = _kmeans_pp(points, k, rng)
    labels = None
    for _ in range(max_iters):
        d2 = cdist(points, centers, metric="sqeuclidean")
        new_labels = d2.argmin(axis=1)
        assigned = d2[np.arange(points.shape[0]), new_labels]
        counts = np.bincount(new_labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # farthest point whose cluster stays nonempty after the move
            eligible = np.where(counts[new_labels] >= 2, assigned, -np.inf)
            farthest = int(np.argmax(eligible))
            counts[new_labels[farthest]] -= 1
            new_labels[farthest] = c
            counts[c] += 1
            assigned[farthest] = -np.inf
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        centers = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
    inertia = float(((points - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def kmeans(h: np.ndarray, n_clusters: int, seed: int, restarts: int = 10) -> ClusterAssignment:
    """Cluster the columns of ``h`` with restarted k-means.

    Lloyd iterations run to an assignment fixed point (at most 300) from
    k-means++ seeding; the best inertia over ``restarts`` wins. Restart r
    draws from seed + r, so results are deterministic for a fixed seed.
    Empty clusters are repaired by reassigning the farthest point.
    """
    points = np.ascontiguousarray(np.asarray(h, dtype=np.float64).T)
    m = points.shape[0]
    if not 1 <= n_clusters <= m:
        raise ValueError(f"cluster count must be in [1, {m}], got {n_clusters}")
    best = None
    for r in range(max(1, restarts)):
        rng = np.random.default_rng(seed + r)
        labels, centers, inertia = _lloyd(points, n_clusters, rng, max_iters=300)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return ClusterAssignment(labels=best[0], centroids=best[1], inertia=best[2])


@dataclass
class ContingencyTable:
    """Counts n[i, j] of samples with true class i and cluster j."""

    n: np.ndarray
    a: np.ndarray  # row sums (per true class)
    b: np.ndarray  # column sums (per cluster)
    total: int


def _label_indices(y) -> np.ndarray:
    if isinstance(y, LabelVector):
        return y.indices()
    return np.asarray(y, dtype=np.intp)


def _cluster_indices(c) -> np.ndarray:
    if isinstance(c, ClusterAssignment):
        return c.labels
    if isinstance(c, LabelVector):
        return c.indices()
    return np.asarray(c, dtype=np.intp)


def contingency(y, c) -> ContingencyTable:
    yi = _label_indices(y)
    ci = _cluster_indices(c)
    if yi.shape != ci.shape:
        raise ValueError(f"{yi.size} true labels vs {ci.size} cluster labels")
    n = np.zeros((yi.max() + 1, ci.max() + 1), dtype=np.int64)
    np.add.at(n, (yi, ci), 1)
    return ContingencyTable(n=n, a=n.sum(axis=1), b=n.sum(axis=0), total=int(yi.size))


def _comb2(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v * (v - 1.0) / 2.0


def ari(t: ContingencyTable) -> float:
    """Adjusted Rand index (Hubert-Arabie chance-corrected pair counting)."""
    sum_cells = _comb2(t.n).sum()
    sum_a = _comb2(t.a).sum()
    sum_b = _comb2(t.b).sum()
    pairs = _comb2(t.total)
    expected = sum_a * sum_b / pairs
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0:
        # both partitions at the chance boundary: 1 iff they are identical
        identical = (
            np.all(np.count_nonzero(t.n, axis=0) <= 1)
            and np.all(np.count_nonzero(t.n, axis=1) <= 1)
        )
        return 1.0 if identical else 0.0
    return float((sum_cells - expected) / denom)


def nmi(t: ContingencyTable, normalization: str = "arithmetic") -> float:
    """Normalized mutual information from the contingency table.

    ``arithmetic`` returns 2 I / (H(Y) + H(C)); ``geometric`` returns
    I / sqrt(H(Y) H(C)). Natural logarithms. Two constant partitions
    agree perfectly and score 1.
    """
    if normalization not in ("arithmetic", "geometric"):
        raise ValueError(f"unknown normalization {normalization!r}")
    m = float(t.total)
    p = t.n / m
    pa = t.a / m
    pb = t.b / m
    nz = p > 0
    outer = np.outer(pa, pb)
    info = float(np.sum(p[nz] * np.log(p[nz] / outer[nz])))
    hy = float(-np.sum(pa[pa > 0] * np.log(pa[pa > 0])))
    hc = float(-np.sum(pb[pb > 0] * np.log(pb[pb > 0])))
    if hy == 0 and hc == 0:
        return 1.0
    if normalization == "arithmetic":
        value = 2.0 * info / (hy + hc)
    else:
        denom = np.sqrt(hy * hc)
        value = info / denom if denom > 0 else 0.0
    return float(min(1.0, max(0.0, value)))


def align_labels(t: ContingencyTable) -> dict[int, int]:
    """Maximum-weight cluster-to-class assignment (Hungarian algorithm).

    The contingency table is zero-padded to a square; the returned map is
    injective and covers every cluster that wins a real class.
    """
    n_classes, n_clusters = t.n.shape
    k = max(n_classes, n_clusters)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[:n_classes, :n_clusters] = t.n
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return {
        int(c): int(r)
        for r, c in zip(rows, cols)
        if r < n_classes and c < n_clusters
    }


def accuracy(y, c) -> float:
    """Fraction of samples whose Hungarian-aligned cluster matches the truth."""
    yi = _label_indices(y)
    ci = _cluster_indices(c)
    mapping = align_labels(contingency(yi, ci))
    matched = sum(1 for t_, c_ in zip(yi, ci) if mapping.get(int(c_)) == int(t_))
    return matched / yi.size


def purity(y, c) -> float:
    """Mean plurality fraction per cluster (no injective mapping)."""
    t = contingency(y, c)
    return float(t.n.max(axis=0).sum() / t.total)


@dataclass
class RSReport:
    """Per-sample residue/similarity scores and their class aggregates."""

    classes: list[str]
    r_scores: np.ndarray
    s_scores: np.ndarray
    cri: np.ndarray
    csi: np.ndarray
    ri: float
    si: float
    rsd: float
    rsi: float


def rs_scores(h: np.ndarray, labels) -> RSReport:
    """Residue score (normalized inter-class distance sum) and similarity
    score (intra-class mean of 1 - d/d_max) per sample.

    Class aggregates: CRI/CSI are per-class means, RI/SI their means over
    classes, RSD = RI - SI and RSI = 1 - |RI - SI|. The intra-class mean
    includes the sample's own zero distance.
    """
    points = np.asarray(h, dtype=np.float64).T
    if isinstance(labels, LabelVector):
        y = labels
    else:
        y = LabelVector(list(labels))
    if len(y) != points.shape[0]:
        raise ValueError(f"{len(y)} labels for {points.shape[0]} samples")
    if points.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    d = cdist(points, points, metric="euclidean")
    dmax = float(d.max())
    if dmax == 0:
        raise ValueError("all samples coincide: maximum pairwise distance is 0")
    yi = y.indices()
    same = yi[:, None] == yi[None, :]
    inter = np.where(same, 0.0, d).sum(axis=1)
    rmax = inter.max()
    if rmax == 0:
        warnings.warn(
            "all samples share one class: residue scores are undefined, reporting 0",
            stacklevel=2,
        )
        r = np.zeros_like(inter)
    else:
        r = inter / rmax
    class_sizes = np.bincount(yi, minlength=len(y.classes))
    s = np.where(same, 1.0 - d / dmax, 0.0).sum(axis=1) / class_sizes[yi]
    cri = np.array([r[yi == l].mean() for l in range(len(y.classes))])
    csi = np.array([s[yi == l].mean() for l in range(len(y.classes))])
    ri = float(cri.mean())
    si = float(csi.mean())
    return RSReport(
        classes=list(y.classes),
        r_scores=r,
        s_scores=s,
        cri=cri,
        csi=csi,
        ri=ri,
        si=si,
        rsd=ri - si,
        rsi=1.0 - abs(ri - si),
    )


@dataclass
class EvalReport:
    """Full clustering evaluation of one factorization run."""

    cell_ids: list[str]
    true_labels: list[str]
    cluster_labels: np.ndarray
    aligned_labels: list[str]
    ari: float
    nmi: float
    purity: float
    accuracy: float
    rs: RSReport | None = None

    def metrics(self) -> dict:
        return {
            "ari": self.ari,
            "nmi": self.nmi,
            "purity": self.purity,
            "accuracy": self.accuracy,
            "ri": self.rs.ri if self.rs else None,
            "si": self.rs.si if self.rs else None,
            "rsd": self.rs.rsd if self.rs else None,
            "rsi": self.rs.rsi if self.rs else None,
        }

    def write_metrics_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.metrics(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_scores_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["cell_id", "true_label", "cluster_label", "aligned_label", "r_score", "s_score"]
            )
            for j, cid in enumerate(self.cell_ids):
                writer.writerow(
                    [
                        cid,
                        self.true_labels[j],
                        int(self.cluster_labels[j]),
                        self.aligned_labels[j],
                        repr(float(self.rs.r_scores[j])) if self.rs else "",
                        repr(float(self.rs.s_scores[j])) if self.rs else "",
                    ]
                )


def evaluate_clustering(
    h: np.ndarray,
    y: LabelVector,
    assignment: ClusterAssignment,
    cell_ids: list[str] | None = None,
    with_rs: bool = True,
) -> EvalReport:
    """Score a clustering of H against true labels and assemble the report."""
    t = contingency(y, assignment)
    mapping = align_labels(t)
    aligned = [
        y.classes[mapping[int(c)]] if int(c) in mapping else f"unmapped-{int(c)}"
        for c in assignment.labels
    ]
    ids = cell_ids if cell_ids is not None else [f"c{j}" for j in range(len(y))]
    return EvalReport(
        cell_ids=list(ids),
        true_labels=list(y.labels),
        cluster_labels=assignment.labels.copy(),
        aligned_labels=aligned,
        ari=ari(t),
        nmi=nmi(t),
        purity=purity(y, assignment),
        accuracy=accuracy(y, assignment),
        rs=rs_scores(h, y) if with_rs else None,
    )
