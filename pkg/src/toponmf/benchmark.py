"""End-to-end benchmark orchestration.

One run prepares the data (class filter, log transform, unit scaling),
builds the distance matrix and the graph regularizers, shares a single
NNDSVDA initialization across every requested method, factorizes,
clusters H with k-means (one cluster per surviving class) and scores the
result. A binary weight sweep enumerates every nonzero vector in
{0,1}^T for the multiscale methods and keeps all candidates in a sidecar
table.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .data import (
    ExpressionMatrix,
    LabelVector,
    filter_low_abundance_genes,
    filter_rare_classes,
    load_labels,
    load_matrix,
    log_normalize,
    save_matrix,
    unit_scale_columns,
)
from .evaluation import evaluate_clustering, kmeans
from .factorization import (
    VARIANT_INFO,
    FactorPair,
    MethodConfig,
    canonical_variant,
    factorize,
    nndsvda_init,
)
from .graphs import (
    GraphRegularizer,
    cutoff_filtration_levels,
    cutoff_persistent_laplacian,
    heat_kernel_knn_graph,
    knn_filtration_levels,
    knn_persistent_laplacian,
    mean_knn_squared_distance,
    pairwise_distances,
)

DEFAULT_METHODS = ("krtnmf", "rtnmf", "ktnmf", "tnmf", "rgnmf", "gnmf", "rnmf", "nmf")


def resolve_rank(policy, n_classes: int | None, n_cells: int) -> int:
    """Turn a rank policy ('classes', 'sqrt' or an integer) into a rank."""
    if isinstance(policy, int):
        return policy
    if isinstance(policy, str) and policy.isdigit():
        return int(policy)
    if policy == "classes":
        if n_classes is None:
            raise ValueError("rank policy 'classes' requires labels")
        return n_classes
    if policy == "sqrt":
        return int(math.isqrt(n_cells))
    raise ValueError(f"unknown rank policy {policy!r}")


def generate_blobs(
    n_classes: int, per_class: int, dim: int, separation: float, seed: int
) -> tuple[ExpressionMatrix, LabelVector]:
    """Synthetic nonnegative Gaussian blobs, one class per center.

    Centers are drawn in the nonnegative orthant and rescaled so the
    minimum pairwise center distance equals ``separation``; unit-variance
    noise is added per coordinate and negatives are clipped to zero.
    """
    if min(n_classes, per_class, dim) < 1:
        raise ValueError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    block = dim // n_classes
    if block >= 1:
        # disjoint coordinate blocks keep the classes angularly separated,
        # which survives log transform and unit scaling downstream
        centers = np.zeros((n_classes, dim))
        for l in range(n_classes):
            centers[l, l * block : (l + 1) * block] = rng.uniform(0.5, 1.0, block)
    else:
        centers = rng.uniform(0.5, 1.0, size=(n_classes, dim))
    if n_classes > 1:
        diffs = centers[:, None, :] - centers[None, :, :]
        dists = np.sqrt((diffs**2).sum(-1))
        dmin = dists[~np.eye(n_classes, dtype=bool)].min()
        while dmin == 0:  # only possible in the dense fallback; redraw
            centers = rng.uniform(0.5, 1.0, size=(n_classes, dim))
            diffs = centers[:, None, :] - centers[None, :, :]
            dists = np.sqrt((diffs**2).sum(-1))
            dmin = dists[~np.eye(n_classes, dtype=bool)].min()
        # separation = 0 collapses every center to the origin
        centers *= separation / dmin
    m = n_classes * per_class
    noise = rng.standard_normal(size=(dim, m))
    values = np.empty((dim, m))
    labels = []
    for l in range(n_classes):
        cols = slice(l * per_class, (l + 1) * per_class)
        values[:, cols] = centers[l][:, None] + noise[:, cols]
        labels.extend([f"type{l}"] * per_class)
    np.clip(values, 0.0, None, out=values)
    x = ExpressionMatrix(
        values,
        [f"g{i}" for i in range(dim)],
        [f"c{j}" for j in range(m)],
    )
    return x, LabelVector(labels)


def export_metagenes(wh: FactorPair, cell_ids: list[str], out) -> str:
    """Write the reduced representation H as dense-csv (rows = meta-genes)."""
    x = ExpressionMatrix(
        wh.H, [f"mg{i}" for i in range(wh.rank)], list(cell_ids)
    )
    save_matrix(x, out)
    return str(out)


@dataclass
class RunSpec:
    """Everything one benchmark invocation depends on."""

    data: str = ""
    labels: str | None = None
    fmt: str = "dense-csv"
    dataset: str = ""
    methods: tuple = DEFAULT_METHODS
    rank: object = "classes"
    lam: float = 1.0
    knn: int = 8
    filtrations: int = 8
    zeta: tuple | None = None
    zeta_sweep: str = "off"  # off | binary
    sigma: float | None = None
    min_class_cells: int = 15
    gene_filter: int = 0
    log_transform: bool = True
    unit_scale: bool = True
    max_iters: int = 500
    rel_tol: float = 1e-6
    restarts: int = 10
    n_clusters: int | None = None
    seed: int = 0
    with_rs: bool = True

    def __post_init__(self):
        self.methods = tuple(canonical_variant(m) for m in self.methods)
        if self.zeta_sweep not in ("off", "binary"):
            raise ValueError("zeta_sweep must be 'off' or 'binary'")
        if self.zeta is not None:
            self.zeta = tuple(float(z) for z in self.zeta)
            if len(self.zeta) != self.filtrations:
                raise ValueError(
                    f"zeta has {len(self.zeta)} entries for {self.filtrations} filtrations"
                )


@dataclass
class ResultRow:
    dataset: str
    method: str
    zeta: str
    ari: float | None
    nmi: float | None
    purity: float | None
    accuracy: float | None
    objective: float
    iterations: int
    wall_time: float
    inertia: float


RESULT_COLUMNS = (
    "dataset",
    "method",
    "zeta",
    "ari",
    "nmi",
    "purity",
    "accuracy",
    "objective",
    "iterations",
)


def _fmt_metric(v) -> str:
    return "" if v is None else f"{v:.6f}"


def _row_record(row: ResultRow, with_inertia: bool = False) -> list[str]:
    rec = [
        row.dataset,
        row.method,
        row.zeta,
        _fmt_metric(row.ari),
        _fmt_metric(row.nmi),
        _fmt_metric(row.purity),
        _fmt_metric(row.accuracy),
        f"{row.objective:.8e}",
        str(row.iterations),
    ]
    if with_inertia:
        rec.append(f"{row.inertia:.8e}")
    return rec


@dataclass
class BenchmarkResult:
    table: list[ResultRow]
    sweep_rows: list[ResultRow]
    reports: dict
    metadata: dict

    def results_csv_text(self) -> str:
        # wall times live in metadata.json: reruns must be byte-identical
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in self.table:
            writer.writerow(_row_record(row))
        return buf.getvalue()

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"results": out / "results.csv", "metadata": out / "metadata.json"}
        paths["results"].write_text(self.results_csv_text(), encoding="utf-8")
        with open(paths["metadata"], "w", encoding="utf-8") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if self.sweep_rows:
            paths["sweep"] = out / "sweep_candidates.csv"
            with open(paths["sweep"], "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(RESULT_COLUMNS + ("inertia",))
                for row in self.sweep_rows:
                    writer.writerow(_row_record(row, with_inertia=True))
        scores_dir = out / "scores"
        for (method, zeta_str), report in self.reports.items():
            scores_dir.mkdir(parents=True, exist_ok=True)
            name = method if not zeta_str else f"{method}_{zeta_str.replace(',', '')}"
            report.write_scores_csv(scores_dir / f"{name}.csv")
        return {k: str(v) for k, v in paths.items()}


def prepare_dataset(spec: RunSpec) -> tuple[ExpressionMatrix, LabelVector | None, dict]:
    """Load and preprocess data + labels according to the RunSpec toggles."""
    x = load_matrix(spec.data, spec.fmt)
    y = load_labels(spec.labels, expected=x.n_cells) if spec.labels else None
    steps = []
    if y is not None and spec.min_class_cells > 0:
        before = x.n_cells
        x, y = filter_rare_classes(x, y, spec.min_class_cells)
        steps.append(f"filter_rare_classes(min_cells={spec.min_class_cells}): {before}->{x.n_cells} cells")
    if spec.gene_filter > 0:
        before = x.n_genes
        x = filter_low_abundance_genes(x, spec.gene_filter)
        steps.append(f"filter_low_abundance_genes(min_cells={spec.gene_filter}): {before}->{x.n_genes} genes")
    if spec.log_transform:
        x = log_normalize(x)
        steps.append("log_normalize")
    if spec.unit_scale:
        x = unit_scale_columns(x)
        steps.append("unit_scale_columns")
    return x, y, {"pipeline": steps}


def _binary_sweep(n_levels: int):
    for i in range(1, 2**n_levels):
        yield tuple(float((i >> t) & 1) for t in range(n_levels))


def _zeta_str(zeta) -> str:
    return ",".join(f"{z:g}" for z in zeta)


class GraphCache:
    """Builds each regularizer kind at most once per (distances, weights)."""

    def __init__(self, dist: np.ndarray, spec: RunSpec):
        self.dist = dist
        self.spec = spec
        self.sigma_used = None
        self._heat = None
        self._levels: dict[str, list[np.ndarray]] = {}

    def heat(self) -> GraphRegularizer:
        if self._heat is None:
            sigma = self.spec.sigma
            if sigma is None:
                sigma = mean_knn_squared_distance(self.dist, self.spec.knn)
            self.sigma_used = float(sigma)
            self._heat = heat_kernel_knn_graph(self.dist, self.spec.knn, sigma)
        return self._heat

    def levels(self, kind: str) -> list[np.ndarray]:
        if kind not in self._levels:
            t = self.spec.filtrations
            if kind == "cutoff":
                self._levels[kind] = cutoff_filtration_levels(self.dist, t)
            else:
                self._levels[kind] = knn_filtration_levels(self.dist, t)
        return self._levels[kind]

    def multiscale(self, kind: str, zeta) -> GraphRegularizer:
        levels = self.levels(kind)
        if kind == "cutoff":
            return cutoff_persistent_laplacian(self.dist, zeta, levels=levels)
        return knn_persistent_laplacian(self.dist, zeta, levels=levels)


def run_benchmark(spec: RunSpec) -> BenchmarkResult:
    """Execute the full pipeline for every configured method.

    Returns the result table (one row per method; the best weight vector
    per multiscale method in sweep mode), the sweep sidecar rows, one
    evaluation report per table row, and run metadata.
    """
    x, y, prep_meta = prepare_dataset(spec)
    dataset = spec.dataset or Path(spec.data).stem
    n_classes = len(y.classes) if y is not None else None
    n_clusters = spec.n_clusters or n_classes
    if n_clusters is None:
        raise ValueError("need labels or an explicit cluster count")
    rank = resolve_rank(spec.rank, n_classes, x.n_cells)

    dist = pairwise_distances(x)
    cache = GraphCache(dist, spec)
    init = nndsvda_init(x, rank)  # shared across methods for fairness
    default_zeta = spec.zeta or tuple(1.0 for _ in range(spec.filtrations))

    def one_run(method: str, graph, zeta_str: str):
        run_key = f"{dataset}/{method}" + (f"/zeta={zeta_str}" if zeta_str else "")
        cfg = MethodConfig(
            variant=method,
            rank=rank,
            lam=spec.lam,
            graph=graph,
            max_iters=spec.max_iters,
            rel_tol=spec.rel_tol,
            seed=spec.seed,
        )
        try:
            start = time.perf_counter()
            wh = factorize(x, cfg, init)
            wall = time.perf_counter() - start
            assignment = kmeans(wh.H, n_clusters, seed=spec.seed, restarts=spec.restarts)
            report = None
            if y is not None:
                report = evaluate_clustering(
                    wh.H, y, assignment, cell_ids=x.cell_ids, with_rs=spec.with_rs
                )
        except ValueError as exc:
            raise ValueError(f"{run_key}: {exc}") from exc
        row = ResultRow(
            dataset=dataset,
            method=method,
            zeta=zeta_str,
            ari=report.ari if report else None,
            nmi=report.nmi if report else None,
            purity=report.purity if report else None,
            accuracy=report.accuracy if report else None,
            objective=wh.objective_trace[-1],
            iterations=wh.iters_run,
            wall_time=wall,
            inertia=assignment.inertia,
        )
        return row, report, wh

    table: list[ResultRow] = []
    sweep_rows: list[ResultRow] = []
    reports: dict = {}
    run_meta: list[dict] = []

    def build_graph(method, kind, zeta):
        try:
            return cache.heat() if kind == "heat" else cache.multiscale(kind, zeta)
        except ValueError as exc:
            raise ValueError(f"{dataset}/{method}: {exc}") from exc

    for method in spec.methods:
        kind = VARIANT_INFO[method][1]
        if kind is None:
            row, report, wh = one_run(method, None, "")
        elif kind == "heat":
            row, report, wh = one_run(method, build_graph(method, kind, None), "")
        elif spec.zeta_sweep == "binary":
            best = None
            for zeta in _binary_sweep(spec.filtrations):
                zs = _zeta_str(zeta)
                graph = build_graph(method, kind, zeta)
                cand_row, cand_report, cand_wh = one_run(method, graph, zs)
                sweep_rows.append(cand_row)
                if y is not None:
                    better = best is None or cand_row.ari > best[0].ari
                else:
                    better = best is None or cand_row.inertia < best[0].inertia
                if better:
                    best = (cand_row, cand_report, cand_wh)
            row, report, wh = best
        else:
            graph = build_graph(method, kind, default_zeta)
            row, report, wh = one_run(method, graph, _zeta_str(default_zeta))
        table.append(row)
        if report is not None:
            reports[(method, row.zeta)] = report
        run_meta.append(
            {
                "method": method,
                "zeta": row.zeta,
                "iterations": row.iterations,
                "final_objective": row.objective,
                "wall_time_s": row.wall_time,
                "kmeans_inertia": row.inertia,
            }
        )

    metadata = {
        "dataset": dataset,
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "preprocessing": prep_meta["pipeline"],
        "n_genes": x.n_genes,
        "n_cells": x.n_cells,
        "n_classes": n_classes,
        "rank": rank,
        "sigma_used": cache.sigma_used,
        "runs": run_meta,
        "threads": {
            var: os.environ.get(var, "")
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
        },
        "versions": {"numpy": np.__version__},
    }
    return BenchmarkResult(
        table=table, sweep_rows=sweep_rows, reports=reports, metadata=metadata
    )
