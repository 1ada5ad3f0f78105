"""Multiplicative-update NMF solver with optional graph regularization.

Eight method variants share one iteration loop. They differ along two
axes: the reconstruction loss (squared Frobenius or the l2,1 column-norm
sum) and the graph handed to the regularizer (none, a single-scale
heat-kernel graph, or one of the two multiscale constructions). One full
iteration updates W then H; a small epsilon is added to every
denominator entry.

Update rules, with Q = diag(1 / max(residual column norm, eps)) for the
l2,1 variants and (A, D) the adjacency/degree parts of the regularizer:

* frobenius:        w <- w (XH^T) / (WHH^T)
                    h <- h (W^TX + lam·HA) / (W^TWH + lam·HD)
* l2,1:             w <- w (XQH^T) / (WHQH^T)
                    h <- h (W^TXQ + 2·lam·HA) / (W^TWHQ + 2·lam·HD)

Q is computed once per iteration, from the factors the iteration starts
with; both updates of that iteration reuse it. This keeps every variant
a majorize-minimize step, so the reported objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ExpressionMatrix
from .graphs import GraphRegularizer

#: variant name -> (loss, graph kind consumed by the benchmark wiring)
VARIANT_INFO = {
    "nmf": ("frobenius", None),
    "rnmf": ("l21", None),
    "gnmf": ("frobenius", "heat"),
    "rgnmf": ("l21", "heat"),
    "tnmf": ("frobenius", "cutoff"),
    "rtnmf": ("l21", "cutoff"),
    "ktnmf": ("frobenius", "knn"),
    "krtnmf": ("l21", "knn"),
}

VARIANTS = tuple(VARIANT_INFO)


def canonical_variant(name: str) -> str:
    """Normalize a method name ('k-rTNMF' -> 'krtnmf')."""
    key = name.lower().replace("-", "").replace("_", "")
    if key not in VARIANT_INFO:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    return key


def is_regularized(variant: str) -> bool:
    return VARIANT_INFO[canonical_variant(variant)][1] is not None


@dataclass
class MethodConfig:
    """Solver configuration for one method variant."""

    variant: str
    rank: int
    lam: float = 1.0
    graph: GraphRegularizer | None = None
    max_iters: int = 500
    rel_tol: float = 1e-6
    seed: int = 0
    eps: float = 1e-10

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class FactorPair:
    """Nonnegative factors W (genes x rank) and H (rank x cells)."""

    W: np.ndarray
    H: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    iters_run: int = 0

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        if self.W.ndim != 2 or self.H.ndim != 2 or self.W.shape[1] != self.H.shape[0]:
            raise ValueError(
                f"factor shapes {self.W.shape} x {self.H.shape} do not chain"
            )
        if np.any(self.W < 0) or np.any(self.H < 0):
            raise ValueError("factors must be nonnegative")

    @property
    def rank(self) -> int:
        return self.W.shape[1]


def l21_norm(a: np.ndarray) -> float:
    """Sum of the Euclidean norms of the columns of ``a``."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64), axis=0).sum())


def _as_values(x) -> np.ndarray:
    return x.values if isinstance(x, ExpressionMatrix) else np.asarray(x, dtype=np.float64)


def nndsvda_init(x, rank: int) -> FactorPair:
    """Deterministic SVD-based nonnegative initialization.

    The leading singular triplet seeds the first component with its
    absolute values; each later component keeps whichever sign-split
    (positive or negative parts) of its singular vectors carries the
    larger norm product. Remaining zeros are filled with the matrix mean,
    so the factors are strictly positive whenever the mean is.
    """
    values = _as_values(x)
    n, m = values.shape
    if not 1 <= rank <= min(n, m):
        raise ValueError(f"rank must be in [1, {min(n, m)}], got {rank}")
    try:
        u, s, vt = np.linalg.svd(values, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"SVD failed on degenerate input: {exc}") from None

    w = np.zeros((n, rank))
    h = np.zeros((rank, m))
    w[:, 0] = np.sqrt(s[0]) * np.abs(u[:, 0])
    h[0, :] = np.sqrt(s[0]) * np.abs(vt[0, :])
    for p in range(1, rank):
        up, un = np.maximum(u[:, p], 0), np.maximum(-u[:, p], 0)
        vp, vn = np.maximum(vt[p, :], 0), np.maximum(-vt[p, :], 0)
        mp = np.linalg.norm(up) * np.linalg.norm(vp)
        mn = np.linalg.norm(un) * np.linalg.norm(vn)
        if max(mp, mn) == 0:
            continue
        if mp > mn:
            uu, vv, sig = up / np.linalg.norm(up), vp / np.linalg.norm(vp), mp
        else:
            uu, vv, sig = un / np.linalg.norm(un), vn / np.linalg.norm(vn), mn
        scale = np.sqrt(s[p] * sig)
        w[:, p] = scale * uu
        h[p, :] = scale * vv

    w[w < np.finfo(np.float64).eps] = 0
    h[h < np.finfo(np.float64).eps] = 0
    mean = values.mean()
    w[w == 0] = mean
    h[h == 0] = mean
    return FactorPair(w, h)


def _objective_arrays(
    values: np.ndarray,
    w: np.ndarray,
    h: np.ndarray,
    loss: str,
    lam: float,
    graph: GraphRegularizer | None,
) -> float:
    resid = values - w @ h
    if loss == "l21":
        fit = float(np.linalg.norm(resid, axis=0).sum())
    else:
        fit = float(np.sum(resid * resid))
    if graph is not None and lam > 0:
        fit += lam * graph.quadratic_form(h)
    return fit


def objective(x, cfg: MethodConfig, wh: FactorPair) -> float:
    """Value of the variant's objective at the given factors.

    Frobenius variants: ||X - WH||_F^2 + lam Tr(H L H^T); l2,1 variants
    use the unsquared column-norm sum. Unregularized variants carry no
    graph term.
    """
    values = _as_values(x)
    if wh.W.shape[0] != values.shape[0] or wh.H.shape[1] != values.shape[1]:
        raise ValueError("factor dimensions do not match the data matrix")
    loss, kind = VARIANT_INFO[cfg.variant]
    graph = cfg.graph if kind is not None else None
    return _objective_arrays(values, wh.W, wh.H, loss, cfg.lam, graph)


def save_factors(wh: FactorPair, gene_ids, cell_ids, out_dir) -> dict:
    """Export W, H and the objective trace as dense-csv files."""
    from pathlib import Path

    from .data import write_dense

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    component_ids = [f"mg{i}" for i in range(wh.rank)]
    paths = {
        "W": out / "w.csv",
        "H": out / "h.csv",
        "trace": out / "objective_trace.csv",
    }
    write_dense(wh.W, gene_ids, component_ids, paths["W"])
    write_dense(wh.H, component_ids, cell_ids, paths["H"])
    with open(paths["trace"], "w", encoding="utf-8") as fh:
        fh.write("iteration,objective\n")
        for i, v in enumerate(wh.objective_trace):
            fh.write(f"{i},{repr(float(v))}\n")
    return {k: str(v) for k, v in paths.items()}


def run_metadata(cfg: MethodConfig, wh: FactorPair) -> dict:
    """Config echo plus convergence summary, ready for JSON serialization."""
    return {
        "variant": cfg.variant,
        "rank": cfg.rank,
        "lambda": cfg.lam,
        "max_iters": cfg.max_iters,
        "rel_tol": cfg.rel_tol,
        "seed": cfg.seed,
        "eps": cfg.eps,
        "regularized": cfg.graph is not None,
        "iterations": wh.iters_run,
        "final_objective": wh.objective_trace[-1] if wh.objective_trace else None,
    }


def factorize(x, cfg: MethodConfig, init: FactorPair, callback=None) -> FactorPair:
    """Run the variant's multiplicative updates from ``init``.

    Iterates until the relative objective change drops below
    ``cfg.rel_tol`` or ``cfg.max_iters`` iterations have run. Returns the
    final factors with the full objective trace (entry 0 is the objective
    at the initialization). ``callback(iteration, W, H)``, if given, is
    invoked after every full iteration with the live arrays.
    """
    values = _as_values(x)
    n, m = values.shape
    if init.W.shape != (n, init.rank) or init.H.shape != (init.rank, m):
        raise ValueError(
            f"init shapes {init.W.shape}, {init.H.shape} do not match data {values.shape}"
        )
    loss, kind = VARIANT_INFO[cfg.variant]
    graph = None
    if kind is not None:
        if cfg.graph is None:
            raise ValueError(f"variant {cfg.variant} requires a graph regularizer")
        if cfg.graph.size != m:
            raise ValueError(
                f"graph has {cfg.graph.size} nodes for {m} cells"
            )
        graph = cfg.graph
    # lam = 0 reduces bit-for-bit to the unregularized variant
    use_graph = graph is not None and cfg.lam > 0
    graph_coeff = cfg.lam if loss == "frobenius" else 2.0 * cfg.lam
    eps = cfg.eps

    w = init.W.copy()
    h = init.H.copy()
    trace = [_objective_arrays(values, w, h, loss, cfg.lam, graph)]
    iters = 0
    for it in range(1, cfg.max_iters + 1):
        if loss == "l21":
            resid_norms = np.linalg.norm(values - w @ h, axis=0)
            q = 1.0 / np.maximum(resid_norms, eps)
            hq = h * q
            w *= (values @ hq.T) / (w @ (hq @ h.T) + eps)
            num = (w.T @ values) * q
            den = ((w.T @ w) @ h) * q
        else:
            w *= (values @ h.T) / (w @ (h @ h.T) + eps)
            num = w.T @ values
            den = (w.T @ w) @ h
        if use_graph:
            num = num + graph_coeff * (h @ graph.adjacency)
            den = den + graph_coeff * (h * graph.degrees)
        h *= num / (den + eps)

        value = _objective_arrays(values, w, h, loss, cfg.lam, graph)
        if not np.isfinite(value):
            raise ValueError(f"non-finite objective at iteration {it}")
        trace.append(value)
        iters = it
        if callback is not None:
            callback(it, w, h)
        if abs(trace[-1] - trace[-2]) / (1.0 + abs(trace[-1])) < cfg.rel_tol:
            break

    return FactorPair(w, h, objective_trace=trace, iters_run=iters)
