"""Command-line interface.

Subcommands: ``prep`` (ingest + preprocess + cache), ``run`` (benchmark),
``sweep`` (binary weight enumeration), ``export`` (meta-gene matrix),
``plot`` (RS scatter SVGs from a scores CSV) and ``blobs`` (synthetic
data generator). A TOML or JSON config file can provide any run option;
explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bench
from .data import save_labels, save_matrix
from .evaluation import EvalReport, RSReport
from .factorization import MethodConfig, factorize, nndsvda_init
from .graphs import dump_regularizer, pairwise_distances
from .plots import emit_plots


def _load_config(path: str) -> dict:
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".json":
        return json.loads(text)
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # py >= 3.11
        except ImportError:
            try:
                import tomli as tomllib
            except ImportError:
                raise ValueError(
                    "TOML config requires Python 3.11+ or the tomli package; "
                    "use a JSON config instead"
                ) from None
        return tomllib.loads(text.decode("utf-8"))
    raise ValueError(f"config {path} must end in .json or .toml")


def _parse_zeta(text: str):
    """'sweep' or a comma-separated weight vector."""
    if text.strip().lower() == "sweep":
        return "sweep"
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise ValueError(f"cannot parse zeta {text!r}: expected 'sweep' or comma-separated numbers") from None


def _parse_sigma(text: str):
    if text.strip().lower() == "auto":
        return None
    return float(text)


def _add_data_options(p: argparse.ArgumentParser):
    p.add_argument("--data", help="expression matrix file")
    p.add_argument("--labels", help="sidecar labels file (one label per line)")
    p.add_argument("--format", dest="fmt", choices=["dense-csv", "dense-tsv", "coo-triplets"],
                   help="input matrix format (default dense-csv)")
    p.add_argument("--min-cells", type=int, help="drop classes with fewer cells (default 15, 0 disables)")
    p.add_argument("--gene-filter", type=int,
                   help="drop genes expressed in fewer cells (default 0 = off)")
    p.add_argument("--no-log", action="store_true", help="skip log(1+v) transform")
    p.add_argument("--no-scale", action="store_true", help="skip unit column scaling")


def _add_method_options(p: argparse.ArgumentParser):
    p.add_argument("--method", action="append", dest="methods", metavar="NAME",
                   help="method to run (repeatable); default: all eight")
    p.add_argument("--rank", help="rank policy: 'classes', 'sqrt' or an integer")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization weight (default 1.0)")
    p.add_argument("--knn", type=int, help="heat-kernel neighbor count (default 8)")
    p.add_argument("--filtrations", type=int, help="number of filtration levels T (default 8)")
    p.add_argument("--zeta", type=_parse_zeta, help="comma bit-vector of level weights, or 'sweep'")
    p.add_argument("--sigma", type=_parse_sigma,
                   help="heat-kernel scale, or 'auto' (mean squared k-NN distance)")
    p.add_argument("--max-iters", type=int, help="solver iteration budget (default 500)")
    p.add_argument("--rel-tol", type=float, help="relative objective-change stop (default 1e-6)")
    p.add_argument("--restarts", type=int, help="k-means restarts (default 10)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")


def _build_spec(args, force_sweep: bool = False) -> bench.RunSpec:
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    aliases = {"format": "fmt", "lambda": "lam", "method": "methods",
               "no_log": "no_log", "no_scale": "no_scale"}
    merged = {}
    for key, value in cfg.items():
        merged[aliases.get(key, key)] = value

    def pick(name, cli_value, default):
        if cli_value is not None and cli_value is not False:
            return cli_value
        if name in merged:
            return merged[name]
        return default

    zeta = pick("zeta", args.zeta, None)
    if isinstance(zeta, str):
        zeta = _parse_zeta(zeta)
    sweep = force_sweep or zeta == "sweep"
    if zeta == "sweep":
        zeta = None
    filtrations = pick("filtrations", args.filtrations, None)
    if filtrations is None:
        filtrations = len(zeta) if zeta is not None else 8
    elif zeta is not None and len(zeta) != filtrations:
        raise ValueError(f"--zeta has {len(zeta)} entries but --filtrations is {filtrations}")

    rank = pick("rank", args.rank, "classes")
    if isinstance(rank, str) and rank.isdigit():
        rank = int(rank)

    spec = bench.RunSpec(
        data=pick("data", args.data, None) or "",
        labels=pick("labels", args.labels, None),
        fmt=pick("fmt", args.fmt, "dense-csv"),
        dataset=merged.get("dataset", ""),
        methods=tuple(pick("methods", args.methods, bench.DEFAULT_METHODS)),
        rank=rank,
        lam=float(pick("lam", args.lam, 1.0)),
        knn=int(pick("knn", args.knn, 8)),
        filtrations=int(filtrations),
        zeta=zeta,
        zeta_sweep="binary" if sweep else "off",
        sigma=pick("sigma", args.sigma, None),
        min_class_cells=int(pick("min_class_cells", args.min_cells, 15)),
        gene_filter=int(pick("gene_filter", args.gene_filter, 0)),
        log_transform=not pick("no_log", args.no_log, False),
        unit_scale=not pick("no_scale", args.no_scale, False),
        max_iters=int(pick("max_iters", args.max_iters, 500)),
        rel_tol=float(pick("rel_tol", args.rel_tol, 1e-6)),
        restarts=int(pick("restarts", args.restarts, 10)),
        seed=int(pick("seed", args.seed, 0)),
    )
    if not spec.data:
        raise ValueError("--data (or a config entry) is required")
    return spec


def _cmd_blobs(args) -> int:
    x, y = bench.generate_blobs(
        args.classes, args.per_class, args.genes, args.separation, args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(x, out / "matrix.csv")
    save_labels(y, out / "labels.txt")
    print(f"wrote {x.n_genes}x{x.n_cells} matrix and labels to {out}")
    return 0


def _cmd_prep(args) -> int:
    spec = _build_spec(args)
    x, y, meta = bench.prepare_dataset(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(x, out / "matrix.csv")
    if y is not None:
        save_labels(y, out / "labels.txt")
    meta.update({"n_genes": x.n_genes, "n_cells": x.n_cells,
                 "n_classes": len(y.classes) if y else None})
    with open(out / "prep_metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"cached preprocessed {x.n_genes}x{x.n_cells} matrix in {out}")
    return 0


def _cmd_run(args, force_sweep: bool = False) -> int:
    spec = _build_spec(args, force_sweep=force_sweep)
    result = bench.run_benchmark(spec)
    paths = result.write(args.out)
    for row in result.table:
        ari = "" if row.ari is None else f"ari={row.ari:.4f} "
        print(f"{row.method:>8} {ari}iters={row.iterations} objective={row.objective:.4e}")
    if args.plots:
        for (method, zeta_str), report in result.reports.items():
            emit_plots(report, Path(args.out) / "plots" / method)
    if args.dump_graphs:
        _dump_run_graphs(spec, Path(args.out) / "graphs")
    print(f"results written to {paths['results']}")
    return 0


def _dump_run_graphs(spec: bench.RunSpec, out_dir: Path) -> None:
    """Rebuild each regularizer the run used and dump it as coo-triplets."""
    x, _, _ = bench.prepare_dataset(spec)
    dist = pairwise_distances(x)
    cache = bench.GraphCache(dist, spec)
    zeta = spec.zeta or tuple(1.0 for _ in range(spec.filtrations))
    kinds = {bench.VARIANT_INFO[m][1] for m in spec.methods} - {None}
    for kind in sorted(kinds):
        reg = cache.heat() if kind == "heat" else cache.multiscale(kind, zeta)
        dump_regularizer(reg, out_dir, prefix=f"{kind}_")


def _cmd_export(args) -> int:
    spec = _build_spec(args)
    if args.rank is None and "rank" not in (_load_config(args.config) if args.config else {}):
        spec.rank = "sqrt"  # visualization default: floor(sqrt(M)) meta-genes
    methods = spec.methods if args.methods else ("tnmf",)
    method = methods[0]
    x, y, _ = bench.prepare_dataset(spec)
    n_classes = len(y.classes) if y is not None else None
    rank = bench.resolve_rank(spec.rank, n_classes, x.n_cells)
    init = nndsvda_init(x, rank)
    kind = bench.VARIANT_INFO[method][1]
    graph = None
    if kind is not None:
        dist = pairwise_distances(x)
        cache = bench.GraphCache(dist, spec)
        if kind == "heat":
            graph = cache.heat()
        else:
            zeta = spec.zeta or tuple(1.0 for _ in range(spec.filtrations))
            graph = cache.multiscale(kind, zeta)
    cfg = MethodConfig(variant=method, rank=rank, lam=spec.lam, graph=graph,
                       max_iters=spec.max_iters, rel_tol=spec.rel_tol, seed=spec.seed)
    wh = factorize(x, cfg, init)
    out = Path(args.out)
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "metagenes.csv"
    bench.export_metagenes(wh, x.cell_ids, out)
    print(f"wrote {rank} meta-genes for {x.n_cells} cells to {out}")
    return 0


def _report_from_scores(path: str) -> EvalReport:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no score rows")
    required = {"cell_id", "true_label", "aligned_label", "r_score", "s_score"}
    missing = required - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    true_labels = [r["true_label"] for r in rows]
    classes = list(dict.fromkeys(true_labels))
    r = np.array([float(x["r_score"]) for x in rows])
    s = np.array([float(x["s_score"]) for x in rows])
    yi = np.array([classes.index(t) for t in true_labels])
    cri = np.array([r[yi == l].mean() for l in range(len(classes))])
    csi = np.array([s[yi == l].mean() for l in range(len(classes))])
    ri, si = float(cri.mean()), float(csi.mean())
    rs = RSReport(classes=classes, r_scores=r, s_scores=s, cri=cri, csi=csi,
                  ri=ri, si=si, rsd=ri - si, rsi=1.0 - abs(ri - si))
    return EvalReport(
        cell_ids=[x["cell_id"] for x in rows],
        true_labels=true_labels,
        cluster_labels=np.array([int(x.get("cluster_label", 0) or 0) for x in rows]),
        aligned_labels=[x["aligned_label"] for x in rows],
        ari=float("nan"), nmi=float("nan"), purity=float("nan"), accuracy=float("nan"),
        rs=rs,
    )


def _cmd_plot(args) -> int:
    report = _report_from_scores(args.scores)
    written = emit_plots(report, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toponmf",
        description="Multiscale Laplacian regularized NMF benchmark toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blobs", help="generate a synthetic blob dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--genes", type=int, default=30)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_blobs)

    p = sub.add_parser("prep", help="preprocess a dataset and cache the result")
    _add_data_options(p)
    p.add_argument("--config", help="TOML/JSON config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_prep, zeta=None, filtrations=None, rank=None, lam=None,
                   knn=None, sigma=None, max_iters=None, rel_tol=None, restarts=None,
                   seed=None, methods=None)

    p = sub.add_parser("run", help="run the clustering benchmark")
    _add_data_options(p)
    _add_method_options(p)
    p.add_argument("--config", help="TOML/JSON config file")
    p.add_argument("--plots", action="store_true", help="emit RS scatter SVGs per method")
    p.add_argument("--dump-graphs", action="store_true",
                   help="dump the graph regularizers as coo-triplets files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run with binary weight enumeration")
    _add_data_options(p)
    _add_method_options(p)
    p.add_argument("--config", help="TOML/JSON config file")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--dump-graphs", action="store_true",
                   help="dump the graph regularizers as coo-triplets files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=lambda a: _cmd_run(a, force_sweep=True))

    p = sub.add_parser("export", help="export the meta-gene matrix of one method")
    _add_data_options(p)
    _add_method_options(p)
    p.add_argument("--config", help="TOML/JSON config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("plot", help="render RS scatter plots from a scores CSV")
    p.add_argument("--scores", required=True, help="per-sample scores CSV from a run")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
