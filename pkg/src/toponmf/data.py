"""Loading, validation and preprocessing of expression count matrices.

Matrices are dense, genes in rows and cells/samples in columns. Three
on-disk formats are supported:

* ``dense-csv`` / ``dense-tsv``: first row is an empty field followed by
  the cell ids; every following row is a gene id followed by one numeric
  field per cell.
* ``coo-triplets``: a header line ``rows cols nnz`` followed by ``nnz``
  lines ``i j v`` with 0-based indices; densified on load.

Labels live in a sidecar text file, one label per line in column order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMATS = ("dense-csv", "dense-tsv", "coo-triplets")


class MatrixFormatError(ValueError):
    """Raised when an input file does not parse under its declared format."""


def _check_values(values: np.ndarray) -> None:
    if values.ndim != 2:
        raise ValueError("expression matrix must be 2-dimensional")
    n, m = values.shape
    if n < 1 or m < 2:
        raise ValueError(f"matrix must be at least 1x2, got {n}x{m}")
    if not np.all(np.isfinite(values)):
        raise ValueError("matrix contains NaN or Inf entries")
    if np.any(values < 0):
        i, j = np.argwhere(values < 0)[0]
        raise ValueError(f"negative entry {values[i, j]} at ({i}, {j})")


@dataclass
class ExpressionMatrix:
    """Nonnegative dense matrix with gene (row) and cell (column) ids."""

    values: np.ndarray
    gene_ids: list[str]
    cell_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        _check_values(self.values)
        n, m = self.values.shape
        if len(self.gene_ids) != n:
            raise ValueError(f"{len(self.gene_ids)} gene ids for {n} rows")
        if len(self.cell_ids) != m:
            raise ValueError(f"{len(self.cell_ids)} cell ids for {m} columns")
        seen = set()
        for g in self.gene_ids:
            if g in seen:
                raise ValueError(f"duplicate gene id {g!r}")
            seen.add(g)

    @property
    def n_genes(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]


@dataclass
class LabelVector:
    """Per-cell class labels; ``classes`` keeps first-appearance order."""

    labels: list[str]
    classes: list[str] = field(init=False)

    def __post_init__(self):
        self.labels = [str(l) for l in self.labels]
        if not self.labels:
            raise ValueError("label vector is empty")
        self.classes = list(dict.fromkeys(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def indices(self) -> np.ndarray:
        """Labels encoded as integers in first-appearance class order."""
        lut = {c: i for i, c in enumerate(self.classes)}
        return np.array([lut[l] for l in self.labels], dtype=np.intp)


def _parse_number(token: str, path, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise MatrixFormatError(
            f"{path}: line {lineno}: cannot parse {token!r} as a number"
        ) from None
    if math.isnan(v) or math.isinf(v):
        raise ValueError(f"{path}: line {lineno}: NaN/Inf entry")
    if v < 0:
        raise ValueError(f"{path}: line {lineno}: negative entry {token}")
    return v


def _load_delimited(path: Path, delimiter: str) -> ExpressionMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise MatrixFormatError(f"{path}: line 1: empty file") from None
        if len(header) < 3:
            raise MatrixFormatError(
                f"{path}: line 1: expected empty field plus at least 2 cell ids"
            )
        cell_ids = [c.strip() for c in header[1:]]
        m = len(cell_ids)
        gene_ids = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != m + 1:
                raise MatrixFormatError(
                    f"{path}: line {lineno}: expected {m + 1} fields, got {len(row)}"
                )
            gene_ids.append(row[0].strip())
            rows.append([_parse_number(tok, path, lineno) for tok in row[1:]])
    if not rows:
        raise MatrixFormatError(f"{path}: no gene rows found")
    return ExpressionMatrix(np.array(rows, dtype=np.float64), gene_ids, cell_ids)


def _load_coo(path: Path) -> ExpressionMatrix:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixFormatError(f"{path}: line 1: empty file")
    head = lines[0].split()
    if len(head) != 3:
        raise MatrixFormatError(f"{path}: line 1: expected header 'rows cols nnz'")
    try:
        n, m, nnz = (int(t) for t in head)
    except ValueError:
        raise MatrixFormatError(f"{path}: line 1: non-integer header field") from None
    values = np.zeros((n, m), dtype=np.float64)
    entries = [l for l in lines[1:] if l.strip()]
    if len(entries) != nnz:
        raise MatrixFormatError(f"{path}: header declares {nnz} entries, found {len(entries)}")
    for lineno, line in enumerate(entries, start=2):
        parts = line.split()
        if len(parts) != 3:
            raise MatrixFormatError(f"{path}: line {lineno}: expected 'i j v'")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise MatrixFormatError(f"{path}: line {lineno}: non-integer index") from None
        if not (0 <= i < n and 0 <= j < m):
            raise MatrixFormatError(f"{path}: line {lineno}: index ({i}, {j}) out of range")
        values[i, j] += _parse_number(parts[2], path, lineno)
    gene_ids = [f"g{i}" for i in range(n)]
    cell_ids = [f"c{j}" for j in range(m)]
    return ExpressionMatrix(values, gene_ids, cell_ids)


def load_matrix(path, fmt: str = "dense-csv") -> ExpressionMatrix:
    """Load and validate an expression matrix from ``path``.

    ``fmt`` is one of ``dense-csv``, ``dense-tsv`` or ``coo-triplets``.
    Parse errors report the offending line number; invalid entries
    (negative, NaN, Inf) and duplicate gene ids are rejected.
    """
    path = Path(path)
    if fmt == "dense-csv":
        return _load_delimited(path, ",")
    if fmt == "dense-tsv":
        return _load_delimited(path, "\t")
    if fmt == "coo-triplets":
        return _load_coo(path)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def load_labels(path, expected: int | None = None) -> LabelVector:
    """Read a sidecar labels file: one label per line, column order."""
    with open(path, encoding="utf-8") as fh:
        labels = [line.strip() for line in fh.read().splitlines() if line.strip()]
    if expected is not None and len(labels) != expected:
        raise ValueError(f"{path}: {len(labels)} labels for {expected} cells")
    return LabelVector(labels)


def write_dense(values, row_ids, col_ids, path, fmt: str = "dense-csv") -> None:
    """Write any matrix in ``dense-csv``/``dense-tsv`` layout."""
    delim = {"dense-csv": ",", "dense-tsv": "\t"}.get(fmt)
    if delim is None:
        raise ValueError(f"cannot write format {fmt!r}")
    values = np.asarray(values)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delim, lineterminator="\n")
        writer.writerow([""] + list(col_ids))
        for rid, row in zip(row_ids, values):
            writer.writerow([rid] + [repr(float(v)) for v in row])


def save_matrix(x: ExpressionMatrix, path, fmt: str = "dense-csv") -> None:
    """Write a matrix in ``dense-csv``/``dense-tsv`` format."""
    write_dense(x.values, x.gene_ids, x.cell_ids, path, fmt)


def save_labels(y: LabelVector, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(y.labels) + "\n")


def filter_rare_classes(
    x: ExpressionMatrix, y: LabelVector, min_cells: int = 15
) -> tuple[ExpressionMatrix, LabelVector]:
    """Drop all cells whose class has fewer than ``min_cells`` members.

    Column order of the survivors is preserved and the class list is
    recomputed. Raises if every class falls below the threshold.
    """
    if len(y) != x.n_cells:
        raise ValueError(f"{len(y)} labels for {x.n_cells} cells")
    counts = {c: 0 for c in y.classes}
    for l in y.labels:
        counts[l] += 1
    keep = [j for j, l in enumerate(y.labels) if counts[l] >= min_cells]
    if not keep:
        raise ValueError(f"all classes have fewer than {min_cells} cells; nothing left")
    if len(keep) == x.n_cells:
        return x, y
    xf = ExpressionMatrix(
        x.values[:, keep], list(x.gene_ids), [x.cell_ids[j] for j in keep]
    )
    yf = LabelVector([y.labels[j] for j in keep])
    return xf, yf


def filter_low_abundance_genes(x: ExpressionMatrix, min_cells: int) -> ExpressionMatrix:
    """Drop genes expressed (value > 0) in fewer than ``min_cells`` cells."""
    expressed = np.count_nonzero(x.values > 0, axis=1)
    keep = np.flatnonzero(expressed >= min_cells)
    if keep.size == 0:
        raise ValueError(f"no gene is expressed in at least {min_cells} cells")
    if keep.size == x.n_genes:
        return x
    return ExpressionMatrix(
        x.values[keep, :], [x.gene_ids[i] for i in keep], list(x.cell_ids)
    )


def log_normalize(x: ExpressionMatrix) -> ExpressionMatrix:
    """Replace every entry v by ln(1 + v); keeps zeros at zero."""
    return ExpressionMatrix(np.log1p(x.values), list(x.gene_ids), list(x.cell_ids))


def unit_scale_columns(x: ExpressionMatrix) -> ExpressionMatrix:
    """Scale every cell (column) to unit Euclidean norm."""
    norms = np.linalg.norm(x.values, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"cannot scale all-zero column {zero[0]} ({x.cell_ids[zero[0]]})")
    return ExpressionMatrix(x.values / norms, list(x.gene_ids), list(x.cell_ids))
