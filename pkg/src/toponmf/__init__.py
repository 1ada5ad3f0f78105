"""Multiscale (persistent) Laplacian regularized nonnegative matrix
factorization, with baselines and a clustering benchmark."""

from .data import (
    ExpressionMatrix,
    LabelVector,
    filter_low_abundance_genes,
    filter_rare_classes,
    load_labels,
    load_matrix,
    log_normalize,
    save_labels,
    save_matrix,
    unit_scale_columns,
    write_dense,
)
from .graphs import (
    GraphRegularizer,
    cutoff_filtration_levels,
    cutoff_persistent_laplacian,
    dump_regularizer,
    heat_kernel_knn_graph,
    knn_filtration_levels,
    knn_persistent_laplacian,
    mean_knn_squared_distance,
    pairwise_distances,
)
from .factorization import (
    VARIANTS,
    FactorPair,
    MethodConfig,
    canonical_variant,
    factorize,
    l21_norm,
    nndsvda_init,
    objective,
    run_metadata,
    save_factors,
)
from .evaluation import (
    ClusterAssignment,
    ContingencyTable,
    EvalReport,
    RSReport,
    accuracy,
    align_labels,
    ari,
    contingency,
    evaluate_clustering,
    kmeans,
    nmi,
    purity,
    rs_scores,
)
from .benchmark import (
    BenchmarkResult,
    RunSpec,
    export_metagenes,
    generate_blobs,
    resolve_rank,
    run_benchmark,
)
from .plots import emit_plots

__version__ = "0.1.0"
