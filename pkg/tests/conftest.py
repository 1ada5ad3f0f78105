import numpy as np
import pytest

from toponmf.data import ExpressionMatrix, LabelVector


@pytest.fixture
def small_matrix():
    values = np.array([[1.0, 0.0, 2.0], [0.0, 2.0, 1.0], [3.0, 1.0, 0.5]])
    return ExpressionMatrix(values, ["g0", "g1", "g2"], ["c0", "c1", "c2"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_labels(rng, n, k):
    return [f"cls{i}" for i in rng.integers(0, k, size=n)]


def assert_monotone_trace(trace):
    """Per-step non-increase within the documented tolerance."""
    trace = np.asarray(trace)
    diffs = np.diff(trace)
    tol = 1e-9 * (1.0 + np.abs(trace[1:]))
    bad = np.flatnonzero(diffs > tol)
    assert bad.size == 0, f"objective increased at steps {bad[:5]}: {diffs[bad[:5]]}"


def union_find_components(adjacency):
    """Independent connected-component count for a binary adjacency."""
    m = adjacency.shape[0]
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        for j in range(i + 1, m):
            if adjacency[i, j] > 0:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    return len({find(i) for i in range(m)})


@pytest.fixture
def line_points_fixture():
    """4 points on a line at 0, 1, 10, 11 with two classes of two."""
    h = np.array([[0.0, 1.0, 10.0, 11.0]])
    labels = LabelVector(["a", "a", "b", "b"])
    return h, labels
