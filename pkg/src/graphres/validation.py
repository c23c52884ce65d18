"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graph import Graph, build_graph
from .sparse import SparseMatrix

__all__ = ["check_features", "check_labels", "as_graph", "masks_from_labels"]


def check_features(X) -> np.ndarray:
    """2-D finite float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got ndim={X.ndim}")
    if not np.isfinite(X).all():
        raise ValueError("features contain non-finite values")
    return X


def check_labels(y, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer labels with -1 marking unlabeled nodes.

    Returns (dense class codes re-indexed to 0..C-1, sorted original
    class values).
    """
    y = np.asarray(y)
    if y.shape != (n_rows,):
        raise ValueError(f"labels must have shape ({n_rows},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        yi = y.astype(np.int64)
        if not np.array_equal(yi, y):
            raise ValueError("labels must be integers (-1 = unlabeled)")
        y = yi
    classes = np.unique(y[y >= 0])
    if classes.size < 2:
        raise ValueError("need at least two labeled classes")
    codes = np.full(len(y), -1, dtype=np.int64)
    for c, cls in enumerate(classes):
        codes[y == cls] = c
    return codes, classes


def as_graph(graph, n_nodes: int | None = None) -> Graph:
    """Accept a Graph, an edge iterable, or a (sparse) adjacency matrix."""
    if isinstance(graph, Graph):
        return graph
    if isinstance(graph, SparseMatrix):
        coo = graph.to_scipy().tocoo()
        pairs = [(int(i), int(j)) for i, j in zip(coo.row, coo.col) if i != j]
        return build_graph(graph.rows, pairs)
    if sp.issparse(graph):
        coo = graph.tocoo()
        pairs = [(int(i), int(j)) for i, j in zip(coo.row, coo.col) if i != j]
        return build_graph(graph.shape[0], pairs)
    arr = np.asarray(graph)
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1] and \
            (n_nodes is None or arr.shape[0] == n_nodes):
        ii, jj = np.nonzero(arr)
        return build_graph(arr.shape[0], list(zip(ii.tolist(), jj.tolist())))
    if arr.ndim == 2 and arr.shape[1] == 2:
        if n_nodes is None:
            n_nodes = int(arr.max()) + 1 if arr.size else 1
        return build_graph(n_nodes, [tuple(e) for e in arr.tolist()])
    raise ValueError("graph must be a Graph, adjacency matrix, or edge list")


def masks_from_labels(codes: np.ndarray, val_fraction: float,
                      seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split labeled nodes into train/validation masks.

    Validation takes ``val_fraction`` of the labeled nodes (at least
    one per class stays in training), drawn deterministically.
    """
    labeled = np.flatnonzero(codes >= 0)
    rng = np.random.default_rng(seed)
    order = rng.permutation(labeled)
    n_val = int(round(val_fraction * len(labeled)))
    val_idx = []
    remaining = {c: int((codes[labeled] == c).sum()) for c in set(codes[labeled])}
    for i in order:
        if len(val_idx) >= n_val:
            break
        if remaining[codes[i]] > 1:
            val_idx.append(i)
            remaining[codes[i]] -= 1
    val = np.zeros(len(codes), dtype=bool)
    val[val_idx] = True
    train = (codes >= 0) & ~val
    return train, val
