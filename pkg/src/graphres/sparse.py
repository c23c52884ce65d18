"""Row-compressed sparse matrices and the adjacency-derived operators.

:class:`SparseMatrix` stores (indptr, indices, data) CSR arrays with
column indices strictly increasing within each row and no explicit
zeros. The heavy sparse-dense product is delegated to scipy's CSR
kernel; a dense reference multiply lives in the tests as the oracle.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graph import Graph

__all__ = ["SparseMatrix", "normalized_adjacency", "random_walk_matrix",
           "symmetric_walk_form", "lazy_walk_matrix", "spmm", "identity"]


class SparseMatrix:
    """Immutable CSR matrix over float64.

    Invariants: ``len(data) == len(indices) == indptr[-1]``; within each
    row, column indices strictly increase; no stored zero entries.
    """

    __slots__ = ("rows", "cols", "indptr", "indices", "data", "_csr", "_t")

    def __init__(self, rows: int, cols: int, indptr, indices, data):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=np.float64)
        if indptr.shape != (rows + 1,) or indptr[0] != 0 or indptr[-1] != len(data):
            raise ValueError("indptr inconsistent with storage length")
        if len(indices) != len(data):
            raise ValueError("indices/data length mismatch")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        self.rows = rows
        self.cols = cols
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self._csr = None
        self._t = None

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries) -> "SparseMatrix":
        """Build from (i, j, value) triples; duplicates sum, zeros drop."""
        entries = list(entries)
        if entries:
            ii, jj, vv = zip(*entries)
        else:
            ii, jj, vv = (), (), ()
        m = sp.csr_matrix(
            (np.asarray(vv, dtype=np.float64),
             (np.asarray(ii, dtype=np.int64), np.asarray(jj, dtype=np.int64))),
            shape=(rows, cols))
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(rows, cols, m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        m = sp.csr_matrix(a)
        m.eliminate_zeros()
        m.sort_indices()
        return cls(a.shape[0], a.shape[1], m.indptr, m.indices, m.data)

    @property
    def nnz(self) -> int:
        return len(self.data)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def to_scipy(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.data, self.indices, self.indptr), shape=self.shape)
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def transpose(self) -> "SparseMatrix":
        if self._t is None:
            t = self.to_scipy().T.tocsr()
            t.sort_indices()
            self._t = SparseMatrix(self.cols, self.rows, t.indptr, t.indices,
                                   t.data)
        return self._t

    def row(self, i: int) -> np.ndarray:
        """Dense copy of row i."""
        out = np.zeros(self.cols)
        s, e = self.indptr[i], self.indptr[i + 1]
        out[self.indices[s:e]] = self.data[s:e]
        return out

    def max_asymmetry(self) -> float:
        """max |M - M^T|, 0.0 for exactly symmetric storage."""
        if self.rows != self.cols:
            raise ValueError("asymmetry is defined for square matrices only")
        d = self.to_scipy() - self.to_scipy().T
        return float(abs(d).max()) if d.nnz else 0.0


def identity(n: int) -> SparseMatrix:
    return SparseMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n))


def _tilde_degree(g: Graph, self_loops: bool) -> np.ndarray:
    d = g.degree.astype(np.float64)
    return d + 1.0 if self_loops else d


def normalized_adjacency(g: Graph) -> SparseMatrix:
    """Symmetrically normalized self-looped adjacency.

    Entry (i, j) = A~(i, j) / sqrt(d~(i) * d~(j)) with A~ = A + I and
    d~(i) = degree(i) + 1. Symmetric by construction: both orientations
    of an edge are assigned the identical float, so stored entries are
    exactly equal regardless of edge input order.
    """
    dt = _tilde_degree(g, self_loops=True)
    entries = [(i, i, 1.0 / dt[i]) for i in range(g.n)]
    for i, j in g.edges:
        v = 1.0 / np.sqrt(dt[i] * dt[j])
        entries.append((i, j, v))
        entries.append((j, i, v))
    return SparseMatrix.from_entries(g.n, g.n, entries)


def random_walk_matrix(g: Graph, add_self_loops: bool = True) -> SparseMatrix:
    """Column-stochastic transition matrix of the walk on ``g``.

    Entry (i, j) = A~(i, j) / d~(j): column j spreads unit mass over
    the neighbors of j (and j itself when self-loops are on). Without
    self-loops every node must have degree >= 1, otherwise the column
    would be degenerate.
    """
    dt = _tilde_degree(g, add_self_loops)
    if not add_self_loops:
        isolated = np.flatnonzero(g.degree == 0)
        if isolated.size:
            raise ValueError(
                f"node {int(isolated[0])} is isolated; its walk column is "
                f"degenerate without self-loops")
    entries = []
    if add_self_loops:
        entries.extend((i, i, 1.0 / dt[i]) for i in range(g.n))
    for i, j in g.edges:
        entries.append((i, j, 1.0 / dt[j]))
        entries.append((j, i, 1.0 / dt[i]))
    return SparseMatrix.from_entries(g.n, g.n, entries)


def symmetric_walk_form(g: Graph, self_loops: bool = True) -> SparseMatrix:
    """Symmetric matrix similar to :func:`random_walk_matrix`.

    D~^{-1/2} A~ D~^{-1/2} with the same self-loop convention; it shares
    the walk matrix's eigenvalues, which is what the spectral analysis
    consumes. With self-loops this is exactly the normalized adjacency.
    """
    dt = _tilde_degree(g, self_loops)
    if not self_loops and (g.degree == 0).any():
        raise ValueError("isolated node has no walk without self-loops")
    entries = []
    if self_loops:
        entries.extend((i, i, 1.0 / dt[i]) for i in range(g.n))
    for i, j in g.edges:
        v = 1.0 / np.sqrt(dt[i] * dt[j])
        entries.append((i, j, v))
        entries.append((j, i, v))
    return SparseMatrix.from_entries(g.n, g.n, entries)


def lazy_walk_matrix(m: SparseMatrix) -> SparseMatrix:
    """Half-step chain 0.5*m + 0.5*I.

    Positive semidefinite whenever ``m`` is a symmetric normalized
    adjacency (its spectrum lies in [-1, 1], so the combination's lies
    in [0, 1]).
    """
    if m.rows != m.cols:
        raise ValueError(f"lazy chain needs a square matrix, got {m.shape}")
    out = (0.5 * m.to_scipy() + 0.5 * sp.identity(m.rows, format="csr")).tocsr()
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return SparseMatrix(m.rows, m.cols, out.indptr, out.indices, out.data)


def spmm(m: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``m @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if m.cols != x.shape[0]:
        raise ValueError(f"shape mismatch: {m.shape} @ {x.shape}")
    out = m.to_scipy() @ x
    return np.asarray(out)
