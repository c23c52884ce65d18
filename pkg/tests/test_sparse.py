import numpy as np
import pytest

from graphres.graph import build_graph
from graphres.sparse import (SparseMatrix, identity, lazy_walk_matrix,
                             normalized_adjacency, random_walk_matrix, spmm,
                             symmetric_walk_form)


def dense_reference_multiply(m: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Brute-force oracle, independent of the CSR kernel."""
    out = np.zeros((m.rows,) + x.shape[1:])
    for i in range(m.rows):
        s, e = m.indptr[i], m.indptr[i + 1]
        for j, v in zip(m.indices[s:e], m.data[s:e]):
            out[i] += v * x[j]
    return out


def test_normalized_adjacency_p2():
    g = build_graph(2, [(0, 1)])
    assert np.array_equal(normalized_adjacency(g).to_dense(),
                          [[0.5, 0.5], [0.5, 0.5]])


def test_normalized_adjacency_k3_all_thirds():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    assert np.allclose(normalized_adjacency(g).to_dense(), 1.0 / 3.0,
                       rtol=0, atol=1e-15)


def test_normalized_adjacency_edgeless_is_identity():
    g = build_graph(2, [])
    assert np.array_equal(normalized_adjacency(g).to_dense(), np.eye(2))


def test_normalized_adjacency_exactly_symmetric_any_order():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < 0.3]
        rng.shuffle(edges)
        flipped = [(j, i) if rng.random() < 0.5 else (i, j) for i, j in edges]
        a = normalized_adjacency(build_graph(n, flipped))
        d = a.to_dense()
        assert np.array_equal(d, d.T)
        assert (np.diag(d) > 0).all()


def test_random_walk_columns_sum_to_one():
    rng = np.random.default_rng(6)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < 0.3]
        m = random_walk_matrix(build_graph(n, edges), add_self_loops=True)
        assert np.abs(m.to_dense().sum(axis=0) - 1.0).max() < 1e-12


def test_random_walk_p3_no_loops_column():
    g = build_graph(3, [(0, 1), (1, 2)])
    m = random_walk_matrix(g, add_self_loops=False).to_dense()
    assert np.abs(m.sum(axis=0) - 1.0).max() < 1e-12
    assert np.array_equal(m[:, 1], [0.5, 0.0, 0.5])


def test_random_walk_k3_self_loops_uniform():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    assert np.allclose(random_walk_matrix(g, True).to_dense(), 1.0 / 3.0,
                       atol=1e-15)


def test_random_walk_single_node_self_loop():
    g = build_graph(1, [])
    assert np.array_equal(random_walk_matrix(g, True).to_dense(), [[1.0]])


def test_random_walk_rejects_isolated_node_without_loops():
    g = build_graph(3, [(0, 1)])
    with pytest.raises(ValueError, match="isolated"):
        random_walk_matrix(g, add_self_loops=False)


def test_lazy_identity_fixed_point():
    m = identity(3)
    assert np.array_equal(lazy_walk_matrix(m).to_dense(), np.eye(3))


def test_lazy_swap_matrix():
    m = SparseMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(lazy_walk_matrix(m).to_dense(),
                          [[0.5, 0.5], [0.5, 0.5]])


def test_lazy_k3_normalized():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    lz = lazy_walk_matrix(normalized_adjacency(g)).to_dense()
    assert np.allclose(np.diag(lz), 2.0 / 3.0, atol=1e-15)
    off = lz[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 1.0 / 6.0, atol=1e-15)


def test_lazy_requires_square():
    m = SparseMatrix.from_dense(np.ones((2, 3)))
    with pytest.raises(ValueError, match="square"):
        lazy_walk_matrix(m)


def test_lazy_spectrum_nonnegative_on_normalized_adjacency():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(2, 40))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < 0.25]
        lz = lazy_walk_matrix(normalized_adjacency(build_graph(n, edges)))
        assert np.linalg.eigvalsh(lz.to_dense()).min() >= -1e-9


def test_spmm_identity_and_zero():
    x = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(spmm(identity(4), x), x)
    zero = SparseMatrix.from_dense(np.zeros((4, 4)))
    assert np.array_equal(spmm(zero, x), np.zeros((4, 3)))


def test_spmm_k3_row_sums_give_ones():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    out = spmm(normalized_adjacency(g), np.ones((3, 1)))
    assert np.abs(out - 1.0).max() < 1e-15


def test_spmm_matches_dense_reference():
    rng = np.random.default_rng(3)
    for _ in range(15):
        n = int(rng.integers(2, 65))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < 0.2]
        m = normalized_adjacency(build_graph(n, edges))
        x = rng.standard_normal((n, int(rng.integers(1, 6))))
        assert np.abs(spmm(m, x) - dense_reference_multiply(m, x)).max() < 1e-12


def test_spmm_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        spmm(identity(3), np.ones((4, 2)))


def test_csr_invariants_hold():
    rng = np.random.default_rng(8)
    n = 20
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < 0.3]
    for m in (normalized_adjacency(build_graph(n, edges)),
              random_walk_matrix(build_graph(n, edges), True)):
        assert len(m.data) == len(m.indices) == m.indptr[-1]
        for i in range(m.rows):
            cols = m.indices[m.indptr[i]:m.indptr[i + 1]]
            assert (np.diff(cols) > 0).all()
        assert (m.data != 0.0).all()


def test_symmetric_walk_form_shares_walk_spectrum():
    rng = np.random.default_rng(9)
    g = build_graph(8, [(i, j) for i in range(8) for j in range(i + 1, 8)
                        if rng.random() < 0.4])
    walk_vals = np.sort(np.linalg.eigvals(
        random_walk_matrix(g, True).to_dense()).real)
    sym_vals = np.sort(np.linalg.eigvalsh(
        symmetric_walk_form(g, True).to_dense()))
    assert np.abs(walk_vals - sym_vals).max() < 1e-9
