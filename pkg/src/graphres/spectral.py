"""Spectral convergence analysis for graph propagation operators.

Given a propagation operator (normalized adjacency, random walk, or
the half-lazy chain), this module extracts its extremal eigenvalues,
derives the stationary distribution of the associated chain, and turns
both into depth limits: the closed-form bound at which iterated
propagation provably lands within epsilon (L1, per column) of the
stationary representation, and the empirically measured depth at which
it actually does. Rows of constants below:

    closed-form bound   t = ceil(log(eps / sqrt(n)) / log(lambda_max))
    lambda_max          max{lambda_2, |lambda_n|} of the symmetric form
    lazy chain bound    same formula with lambda_2 of the lazy operator

A reducible (lambda_2 = 1) or bipartite-without-self-loops
(lambda_n = -1) operator never mixes, so the bound degenerates to
INFINITE and iterated propagation keeps the input distinguishable at
every depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .graph import Graph, is_bipartite, is_connected
from .sparse import (SparseMatrix, lazy_walk_matrix, normalized_adjacency,
                     random_walk_matrix, spmm, symmetric_walk_form)

__all__ = [
    "INFINITE", "NOT_REACHED", "SpectrumSummary", "StationaryDistribution",
    "LimitReport", "eigen_extremes", "stationary_distribution",
    "theoretical_limit_bound", "lazy_limit_bound", "empirical_animation_limit",
    "dominant_projection_target", "degree_representation_distance",
    "feature_representation_distance", "p_norm", "build_limit_report",
]

INFINITE = math.inf
NOT_REACHED = None

# lambda_max numerically at 1 is treated as exactly 1 so the bound
# degenerates to INFINITE instead of dividing by log(1).
_ONE_TOL = 1e-12
# Below this spectral gap the bound is returned as computed but flagged.
_NEAR_ONE_WARN = 1e-6


@dataclass(frozen=True)
class SpectrumSummary:
    """Extremal eigenvalues of a symmetric propagation operator."""

    lambda1: float
    lambda2: float
    lambda_n: float

    @property
    def lambda_max(self) -> float:
        return max(self.lambda2, abs(self.lambda_n))


@dataclass(frozen=True)
class StationaryDistribution:
    """Fixed point of a propagation chain: nonnegative, sums to 1."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def n(self) -> int:
        return len(self.pi)

    @property
    def pi_min(self) -> float:
        return float(self.pi.min())


@dataclass
class LimitReport:
    """Structured output of a depth-limit analysis."""

    n: int
    edge_count: int
    spectrum: SpectrumSummary
    pi_min: float
    epsilon: float
    bound_depth: float  # positive integer, or INFINITE
    empirical_depth: int | None  # None encodes NOT_REACHED / not measured
    operator_kind: str
    warning: str | None = None

    def to_json_dict(self) -> dict:
        """Flat JSON form; INFINITE -> "inf", NOT_REACHED -> null."""
        bound = "inf" if math.isinf(self.bound_depth) else int(self.bound_depth)
        return {
            "n": self.n,
            "edge_count": self.edge_count,
            "lambda1": self.spectrum.lambda1,
            "lambda2": self.spectrum.lambda2,
            "lambda_n": self.spectrum.lambda_n,
            "lambda_max": self.spectrum.lambda_max,
            "pi_min": self.pi_min,
            "epsilon": self.epsilon,
            "bound_depth": bound,
            "empirical_depth": self.empirical_depth,
            "operator_kind": self.operator_kind,
            "warning": self.warning,
        }


def eigen_extremes(m: SparseMatrix, sym_tol: float = 1e-9) -> SpectrumSummary:
    """Largest, second-largest and smallest eigenvalue of ``m``.

    ``m`` must be square and symmetric within ``sym_tol``; analyze the
    random-walk operator through its similar symmetric form. Dense
    symmetric eigendecomposition up to n = 2048; Lanczos (ARPACK) on
    the extremal ends beyond that, converged to 1e-8.
    """
    if m.rows != m.cols:
        raise ValueError(f"eigenvalues need a square matrix, got {m.shape}")
    if m.max_asymmetry() > sym_tol:
        raise ValueError(
            f"matrix is asymmetric beyond {sym_tol}; analyze the symmetric "
            f"similar form of a nonsymmetric operator instead")
    n = m.rows
    if n == 1:
        v = float(m.to_dense()[0, 0])
        return SpectrumSummary(lambda1=v, lambda2=0.0, lambda_n=v)
    if n <= 2048:
        dense = m.to_dense()
        dense = 0.5 * (dense + dense.T)
        vals = np.linalg.eigvalsh(dense)
        return SpectrumSummary(lambda1=float(vals[-1]), lambda2=float(vals[-2]),
                               lambda_n=float(vals[0]))
    csr = m.to_scipy()
    sym = 0.5 * (csr + csr.T)
    top = spla.eigsh(sym, k=2, which="LA", tol=1e-8,
                     return_eigenvectors=False)
    bottom = spla.eigsh(sym, k=1, which="SA", tol=1e-8,
                        return_eigenvectors=False)
    top = np.sort(top)
    return SpectrumSummary(lambda1=float(top[-1]), lambda2=float(top[-2]),
                           lambda_n=float(bottom[0]))


def stationary_distribution(g: Graph, operator_kind: str,
                            self_loops: bool = True) -> StationaryDistribution:
    """Stationary distribution of the chain on ``g``.

    random_walk kind: pi(i) proportional to d~(i) (degree, plus one
    when self-loops are on) -- the degree formula of the walk's fixed
    point. normalized/lazy kinds: the uniform 1/n vector. For
    non-regular graphs the symmetric operator's dominant eigenvector is
    actually proportional to sqrt(d~); the uniform form is reported as
    the chain-level claim, and convergence measurements against the
    symmetric operator use :func:`dominant_projection_target` instead.

    Uniqueness needs an irreducible chain, so disconnected graphs are
    rejected. A bipartite chain without self-loops still has this
    unique fixed point, but is periodic: iterates oscillate around it
    instead of converging, and the depth bound degenerates to INFINITE.
    """
    if operator_kind not in ("normalized", "random_walk", "lazy"):
        raise ValueError(f"unknown operator kind {operator_kind!r}")
    if not is_connected(g):
        raise ValueError(
            "graph is reducible (disconnected): no unique stationary "
            "distribution exists")
    if operator_kind in ("normalized", "lazy"):
        pi = np.full(g.n, 1.0 / g.n)
    else:
        dt = g.degree.astype(np.float64) + (1.0 if self_loops else 0.0)
        pi = dt / dt.sum()
    return StationaryDistribution(pi=pi)


def _depth_from_rate(rate: float, n: int, epsilon: float) -> float:
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if rate >= 1.0 - _ONE_TOL:
        return INFINITE
    if rate <= 0.0:
        return 1.0
    t = math.ceil(math.log(epsilon / math.sqrt(n)) / math.log(rate))
    return float(max(1, t))


def theoretical_limit_bound(s: SpectrumSummary, pi: StationaryDistribution,
                            epsilon: float) -> float:
    """Closed-form depth bound: smallest t with lambda_max^t <= eps/sqrt(n).

    INFINITE when lambda_max >= 1 (reducible or bipartite operator);
    1 when lambda_max = 0 (one-step collapse).
    """
    return _depth_from_rate(s.lambda_max, pi.n, epsilon)


def lazy_limit_bound(s: SpectrumSummary, pi: StationaryDistribution,
                     epsilon: float) -> float:
    """Depth bound for the half-lazy chain: lambda_2 replaces lambda_max.

    ``s`` is the spectrum of the lazy operator itself, whose spectrum is
    nonnegative, so the negative end never controls the rate.
    """
    return _depth_from_rate(max(s.lambda2, 0.0), pi.n, epsilon)


def dominant_projection_target(m: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """True iteration limit of a symmetric operator on input ``x``.

    The projection of each column of ``x`` onto the dominant eigenvector:
    lim_t m^t x = v1 (v1^T x) when the spectral gap is open. This is the
    right convergence target for the symmetric normalized operator, whose
    chain-level stationary vector differs on non-regular graphs.
    """
    n = m.rows
    if n == 1:
        return np.asarray(x, dtype=np.float64).copy()
    if n <= 2048:
        dense = m.to_dense()
        dense = 0.5 * (dense + dense.T)
        vals, vecs = np.linalg.eigh(dense)
        v1 = vecs[:, -1]
    else:
        _, vecs = spla.eigsh(m.to_scipy(), k=1, which="LA", tol=1e-10)
        v1 = vecs[:, 0]
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return v1 * float(v1 @ x)
    return np.outer(v1, v1 @ x)


def empirical_animation_limit(m: SparseMatrix, x: np.ndarray, target,
                              epsilon: float, max_iter: int) -> int | None:
    """Smallest depth k <= max_iter with max-column L1 error <= epsilon.

    Iterates T(k) = m T(k-1) from T(0) = x (the propagation stack with
    identity feature maps) and measures, per column, the L1 distance to
    the limit representation; the worst column decides. ``target`` is a
    StationaryDistribution (broadcast across columns) or an explicit
    array of the same shape as ``x``. Columns of ``x`` must each sum to
    1 within 1e-9. Returns NOT_REACHED (None) if no depth qualifies.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    t = x.reshape(-1, 1) if single else x.copy()
    sums = t.sum(axis=0)
    if np.abs(sums - 1.0).max() > 1e-9:
        raise ValueError(
            "input columns must each sum to 1 (column-normalized); "
            f"worst deviation {np.abs(sums - 1.0).max():.3e}")
    if isinstance(target, StationaryDistribution):
        limit = np.broadcast_to(target.pi.reshape(-1, 1), t.shape)
    else:
        limit = np.asarray(target, dtype=np.float64)
        limit = limit.reshape(-1, 1) if limit.ndim == 1 else limit
    if limit.shape != t.shape:
        raise ValueError(f"target shape {limit.shape} != input shape {t.shape}")
    for k in range(1, max_iter + 1):
        t = spmm(m, t)
        err = np.abs(t - limit).sum(axis=0).max()
        if err <= epsilon:
            return k
    return NOT_REACHED


def degree_representation_distance(g: Graph, i: int, j: int, d_x: int) -> float:
    """Separation of two nodes' converged representations, degree form.

    d_x * |degree(i) - degree(j)| / (2 |E|): nodes of equal degree become
    indistinguishable at convergence regardless of feature width.
    """
    if g.edge_count == 0:
        raise ValueError("distance undefined on an empty edge set")
    for v in (i, j):
        if not (0 <= v < g.n):
            raise ValueError(f"node id {v} outside [0, {g.n})")
    return d_x * abs(int(g.degree[i]) - int(g.degree[j])) / (2.0 * g.edge_count)


def feature_representation_distance(a_hat: SparseMatrix, x: np.ndarray,
                                    i: int, j: int) -> float:
    """One-step separation under raw feature coding.

    L1 norm of (a_hat[i, :] - a_hat[j, :]) @ x: sparse rows times sparse
    features make this small, which is the practical-factor diagnostic.
    """
    x = np.asarray(x, dtype=np.float64)
    if a_hat.cols != x.shape[0]:
        raise ValueError(f"shape mismatch: {a_hat.shape} rows vs {x.shape}")
    diff = a_hat.row(i) - a_hat.row(j)
    return float(np.abs(diff @ x).sum())


def p_norm(v: np.ndarray, p: float) -> float:
    """Standard p-norm for p >= 1, overflow-stable for large p."""
    if p < 1:
        raise ValueError(f"p-norm needs p >= 1, got {p}")
    v = np.abs(np.asarray(v, dtype=np.float64))
    if v.size == 0:
        return 0.0
    m = v.max()
    if m == 0.0:
        return 0.0
    return float(m * (np.sum((v / m) ** p)) ** (1.0 / p))


def _operator_for(g: Graph, operator_kind: str, self_loops: bool):
    """(iteration operator, symmetric analysis form) for an operator kind."""
    if operator_kind == "normalized":
        a = normalized_adjacency(g)
        return a, a
    if operator_kind == "random_walk":
        return (random_walk_matrix(g, add_self_loops=self_loops),
                symmetric_walk_form(g, self_loops=self_loops))
    if operator_kind == "lazy":
        a = lazy_walk_matrix(normalized_adjacency(g))
        return a, a
    raise ValueError(f"unknown operator kind {operator_kind!r}")


def build_limit_report(g: Graph, operator_kind: str, epsilon: float = 1e-4,
                       self_loops: bool = True, x: np.ndarray | None = None,
                       max_iter: int = 10000,
                       measure_empirical: bool = True) -> LimitReport:
    """Full depth-limit analysis of one operator on one graph.

    When ``x`` is omitted the iteration starts from a point mass on
    node 0 (a uniform start can coincide with the stationary vector and
    mask non-mixing chains). Disconnected or periodic graphs do not
    abort: the report carries the degenerate INFINITE bound plus a
    warning, with the degree-formula pi used for reporting.
    """
    operator, sym_form = _operator_for(g, operator_kind, self_loops)
    spectrum = eigen_extremes(sym_form)
    warnings = []
    connected = is_connected(g)
    if not connected:
        warnings.append("disconnected_graph")
    if not self_loops and is_bipartite(g) and g.edge_count > 0:
        warnings.append("bipartite_no_self_loops")
    if operator_kind in ("normalized", "lazy"):
        pi = StationaryDistribution(pi=np.full(g.n, 1.0 / g.n))
    else:
        dt = g.degree.astype(np.float64) + (1.0 if self_loops else 0.0)
        if dt.sum() == 0:
            dt = np.ones(g.n)
        pi = StationaryDistribution(pi=dt / dt.sum())

    if operator_kind == "lazy":
        bound = lazy_limit_bound(spectrum, pi, epsilon)
    else:
        bound = theoretical_limit_bound(spectrum, pi, epsilon)
    rate = spectrum.lambda2 if operator_kind == "lazy" else spectrum.lambda_max
    if 1.0 - _NEAR_ONE_WARN <= rate < 1.0 - _ONE_TOL:
        warnings.append("near_threshold_spectral_gap")

    empirical = None
    if measure_empirical:
        if x is None:
            x = np.zeros(g.n)
            x[0] = 1.0
        if operator_kind == "random_walk":
            target = pi
        else:
            target = dominant_projection_target(operator, x)
        empirical = empirical_animation_limit(operator, x, target, epsilon,
                                              max_iter)
    return LimitReport(
        n=g.n, edge_count=g.edge_count, spectrum=spectrum,
        pi_min=pi.pi_min, epsilon=epsilon, bound_depth=bound,
        empirical_depth=empirical, operator_kind=operator_kind,
        warning=";".join(warnings) if warnings else None)
