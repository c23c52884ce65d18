"""Minimal reverse-mode differentiation over dense 2-D float64 arrays.

Operations record a dynamic graph; ``backward`` walks it once in
reverse topological order and accumulates gradients on every node,
summing contributions when a tensor feeds several consumers. The
recorded graph is per-forward-pass and garbage-collects with it. Just
enough surface for spectral-convolution stacks: matmul, sparse-dense
matmul with a constant sparse operand, adds, relu/sigmoid, masked
softmax cross-entropy, and dropout.
"""

from __future__ import annotations

import numpy as np

from .sparse import SparseMatrix, spmm as _spmm_raw

__all__ = ["Tensor", "matmul", "spmm_ad", "add", "add_bias_row", "relu",
           "sigmoid", "softmax_cross_entropy", "dropout", "backward",
           "GradNormProbe", "grad_norm_probe"]


class Tensor:
    """Dense 2-D array node in the differentiation graph.

    ``grad`` matches the value's shape after a backward pass through
    this node. Leaves have no provenance; interior nodes keep their
    parents and a closure that scatters the output gradient to them.
    """

    __slots__ = ("values", "requires_grad", "needs_grad", "grad", "_parents",
                 "_backward", "_op")

    def __init__(self, values, requires_grad: bool = False,
                 _parents=(), _op: str = "leaf"):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        self.values = values
        self.requires_grad = requires_grad
        # interior nodes re-derive this from their parents; a False here
        # prunes the whole gradient subtree below a constant leaf
        self.needs_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)


def _node(values, parents, op) -> Tensor:
    t = Tensor(values, requires_grad=False, _parents=tuple(parents), _op=op)
    t.needs_grad = any(p.needs_grad for p in parents)
    return t


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = _node(a.values @ b.values, (a, b), "matmul")

    def back(g):
        if a.needs_grad:
            _accum(a, g @ b.values.T)
        if b.needs_grad:
            _accum(b, a.values.T @ g)
    out._backward = back
    return out


def spmm_ad(m: SparseMatrix, x: Tensor) -> Tensor:
    """Sparse @ dense with the sparse operand held constant.

    No gradient flows into the graph structure; the input picks up
    m^T g.
    """
    out = _node(_spmm_raw(m, x.values), (x,), "spmm")
    mt = m.transpose()

    def back(g):
        if x.needs_grad:
            _accum(x, _spmm_raw(mt, g))
    out._backward = back
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")
    out = _node(a.values + b.values, (a, b), "add")

    def back(g):
        if a.needs_grad:
            _accum(a, g)
        if b.needs_grad:
            _accum(b, g)
    out._backward = back
    return out


def add_bias_row(a: Tensor, bias: Tensor) -> Tensor:
    """Broadcast a 1 x d bias across the rows of a."""
    if bias.shape != (1, a.shape[1]):
        raise ValueError(f"bias shape {bias.shape} does not broadcast over {a.shape}")
    out = _node(a.values + bias.values, (a, bias), "add_bias")

    def back(g):
        if a.needs_grad:
            _accum(a, g)
        if bias.needs_grad:
            _accum(bias, g.sum(axis=0, keepdims=True))
    out._backward = back
    return out


def relu(x: Tensor) -> Tensor:
    out = _node(np.maximum(x.values, 0.0), (x,), "relu")
    # subgradient 0 at exactly 0
    active = x.values > 0.0

    def back(g):
        if x.needs_grad:
            _accum(x, g * active)
    out._backward = back
    return out


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    s = np.empty_like(v)
    pos = v >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    s[~pos] = ev / (1.0 + ev)
    out = _node(s, (x,), "sigmoid")

    def back(g):
        if x.needs_grad:
            _accum(x, g * s * (1.0 - s))
    out._backward = back
    return out


def _as_mask_indices(mask, n_rows: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("mask selects no rows")
    if idx.min() < 0 or idx.max() >= n_rows:
        raise ValueError("mask index outside the logits' rows")
    return idx


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray, mask) -> Tensor:
    """Mean cross-entropy of row-softmax against one-hot labels on masked rows.

    Stabilized by row-max subtraction. Backward is
    (softmax - labels) / |mask| on masked rows and zero elsewhere.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != logits.shape:
        raise ValueError(f"labels shape {labels.shape} != logits {logits.shape}")
    idx = _as_mask_indices(mask, logits.shape[0])
    sub = labels[idx]
    if not (np.all((sub == 0.0) | (sub == 1.0)) and np.all(sub.sum(axis=1) == 1.0)):
        raise ValueError("masked label rows must be exactly one-hot")

    z = logits.values[idx]
    z = z - z.max(axis=1, keepdims=True)
    expz = np.exp(z)
    softmax = expz / expz.sum(axis=1, keepdims=True)
    logprob = z - np.log(expz.sum(axis=1, keepdims=True))
    loss = -(sub * logprob).sum() / len(idx)
    out = _node(np.array([[loss]]), (logits,), "softmax_xent")

    def back(g):
        if logits.needs_grad:
            full = np.zeros_like(logits.values)
            full[idx] = (softmax - sub) / len(idx)
            _accum(logits, float(g[0, 0]) * full)
    out._backward = back
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator,
            training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Identity at rate 0 or outside training; draws nothing from ``rng``
    in either case, so inference passes leave the stream untouched.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = _node(x.values * keep * scale, (x,), "dropout")

    def back(g):
        if x.needs_grad:
            _accum(x, g * keep * scale)
    out._backward = back
    return out


def backward(loss: Tensor):
    """Propagate d(loss)/d(node) to every node reachable from ``loss``.

    ``loss`` must be scalar-shaped. Traversal is iterative reverse
    topological order; repeated consumers accumulate by summation.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.values)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class GradNormProbe:
    """Per-layer gradient norms of a backward pass and their adjacent ratios.

    ``norms[k]`` is the L2 norm of d(loss)/d(layer input k). Ratio k is
    norms[k-1] / norms[k], defined only when the denominator clears
    1e-30; ``delta_hat`` is max |ratio - 1| over the defined ratios.
    """

    def __init__(self, norms: list[float]):
        self.norms = list(norms)
        self.ratios: list[float | None] = []
        for prev, cur in zip(self.norms, self.norms[1:]):
            self.ratios.append(prev / cur if cur > 1e-30 else None)
        defined = [r for r in self.ratios if r is not None]
        self.delta_hat = max(abs(r - 1.0) for r in defined) if defined else None

    def to_dict(self) -> dict:
        return {"norms": self.norms, "ratios": self.ratios,
                "delta_hat": self.delta_hat}


def grad_norm_probe(layer_inputs) -> GradNormProbe:
    """Probe a completed backward pass.

    ``layer_inputs`` are the per-layer input tensors in depth order;
    every one must carry a gradient.
    """
    norms = []
    for k, t in enumerate(layer_inputs):
        if t.grad is None:
            raise ValueError(f"layer input {k} carries no gradient; "
                             f"run backward() first")
        norms.append(float(np.linalg.norm(t.grad)))
    return GradNormProbe(norms)
