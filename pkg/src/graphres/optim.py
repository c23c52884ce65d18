"""Parameter initialization, Adam, and labeled seed derivation.

One master seed fans out a dedicated substream per named use, so the
presence or absence of one parameter (an extra adjustment matrix, a
bias) never shifts the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .autodiff import Tensor

__all__ = ["derive_rng", "glorot_init", "AdamState", "adam_step"]


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Deterministic substream for (seed, label), stable across processes."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence(
        entropy=int(seed), spawn_key=(key,)))


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> Tensor:
    """Weight matrix uniform on +-sqrt(6 / (rows + cols))."""
    if rows <= 0 or cols <= 0:
        raise ValueError(f"glorot needs positive dims, got {rows}x{cols}")
    limit = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, size=(rows, cols)),
                  requires_grad=True)


class AdamState:
    """First/second-moment accumulators for a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0,
                 decay_params: list[Tensor] | None = None):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        # classic L2: decay adds wd * p to the gradient of selected params
        decay = decay_params if decay_params is not None else []
        self._decay_ids = {id(p) for p in decay}
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]


def adam_step(state: AdamState):
    """One bias-corrected Adam update; parameters mutate in place.

    Parameters whose gradient is None (unused in the last pass) keep
    their values and their moments untouched.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, p in enumerate(state.params):
        if p.grad is None:
            continue
        g = p.grad
        if state.weight_decay and id(p) in state._decay_ids:
            g = g + state.weight_decay * p.values
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * (g * g)
        m_hat = state.m[i] / (1 - b1 ** t)
        v_hat = state.v[i] / (1 - b2 ** t)
        p.values = p.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
