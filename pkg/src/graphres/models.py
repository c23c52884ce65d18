"""Spectral graph convolution stacks with per-layer residual terms.

The base layer is activation(A_hat @ h @ W [+ bias]); stacking K of
them gives the vanilla model. Each residual kind adds a term inside
the nonlinearity:

    none          nothing (vanilla stack)
    naive         h(k-1)
    graph-naive   A_hat @ h(k-1)
    raw           X
    graph-raw     A_hat @ X
    lazy-naive    sigmoid inside, h(k-1) added OUTSIDE the activation

Terms whose width disagrees with the layer output pass through a
learned adjustment matrix, one shared per (source width, target width)
pair. Training is full-batch Adam on masked cross-entropy over the
training nodes, deterministic for a fixed config and seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_norm_probe
from .optim import AdamState, adam_step, derive_rng, glorot_init
from .sparse import SparseMatrix, spmm

__all__ = ["ResidualKind", "ModelConfig", "EpochRecord", "TrainReport",
           "ResidualGCN", "NumericTrainingError", "sgc_layer", "residual_term",
           "train", "evaluate", "save_checkpoint", "load_checkpoint"]


class ResidualKind(Enum):
    NONE = "none"
    NAIVE = "naive"
    GRAPH_NAIVE = "graph-naive"
    RAW = "raw"
    GRAPH_RAW = "graph-raw"
    LAZY_NAIVE = "lazy-naive"

    @classmethod
    def parse(cls, name: str) -> "ResidualKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown residual kind {name!r}; one of: {valid}")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture plus training hyperparameters.

    ``layers`` counts hidden plus output layers (the number of stacked
    convolution operators). Defaults follow the established transductive
    protocol for citation networks; everything is CLI-overridable.
    """

    layers: int = 2
    hidden: int = 16
    residual: ResidualKind = ResidualKind.NONE
    bias: bool = False
    dropout: float = 0.5
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 200
    seed: int = 0
    patience: int = 10  # early stopping on validation loss; 0 disables
    dropout_residual: bool = False  # residual branch sees its own dropout
    decay_all: bool = False  # extend weight decay beyond layer-1 weights
    probe_every: int = 0  # sample gradient-norm probes every P epochs

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if self.hidden < 1:
            raise ValueError(f"hidden width must be >= 1, got {self.hidden}")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if isinstance(self.residual, str):
            object.__setattr__(self, "residual", ResidualKind.parse(self.residual))

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["residual"] = self.residual.value
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["residual"] = ResidualKind.parse(d["residual"])
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    val_loss: float


@dataclass
class TrainReport:
    """Per-epoch curves plus the best-validation snapshot."""

    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = 0.0
    best_test_acc: float = 0.0
    probes: list[tuple[int, dict]] = field(default_factory=list)
    stopped_early_at: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_val_acc": self.best_val_acc,
            "best_test_acc": self.best_test_acc,
            "stopped_early_at": self.stopped_early_at,
            "records": [asdict(r) for r in self.records],
            "probes": [{"epoch": e, **p} for e, p in self.probes],
        }


class NumericTrainingError(RuntimeError):
    """Loss went non-finite; carries the last probe for diagnostics."""

    def __init__(self, message: str, last_probe: dict | None = None):
        super().__init__(message)
        self.last_probe = last_probe


def sgc_layer(a_hat: SparseMatrix, h: Tensor, w: Tensor,
              bias: Tensor | None = None, activation: str = "relu") -> Tensor:
    """One spectral convolution: activation(A_hat @ h @ w [+ bias]).

    ``activation`` is one of relu, sigmoid, or linear ("softmax-deferred":
    the output layer emits raw logits and the softmax fuses into the loss).
    """
    z = ad.spmm_ad(a_hat, ad.matmul(h, w))
    if bias is not None:
        z = ad.add_bias_row(z, bias)
    if activation == "relu":
        return ad.relu(z)
    if activation == "sigmoid":
        return ad.sigmoid(z)
    if activation in ("linear", "softmax-deferred"):
        return z
    raise ValueError(f"unknown activation {activation!r}")


def residual_term(kind: ResidualKind, h_prev: Tensor, x: Tensor,
                  a_hat: SparseMatrix, w_adj: Tensor | None = None) -> Tensor:
    """The additive residual for one layer.

    Without ``w_adj`` the term keeps its source width, so naive kinds
    demand that h_prev already matches the layer output; with ``w_adj``
    any kind maps through the adjustment matrix.
    """
    if kind is ResidualKind.NONE:
        return Tensor(np.zeros_like(h_prev.values))
    if kind in (ResidualKind.NAIVE, ResidualKind.LAZY_NAIVE):
        base = h_prev
    elif kind is ResidualKind.GRAPH_NAIVE:
        base = ad.spmm_ad(a_hat, h_prev)
    elif kind is ResidualKind.RAW:
        base = x
    elif kind is ResidualKind.GRAPH_RAW:
        base = ad.spmm_ad(a_hat, x)
    else:
        raise ValueError(f"unknown residual kind {kind}")
    if w_adj is not None:
        base = ad.matmul(base, w_adj)
    return base


class ResidualGCN:
    """A K-layer stack with one residual kind, holding its parameters.

    Construction draws every parameter from a labeled substream of the
    seed, so two configs sharing a seed draw identical weights for the
    parameters they share.
    """

    def __init__(self, config: ModelConfig, in_features: int, n_classes: int):
        self.config = config
        self.in_features = in_features
        self.n_classes = n_classes
        k = config.layers
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] | None = [] if config.bias else None
        for layer in range(1, k + 1):
            in_w = in_features if layer == 1 else config.hidden
            out_w = n_classes if layer == k else config.hidden
            rng = derive_rng(config.seed, f"init/layer{layer}/weight")
            self.weights.append(glorot_init(in_w, out_w, rng))
            if config.bias:
                self.biases.append(Tensor(np.zeros((1, out_w)),
                                          requires_grad=True))
        self.adjust: dict[tuple[int, int], Tensor] = {}
        for pair in self._adjust_pairs():
            rng = derive_rng(config.seed, f"init/adjust/{pair[0]}x{pair[1]}")
            self.adjust[pair] = glorot_init(pair[0], pair[1], rng)

    def _adjust_pairs(self) -> list[tuple[int, int]]:
        cfg = self.config
        if cfg.residual is ResidualKind.NONE:
            return []
        pairs = []
        for layer in range(1, cfg.layers + 1):
            in_w = self.in_features if layer == 1 else cfg.hidden
            out_w = self.n_classes if layer == cfg.layers else cfg.hidden
            if cfg.residual in (ResidualKind.RAW, ResidualKind.GRAPH_RAW):
                src = self.in_features
            else:
                src = in_w
            if src != out_w and (src, out_w) not in pairs:
                pairs.append((src, out_w))
        return pairs

    def parameters(self) -> list[Tensor]:
        params = list(self.weights)
        if self.biases is not None:
            params.extend(self.biases)
        params.extend(self.adjust[p] for p in sorted(self.adjust))
        return params

    def decay_parameters(self) -> list[Tensor]:
        if self.config.decay_all:
            return self.parameters()
        return [self.weights[0]]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def _residual(self, layer: int, out_w: int, h_prev: Tensor, x: Tensor,
                  graph_x: Tensor | None, a_hat: SparseMatrix,
                  rng, training: bool) -> Tensor:
        cfg = self.config
        kind = cfg.residual
        if kind in (ResidualKind.RAW, ResidualKind.GRAPH_RAW):
            src_w = self.in_features
        else:
            src_w = h_prev.shape[1]
        w_adj = None
        if src_w != out_w:
            if (src_w, out_w) not in self.adjust:
                raise ValueError(
                    f"layer {layer}: residual source width {src_w} != output "
                    f"width {out_w} and no adjustment matrix exists")
            w_adj = self.adjust[(src_w, out_w)]
        source_h = h_prev
        source_x = x
        if cfg.dropout_residual and training and cfg.dropout > 0.0:
            if kind in (ResidualKind.RAW, ResidualKind.GRAPH_RAW):
                source_x = ad.dropout(x, cfg.dropout, rng, training)
            else:
                source_h = ad.dropout(h_prev, cfg.dropout, rng, training)
        if kind is ResidualKind.GRAPH_RAW and graph_x is not None and \
                source_x is x:
            # A_hat @ X is input-constant; reuse the precomputed product
            base = graph_x
            return ad.matmul(base, w_adj) if w_adj is not None else base
        return residual_term(kind, source_h, source_x, a_hat, w_adj)

    def forward(self, a_hat: SparseMatrix, x: np.ndarray,
                rng: np.random.Generator | None = None,
                training: bool = False, collect_inputs: bool = False,
                graph_x: np.ndarray | None = None):
        """Logits for every node; optionally the per-layer input tensors.

        ``graph_x`` may carry a precomputed A_hat @ x to spare the
        graph-raw residual one sparse multiply per layer.
        """
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != a_hat.rows:
            raise ValueError(
                f"feature rows {x.shape[0]} != operator dimension {a_hat.rows}")
        if training and cfg.dropout > 0.0 and rng is None:
            raise ValueError("training forward with dropout needs an rng")
        x_t = Tensor(x, requires_grad=collect_inputs)
        gx_t = None
        if cfg.residual is ResidualKind.GRAPH_RAW:
            gx_t = Tensor(graph_x if graph_x is not None else spmm(a_hat, x),
                          requires_grad=False)
        h = x_t
        inputs = [h]
        k = cfg.layers
        for layer in range(1, k + 1):
            out_w = self.n_classes if layer == k else cfg.hidden
            w = self.weights[layer - 1]
            b = self.biases[layer - 1] if self.biases is not None else None
            h_in = ad.dropout(h, cfg.dropout, rng, training) \
                if training and cfg.dropout > 0.0 else h
            is_output = layer == k
            if cfg.residual is ResidualKind.NONE:
                h = sgc_layer(a_hat, h_in, w, b,
                              "linear" if is_output else "relu")
            elif cfg.residual is ResidualKind.LAZY_NAIVE:
                # sigmoid inside, residual outside; the output layer keeps
                # the residual on the logits with softmax fused into the loss
                r = self._residual(layer, out_w, h, x_t, gx_t, a_hat,
                                   rng, training)
                z = sgc_layer(a_hat, h_in, w, b,
                              "linear" if is_output else "sigmoid")
                h = ad.add(z, r)
            else:
                r = self._residual(layer, out_w, h, x_t, gx_t, a_hat,
                                   rng, training)
                z = ad.spmm_ad(a_hat, ad.matmul(h_in, w))
                if b is not None:
                    z = ad.add_bias_row(z, b)
                z = ad.add(z, r)
                h = z if is_output else ad.relu(z)
            if not is_output:
                inputs.append(h)
        if collect_inputs:
            return h, inputs
        return h


def evaluate(logits, labels: np.ndarray, mask) -> float:
    """Fraction of masked nodes whose argmax logit hits the true class.

    Argmax ties break toward the lowest class index.
    """
    values = logits.values if isinstance(logits, Tensor) else np.asarray(logits)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("mask selects no rows")
    pred = values[idx].argmax(axis=1)
    true = np.asarray(labels)[idx].argmax(axis=1)
    return float((pred == true).mean())


def train(config: ModelConfig, data, a_hat: SparseMatrix,
          model: ResidualGCN | None = None) -> TrainReport:
    """Full-batch training run; returns the per-epoch report.

    ``data`` provides features, one-hot labels, and disjoint
    train/val/test masks. The report's epoch 0 row is the evaluation of
    the freshly initialized model; with epochs = 0 that is all it holds.
    """
    for name in ("train_mask", "val_mask", "test_mask"):
        if np.asarray(getattr(data, name)).sum() == 0:
            raise ValueError(f"{name} selects no nodes")
    x = np.asarray(data.features, dtype=np.float64)
    labels = np.asarray(data.labels, dtype=np.float64)
    if model is None:
        model = ResidualGCN(config, x.shape[1], labels.shape[1])
    drop_rng = derive_rng(config.seed, "dropout")
    state = AdamState(model.parameters(), lr=config.lr,
                      weight_decay=config.weight_decay,
                      decay_params=model.decay_parameters())
    graph_x = spmm(a_hat, x) if config.residual is ResidualKind.GRAPH_RAW \
        else None

    report = TrainReport()
    last_probe: dict | None = None

    def record(epoch: int, train_loss: float):
        logits = model.forward(a_hat, x, training=False, graph_x=graph_x)
        val_loss_t = ad.softmax_cross_entropy(logits, labels, data.val_mask)
        rec = EpochRecord(
            epoch=epoch, loss=train_loss,
            train_acc=evaluate(logits, labels, data.train_mask),
            val_acc=evaluate(logits, labels, data.val_mask),
            test_acc=evaluate(logits, labels, data.test_mask),
            val_loss=float(val_loss_t.values[0, 0]))
        report.records.append(rec)
        return rec

    init_logits = model.forward(a_hat, x, training=False, graph_x=graph_x)
    init_loss = float(ad.softmax_cross_entropy(
        init_logits, labels, data.train_mask).values[0, 0])
    record(0, init_loss)

    best_val_loss = math.inf
    stale = 0
    for epoch in range(1, config.epochs + 1):
        probing = config.probe_every > 0 and epoch % config.probe_every == 0
        out = model.forward(a_hat, x, rng=drop_rng, training=True,
                            collect_inputs=probing, graph_x=graph_x)
        logits, layer_inputs = out if probing else (out, None)
        loss_t = ad.softmax_cross_entropy(logits, labels, data.train_mask)
        loss = float(loss_t.values[0, 0])
        if not math.isfinite(loss):
            if last_probe is None:
                # probe the failing pass so the failure carries per-layer
                # gradient norms even when periodic sampling was off
                try:
                    model.zero_grad()
                    logits2, inputs2 = model.forward(
                        a_hat, x, rng=drop_rng, training=True,
                        collect_inputs=True, graph_x=graph_x)
                    ad.backward(ad.softmax_cross_entropy(
                        logits2, labels, data.train_mask))
                    last_probe = grad_norm_probe(inputs2).to_dict()
                except Exception:
                    last_probe = None
            raise NumericTrainingError(
                f"non-finite training loss at epoch {epoch}", last_probe)
        model.zero_grad()
        ad.backward(loss_t)
        if probing:
            probe = grad_norm_probe(layer_inputs)
            last_probe = probe.to_dict()
            report.probes.append((epoch, last_probe))
        adam_step(state)
        rec = record(epoch, loss)
        if config.patience > 0:
            if rec.val_loss < best_val_loss - 1e-12:
                best_val_loss = rec.val_loss
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    report.stopped_early_at = epoch
                    break

    best = max(report.records, key=lambda r: (r.val_acc, -r.epoch))
    report.best_epoch = best.epoch
    report.best_val_acc = best.val_acc
    report.best_test_acc = best.test_acc
    return report


def save_checkpoint(path, model: ResidualGCN):
    """JSON checkpoint: config plus every parameter, row-major."""
    params = {}
    for i, w in enumerate(model.weights, start=1):
        params[f"layer{i}.weight"] = _param_entry(w)
    if model.biases is not None:
        for i, b in enumerate(model.biases, start=1):
            params[f"layer{i}.bias"] = _param_entry(b)
    for (src, dst), t in sorted(model.adjust.items()):
        params[f"adjust.{src}x{dst}"] = _param_entry(t)
    payload = {
        "config": model.config.to_json_dict(),
        "in_features": model.in_features,
        "n_classes": model.n_classes,
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _param_entry(t: Tensor) -> dict:
    return {"shape": list(t.shape), "data": t.values.reshape(-1).tolist()}


def load_checkpoint(path) -> ResidualGCN:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    config = ModelConfig.from_json_dict(payload["config"])
    model = ResidualGCN(config, payload["in_features"], payload["n_classes"])
    params = payload["params"]

    def install(t: Tensor, entry: dict):
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        t.values = arr
    for i, w in enumerate(model.weights, start=1):
        install(w, params[f"layer{i}.weight"])
    if model.biases is not None:
        for i, b in enumerate(model.biases, start=1):
            install(b, params[f"layer{i}.bias"])
    for (src, dst), t in model.adjust.items():
        install(t, params[f"adjust.{src}x{dst}"])
    return model
