"""Scikit-learn style wrapper around the residual convolution stack.

Transductive semi-supervised node classification: the graph is a
constructor argument (a hyperparameter of the learning problem), and
``fit(X, y)`` takes node features plus integer labels with ``-1``
marking unlabeled nodes, the convention of sklearn's semi-supervised
estimators. ``get_params`` / ``set_params`` / ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .models import ModelConfig, ResidualGCN, ResidualKind, evaluate, train
from .sparse import normalized_adjacency
from .validation import as_graph, check_features, check_labels, \
    masks_from_labels

__all__ = ["ResidualGCNClassifier"]


class _FitData:
    """Duck-typed Dataset view over estimator inputs."""

    def __init__(self, features, labels, train_mask, val_mask, test_mask):
        self.features = features
        self.labels = labels
        self.train_mask = train_mask
        self.val_mask = val_mask
        self.test_mask = test_mask


class ResidualGCNClassifier(BaseEstimator):
    """Node classifier over a fixed graph with a chosen residual kind.

    Parameters mirror :class:`~graphres.models.ModelConfig`; ``graph``
    accepts a :class:`~graphres.graph.Graph`, an adjacency matrix
    (dense or scipy sparse), or an (m, 2) edge array.

    >>> clf = ResidualGCNClassifier(graph=adj, layers=2, residual="none")
    >>> clf.fit(X, y)                # y uses -1 for unlabeled nodes
    >>> clf.predict(X)[test_idx]
    """

    def __init__(self, graph=None, layers: int = 2, hidden: int = 16,
                 residual: str = "none", bias: bool = False,
                 dropout: float = 0.5, lr: float = 0.01,
                 weight_decay: float = 5e-4, epochs: int = 200,
                 patience: int = 10, val_fraction: float = 0.2,
                 seed: int = 0):
        self.graph = graph
        self.layers = layers
        self.hidden = hidden
        self.residual = residual
        self.bias = bias
        self.dropout = dropout
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.seed = seed

    def _config(self) -> ModelConfig:
        return ModelConfig(
            layers=self.layers, hidden=self.hidden,
            residual=ResidualKind.parse(self.residual), bias=self.bias,
            dropout=self.dropout, lr=self.lr,
            weight_decay=self.weight_decay, epochs=self.epochs,
            seed=self.seed, patience=self.patience)

    def fit(self, X, y, train_mask=None, val_mask=None):
        """Train on the labeled nodes of the constructor's graph.

        Without explicit masks, ``val_fraction`` of the labeled nodes
        becomes the validation set and the rest train; the unlabeled
        remainder serves as the internal test curve.
        """
        if self.graph is None:
            raise ValueError("fit requires graph= to be set on the estimator")
        X = check_features(X)
        codes, classes = check_labels(y, X.shape[0])
        g = as_graph(self.graph, X.shape[0])
        if g.n != X.shape[0]:
            raise ValueError(
                f"graph has {g.n} nodes but features have {X.shape[0]} rows")
        if train_mask is None or val_mask is None:
            train_mask, val_mask = masks_from_labels(
                codes, self.val_fraction, self.seed)
            if not val_mask.any():
                raise ValueError(
                    "val_fraction carved out no validation nodes (each "
                    "class keeps at least one training node); label more "
                    "nodes or pass explicit train_mask/val_mask")
        else:
            train_mask = np.asarray(train_mask, dtype=bool)
            val_mask = np.asarray(val_mask, dtype=bool)
        labels = np.zeros((len(codes), len(classes)))
        labels[codes >= 0, codes[codes >= 0]] = 1.0
        test_mask = codes < 0
        if not test_mask.any():
            test_mask = val_mask  # fully labeled corpus: mirror validation

        config = self._config()
        a_hat = normalized_adjacency(g)
        model = ResidualGCN(config, X.shape[1], len(classes))
        report = train(config, _FitData(X, labels, train_mask, val_mask,
                                        test_mask), a_hat, model=model)
        self.classes_ = classes
        self.model_ = model
        self.a_hat_ = a_hat
        self.report_ = report
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def decision_function(self, X) -> np.ndarray:
        """Per-node logits over the fitted classes."""
        self._check_fitted()
        X = check_features(X)
        if X.shape != (self.a_hat_.rows, self.n_features_in_):
            raise ValueError(
                f"X must have shape ({self.a_hat_.rows}, "
                f"{self.n_features_in_}) for this graph")
        return self.model_.forward(self.a_hat_, X, training=False).values

    def predict_proba(self, X) -> np.ndarray:
        z = self.decision_function(X)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        z = self.decision_function(X)
        return self.classes_[z.argmax(axis=1)]

    def score(self, X, y, mask=None) -> float:
        """Accuracy over ``mask`` (default: all labeled rows of y)."""
        self._check_fitted()
        y = np.asarray(y)
        if mask is None:
            mask = y >= 0
        z = self.decision_function(X)
        onehot = np.zeros_like(z)
        for c, cls in enumerate(self.classes_):
            onehot[y == cls, c] = 1.0
        return evaluate(z, onehot, mask)
