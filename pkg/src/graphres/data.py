"""Citation-network loaders, feature normalization, and node splits.

Two plain-text formats are supported behind one loader interface:

* ``.content`` / ``.cites`` pairs: each content line is
  ``<id> <feature values> <label>``, each cites line names two paper
  ids. This is how the classic citation dumps ship.
* the tab-separated sparse variant used by the larger biomedical
  corpus: node lines carry ``label=<c>`` plus ``<term>=<value>``
  attribute pairs, cite lines wrap ids in ``paper:<id>`` tokens.

Identifiers map to dense indices in first-seen content order; citation
direction is discarded; cite rows naming unknown ids are dropped with
a counted warning.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import Graph, build_graph

logger = logging.getLogger(__name__)

__all__ = ["Dataset", "DataFormatError", "load_content_cites",
           "load_pubmed_tab", "row_normalize", "column_normalize",
           "standard_split", "load_split_files", "save_dataset",
           "load_dataset"]


class DataFormatError(ValueError):
    """Malformed dataset file; message carries the offending line."""


@dataclass
class Dataset:
    """One transductive node-classification corpus."""

    graph: Graph
    features: np.ndarray  # n x d_x
    labels: np.ndarray    # n x C, one-hot
    class_names: list[str]
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    id_map: dict[str, int]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.graph.n
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError("features/labels row count must equal node count")
        for name in ("train_mask", "val_mask", "test_mask"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if m.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            setattr(self, name, m)
        overlap = (self.train_mask & self.val_mask) | \
                  (self.train_mask & self.test_mask) | \
                  (self.val_mask & self.test_mask)
        if overlap.any():
            raise ValueError("split masks must be pairwise disjoint")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]


def _empty_masks(n: int):
    return (np.zeros(n, dtype=bool),) * 3


def load_content_cites(content_path, cites_path) -> Dataset:
    """Load the ``.content`` / ``.cites`` format; masks start empty."""
    ids: dict[str, int] = {}
    rows: list[np.ndarray] = []
    label_names: list[str] = []
    label_idx: list[int] = []
    width = None
    with open(content_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise DataFormatError(
                    f"{content_path}:{lineno}: need id, features and label, "
                    f"got {len(parts)} fields")
            node_id, feats, label = parts[0], parts[1:-1], parts[-1]
            if node_id in ids:
                raise DataFormatError(
                    f"{content_path}:{lineno}: duplicate id {node_id!r}")
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise DataFormatError(
                    f"{content_path}:{lineno}: expected {width} feature "
                    f"values, got {len(feats)}")
            try:
                rows.append(np.array([float(v) for v in feats]))
            except ValueError as exc:
                raise DataFormatError(
                    f"{content_path}:{lineno}: non-numeric feature: {exc}")
            ids[node_id] = len(ids)
            if label not in label_names:
                label_names.append(label)
            label_idx.append(label_names.index(label))
    if not rows:
        raise DataFormatError(f"{content_path}: no content rows")

    edges, dropped = _read_cites(cites_path, ids)
    return _assemble(ids, np.vstack(rows), label_idx, label_names, edges,
                     dropped)


def _read_cites(cites_path, ids: dict[str, int], strip_prefix: bool = False):
    edges: list[tuple[int, int]] = []
    dropped = 0
    with open(cites_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if strip_prefix:
                toks = [p.split(":", 1)[1] for p in parts if ":" in p]
                if len(toks) != 2:
                    continue  # header / separator rows
            else:
                toks = parts
                if len(toks) != 2:
                    raise DataFormatError(
                        f"{cites_path}:{lineno}: expected two ids, "
                        f"got {len(toks)}")
            if toks[0] not in ids or toks[1] not in ids:
                dropped += 1
                continue
            edges.append((ids[toks[0]], ids[toks[1]]))
    if dropped:
        logger.warning("dropped %d citation rows referencing unknown ids",
                       dropped)
    return edges, dropped


def _assemble(ids, features, label_idx, label_names, edges, dropped) -> Dataset:
    n = len(ids)
    labels = np.zeros((n, len(label_names)))
    labels[np.arange(n), label_idx] = 1.0
    graph = build_graph(n, edges)
    tr, va, te = _empty_masks(n)
    return Dataset(graph=graph, features=features, labels=labels,
                   class_names=list(label_names), train_mask=tr, val_mask=va,
                   test_mask=te, id_map=ids,
                   meta={"dropped_cites": dropped})


def load_pubmed_tab(node_path, cites_path) -> Dataset:
    """Load the sparse attribute=value tab format.

    The node file may open with header lines (anything before the first
    line whose second field starts with ``label=``). Feature vocabulary
    is read from the header when it declares ``numeric:<term>:0.0``
    entries, and extends in first-seen order otherwise.
    """
    ids: dict[str, int] = {}
    vocab: dict[str, int] = {}
    node_feats: list[dict[int, float]] = []
    label_names: list[str] = []
    label_idx: list[int] = []
    with open(node_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if not parts or not parts[0].strip():
                continue
            if len(parts) >= 2 and parts[1].startswith("label="):
                node_id = parts[0].strip()
                if node_id in ids:
                    raise DataFormatError(
                        f"{node_path}:{lineno}: duplicate id {node_id!r}")
                label = parts[1].split("=", 1)[1]
                feats: dict[int, float] = {}
                for tok in parts[2:]:
                    if "=" not in tok:
                        continue
                    key, val = tok.split("=", 1)
                    if key == "summary":
                        continue
                    if key not in vocab:
                        vocab[key] = len(vocab)
                    try:
                        feats[vocab[key]] = float(val)
                    except ValueError:
                        raise DataFormatError(
                            f"{node_path}:{lineno}: non-numeric value for "
                            f"{key!r}")
                ids[node_id] = len(ids)
                node_feats.append(feats)
                if label not in label_names:
                    label_names.append(label)
                label_idx.append(label_names.index(label))
            else:
                # header row: harvest declared vocabulary terms if present
                for tok in parts:
                    tok = tok.strip()
                    if tok.startswith("numeric:"):
                        term = tok.split(":")[1]
                        if term and term not in vocab:
                            vocab[term] = len(vocab)
    if not ids:
        raise DataFormatError(f"{node_path}: no node rows")
    features = np.zeros((len(ids), len(vocab)))
    for i, feats in enumerate(node_feats):
        for j, v in feats.items():
            features[i, j] = v
    edges, dropped = _read_cites(cites_path, ids, strip_prefix=True)
    return _assemble(ids, features, label_idx, label_names, edges, dropped)


def row_normalize(features: np.ndarray) -> np.ndarray:
    """Divide each nonzero row by its L1 norm; zero rows pass through."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.abs(features).sum(axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return features / norms


def column_normalize(features: np.ndarray) -> np.ndarray:
    """Per-column L1 normalization; zero columns pass through."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.abs(features).sum(axis=0, keepdims=True)
    norms[norms == 0.0] = 1.0
    return features / norms


def standard_split(data: Dataset, per_class_train: int, val_count: int,
                   test_count: int, seed: int | None = None) -> Dataset:
    """Deterministic transductive split.

    Walking the nodes in index order (or in a seeded permutation when
    ``seed`` is given): the first ``per_class_train`` nodes of each
    class form the training set, the next ``val_count`` unused nodes
    the validation set, and the next ``test_count`` the test set.
    """
    n = data.n
    order = np.arange(n)
    if seed is not None:
        order = np.random.default_rng(seed).permutation(n)
    class_of = data.labels.argmax(axis=1)
    train = np.zeros(n, dtype=bool)
    taken = np.zeros(data.n_classes, dtype=int)
    for i in order:
        c = class_of[i]
        if taken[c] < per_class_train:
            train[i] = True
            taken[c] += 1
    if (taken < per_class_train).any():
        short = int(np.flatnonzero(taken < per_class_train)[0])
        raise ValueError(
            f"class {data.class_names[short]!r} has only {taken[short]} "
            f"nodes, cannot take {per_class_train} for training")
    rest = [i for i in order if not train[i]]
    if len(rest) < val_count + test_count:
        raise ValueError(
            f"need {val_count + test_count} non-training nodes, "
            f"have {len(rest)}")
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[:val_count]] = True
    test[rest[val_count:val_count + test_count]] = True
    return replace(data, train_mask=train, val_mask=val, test_mask=test)


def load_split_files(data: Dataset, train_path, val_path, test_path) -> Dataset:
    """Explicit index-file split: one decimal node index per line."""
    def read_idx(path):
        with open(path, "r", encoding="utf-8") as fh:
            idx = [int(line) for line in fh if line.strip()]
        mask = np.zeros(data.n, dtype=bool)
        mask[np.array(idx, dtype=np.int64)] = True
        return mask
    return replace(data, train_mask=read_idx(train_path),
                   val_mask=read_idx(val_path), test_mask=read_idx(test_path))


def save_dataset(path, data: Dataset):
    """Single-file archive; exact float64 round trip."""
    edges = np.array(data.graph.edges, dtype=np.int64).reshape(-1, 2)
    meta = {
        "class_names": data.class_names,
        "id_map": data.id_map,
        "n": data.n,
        "meta": data.meta,
    }
    np.savez(path, features=data.features, labels=data.labels,
             edges=edges, train_mask=data.train_mask, val_mask=data.val_mask,
             test_mask=data.test_mask,
             meta=np.frombuffer(json.dumps(meta).encode("utf-8"),
                                dtype=np.uint8))


def load_dataset(path) -> Dataset:
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode("utf-8"))
        graph = build_graph(meta["n"], [tuple(e) for e in z["edges"]])
        return Dataset(graph=graph, features=z["features"],
                       labels=z["labels"], class_names=meta["class_names"],
                       train_mask=z["train_mask"], val_mask=z["val_mask"],
                       test_mask=z["test_mask"], id_map=meta["id_map"],
                       meta=meta["meta"])
