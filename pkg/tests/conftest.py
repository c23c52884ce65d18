import os
from pathlib import Path

import numpy as np
import pytest

from graphres.data import Dataset, standard_split
from graphres.graph import Graph, build_graph, is_bipartite, is_connected
from graphres.autodiff import backward

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, passed: bool, detail: str):
    """Collect one pass/fail line per acceptance criterion."""
    status = "PASS" if passed else "FAIL"
    line = f"ACCEPTANCE {criterion}: {status} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dataset_root() -> Path:
    return Path(os.environ.get("GRAPHRES_DATA", "data"))


def citation_paths(name: str):
    """(content, cites) paths for a named citation corpus, or None."""
    base = dataset_root()
    if name == "pubmed":
        cands = [
            (base / "pubmed/Pubmed-Diabetes.NODE.paper.tab",
             base / "pubmed/Pubmed-Diabetes.DIRECTED.cites.tab"),
            (base / "pubmed/pubmed.content", base / "pubmed/pubmed.cites"),
        ]
    else:
        cands = [
            (base / name / f"{name}.content", base / name / f"{name}.cites"),
            (base / f"{name}.content", base / f"{name}.cites"),
        ]
    for content, cites in cands:
        if content.exists() and cites.exists():
            return content, cites
    return None


def require_dataset(name: str):
    paths = citation_paths(name)
    if paths is None:
        pytest.skip(
            f"{name} dataset files are not present under {dataset_root()} "
            f"(this sandbox has no network access to fetch them); place "
            f"the files there to run this criterion")
    return paths


# --- small fixed graphs -----------------------------------------------------

@pytest.fixture
def k3() -> Graph:
    return build_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def p2() -> Graph:
    return build_graph(2, [(0, 1)])


@pytest.fixture
def p3() -> Graph:
    return build_graph(3, [(0, 1), (1, 2)])


def random_connected_nonbipartite(rng: np.random.Generator,
                                  n_max: int = 50) -> Graph:
    while True:
        n = int(rng.integers(4, n_max + 1))
        p = rng.uniform(0.08, 0.5)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < p]
        g = build_graph(n, edges)
        if is_connected(g) and not is_bipartite(g):
            return g


# --- synthetic citation-style corpus ----------------------------------------

def make_community_dataset(n_per: int = 30, classes: int = 3, seed: int = 7,
                           p_in: float = 0.10, p_out: float = 0.01,
                           width: int = 24,
                           split=(5, 20, 30)) -> Dataset:
    """Planted-community corpus: class-indicative feature blocks plus noise."""
    rng = np.random.default_rng(seed)
    n = n_per * classes
    labels_idx = np.repeat(np.arange(classes), n_per)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < (p_in if labels_idx[i] == labels_idx[j]
                                else p_out)]
    g = build_graph(n, edges)
    x = rng.random((n, width)) * 0.1
    block = width // classes
    for c in range(classes):
        x[labels_idx == c, c * block:(c + 1) * block] += \
            rng.random((n_per, block))
    labels = np.eye(classes)[labels_idx]
    ds = Dataset(graph=g, features=x, labels=labels,
                 class_names=[f"class{c}" for c in range(classes)],
                 train_mask=np.zeros(n, bool), val_mask=np.zeros(n, bool),
                 test_mask=np.zeros(n, bool),
                 id_map={f"paper{i}": i for i in range(n)})
    return standard_split(ds, *split, seed=1)


def write_content_cites(ds: Dataset, directory: Path, name: str = "toy"):
    """Serialize a Dataset into the .content/.cites text format."""
    directory.mkdir(parents=True, exist_ok=True)
    content = directory / f"{name}.content"
    cites = directory / f"{name}.cites"
    inv = {v: k for k, v in ds.id_map.items()}
    class_of = ds.labels.argmax(axis=1)
    with open(content, "w", encoding="utf-8") as fh:
        for i in range(ds.n):
            feats = "\t".join(repr(float(v)) for v in ds.features[i])
            fh.write(f"{inv[i]}\t{feats}\t{ds.class_names[class_of[i]]}\n")
    with open(cites, "w", encoding="utf-8") as fh:
        for i, j in ds.graph.edges:
            fh.write(f"{inv[i]}\t{inv[j]}\n")
    return content, cites


# --- finite differences -----------------------------------------------------

def finite_difference_worst(make_loss, params, h: float = 1e-5) -> float:
    """Max relative error of autodiff grads vs central differences."""
    loss = make_loss()
    backward(loss)
    grads = [p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, grads):
        it = np.nditer(p.values, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p.values[idx]
            p.values = p.values.copy()
            p.values[idx] = orig + h
            lp = float(make_loss().values[0, 0])
            p.values = p.values.copy()
            p.values[idx] = orig - h
            lm = float(make_loss().values[0, 0])
            p.values = p.values.copy()
            p.values[idx] = orig
            num = (lp - lm) / (2 * h)
            denom = max(abs(num), abs(g[idx]), 1e-8)
            worst = max(worst, abs(num - g[idx]) / denom)
    return worst
