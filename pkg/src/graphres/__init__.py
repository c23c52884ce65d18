"""Graph residual networks and propagation-depth analysis.

Library layout:

* :mod:`graphres.graph` / :mod:`graphres.sparse` -- graph container and
  the normalized / random-walk / lazy propagation operators
* :mod:`graphres.spectral` -- eigenvalue extremes, stationary
  distributions, closed-form and measured depth limits
* :mod:`graphres.autodiff` / :mod:`graphres.optim` -- reverse-mode
  engine, Adam, glorot init, gradient-norm probes
* :mod:`graphres.models` -- the residual convolution stacks and trainer
* :mod:`graphres.estimator` -- scikit-learn style classifier wrapper
* :mod:`graphres.data` -- citation-corpus loaders and splits
* :mod:`graphres.cli` -- the ``graphres`` experiment command
"""

from .graph import Graph, build_graph, is_bipartite, is_connected, \
    read_edge_list
from .sparse import SparseMatrix, lazy_walk_matrix, normalized_adjacency, \
    random_walk_matrix, spmm, symmetric_walk_form
from .spectral import (INFINITE, NOT_REACHED, LimitReport, SpectrumSummary,
                       StationaryDistribution, build_limit_report,
                       degree_representation_distance,
                       dominant_projection_target, eigen_extremes,
                       empirical_animation_limit, feature_representation_distance,
                       lazy_limit_bound, p_norm, stationary_distribution,
                       theoretical_limit_bound)
from .autodiff import GradNormProbe, Tensor, backward, grad_norm_probe
from .optim import AdamState, adam_step, derive_rng, glorot_init
from .models import (ModelConfig, ResidualGCN, ResidualKind, TrainReport,
                     evaluate, load_checkpoint, residual_term, save_checkpoint,
                     sgc_layer, train)
from .estimator import ResidualGCNClassifier
from .data import (Dataset, column_normalize, load_content_cites,
                   load_dataset, load_pubmed_tab, row_normalize, save_dataset,
                   standard_split)

__version__ = "0.1.0"
