"""Unbiased clustered client sampling for federated learning, with a FedAvg simulator."""

from .alloc_similarity import GradientCache, allocate_by_similarity, similarity_matrix, split_large_clients
from .alloc_size import allocate_by_size, support_bound_check, support_is_contiguous
from .data import FederatedDataset, load_idx, make_synthetic, partition_dirichlet
from .engine import LocalUpdateConfig, aggregate, drift_bounds, local_update, run_training
from .hierarchy import cut_tree, ward_tree
from .models import MLP1, SoftmaxRegression, forward_loss_grad
from .sampling import (
    AllocationMatrix,
    clustered,
    draw,
    expected_weight,
    md,
    md_allocation,
    prob_sampled,
    uniform,
    variance_dominance_report,
    weight_variance,
)

__version__ = "0.1.0"
