"""Full-model gradient verification helpers."""

from __future__ import annotations

import numpy as np

from .model import ModelConfig, ModelParams
from .numeric import GradReport, check_gradients
from .training import LabeledBatch, TrainSample, batch_loss, sample_partial_solution
from .tsp import TspInstance, Tour
from .heuristics import brute_force_optimal


def random_training_batch(
    seed: int, n_nodes: int = 10, k_m: int = 20, samples: int = 1
) -> LabeledBatch:
    """A small labeled batch (exact labels) for loss/gradient probes."""
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(samples):
        inst = TspInstance(rng.random((n_nodes, 2)), name=f"probe{seed}")
        label = brute_force_optimal(inst)
        items.append(TrainSample(inst, label, sample_partial_solution(inst, label, k_m, rng)))
    return LabeledBatch(items)


def end_to_end_grad_report(
    seed: int = 0,
    n_nodes: int = 10,
    config: ModelConfig | None = None,
    eps: float = 1e-5,
    max_entries_per_param: int = 2,
) -> GradReport:
    """Check analytic gradients of a full training-step loss (encoder, all
    decoder layers, selection scoring, cross-entropy) against central
    differences on a random small instance."""
    config = config or ModelConfig(hidden_dim=32, num_heads=4, decoder_layers=6)
    params = ModelParams.init(config, seed=seed)
    batch = random_training_batch(seed, n_nodes=n_nodes)
    return check_gradients(
        lambda: batch_loss(batch, params),
        params.named(),
        eps=eps,
        max_entries_per_param=max_entries_per_param,
        rng=np.random.default_rng(seed + 1),
    )
