"""Small deterministic problems shared by several test modules."""

import numpy as np

from cqggadmm.compression import CensorPolicy
from cqggadmm.engine import CQ_GGADMM, C_GGADMM, GGADMM, RunConfig
from cqggadmm.objectives import (
    DenseDataset,
    LocalObjective,
    generate_synthetic,
    make_objectives,
    partition_uniform,
)
from cqggadmm.topology import generate_path, generate_random_bipartite

QUAD_N = 10
QUAD_D = 5


def quadratic_targets(seed=0):
    return np.random.default_rng(seed).normal(size=(QUAD_N, QUAD_D))


def quadratic_problem(seed=0):
    """f_n(theta) = 1/2 ||theta - a_n||^2 on a 10-worker path.

    The minimizer of the sum is the mean of the a_n.
    """
    targets = quadratic_targets(seed)
    objectives = [
        LocalObjective("linear", DenseDataset(np.eye(QUAD_D), a)) for a in targets
    ]
    return generate_path(QUAD_N), objectives, targets.mean(axis=0)


def synthetic_problem(seed=0, task="linear", samples=1200, dim=50, n_heads=10, n_tails=10):
    topo = generate_random_bipartite(n_heads, n_tails, 0.4, seed)
    data, _ = generate_synthetic(task, samples, dim, 0.1, seed)
    ridge = 1e-3 if task == "logistic" else 0.0
    return topo, make_objectives(task, partition_uniform(data, topo.n_workers), ridge)


def config(variant, **kw):
    if variant != GGADMM:
        kw.setdefault("censor", CensorPolicy(1.0, 0.97))
    return RunConfig(variant=variant, **kw)


ALL_VARIANTS = (GGADMM, C_GGADMM, CQ_GGADMM)
