"""Censored and quantized group ADMM over bipartite worker graphs."""

from .compression import (
    CensorPolicy,
    FullPrecisionPayload,
    QuantizedPayload,
    QuantizerState,
    deserialize,
    quantize,
    reconstruct,
    serialize,
)
from .config import ExperimentSpec, parse_spec, parse_spec_text
from .engine import (
    C_GGADMM,
    CQ_GGADMM,
    GGADMM,
    RunConfig,
    init_run,
    reference_solution,
    run,
    step,
)
from .experiment import run_experiment
from .kernels import BACKEND
from .metrics import CSV_HEADER, EnergyModel, fit_linear_rate, transmission_energy
from .objectives import DenseDataset, LocalObjective, generate_synthetic, make_objectives
from .solvers import NewtonSettings, solve_subproblem
from .topology import (
    Topology,
    build_topology,
    generate_path,
    generate_random_bipartite,
    incidence_set,
)

__version__ = "0.1.0"
