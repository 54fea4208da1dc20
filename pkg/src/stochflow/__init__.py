"""Unreliability estimation for stochastic flow networks.

Permutation Monte Carlo (PMC), with and without jump filters, and
generalized splitting (GS) on an artificial capacity-raising Markov chain,
plus exact enumeration for small models.
"""

from .network import (
    Link,
    ModelError,
    NetworkModel,
    ParametricFamily,
    builtin,
    dodecahedron,
    dump_model,
    lattice,
    load_model,
    normalize_levels,
    save_model,
)
from .maxflow import FlowNetwork, FlowState, GomoryHuTree, all_pairs_max_flow, max_flow
from .ctmc import JumpRealization, RateTable, build_rates, capacity_at, sample_jumps
from .phasetype import PhaseTypeSpec, PrecisionError, tail
from .pmc import (
    FilterConfig,
    FunctionalSample,
    PmcRunRecord,
    PmcSampler,
    filter_all,
    filter_single,
    functional_estimate,
    pmc_sample,
)
from .gs import GsEngine, GsState, SplittingSchedule, gibbs_pass, gs_sample, pilot_levels
from .oracle import ExactResult, exact_unreliability, tail_by_convolution, tail_expm
from .harness import EstimateSummary, ExperimentConfig, run, sweep

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Link",
    "ModelError",
    "NetworkModel",
    "ParametricFamily",
    "builtin",
    "dodecahedron",
    "dump_model",
    "lattice",
    "load_model",
    "normalize_levels",
    "save_model",
    "FlowNetwork",
    "FlowState",
    "GomoryHuTree",
    "all_pairs_max_flow",
    "max_flow",
    "JumpRealization",
    "RateTable",
    "build_rates",
    "capacity_at",
    "sample_jumps",
    "PhaseTypeSpec",
    "PrecisionError",
    "tail",
    "FilterConfig",
    "FunctionalSample",
    "PmcRunRecord",
    "PmcSampler",
    "filter_all",
    "filter_single",
    "functional_estimate",
    "pmc_sample",
    "GsEngine",
    "GsState",
    "SplittingSchedule",
    "gibbs_pass",
    "gs_sample",
    "pilot_levels",
    "ExactResult",
    "exact_unreliability",
    "tail_by_convolution",
    "tail_expm",
    "EstimateSummary",
    "ExperimentConfig",
    "run",
    "sweep",
]
