"""Desk-scale simulator for accelerated decentralized finite-sum optimization."""

from .adfs import AdfsResult, primal_estimate, run_adfs, run_adfs_efficient, run_ns_adfs
from .apcg import CompositeProblem, lyapunov_value, run_apcg, run_apcg_efficient
from .augmented import (
    AugmentedProblem,
    BlockDraw,
    SamplingScheme,
    build_augmented,
    build_augmented_ns,
    expected_time,
    rate_rho,
)
from .baselines import FlatProblem, point_saga, pool_objectives, reference_optimum
from .objective import (
    ConditionReport,
    LocalObjective,
    LossKind,
    Sample,
    condition_numbers,
    primal_grad,
    primal_value,
)
from .records import LogRow, RunRecord
from .topology import (
    CommunicationGraph,
    SymmetricSpectrum,
    build_topology,
    incidence,
    laplacian,
    spectral_gap,
    symmetric_eigensolve,
)

__version__ = "0.1.0"
