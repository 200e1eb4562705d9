"""Quantized preconditioners for Monte Carlo solves of stochastic elliptic PDEs."""
from .errors import VQPError
from .fem import LinearSystem, TriMesh, assemble, load_mesh, make_mesh
from .field import (
    CovarianceKernel,
    FieldRealization,
    KLBasis,
    build_kl_basis,
    lift,
    project,
    sample_realization,
    transport,
    truncation_error,
)
from .quantizer import (
    GRID_S,
    Codebook,
    DistortionReport,
    MapKind,
    Method,
    T2Map,
    assign,
    assign_batch,
    centroid_coefficient,
    clvq,
    empirical_distortion,
    grid_codebook,
    kmeans,
)
from .solver import (
    PrecondKind,
    Preconditioner,
    SolveRecord,
    build_amg,
    build_block_jacobi,
    build_cholesky,
    build_preconditioner,
    pcg,
)
from .driver import (
    CampaignConfig,
    QuantizerSpec,
    SimulationReport,
    frequency_profile,
    ideal_sweep,
    load_balance_report,
    run_campaign,
)

__version__ = "0.1.0"
