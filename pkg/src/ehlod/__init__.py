"""Enriched higher-order localized orthogonal decomposition for the wave equation."""
from .assembly import (
    CoefficientField,
    FineSpace,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    patch_space,
    restrict_to_patch,
    sample_coefficient,
)
from .coarse import CoarseOperators, CoarseSpace, c_form, constraint_matrix, project_PiH, quasi_interpolate_IH
from .enrichment import EnrichedSpace, build_enriched_space, enrich_once, q_expansion_initial
from .harness import (
    ErrorRecord,
    ExperimentConfig,
    energy_error,
    run_decay,
    run_localization_sweep,
    run_spatial_convergence,
    run_temporal_convergence,
)
from .linalg import assemble, factorize, solve, spmv
from .mesh import CartesianMesh, MeshError, Patch, build_mesh, fine_elements_in, patch, refine_ratio
from .multiscale import (
    LODProblem,
    MultiscaleSpace,
    bubble_basis,
    build_space,
    galerkin_reduce,
    ideal_basis,
    localized_generalized,
    localized_naive,
    orthonormal_basis,
    solve_saddle,
)
from .timeint import (
    LinearSystemODE,
    ROWTableau,
    load_tableau,
    rkn4_integrate,
    row_integrate,
    row_step,
)

__version__ = "0.1.0"
