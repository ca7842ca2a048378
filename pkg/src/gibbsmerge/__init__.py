"""Recursive thermal-state preparation for 1D chains, simulated exactly.

The package prepares Gibbs states e^{-beta H}/Z of local chain
Hamiltonians by the perturbative merge recursion: thermalize single
sites exactly, then merge neighboring blocks by driving the boundary
coupling from 0 to 1 in small steps, each step a probabilistic
conjugation followed by dephasing in the updated eigenbasis.  Every
state, success probability, and cost claim is checkable against dense
linear-algebra oracles.
"""

from .chains import (
    ChainModel,
    build_block_hamiltonian,
    heisenberg,
    link_term,
    random_chain,
    shift_psd,
    transverse_field_ising,
)
from .channels import (
    ChannelFidelity,
    ConjugationResult,
    binned_hamiltonian,
    conjugation_binned,
    conjugation_ideal,
    dephase_gaussian,
    dephase_gaussian_quadrature,
    dephase_ideal,
)
from .costs import (
    CostReport,
    RestartStats,
    d_dim_prediction,
    recursion_prediction,
    restart_predictions,
    step_time,
    total_time_prediction,
)
from .gibbs import (
    GibbsFamily,
    dyson_imaginary_first_order,
    dyson_real_time_terms,
    first_order_projector_form,
    gibbs_state,
)
from .merge import (
    MergePlan,
    MergeSchedule,
    ResourceCapError,
    StepOutcome,
    derived_fidelity,
    merge_blocks,
    perturbative_step,
    prepare_chain,
    sequence_error_budget,
)
from .operators import (
    DensityMatrix,
    HermitianOperator,
    embed_local,
    matrix_exp_hermitian,
    matrix_exp_unitary,
    operator_norm,
    spectral_decompose,
    tensor_product,
    trace_distance,
    trace_norm,
)

__version__ = "0.1.0"

__all__ = [
    "ChainModel",
    "ChannelFidelity",
    "ConjugationResult",
    "CostReport",
    "DensityMatrix",
    "GibbsFamily",
    "HermitianOperator",
    "MergePlan",
    "MergeSchedule",
    "ResourceCapError",
    "RestartStats",
    "StepOutcome",
    "binned_hamiltonian",
    "build_block_hamiltonian",
    "conjugation_binned",
    "conjugation_ideal",
    "d_dim_prediction",
    "dephase_gaussian",
    "dephase_gaussian_quadrature",
    "dephase_ideal",
    "derived_fidelity",
    "dyson_imaginary_first_order",
    "dyson_real_time_terms",
    "embed_local",
    "first_order_projector_form",
    "gibbs_state",
    "heisenberg",
    "link_term",
    "matrix_exp_hermitian",
    "matrix_exp_unitary",
    "merge_blocks",
    "operator_norm",
    "perturbative_step",
    "prepare_chain",
    "random_chain",
    "recursion_prediction",
    "restart_predictions",
    "sequence_error_budget",
    "shift_psd",
    "spectral_decompose",
    "step_time",
    "tensor_product",
    "total_time_prediction",
    "trace_distance",
    "trace_norm",
    "transverse_field_ising",
]
