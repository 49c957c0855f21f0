"""Smoothness spaces and spectral multipliers of a nonnegative self-adjoint
operator on a finite space of homogeneous type."""
from .atoms import (
    AtomError,
    ClassicAtom,
    Decomposition,
    NewAtom,
    atomic_decompose,
    coefficient_norm,
    make_classic_atom,
    reconstruct,
    synthesis_bound_check,
    validate_atom,
)
from .dyadic import Cube, DyadicTree, auto_tree, christ_decomposition, cubes_at_level, tree_invariants
from .experiments import (
    ExperimentConfig,
    decomposition_roundtrip,
    estimate_operator_norm,
    multiplier_experiment,
    threshold_sweep,
)
from .interpolation import closed_form_constant, k_functional, real_interp_norm
from .norms import NormSpec, SquareFunctionSpec, besov_norm, g_function, lusin_function, norm, triebel_lizorkin_norm
from .space import Space, SpaceError, build_space, fit_doubling
from .spectral import (
    OperatorSpectrum,
    SpectralError,
    apply_function,
    gaussian_diagnostic,
    graph_laplacian,
    heat_kernel,
    spectral_decompose,
)
from .symbols import (
    ConvergenceWarning,
    PartitionOfUnity,
    SpectralFunction,
    build_partition_of_unity,
    hormander_functional,
    sobolev_norm,
    symbol_family,
)

__version__ = "0.1.0"
