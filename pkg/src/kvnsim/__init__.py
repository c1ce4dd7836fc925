"""Sparse Hamiltonian embedding of conservative polynomial ODE systems."""

from .estimator import (
    ResourceEstimate,
    TruncationParams,
    block_encoding_cost,
    select_truncation,
    simulation_query_count,
    verify_truncation,
)
from .evolution import compare, convergence_sweep, evolve, output_series
from .fock import FockBasis, ObservableSpec, StateVector, encode_observable, encode_position, monomial_observable, rank, unrank
from .hamiltonian import SparseHermitianMatrix, build_hamiltonian, norm_certificate
from .models import (
    DuffingSpec,
    HarmonicSpec,
    KuramotoSpec,
    kuramoto_phase_recover,
    kuramoto_reference,
    make_duffing,
    make_harmonic,
    make_kuramoto,
)
from .ode import Interaction, OdeSystem, integrate_reference, rescale, rhs, validate_system, weight_drift

__version__ = "0.1.0"
