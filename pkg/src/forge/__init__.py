"""Effective Lindblad generators for controlled qudits under classical noise."""
from .linalg import SuperOperator, ad, hermitian, density_matrix, spin_operators, pauli
from .noise import NoiseModel, NoiseModelError, spectral_density, k_tilde, gamma_of_t, factor_kernel
from .control import ControlSchedule, ControlError, fourier_data, is_effective
from .generators import (
    LindbladParts,
    coarse_grained_lindbladian,
    finite_eps_generator,
    white_noise_generator,
    bb_dephasing_rate,
    iso_dephasing_rate,
    optimal_measurement_time,
)
from .montecarlo import SimConfig, EnsembleResult, run_ensemble, run_trajectory, evolve_generator, compare

__version__ = "0.1.0"
