"""Spontaneous emission and qubit-photon corner states on photonic lattices."""

__version__ = "0.1.0"

from .lattice import (GeometryKind, BathGraph, build_chain_1d, build_rhombus_2d,
                      build_corner_3d, build_periodic, dispersion, bandwidth,
                      band_edges, single_particle_matrix, diagonal_site,
                      periodic_spectrum_deviation, k_grid)
from .polaron import (EmitterSpec, PolaronSolution, SingleExcHamiltonian,
                      solve_selfconsistent, assemble_polaron_hamiltonian,
                      assemble_rwa_hamiltonian, precondition_margin,
                      NonConvergenceError, NearSingularBathShiftError)
from .dynamics import (SingleExcState, Trajectory, initial_excited_state,
                       propagate, norm, time_grid, StepNotConvergedError)
from .chainmap import (ChainRepresentation, lanczos_tridiagonalize,
                       chain_single_exc_hamiltonian, reflection_time_bound,
                       ZeroSeedError, SeedMismatchError)
from .analysis import (TrapRegion, DecayFit, BicCandidate, trap_region,
                       excitation_number, fit_decay_rate, bic_probability,
                       find_bic_eigenstates, photon_density_map,
                       directionality_fraction, spectral_bic_projection)

__all__ = [name for name in dir() if not name.startswith("_")]
