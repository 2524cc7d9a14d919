"""Roll-wave laboratory: periodic viscous St. Venant waves and their stability."""
from .model import (DomainError, Equilibrium, HopfPoint, ModelParams, DispersionRoots,
                    constant_state_dispersion, find_equilibria, hopf_analysis,
                    lagrangian_rhs, neutral_branch_derivatives)
from .orbit import (OrbitFamily, OrbitSpec, PeriodicProfile, QClosure, continue_family,
                    derivative_condition, hopf_family_seed, solve_periodic)

__version__ = "0.1.0"
