"""Hyperfine qubit toolkit: Zeeman structure, clock points, branching, detection and link estimates."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .angmom import HalfInt, clebsch_gordan, wigner3j, wigner6j
from .clockfinder import QubitCandidate, find_clock_points, propagate_uncertainty, second_order_sensitivity
from .errors import DataMissingError, HfqubitError, NumericalError, ValidationError
from .species import LevelSpec, SpeciesSpec, load_species
from .zeeman import ZeemanState, build_hamiltonian, eigenstates, zeeman_map

__all__ = [
    "HalfInt",
    "clebsch_gordan",
    "wigner3j",
    "wigner6j",
    "LevelSpec",
    "SpeciesSpec",
    "load_species",
    "ZeemanState",
    "build_hamiltonian",
    "eigenstates",
    "zeeman_map",
    "QubitCandidate",
    "find_clock_points",
    "second_order_sensitivity",
    "propagate_uncertainty",
    "HfqubitError",
    "ValidationError",
    "DataMissingError",
    "NumericalError",
]
