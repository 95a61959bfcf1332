"""Hierarchical sparse Bayesian stiffness identification via Gibbs sampling.

Two samplers over (mode shapes, frequencies-squared, stiffness scalings):
one keeps the equation-error precision as a sampled variable, the other
integrates it out analytically into Student-t conditionals.  A two-stage
calibration/monitoring workflow turns paired posterior samples into
per-substructure damage probability curves.
"""

from .bench import BenchmarkSpec, GroundTruth, apply_damage, build_shear_building, \
    simulate_modal_data
from .damage import DamageCurves, PairedSamples, calibrate, damage_probability, monitor
from .engine import Chain, ErgodicityReport, GibbsConfig, detect_burn_in, \
    run_algorithm1, run_algorithm2, run_chain, run_parallel_chains
from .errors import ConvergenceError, InputError, NumericalError
from .model import ModalDataset, StructuralModel, SystemState, assemble_stiffness, \
    build_F, build_G_c, build_H_b, eigen_solve, equation_error

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSpec", "GroundTruth", "apply_damage", "build_shear_building",
    "simulate_modal_data",
    "DamageCurves", "PairedSamples", "calibrate", "damage_probability", "monitor",
    "Chain", "ErgodicityReport", "GibbsConfig", "detect_burn_in",
    "run_algorithm1", "run_algorithm2", "run_chain", "run_parallel_chains",
    "ConvergenceError", "InputError", "NumericalError",
    "ModalDataset", "StructuralModel", "SystemState", "assemble_stiffness",
    "build_F", "build_G_c", "build_H_b", "eigen_solve", "equation_error",
    "__version__",
]
