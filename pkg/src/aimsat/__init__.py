"""Cubic Ising machine simulator for 3-SAT with make/break annealing.

The numeric kernels come from a compiled extension when available and
from a numpy fallback otherwise; ``aimsat.backend_name`` tells which.
"""
from ._backend import NAME as backend_name
from .anneal import RandomFlipConfig, TmbConfig, TmbController, RandomFlipController, tmb_probability
from .baselines import SaConfig, WalkSatConfig, sa_solve, schoning_solve, walksat_skc_solve
from .bench import GeneratorConfig, compute_tts, gen_scale_free, gen_uniform, run_suite, solve
from .cnf import CnfFormula, count_unsat, parse_dimacs, read_dimacs, write_dimacs
from .dynsys import MachineConfig, VariationModel, program, program_cnf, run
from .energy import (IsingProblem, PuboPolynomial, QuboProblem, pubo_from_cnf,
                     quadratize_kzfd, quadratize_rosenberg, qubo_to_ising)

__version__ = "0.1.0"

__all__ = [
    "backend_name", "CnfFormula", "parse_dimacs", "read_dimacs", "write_dimacs", "count_unsat",
    "PuboPolynomial", "QuboProblem", "IsingProblem", "pubo_from_cnf", "quadratize_kzfd",
    "quadratize_rosenberg", "qubo_to_ising", "MachineConfig", "VariationModel", "program",
    "program_cnf", "run", "TmbConfig", "TmbController", "RandomFlipConfig",
    "RandomFlipController", "tmb_probability", "SaConfig", "WalkSatConfig", "sa_solve",
    "schoning_solve", "walksat_skc_solve", "GeneratorConfig", "compute_tts", "gen_uniform",
    "gen_scale_free", "run_suite", "solve",
]
