"""Trust-region semismooth Newton solver for ``min f(x) + phi(x)`` based on the normal map."""

from .baselines import fista, sparsa
from .bench import BenchConfig, ConfigError, mask_density, run_benchmark
from .cg import lift_step, rescale_to_radius, steihaug_cg
from .driver import (NumericalBreakdown, SolveResult, StagnationError, TrssnParams,
                     solve, trssn_step)
from .estimators import DiffusionMaskCompressor, SparseLogisticRegression
from .hessian import CompactLBFGS, ExactHessian, SkipPolicy
from .io import read_libsvm, read_pgm, write_pgm
from .problems import (CompressionProblem, LogisticProblem, QuadL1Problem,
                       make_diagonal_quadl1, make_logistic_data, make_planted_quadl1,
                       synthetic_solution)
from .prox import (BoxL1Prox, L1Prox, moreau_envelope, natural_residual, normal_map,
                   prox_box_l1, prox_l1)

__version__ = "0.1.0"

__all__ = [
    "BenchConfig", "BoxL1Prox", "CompactLBFGS", "CompressionProblem", "ConfigError",
    "DiffusionMaskCompressor", "ExactHessian", "L1Prox", "LogisticProblem",
    "NumericalBreakdown", "QuadL1Problem", "SkipPolicy", "SolveResult",
    "SparseLogisticRegression", "StagnationError", "TrssnParams", "fista", "lift_step",
    "make_diagonal_quadl1", "make_logistic_data", "make_planted_quadl1", "mask_density",
    "moreau_envelope", "natural_residual", "normal_map", "prox_box_l1", "prox_l1",
    "read_libsvm", "read_pgm", "rescale_to_radius", "run_benchmark", "solve", "sparsa",
    "steihaug_cg", "synthetic_solution", "trssn_step", "write_pgm",
]
