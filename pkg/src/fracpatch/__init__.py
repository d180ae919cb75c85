"""Fractional KPP equation with a moving habitat patch.

Discrete fractional Laplacian with drift, principal eigenvalues, IMEX
relaxation dynamics, stationary profiles and critical-speed detection.
"""

from .errors import (CertificationError, ConfigurationError, DataError, DomainError, FitError,
                     FracPatchError, IterationError, NumericalError, PreconditionError,
                     ResourceError, ShapeError, StructuralError, StructuralWarning)
from .grid import (Analytic, Constant, Field, Grid, PowerTail, WeightedNormSpec, Zero, make_grid,
                   weighted_l1_norm)
from .fracop import (KernelWeights, NonlocalOperator, OperatorSpec, apply, bench_matvec,
                     build_kernel, build_operator, c_s_constant, to_dense)
from .spectral import (EigenOptions, EigenResult, LineEigenResult, dense_principal_eigenvalue,
                       drift_symmetry_check, lambda_of_c_profile, principal_eigen,
                       principal_eigen_line)
from .kpp import (Barrier, HypothesisReport, Nonlinearity, barrier_values, certify_barrier,
                  check_hypotheses, custom, model_kpp, standard_model, standard_patch)
from .dynamics import Monotonicity, Outcome, SimConfig, Trajectory, evolve, frame_equivalence_check, step
from .waves import Side, TailFit, WaveProfile, WaveResult, fit_tail_exponent, solve_wave
from .thresholds import ThresholdReport, scan_and_bisect
from .config import RunConfig, parse_config

__version__ = "0.1.0"
