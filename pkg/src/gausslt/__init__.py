"""Local times and self-intersections of Gaussian integrators ``x(t) = (A 1_[0,t], xi)``."""

__version__ = "0.1.0"

from .hilbert import (GridMismatch, GridSpec, L2Operator, L2Vec, SingularOperatorError, adjoint, apply,
                      builtin_operator, compose, indicator, inner, invert, make_grid, norm)
from .gram import VerifyReport, gram_det, gram_matrix, nondeterminism_ratio, project
from .sim import GaussPath, NoiseSample, bridge_path, covariance, integrator_path, sample_noise
from .localtime import (LocalTimeEstimate, MomentQuadrature, cross_moment_exact, local_time_kernel,
                        lt_convergence_experiment, mc_selfoverlap, occupation_density, second_moment_exact)
from .selfx import (AsymptoticVerdict, ConditionTriangle, bridge_selfx_moment, classify_limit,
                    endpoint_decay_certificate, mc_bridge_selfx, planar_selfx_moment)
