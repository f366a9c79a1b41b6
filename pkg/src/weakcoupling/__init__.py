"""Desk-scale numerical laboratory for weak-coupling quantum kinetic limits.

Modules
-------
potentials   Fourier-side pair potential family and its vanishing-order contract.
states       Gaussian k-particle phase-space trial data and the W^{4,1} diagnostic.
quadrature   Sharded, seeded Monte Carlo engine and the tensor-grid oracle.
hierarchy    Epsilon-parametrized Duhamel terms II-V with Monte Carlo error bars.
limits       Limiting collision operators (Boltzmann pairing, mean-field Q,
             Uehling-Uhlenbeck kernel, hierarchy terms Q1/Q2, cubic term M).
solver       Homogeneous velocity-grid solver with conservation/entropy diagnostics.
cli          Study orchestration (convergence scans, vanishing checks, solver runs).
"""

from .errors import (ConfigError, DimensionTooHigh, DivergentLimit,
                     IllConditionedTransform, IncompatibleState, IoError,
                     NonConvergentEstimate, NonPositiveDefinite,
                     PotentialNonVanishing, PotentialVanishes,
                     StabilityViolation, ToleranceNotMet, WeakCouplingError)
from .potentials import PairPotential, check_vanishing_order, eval_phi_hat, is_theorem_class
from .states import (GaussianPhaseState, MCEstimate, TestObservable, eval_state,
                     free_transport, linear_phase_integral, make_tensor_state,
                     state_from_dict, state_to_dict, w41_norm)
from .quadrature import (BlockProposal, ExponentialProposal, GaussianProposal,
                         MixtureProposal, OracleAxis, OracleConfig,
                         PolyGaussianProposal, QuadratureConfig, UniformProposal,
                         mc_integrate, oracle_integrate)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
