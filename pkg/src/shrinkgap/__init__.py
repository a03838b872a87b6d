"""Periodically driven Hamiltonians with shrinking spectral gaps.

Weighted block-operator classes, the anti-adiabatic gauge transform,
progressive diagonalization, two model families and long-time energy
traces, all at finite truncation.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .spectral_basis import (GapCertificate, SpectralBasis, build_power_basis,  # noqa: F401
                             certify_gaps)
from .operator_classes import (BlockOperator, ClassParams, bracket, class_norm,  # noqa: F401
                               commutator_with_H, cp_constant, diag_part, offdiag_part,
                               op_product, sh_constant, shur_holmgren_norm,
                               sylvester_solve, zeta)
from .time_periodic import (TimePeriodicOperator, evaluate, family_class_norm,  # noqa: F401
                            primitive_of_fluctuation, time_average, time_derivative)
from .antiadiabatic import (AntiAdiabaticResult, anti_adiabatic_commuting,  # noqa: F401
                            anti_adiabatic_transform)
from .diagonalization import (DiagonalizationState, PipelineResult, conjugate_family,  # noqa: F401
                              epsilon_threshold, phi, progressive_diagonalize,
                              reduce_floquet)
from .models import (DiscreteModel, HowlandModel, build_discrete, build_howland,  # noqa: F401
                     verify_ck_decay)
from .evolution import (EnergyTrace, ExponentFit, check_offdiag_decay,  # noqa: F401
                        fit_exponent, propagate, theoretical_sigma, trivial_bound)
