"""Conditional preparation of atomic Dicke-state superpositions by QND coupling to light.

Atomic states are kept in closed form as polynomial-times-Gaussian quadrature
wavefunctions; :mod:`dickeprep.oracle` cross-checks them in a truncated Fock basis.
"""

__version__ = "0.1.0"

from .cvstate import FockVector, PolyGaussian, fidelity_pure, to_fock  # noqa: E402
from .ops import Displacement, ThetaParams, theta_s  # noqa: E402
from .protocol import OutcomeGrid, execute  # noqa: E402
from .schedule import Schedule, Step  # noqa: E402
from .synth import TargetSpec, schedule_real, solve_complex_n2  # noqa: E402

__all__ = [
    "Displacement",
    "FockVector",
    "OutcomeGrid",
    "PolyGaussian",
    "Schedule",
    "Step",
    "TargetSpec",
    "ThetaParams",
    "execute",
    "fidelity_pure",
    "schedule_real",
    "solve_complex_n2",
    "theta_s",
    "to_fock",
    "__version__",
]
