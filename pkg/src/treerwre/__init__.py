"""Random walk in random environment on regular trees.

Submodules: :mod:`env` (laws and regimes), :mod:`quenched` (exact
recursions), :mod:`brw` (branching random walk layer), :mod:`walker`
(Monte Carlo), :mod:`oracle` (brute-force linear solves) and :mod:`xlab`
(experiments and CLI).
"""

__version__ = "0.1.0"

from .env import (EnvSpec, Regime, RegimeTag, VertexAddress, classify_regime, compute_p, kappa,
                  make_constant_env, make_critical_two_point, make_two_point_env, omega_from_A, psi,
                  realize_A, theta)
from .errors import (BudgetExceeded, EmptySample, GridUnderflow, InsufficientPoints, InvalidSpec,
                     NonConvergence, NotNormalized, SingularSystem, TreeRWREError, TrivialFixedPoint)

__all__ = [
    "EnvSpec", "Regime", "RegimeTag", "VertexAddress", "classify_regime", "compute_p", "kappa",
    "make_constant_env", "make_critical_two_point", "make_two_point_env", "omega_from_A", "psi",
    "realize_A", "theta", "BudgetExceeded", "EmptySample", "GridUnderflow", "InsufficientPoints",
    "InvalidSpec", "NonConvergence", "NotNormalized", "SingularSystem", "TreeRWREError",
    "TrivialFixedPoint", "__version__",
]
