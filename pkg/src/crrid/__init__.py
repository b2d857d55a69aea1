"""Prescribed exponential stabilisation of scalar neutral delay equations.

Closed-form delayed P/PD gain synthesis by partial pole placement, numerical
dominance certificates and method-of-steps simulation.
"""
__version__ = "0.1.0"

from .core import NeutralQuasiPoly, RetardedQuasiPoly, ScaledParams, f1, f2  # noqa: E402
from .placement import (  # noqa: E402
    ControllerDesign,
    RootPair,
    RootTriple,
    UnreachableRateError,
    assign_three,
    classify_two_root,
    design_p,
    design_pd,
    exp_estimate,
)
from .simulate import History, PlantSpec, integrate_hopfield, integrate_linear_neutral  # noqa: E402
from .spectrum import Rectangle, certify_dominance, find_roots  # noqa: E402
