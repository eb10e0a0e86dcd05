"""Dyadic cubes, Calderón–Zygmund tools and sparse domination for Radon transforms along curves.

Modules: ``sht`` (discretized spaces of homogeneous type), ``dyadic`` (grids),
``decomposition`` (maximal functions, Whitney and CZ splits), ``geometry``
(vector fields, curves, CC metrics), ``operators`` (kernel ladders and
single-scale operators), ``analysis`` (norm and exponent estimators),
``sparse`` (selection and domination), ``weights`` (A_p and RH constants).
"""
from .errors import (ConfigError, ConstantInfeasibleError, ContractViolation, DominationFailure,
                     KernelError, ResolutionError, SelectionFailure, SparsedomError)

__version__ = "0.1.0"

__all__ = ["ConfigError", "ConstantInfeasibleError", "ContractViolation", "DominationFailure",
           "KernelError", "ResolutionError", "SelectionFailure", "SparsedomError", "__version__"]
