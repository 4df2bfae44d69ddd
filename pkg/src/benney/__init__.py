"""Benney moment-chain solutions: families, reconstruction and verification."""
from .families import (
    DistributionG,
    FamilyOutputs,
    LambdaFamily,
    RationalParams,
    const_family,
    family_outputs,
    freestream_family,
    rational_family,
    theta_sigma,
)
from .numerics import GridSpec, Tolerance
from .reconstruction import SignConvention, evaluate_fields, make_fields, resolve_signs

__version__ = "0.1.0"

__all__ = [
    "DistributionG",
    "FamilyOutputs",
    "GridSpec",
    "LambdaFamily",
    "RationalParams",
    "SignConvention",
    "Tolerance",
    "const_family",
    "evaluate_fields",
    "family_outputs",
    "freestream_family",
    "make_fields",
    "rational_family",
    "resolve_signs",
    "theta_sigma",
]
