"""Resonance analysis and instability checks for oscillatory hyperbolic systems."""

from .symbol import (
    BranchCrossingError,
    BranchDecomposition,
    SystemSpec,
    bilinear_apply,
    load_system,
    spectral_decompose,
    symbol_at,
    symbol_regularity_check,
    validate_system,
)
from .kg import KGParams, build_kg, kg_closed_forms

__version__ = "0.1.0"
