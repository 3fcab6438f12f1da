"""Wavelet synthesis of fractional and multifractional Brownian motion and of the
lattice-sampled variant Z, with tools to check their regularity."""

__version__ = "0.1.0"

from .errors import ConfigurationError, CoverageError
from .hurst import HurstFunction
from .noise import NoiseLattice
from .psi import PsiTable, build_psi_table, cached_psi_table
from .synthesis import PathBundle, SynthesisConfig, synthesize_field, synthesize_mbm, synthesize_residual, synthesize_z
from .wavelet import MeyerWindow

__all__ = [
    "ConfigurationError", "CoverageError", "HurstFunction", "MeyerWindow", "NoiseLattice", "PathBundle",
    "PsiTable", "SynthesisConfig", "build_psi_table", "cached_psi_table", "synthesize_field", "synthesize_mbm",
    "synthesize_residual", "synthesize_z",
]
