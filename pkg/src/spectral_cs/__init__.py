"""Spectral action expansions on finite spectral triples.

Layers, bottom up: operators and scalar functions, divided differences,
multiple operator integrals, the cochains ``phi_n`` and ``psi_{2k-1}``,
universal forms, the CS/YM expansion, and the experiment lab behind the CLI.
"""

from .cochains import CochainContext, bracket, connes_B, hochschild_b, phi, psi, psi_tilde
from .divided import divided_difference, divided_difference_naive
from .expansion import (
    ExpansionReport,
    build_report,
    expansion_terms,
    gauge_transform,
    k1_pairing,
    lhs_trace,
    remainder_bound,
    truncation_identity,
)
from .forms import Form, chern_simons, curvature, curvature_power, generator, opaque
from .functions import ScalarFunction, function_from_spec, gaussian, poly_gaussian, rational
from .integrals import CochainEvaluator
from .lab import ConfigError, ExperimentConfig, generate_triple
from .moi import GuardError, MoiProblem, moi_eigenbasis, moi_quadrature, moi_trace
from .operators import HermitianOperator, SpectralTriple

__version__ = "0.1.0"

__all__ = [
    "CochainContext",
    "bracket",
    "connes_B",
    "hochschild_b",
    "phi",
    "psi",
    "psi_tilde",
    "divided_difference",
    "divided_difference_naive",
    "ExpansionReport",
    "build_report",
    "expansion_terms",
    "gauge_transform",
    "k1_pairing",
    "lhs_trace",
    "remainder_bound",
    "truncation_identity",
    "Form",
    "chern_simons",
    "curvature",
    "curvature_power",
    "generator",
    "opaque",
    "ScalarFunction",
    "function_from_spec",
    "gaussian",
    "poly_gaussian",
    "rational",
    "CochainEvaluator",
    "ConfigError",
    "ExperimentConfig",
    "generate_triple",
    "GuardError",
    "MoiProblem",
    "moi_eigenbasis",
    "moi_quadrature",
    "moi_trace",
    "HermitianOperator",
    "SpectralTriple",
]
