"""Semi-static hedging of barrier options through a mirrored parametrix."""

__version__ = "0.1.0"

from ._validation import ContractError
from .geometry import (HalfSpaceDomain, PayoffFunction, call_payoff, constant_payoff, digital_payoff,
                       harmonic_payoff, project_pi, project_pi_perp, psi_matrix, reflect)
from .diffusion_models import (DiffusionModel, ModelReport, build_model_report, constant_model, diagonal_model,
                               grid_model, rotated_constant_model, symmetrize_A)
from .quadrature import QuadratureScheme
from .kernels import KernelEval, p2M, transverse_h0
from .hedge_operators import (HedgeTerm, KnockInOperator, apply_S, apply_S_star, build_hedge_terms,
                              residual_term)
from .simulation import (HedgeReport, MCEstimate, PathConfig, error_lhs_mc, error_rhs_quadmc, hedge_ledger,
                         price_knock_in, price_knock_out, price_plain, simulate_paths)
from .bounds_ledger import ConstantsTable, DetCase, compute_constants

__all__ = [
    "ContractError", "HalfSpaceDomain", "PayoffFunction", "call_payoff", "constant_payoff", "digital_payoff",
    "harmonic_payoff", "project_pi", "project_pi_perp", "psi_matrix", "reflect", "DiffusionModel",
    "ModelReport", "build_model_report", "constant_model", "diagonal_model", "grid_model",
    "rotated_constant_model", "symmetrize_A", "QuadratureScheme", "KernelEval", "p2M", "transverse_h0",
    "HedgeTerm", "KnockInOperator", "apply_S", "apply_S_star", "build_hedge_terms", "residual_term",
    "HedgeReport", "MCEstimate", "PathConfig", "error_lhs_mc", "error_rhs_quadmc", "hedge_ledger",
    "price_knock_in", "price_knock_out", "price_plain", "simulate_paths", "ConstantsTable", "DetCase",
    "compute_constants",
]
