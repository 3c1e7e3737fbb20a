"""Numerical verification of viscosity notions for nonlocal integro-differential equations."""

from ._polar import QuadratureConfig
from .checkers import (CheckConfig, CheckReport, FOperator, check_definition_A,
                       check_definition_Aprime, check_definition_B, check_definition_Bprime,
                       check_definition_C, find_certificate, run_check)
from .functions import CandidateFunction, JetCertificate, SecondOrderJet, jet_at, verify_jet
from .kernels import LevyKernel, small_ball_quadratic_moment, verify_levy_integrability
from .quadrature import (IntegralValue, compensated_full_integral, nonsmooth_full_integral,
                         tail_integral)

__version__ = "0.1.0"

__all__ = [
    "QuadratureConfig", "CheckConfig", "CheckReport", "FOperator", "check_definition_A",
    "check_definition_Aprime", "check_definition_B", "check_definition_Bprime",
    "check_definition_C", "find_certificate", "run_check", "CandidateFunction",
    "JetCertificate", "SecondOrderJet", "jet_at", "verify_jet", "LevyKernel",
    "small_ball_quadratic_moment", "verify_levy_integrability", "IntegralValue",
    "compensated_full_integral", "nonsmooth_full_integral", "tail_integral",
]
