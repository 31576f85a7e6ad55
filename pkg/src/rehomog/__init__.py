"""Reiterated homogenization of two-scale Neumann problems.

Cell problems and homogenized tensors (:mod:`rehomog.cellsolve`), domain
solvers (:mod:`rehomog.domain`), smoothed first approximations
(:mod:`rehomog.corrector`), diagnostics and rate fits
(:mod:`rehomog.analysis`) and the sweep driver (:mod:`rehomog.pipeline`).
"""
from .coefficients import CoefficientField, ScaleCoupling, make_coefficient, verify_hypotheses
from .cellsolve import CellCorrectorSet, compute_cell_correctors
from .domain import DomainField, DomainMesh, solve_fine, solve_fine_1d_exact, solve_homogenized
from .corrector import first_approx_plain, first_approx_smoothed, residual_field, steklov_smooth
from .analysis import ErrorRecord, ConvergenceReport, fit_rates

__version__ = "0.1.0"
