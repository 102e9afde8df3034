"""Numerical workbench for spectral flow in weighted block-matrix models."""

from .algebra import (BlockOperator, SemifiniteModel, SingularValueFunction,
                      affine_norm, f_q_sup, li_norm, li_q_norm, lp_norm,
                      singular_values, trace)
from .calculus import (QuadratureSpec, contour_func_calc, divided_difference_exp,
                       frechet_derivative, func_calc, integrate_1d,
                       simplex_exp_chain)
from .flow import (EstimatorResult, eta_gamma_reconcile, eta_invariant,
                   finitely_summable_constant, gamma_correction,
                   normalization_constant_bounded,
                   normalization_constant_unbounded, relative_index_exact,
                   relative_index_formula, sf_bounded_line, sf_bounded_path,
                   sf_finitely_summable, sf_oracle, sf_unbounded)
from .jlo import DoubledSystem, jlo_series_sf
from .paths import (PiecewisePath, bounded_transform, conjugation_path,
                    linear_path, transform_path)

__version__ = "0.1.0"
