"""Multivariate-response scalar-on-function regression.

Fits a vector response on functional predictors through response-informed
components obtained from penalized generalized eigenproblems, with a smooth
penalty for a handful of predictor curves and a simultaneous smooth-sparse
penalty that selects curves when there are many.
"""

__version__ = "0.1.0"

from .basis import BasisSpec, curve_scores, eval_basis, make_basis
from .dataset import CurveDataset, DesignMatrices, build_design, group_norm
from .estimators import (
    MultiResponseFunctionalRegression,
    MultiResponseFunctionalRegressionCV,
)
from .metrics import mspe, r_squared, sens_spec
from .model import FittedModel, bootstrap_intervals, fit_model
from .selection import CvResult, cv_large_p, cv_small_p, k_upper
from .simulate import (
    ScenarioInstance,
    SimScenario,
    brownian_demo,
    fig1_curves,
    gen_sim1,
    gen_sim2,
    gen_sim3,
    gen_sim4,
    snr_scale,
)
from .solvers import (
    ComponentSet,
    PenaltyConfig,
    deflate,
    fit_components_smooth,
    fit_components_sparse,
    penalized_quotient,
)

__all__ = [
    "BasisSpec",
    "ComponentSet",
    "CurveDataset",
    "CvResult",
    "DesignMatrices",
    "FittedModel",
    "MultiResponseFunctionalRegression",
    "MultiResponseFunctionalRegressionCV",
    "PenaltyConfig",
    "ScenarioInstance",
    "SimScenario",
    "bootstrap_intervals",
    "brownian_demo",
    "build_design",
    "curve_scores",
    "cv_large_p",
    "cv_small_p",
    "deflate",
    "eval_basis",
    "fig1_curves",
    "fit_components_smooth",
    "fit_components_sparse",
    "fit_model",
    "gen_sim1",
    "gen_sim2",
    "gen_sim3",
    "gen_sim4",
    "group_norm",
    "k_upper",
    "make_basis",
    "mspe",
    "penalized_quotient",
    "r_squared",
    "sens_spec",
    "snr_scale",
]
