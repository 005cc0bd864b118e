"""Distribution-valued surrogate models for systems with mixed numeric and categorical inputs.

Replicated outcomes at each configuration are summarized by a monotone
I-spline quantile function, its coefficients are decorrelated by SVD, and
each score column gets a Gaussian-process model whose between-category
structure (GP, CGP, LMGP, LMGP-S) is estimated by EM.
"""

from .curves import (EmpiricalQuantilePoints, ISplineBasis, QuantileFit, ReplicateSample,
                     build_basis, ecdf, eval_quantile, fit_quantile, quantile_to_cdf,
                     quantile_to_cdf_values)
from .data import Dataset, apply_transforms, load_dataset, preprocess, write_dataset
from .evaluate import EvaluationReport, evaluate, paired_comparison, stratified_split
from .lmgp import (VARIANTS, ComponentData, CovarianceError, EMConfig, LMGPParams, e_step,
                   fit_em, fit_em_per_category, predict_w)
from .metrics import CDFCurve, SummaryStats, el1, summary_stats
from .model import FittedModel, fit_model, load_model, predict_distribution, save_model
from .simulate import MixtureOracle, SimulationSpec, simulate
from .svd import SVDFactors, decompose, reconstruct_beta, select_components

__version__ = "0.1.0"
