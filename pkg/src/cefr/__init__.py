"""Estimation and uniform inference for ratios of conditional expectation
functions: a direct series estimator on raw signals, an orthogonal variant
on cross-fitted doubly robust signals, Gaussian-bootstrap confidence bands,
rank-preserving CV model selection, and a seeded Monte Carlo harness."""

from .basis import BasisMatrix, BasisSpec, basis_dim, eval_basis, eval_matrix
from .crossfit import FoldPlan, crossfit_signals, make_folds
from .dataset import ColumnFrame, ColumnMapping, load_csv, save_csv, subvector
from .errors import (CefrError, ConfigError, DataError, DegenerateFoldError,
                     DegenerateVarianceError, NumericError, SchemaError,
                     SingularSystemError, ValidationError)
from .estimator import (SeriesRatioFit, fit_series_ratio,
                        fit_series_ratio_split, predict_theta)
from .inference import (InferenceReport, confidence_band, critical_value,
                        default_grid, estimate_covariance, sigma_at)
from .modelselect import Candidate, SelectionResult, cv_criterion, select_model
from .nuisance import LearnerSpec, clip_probability, fit, predict
from .numerics import SeededRng, SymMatrix, psd_sqrt, solve_sym, std_normal_draws
from .signals import (ESTIMANDS, NuisanceSet, SignalPair, SignalSpec,
                      build_signals, dr_correction)
from .simharness import (DgpSpec, McConfig, McSummary, generate_dgp,
                         oracle_signals, raw_ratio_signals, run_monte_carlo,
                         sensitivity_sweep, sep_baseline, summarize_metrics)

__version__ = "0.1.0"
