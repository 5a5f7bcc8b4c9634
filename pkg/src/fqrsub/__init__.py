"""Optimal subsampling for scalar-on-function linear quantile regression."""

__version__ = "0.1.0"

from .basis import (BSplineBasis, PenaltyMatrix, eval_basis, eval_basis_deriv, make_basis,
                    penalty_matrix)
from .design import (DesignMatrix, FunctionalDataset, assemble_Htau, compute_scores, gram_G,
                     gram_Gtau, load_dataset, read_curves_csv, smooth_curves_fourier,
                     write_curves_csv)
from .exceptions import ConfigError, FQRError, IngestionError, ParameterError, SolverError
from .metrics import (asymptotic_variance, eimse, imse, prediction_efficiency,
                      relative_efficiency, timer)
from .sampling import (SubsamplePlan, draw_uniform, draw_with_replacement,
                       estimate_density_at_zero, make_faopt_pipeline, prob_faopt, prob_flopt,
                       prob_uniform)
from .simulate import SimulationConfig, gen_covariates, gen_responses, simulate, true_beta
from .solver import (FittedModel, eval_beta, fit_full, fit_oracle_subgradient, fit_pirls,
                     fit_subsample, predict, psi_tau, rho_tau)
from .tuning import gacv_score, lambda_grid, select_lambda
