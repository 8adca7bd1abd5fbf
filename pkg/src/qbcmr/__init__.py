"""Quasi-Bayes estimation and inference for conditional moment restriction models."""

from qbcmr.basis import FunctionCoefficients, SieveBasisSpec, design_matrix, gram_matrices
from qbcmr.exceptions import (
    ConfigError,
    InsufficientDrawsError,
    NumericalError,
    QuadratureError,
    ReplicationError,
    SingularDesignError,
)
from qbcmr.inference import (
    CredibleInterval,
    LinearFunctional,
    asymptotic_variance_oracle,
    construct_functional_from_phitilde,
    coverage_study,
    credible_interval,
    functional_value,
)
from qbcmr.models import Dataset, DgpDesign, MomentModel, WeightFunction, make_design, simulate_dgp
from qbcmr.pipeline import ChainSettings, fit_quasi_bayes
from qbcmr.posterior import (
    QuasiPosteriorSpec,
    exact_gaussian_posterior,
    log_quasi_likelihood,
    pcn_step,
    posterior_mean,
    run_chain,
)
from qbcmr.prior import GaussianSeriesPrior, scaled_prior, truncation_level
from qbcmr.sieve import ObjectiveSpec, first_stage_fit, quasi_objective, select_K

__version__ = "0.1.0"
