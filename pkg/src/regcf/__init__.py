"""Regularized control-function estimators for endogenous probit models."""

from .alpha_select import AlphaGrid, AlphaSelection, auto_alpha, build_alpha_grid, mallows_cp, select_alpha
from .baselines import LinearFit, fit_2scmle, fit_ols, fit_probit, fit_ttsls, ols_first_stage
from .errors import (CollinearityError, DataError, DegenerateOutcomeError, DegenerateSampleError,
                     ExperimentFailure, InfeasibleDesignError, NoSignalError, NumericalError,
                     RegcfError, SeparationError, SingularInformationError)
from .first_stage import FirstStageFit, first_stage_F, fit_first_stage, hat_traces, unregularized_first_stage
from .hilbert import (RIDGE, SPECTRAL_CUTOFF, TIKHONOV, CovarianceEigensystem, FilterScheme,
                      InstrumentSample, InstrumentSpace, apply_regularized_inverse, center,
                      covariance_eigensystem, filter_value, inner_product)
from .inference import VarianceEstimate, WaldResult, ape, asf, estimate_vcov, exogeneity_test, wald_test
from .second_stage import (RCMLE, RNLSE, SecondStageFit, fit_rcmle, fit_rnlse, nls_objective,
                           probit_objective, reparametrization_matrix)

__version__ = "0.1.0"
