"""Robust identification of linearly parameterized nonlinear systems from a single trajectory."""

from .core import (BasisLibrary, BasisTerm, SystemModel, Trajectory, eval_basis, paper_basis,
                   paper_system, read_model, write_model)
from .disturbance import DisturbanceSpec, RngStream, derive_stream, draw_disturbance
from .errors import (ConfigError, DimensionError, DivergenceError, InsufficientDataError,
                     InvalidParameterError, NonFiniteError, RankDeficiencyError, SysIdError)
from .estimators import EstimatorConfig, FitResult, fit, fit_rowwise
from .experiments import (SweepConfig, SweepReport, bounded_error_check, fit_slope, mu_sweep,
                          run_sweep, stability_study)
from .loss import (Method, RegressionData, huber_deriv, huber_value, inner_v,
                   lasso_form_objective, objective, regression_data)
from .simulate import (check_assumptions, empirical_excitation, noise_mass_near_zero,
                       read_trajectory, reconstruct, simulate, write_trajectory)
