"""Neighborhood selection for stationary Gaussian Markov random fields.

Conditional least-squares estimation on disc-shaped neighborhoods, with
the neighborhood picked by a slope-heuristic calibrated penalty, on tori
and on rectangular windows of Z^2.
"""

__version__ = "0.1.0"

from .errors import (EmbeddingError, EmptySublatticeError, GMRFError, InvalidParameterError, KrigingError,
                     NoJumpError, RankError)
from .lattice import (LatticeSpec, NeighborhoodModel, Sublattice, build_model_collection, make_model,
                      sublattice_for_model, toroidal_norm)
from .spectral import dft2_eigenvalues, is_valid_plane, is_valid_torus, spectral_density_plane
from .params import ConstraintSpec, SpectralCovariance, ThetaField, covariance_from_theta
from .simulate import (AnisotropySpec, CorrelationModel, FieldObservations, make_theta_phi,
                       sample_plane_window, sample_torus_gmrf, substream)
from .cls import FitResult, Periodogram, cls_direct, cls_fft, cls_sublattice, fit_plane, fit_torus
from .select import (SelectionPath, SelectionReport, find_N_min, penalized_select, selection_path,
                     slope_select_plane, slope_select_torus)
from .baselines import (LoglikResult, VariogramFit, aic_bic_select, empirical_variogram, fit_mle,
                        fit_variogram_wls, kriging_theta, torus_loglik)
from .risk import PlaneLoss, RiskEstimate, loss_plane, loss_torus, monte_carlo_risk, oracle_and_ratio
