"""Clustering-based estimation and order selection for discrete spectral measures."""
from .clustering import (ClusterConfig, Clustering, WeightedMultiset, assign,
                         brute_force_k_cluster, center_update, k_cluster, objective)
from .errors import (DegenerateInputError, DegenerateResultError, DegenerateWarning, DomainError,
                     ExtremeClustError, InstanceTooLargeError, InvalidInputError)
from .extremes import (DataMatrix, SpectralEstimate, SubsampleConfig, empirical_spectral_measure,
                       estimate_spectral, extract_extremal_subsample, match_atoms,
                       standardize_margins)
from .factor_models import (FactorCoefficients, coefficients_from_spectral, random_model,
                            row_normalize, simulate, spectral_from_coefficients)
from .geometry import (COSINE, L1, L2, PRINCIPAL_COMPONENT, SUP, Dissimilarity, NormSpec,
                       dual_dissimilarity, dual_radius, get_dissimilarity, norm,
                       project_to_sphere, separation_radius)
from .order_selection import (OrderSelectionReport, asw, delta_t, penalized_asw, penalty,
                              select_order, t_upper_bound)
from .theory_bounds import (BoundReport, binomial_bernoulli_tail_bound, epsilon0,
                            false_selection_rate_delta, kl_bernoulli, large_deviation_rate,
                            monte_carlo_validate)

__version__ = "0.1.0"
