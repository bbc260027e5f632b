"""Numerical toolkit for Finsler structures on Euclidean domains.

Binet-Legendre metric tensors, Finsler path distances, quasiconformal
distortion, map residuals and sampled Hölder estimates.
"""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DegenerateMapError, DomainError, EvaluationError,
                     FinslerError, InputError, InvalidSpecError, InvalidStructureError,
                     NumericalError, ResolutionError)
from .finsler_core import (Domain, FinslerStructure, MetricSpec, build_zoo_metric, check_axioms,
                           custom_metric, euclidean, evaluate, randers, remark2_metric, square_norm)
from .quadrature import SphericalQuadrature
from .binet_legendre import (MetricTensorField, TwistMap, bl_field, bl_inverse_tensor_at,
                             bl_polyhedral_exact, bl_tensor_at, bl_twisted_tensor_at, load_field,
                             partial_smoothness_check, save_field)
from .metric_space import bilipschitz_check, distance, path_length, symmetrized_distance
from .maps import (DiscreteMap, blowup_isometry_test, christoffel_transform_residual, dilation_check,
                   distortion_at, pullback_residual)
from .regularity import bl_regularity_probe, holder_norm, holder_seminorm
