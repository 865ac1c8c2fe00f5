"""Secure set-based state estimation with constrained zonotopes."""

from .sets import ConstrainedZonotope, Hypercube, SetCollection, Zonotope
from .estimator import EstimatorConfig, estimate_step
from .api import SecureSetEstimator

__version__ = "0.1.0"
