"""Estimator-style wrapper around the step function for batch use."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import attacks as K
from . import estimator as E
from . import sets as S
from .model import PlantModel


class SecureSetEstimator(BaseEstimator):
    """Run the secure set estimator over a batch of stacked sensor readings.

    Parameters
    ----------
    plant : PlantModel
    initial_set : Zonotope containing the initial state.
    max_attacked, agreement_size : int
    pruning : str
        One of the pruning strategies, e.g. ``"merge_intersecting"`` or ``"reduce_order(12)"``.
    check_observability : bool
        Verify every sensor subset of size ``agreement_size`` at fit time.

    ``Y`` has one row per step (k = 1..T) holding every sensor's reading
    concatenated in sensor order; ``U`` holds the inputs u(0)..u(T-1).
    """

    def __init__(self, plant: PlantModel = None, initial_set=None, max_attacked: int = 0, agreement_size: int = 1,
                 pruning: str = "merge_intersecting", check_observability: bool = True):
        self.plant = plant
        self.initial_set = initial_set
        self.max_attacked = max_attacked
        self.agreement_size = agreement_size
        self.pruning = pruning
        self.check_observability = check_observability

    def _config(self) -> E.EstimatorConfig:
        if self.plant is None or self.initial_set is None:
            raise ValueError("plant and initial_set are required")
        return E.EstimatorConfig(self.plant.p, self.max_attacked, self.agreement_size, self.pruning)

    def _split(self, y: np.ndarray) -> list[np.ndarray]:
        dims = np.cumsum([0] + [s.num_outputs for s in self.plant.sensors])
        return [y[dims[i]:dims[i + 1]] for i in range(self.plant.p)]

    def _check_batch(self, Y, U):
        width = sum(s.num_outputs for s in self.plant.sensors)
        Y = check_array(Y, ensure_2d=True, dtype=float)
        if Y.shape[1] != width:
            raise ValueError(f"expected {width} stacked outputs per row, got {Y.shape[1]}")
        if U is None:
            U = np.zeros((Y.shape[0], self.plant.num_inputs))
        else:
            U = check_array(U, ensure_2d=False, dtype=float, ensure_min_features=0).reshape(Y.shape[0], -1)
        return Y, U

    def fit(self, Y, U=None):
        config = self._config()
        if self.check_observability:
            E.validate_config(config, self.plant)
        self.config_ = config
        self.state_ = E.EstimateState.initial(self.initial_set, config)
        self.estimates_ = []
        self.verdicts_ = []
        self.radii_ = []
        return self.partial_fit(Y, U)

    def partial_fit(self, Y, U=None):
        if not hasattr(self, "state_"):
            return self.fit(Y, U)
        Y, U = self._check_batch(Y, U)
        p = self.plant
        for y, u in zip(Y, U):
            self.state_, report = E.estimate_step(self.state_, p.A, p.B, u, p.W, self._split(y), p.C, p.V,
                                                  self.config_)
            detected = K.detect_attack(report.nonempty_agreement())
            self.verdicts_.append(K.identify_from_flags(report.measurement_empty, report.agreement_empty,
                                                        self.state_.combos, detected))
            self.estimates_.append(report.estimate)
            self.radii_.append(report.radius)
        return self

    def predict(self, Y=None, U=None):
        """Overbound centers, one row per step.

        With ``Y`` the estimator is refitted on that batch first.
        """
        if Y is not None:
            self.fit(Y, U)
        check_is_fitted(self, "estimates_")
        return np.vstack([S.overbound_collection(est).center for est in self.estimates_]) \
            if self.estimates_ else np.zeros((0, self.plant.n))

    def contains(self, X) -> np.ndarray:
        """Whether row ``k`` of ``X`` lies in the estimate after step ``k + 1``."""
        check_is_fitted(self, "estimates_")
        X = check_array(X, dtype=float)
        return np.array([est.contains(x) for est, x in zip(self.estimates_, X)])
