"""Estimator-style wrapper around the discrete dynamics."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .discrete import Family, run
from .harness import cluster_labels
from .models import build_preset


class NetworkDynamics(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Run a preset's dynamics from each row of ``X`` as an initial profile.

    Parameters
    ----------
    preset : str
        Preset name, see :data:`statenet.models.PRESET_NAMES`.
    params : dict, optional
        Preset parameter overrides.
    family : str, optional
        Override the preset's recommended dynamics family.
    max_iter : int, optional
        Iteration cap; the preset default is used when None.
    tol : float, optional
        Step-norm stopping tolerance.
    seed : int, optional
        Seed for presets that draw parameters at random.

    Attributes
    ----------
    preset_ : ModelPreset
    trajectories_ : list of TrajectoryRecord
    final_states_ : ndarray of shape (n_samples, n_features)
    n_features_in_ : int
    """

    def __init__(self, preset="homogeneous_hk", params=None, family=None, max_iter=None, tol=None, seed=None):
        self.preset = preset
        self.params = params
        self.family = family
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed

    def _spec(self):
        spec = self.preset_.dynamics
        changes = {}
        if self.family is not None:
            changes["family"] = Family(self.family)
        if self.max_iter is not None:
            changes["max_iter"] = int(self.max_iter)
        if self.tol is not None:
            changes["tol"] = float(self.tol)
        return spec.with_(**changes) if changes else spec

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.preset_ = build_preset(self.preset, self.params, n=X.shape[1], seed=self.seed)
        if self.preset_.dynamics is None:
            raise ValueError(f"preset {self.preset} has no discrete dynamics")
        spec = self._spec()
        self.trajectories_ = []
        for row in X:
            self.preset_.check_initial(row)
            self.trajectories_.append(run(spec, row, self.preset_.g, self.preset_.f))
        self.final_states_ = np.array([t.final_state for t in self.trajectories_])
        return self

    def transform(self, X=None):
        """Final states of the fitted runs; a new ``X`` is run first."""
        check_is_fitted(self, "final_states_")
        if X is None:
            return self.final_states_
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        spec = self._spec()
        return np.array([run(spec, row, self.preset_.g, self.preset_.f).final_state for row in X])

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).final_states_

    def predict(self, X=None):
        """Cluster label of every agent in each final profile."""
        states = self.transform(X)
        gap = self.preset_.gap_threshold
        return np.array([cluster_labels(s, 1e-6 * (1.0 + np.ptp(s)) if gap is None else gap) for s in states])
