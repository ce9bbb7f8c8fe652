"""scikit-learn style wrappers around the agents and combiners.

Rows of ``X`` are time-ordered. Combiners take agents' point forecasts as
columns of ``X``; density-based combiners also need the agents' Student-t
scales and degrees of freedom.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bps import BpsConfig, ForecastPanel, gibbs_run, predict_next
from .combine import bma_update, BmaScoreState, equal_weights, mallows_weights
from .dlm import Discounts, NigState, filter_series
from .statdist import RandomStream, _t_logpdf


def _design(X, intercept):
    return np.column_stack([np.ones(X.shape[0]), X]) if intercept else X


# stands in for "normal" where a finite Student-t dof is needed
_NORMAL_DOF = 1e8


def _panel_parts(X, scale, dof):
    """Broadcast agent scales and dofs to the panel shape; ``dof=None``
    means normal forecasts."""
    if scale is None:
        raise ValueError("agent forecast scales are required")
    scale = check_array(np.broadcast_to(scale, X.shape))
    dof = None if dof is None else check_array(np.broadcast_to(dof, X.shape))
    return scale, dof


class DLMForecaster(RegressorMixin, BaseEstimator):
    """Discount dynamic regression fitted by forward filtering.

    After ``fit`` the one-step forecasts issued before each observation are
    in ``forecast_loc_``, ``forecast_scale_`` and ``forecast_dof_``;
    ``predict`` evaluates the terminal state mean on new regressors.
    """

    def __init__(self, delta=0.99, beta=0.95, n0=2.0, s0=0.01, prior_scale=1.0, intercept=True):
        self.delta = delta
        self.beta = beta
        self.n0 = n0
        self.s0 = s0
        self.prior_scale = prior_scale
        self.intercept = intercept

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        F = _design(X, self.intercept)
        prior = NigState.vague(F.shape[1], self.n0, self.s0, scale=self.prior_scale)
        self.discounts_ = Discounts(delta=self.delta, beta=self.beta)
        self.history_ = filter_series(y, F, prior, self.discounts_)
        self.coef_ = self.history_.m[-1].copy()
        self.forecast_loc_ = self.history_.f
        self.forecast_scale_ = self.history_.q
        self.forecast_dof_ = self.history_.dof
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return _design(X, self.intercept) @ self.coef_

    def predict_dist(self, X):
        """Location, scale and dof of the next-step Student-t forecast for
        each row of ``X``."""
        check_is_fitted(self, "coef_")
        F = _design(check_array(X), self.intercept)
        h = self.history_
        R = h.C[-1] / self.delta
        scale = np.einsum("ti,ij,tj->t", F, R, F) + h.s[-1]
        return F @ self.coef_, scale, np.full(F.shape[0], self.beta * h.n[-1])


class _PoolingCombiner(RegressorMixin, BaseEstimator):
    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.weights_.size:
            raise ValueError(f"expected {self.weights_.size} agent columns, got {X.shape[1]}")
        return X @ self.weights_


class EqualWeightCombiner(_PoolingCombiner):
    def fit(self, X, y=None):
        X = check_array(X)
        self.weights_ = equal_weights(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self


class BMACombiner(_PoolingCombiner):
    """Weights proportional to cumulative predictive likelihood."""

    def fit(self, X, y, scale=None, dof=None):
        X, y = check_X_y(X, y, y_numeric=True)
        scale, dof = _panel_parts(X, scale, dof)
        if dof is None:
            lpd = norm.logpdf(y[:, None], X, np.sqrt(scale))
        else:
            lpd = _t_logpdf(y[:, None], X, scale, dof)
        state = BmaScoreState.initial(X.shape[1])
        for row in np.atleast_2d(lpd):
            state, w = bma_update(state, row)
        self.scores_ = state.scores
        self.weights_ = w
        self.n_features_in_ = X.shape[1]
        return self


class MallowsCombiner(_PoolingCombiner):
    """Mallows model averaging over the unit simplex.

    ``sigma2=None`` plugs in the smallest single-agent residual variance.
    """

    def __init__(self, k=2, sigma2=None):
        self.k = k
        self.sigma2 = sigma2

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        sigma2 = self.sigma2
        if sigma2 is None:
            sigma2 = float(np.min(np.mean((y[:, None] - X) ** 2, axis=0)))
        self.sigma2_ = sigma2
        self.weights_ = mallows_weights(X, y, np.broadcast_to(self.k, X.shape[1]), sigma2)
        self.n_features_in_ = X.shape[1]
        return self


class BPSRegressor(RegressorMixin, BaseEstimator):
    """Bayesian predictive synthesis with a dynamic regression synthesis
    function.

    ``fit`` runs the Gibbs sampler on the agents' forecast panel;
    ``predict`` treats every row of ``X`` as a candidate next-step panel row
    and returns the posterior predictive mean.
    """

    def __init__(self, delta=0.95, beta=0.99, n0=10.0, s0=0.002, prior_scale=1.0,
                 burn_in=2000, kept_draws=3000, random_state=0):
        self.delta = delta
        self.beta = beta
        self.n0 = n0
        self.s0 = s0
        self.prior_scale = prior_scale
        self.burn_in = burn_in
        self.kept_draws = kept_draws
        self.random_state = random_state

    def _config(self):
        return BpsConfig(s0=self.s0, n0=self.n0, discounts=Discounts(delta=self.delta, beta=self.beta),
                         burn_in=self.burn_in, kept_draws=self.kept_draws, prior_scale=self.prior_scale)

    def fit(self, X, y, scale=None, dof=None):
        X, y = check_X_y(X, y, y_numeric=True)
        scale, dof = _panel_parts(X, scale, dof)
        panel = ForecastPanel(X, scale, np.full(X.shape, _NORMAL_DOF) if dof is None else dof)
        self.draws_ = gibbs_run(y, panel, self._config(), RandomStream(self.random_state, 0))
        self.coef_ = self.draws_.theta[:, -1, :].mean(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, scale=None, dof=None):
        check_is_fitted(self, "draws_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} agent columns, got {X.shape[1]}")
        scale, dof = _panel_parts(X, scale, dof)
        panel = ForecastPanel(X, scale, np.full(X.shape, _NORMAL_DOF) if dof is None else dof)
        base = RandomStream(self.random_state, 1)
        return np.array([predict_next(self.draws_, panel[i], None, base.child(i))[0] for i in range(len(panel))])
