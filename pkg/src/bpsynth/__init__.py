"""Bayesian predictive synthesis with dynamic linear models, linear pooling
baselines, and the simulation and theory experiments built on them."""

from .bps import (
    BpsConfig,
    ForecastPanel,
    SynthesisDraws,
    gibbs_run,
    predict_next,
    sequential_bps,
    simulate_from_prior,
)
from .combine import BmaScoreState, WeightVector, bma_update, equal_weights, mallows_weights, pool_point
from .dlm import Discounts, FilterHistory, NigState, evolve_forecast, ffbs_sample, filter_series, run_agent, update
from .estimators import BMACombiner, BPSRegressor, DLMForecaster, EqualWeightCombiner, MallowsCombiner
from .statdist import RandomStream, StudentT, kl_normal

__version__ = "0.1.0"

__all__ = [
    "BMACombiner", "BPSRegressor", "BmaScoreState", "BpsConfig", "DLMForecaster", "Discounts",
    "EqualWeightCombiner", "FilterHistory", "ForecastPanel", "MallowsCombiner", "NigState",
    "RandomStream", "StudentT", "SynthesisDraws", "WeightVector", "bma_update", "equal_weights",
    "evolve_forecast", "ffbs_sample", "filter_series", "gibbs_run", "simulate_from_prior", "kl_normal", "mallows_weights",
    "pool_point", "predict_next", "run_agent", "sequential_bps", "update",
]
