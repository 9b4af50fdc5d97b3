"""Ratio tests for a change in memory (long-range dependence) of a time series.

Modules
-------
core_stats   partial sums, forward/backward variance estimators, ratio statistics
detrend      trend-robust (de-trended) variants of the estimators
models       FARIMA and changing-memory data-generating processes
limits       fractional Brownian motion paths and limit functionals
quantiles    Monte Carlo quantile tables of the limit statistics
estimator    periodogram and local Whittle estimate of d
app          end-to-end test, series I/O and experiment harness
"""

from .app import ExperimentConfig, TestReport, TestSpec, run_experiment, run_test
from .core_stats import StatKind, TestingInterval, statistic
from .detrend import detrended_statistic
from .estimator import estimate_d, estimate_d_detrended
from .models import MemoryFunction, ModelSpec, RngStream

__all__ = [
    "ExperimentConfig", "MemoryFunction", "ModelSpec", "RngStream", "StatKind", "TestReport",
    "TestSpec", "TestingInterval", "detrended_statistic", "estimate_d", "estimate_d_detrended",
    "run_experiment", "run_test", "statistic",
]
