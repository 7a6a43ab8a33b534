"""Leveraged stock/bond portfolio simulation: backtests on historical data and
block-bootstrapped Monte-Carlo with risk/reward percentiles."""

from .engine import Scenario, Trajectory, run_backtest
from .errors import ConfigError, DataError, EngineError, LevsimError
from .marketdata import DividendModel, MarketHistory
from .montecarlo import (
    FundFamily,
    MetricsSummary,
    RealizationResult,
    SamplerConfig,
    run_monte_carlo,
    summarize,
    sweep_frontier,
)
from .portfolio import AssetSpec, EngineConfig, PortfolioState

__version__ = "0.1.0"

__all__ = [
    "AssetSpec",
    "ConfigError",
    "DataError",
    "DividendModel",
    "EngineConfig",
    "EngineError",
    "FundFamily",
    "LevsimError",
    "MarketHistory",
    "MetricsSummary",
    "PortfolioState",
    "RealizationResult",
    "SamplerConfig",
    "Scenario",
    "Trajectory",
    "run_backtest",
    "run_monte_carlo",
    "summarize",
    "sweep_frontier",
]
