"""Block-bootstrapped Monte-Carlo over joint market days, risk/reward metrics
and their bootstrap uncertainty.

Random streams
--------------
Every stream is numpy's ``Philox`` (Philox4x64-10, counter-based) with the
128-bit key ``seed + (stream << 64)`` and a zero counter. Realization ``i`` uses
stream ``i``; bootstrap resampling of metric ``j`` uses stream ``2**63 + j``.
Results therefore depend only on the seed, never on scheduling.
"""

from __future__ import annotations

import math
import os
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import Scenario, run_backtest
from .errors import DataError, EngineError
from .marketdata import TRADING_DAYS_PER_YEAR, DividendModel, MarketHistory
from .portfolio import AssetSpec, EngineConfig

BOOTSTRAP_STREAM = 2**63
CI_LEVELS = (0.32, 0.68)


@dataclass(frozen=True)
class SamplerConfig:
    block_length: int = 5
    horizon_years: int = 10
    trading_days_per_year: int = TRADING_DAYS_PER_YEAR
    realizations: int = 2000
    bootstrap_resamples: int = 300
    seed: int = 0

    def __post_init__(self) -> None:
        if self.block_length < 1 or self.realizations < 1 or self.bootstrap_resamples < 1:
            raise ValueError("block_length, realizations and bootstrap_resamples must be >= 1")
        if self.horizon_years < 1:
            raise ValueError("horizon_years must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def horizon_days(self) -> int:
        return self.horizon_years * self.trading_days_per_year


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) + (int(stream) << 64)))


def sample_indices(n_source: int, horizon: int, block_length: int, rng: np.random.Generator) -> np.ndarray:
    """Source row indices for a synthetic history of ``horizon`` days.

    Blocks start uniformly in ``[0, n_source - block_length]``; the last block
    is cut to fit the horizon. A source shorter than one block is sampled with
    blocks of the whole source.
    """
    if n_source < 1:
        raise DataError("cannot sample from an empty history")
    block_length = min(block_length, n_source)
    n_blocks = -(-horizon // block_length)
    starts = rng.integers(0, n_source - block_length + 1, size=n_blocks)
    return (starts[:, None] + np.arange(block_length)).ravel()[:horizon]


def sample_realization(history: MarketHistory, sampler: SamplerConfig, rng: np.random.Generator) -> MarketHistory:
    idx = sample_indices(len(history), sampler.horizon_days, sampler.block_length, rng)
    return history.take(idx)


def max_drawdown(trajectory: Sequence[float] | np.ndarray) -> float:
    """Largest fractional drop from a running peak."""
    y = np.asarray(trajectory, dtype=float)
    if y.size == 0:
        raise ValueError("empty trajectory")
    peaks = np.maximum.accumulate(y)
    return float(max(0.0, np.max(1.0 - y / peaks)))


def percentile(samples: Sequence[float] | np.ndarray, p: float) -> float:
    """Linear-interpolation percentile, ``p`` a fraction in [0, 1]."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("percentile of empty sample")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be within [0, 1]")
    rank = p * (x.size - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (rank - lo) * (x[hi] - x[lo]))


def bootstrap_ci(
    samples: Sequence[float] | np.ndarray, p: float, resamples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """(32%, 68%) band of the ``p``-percentile over ``resamples`` with-replacement resamples."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("bootstrap of empty sample")
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    metrics = np.quantile(x[idx], p, axis=1)
    return percentile(metrics, CI_LEVELS[0]), percentile(metrics, CI_LEVELS[1])


@dataclass(frozen=True)
class RealizationResult:
    final_yield: float
    min_yield: float
    max_drawdown: float
    insolvent: bool


@dataclass(frozen=True)
class MetricsSummary:
    reward: float
    risk_rational: float
    risk_min_yield: float
    risk_drawdown: float
    reward_ci: tuple[float, float]
    risk_rational_ci: tuple[float, float]
    risk_min_yield_ci: tuple[float, float]
    risk_drawdown_ci: tuple[float, float]
    cagr_reward: float
    years: float
    realizations: int
    insolvent_fraction: float

    def as_dict(self) -> dict:
        return {
            "reward": self.reward,
            "risk_rational": self.risk_rational,
            "risk_min_yield": self.risk_min_yield,
            "risk_drawdown": self.risk_drawdown,
            "cagr_reward": self.cagr_reward,
            "ci": {
                "reward": list(self.reward_ci),
                "risk_rational": list(self.risk_rational_ci),
                "risk_min_yield": list(self.risk_min_yield_ci),
                "risk_drawdown": list(self.risk_drawdown_ci),
            },
            "years": self.years,
            "realizations": self.realizations,
            "insolvent_fraction": self.insolvent_fraction,
        }


def cagr(final_yield: float, years: float) -> float:
    if final_yield <= 0:
        return -1.0
    return final_yield ** (1.0 / years) - 1.0


def result_from_yields(yields: np.ndarray, insolvent: bool) -> RealizationResult:
    return RealizationResult(
        final_yield=float(yields[-1]),
        min_yield=float(np.min(yields)),
        max_drawdown=max_drawdown(yields),
        insolvent=bool(insolvent),
    )


def simulate_realization(
    scenario: Scenario, history: MarketHistory, sampler: SamplerConfig, index: int, engine: str = "compiled"
) -> RealizationResult:
    synthetic = sample_realization(history, sampler, rng_stream(sampler.seed, index))
    if engine == "compiled":
        from .kernel import simulate_yields

        yields, bankrupt, _ = simulate_yields(scenario, synthetic)
    elif engine == "reference":
        traj = run_backtest(scenario, synthetic, record=False)
        yields, bankrupt = traj.yields, traj.bankrupt
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return result_from_yields(yields, bankrupt)


_worker_args: tuple | None = None


def _init_worker(scenario, history, sampler, engine) -> None:
    global _worker_args
    _worker_args = (scenario, history, sampler, engine)


def _run_chunk(indices: range) -> list[RealizationResult]:
    scenario, history, sampler, engine = _worker_args
    return [simulate_realization(scenario, history, sampler, i, engine) for i in indices]


def worker_count(workers: int | None = None) -> int:
    """Explicit count, else LEVSIM_THREADS, else 1; 0 means one per CPU."""
    if workers is None:
        workers = int(os.environ.get("LEVSIM_THREADS", "1") or 1)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def run_monte_carlo(
    scenario: Scenario,
    history: MarketHistory,
    sampler: SamplerConfig,
    workers: int | None = None,
    engine: str = "compiled",
) -> list[RealizationResult]:
    """Simulate ``sampler.realizations`` bootstrapped histories, ordered by realization index."""
    n = sampler.realizations
    if len(history) == 0:
        raise DataError("cannot sample from an empty history")
    workers = min(worker_count(workers), n)
    if workers == 1:
        return [simulate_realization(scenario, history, sampler, i, engine) for i in range(n)]
    size = -(-n // (workers * 4))
    chunks = [range(s, min(s + size, n)) for s in range(0, n, size)]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(scenario, history, sampler, engine)) as pool:
        return [r for part in pool.map(_run_chunk, chunks) for r in part]


def summarize(results: Sequence[RealizationResult], sampler: SamplerConfig) -> MetricsSummary:
    if not results:
        raise ValueError("no realizations to summarise")
    final = np.array([r.final_yield for r in results])
    minimum = np.array([r.min_yield for r in results])
    drawdown = np.array([r.max_drawdown for r in results])
    metrics = [(final, 0.50), (final, 0.05), (minimum, 0.05), (drawdown, 0.50)]
    points = [percentile(x, p) for x, p in metrics]
    cis = [
        bootstrap_ci(x, p, sampler.bootstrap_resamples, rng_stream(sampler.seed, BOOTSTRAP_STREAM + j))
        for j, (x, p) in enumerate(metrics)
    ]
    years = float(sampler.horizon_years)
    return MetricsSummary(
        reward=points[0],
        risk_rational=points[1],
        risk_min_yield=points[2],
        risk_drawdown=points[3],
        reward_ci=cis[0],
        risk_rational_ci=cis[1],
        risk_min_yield_ci=cis[2],
        risk_drawdown_ci=cis[3],
        cagr_reward=cagr(points[0], years),
        years=years,
        realizations=len(results),
        insolvent_fraction=float(np.mean([r.insolvent for r in results])),
    )


# ---------------------------------------------------------------------------
# allocation frontier


@dataclass(frozen=True)
class FundFamily:
    """An index and the funds built on it: the plain ETF and its leveraged versions."""

    name: str
    index: str
    expense_ratio: float = 0.0
    dividend_model: DividendModel = field(default_factory=DividendModel)
    letf_expense_ratio: float = 1.0

    def fund(self, leverage: int) -> AssetSpec:
        if leverage == 1:
            return AssetSpec(self.name, self.index, 1.0, self.expense_ratio, self.dividend_model)
        return AssetSpec(
            f"{self.name}{leverage}X", self.index, float(leverage), self.letf_expense_ratio, tracks_total_return=True
        )


VARIANTS = ("1x", "2x_letf", "3x_letf", "1.8x_margin")


def variant_scenario(
    stock: FundFamily,
    bond: FundFamily,
    stock_fraction: float,
    variant: str,
    engine: EngineConfig,
    initial_investment: float = 1.0,
    margin_target: float = 1.8,
) -> Scenario:
    letf = {"1x": 1, "2x_letf": 2, "3x_letf": 3, "1.8x_margin": 1}
    if variant not in letf:
        raise EngineError(f"unknown variant {variant!r}")
    leverage = letf[variant]
    return Scenario(
        assets=(stock.fund(leverage), bond.fund(leverage)),
        fractions=(stock_fraction, 1.0 - stock_fraction),
        engine=engine,
        target_leverage=margin_target if variant == "1.8x_margin" else 1.0,
        initial_investment=initial_investment,
    )


@dataclass(frozen=True)
class FrontierRow:
    stock_fraction: float
    variant: str
    summary: MetricsSummary


def frontier_fractions(step_percent: int = 5) -> list[float]:
    return [k / 100.0 for k in range(0, 101, step_percent)]


def sweep_frontier(
    stock: FundFamily,
    bond: FundFamily,
    history: MarketHistory,
    sampler: SamplerConfig,
    engine: EngineConfig,
    fractions: Sequence[float] | None = None,
    variants: Sequence[str] = VARIANTS,
    workers: int | None = None,
    margin_target: float = 1.8,
    progress=None,
) -> list[FrontierRow]:
    """One metrics summary per (stock fraction, leverage variant).

    Every cell reuses the same seed, so all portfolios see the same synthetic
    histories (common random numbers).
    """
    rows = []
    for f in fractions if fractions is not None else frontier_fractions():
        for variant in variants:
            scenario = variant_scenario(stock, bond, f, variant, engine, margin_target=margin_target)
            results = run_monte_carlo(scenario, history, sampler, workers)
            rows.append(FrontierRow(f, variant, summarize(results, sampler)))
            if progress is not None:
                progress(rows[-1])
    return rows
