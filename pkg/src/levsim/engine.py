"""Day-by-day portfolio evolution: fund price moves, dividends, margin interest,
monthly reinvestment, threshold rebalancing and year-end tax."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import NamedTuple

import numpy as np

from .errors import EngineError
from .marketdata import TRADING_DAYS_PER_YEAR, MarketHistory
from .portfolio import AssetSpec, EngineConfig, PortfolioState, buy_paper, sell_amount
from .tax import record_dividend_gain, settle_year_end

_DAYS = TRADING_DAYS_PER_YEAR
# absorbs float noise when a fraction sits exactly on the trigger (0.7 - 0.5 != 0.2)
_TRIGGER_SLACK = 1e-12


def evolve_etf_daily(dp_index, expense_ratio):
    """Daily percent change of a fund tracking an index, net of its expense ratio."""
    return dp_index - expense_ratio / _DAYS


def evolve_letf_daily(dp_index_tr, leverage_factor, expense_ratio, libor):
    """Daily percent change of a daily-reset leveraged fund on a total-return index.

    The borrowed ``leverage_factor - 1`` is charged at the LIBOR rate.
    """
    return dp_index_tr * leverage_factor - expense_ratio / _DAYS - libor * (leverage_factor - 1) / _DAYS


def accrue_dividend_cash(value: float, dividend_rate: float) -> float:
    return value * dividend_rate / (100.0 * _DAYS)


def accrue_margin_interest(debt: float, margin_rate: float) -> float:
    return debt * margin_rate / (100.0 * _DAYS)


@dataclass(frozen=True)
class Scenario:
    """One portfolio to simulate: assets, target split and leverage."""

    assets: tuple[AssetSpec, ...]
    fractions: tuple[float, ...]
    engine: EngineConfig = field(default_factory=EngineConfig)
    target_leverage: float = 1.0
    initial_investment: float = 1.0

    def open(self) -> PortfolioState:
        return PortfolioState.open(
            list(self.assets), self.fractions, self.engine, self.initial_investment, self.target_leverage
        )


class DayRecord(NamedTuple):
    """Market data for one trading day, per holding in portfolio order."""

    index: int
    dp_price: tuple[float, ...]
    dp_total_return: tuple[float, ...]
    libor: float
    month_start: bool = False
    year_end: bool = False
    date: date | None = None


def check_rebalance_trigger(state: PortfolioState) -> bool:
    cfg = state.config
    threshold = cfg.rebalance_fraction_trigger / 100.0 - _TRIGGER_SLACK
    total = state.total
    if total > 0:
        for h, ideal in zip(state.holdings, state.ideal_fractions):
            if abs(h.shares * h.price / total - ideal) >= threshold:
                return True
    if state.target_leverage > 1.0:
        equity = total - state.margin_debt
        if equity <= 0:
            return True
        deviation = abs(total / equity / state.target_leverage - 1.0)
        return deviation >= cfg.rebalance_leverage_trigger - _TRIGGER_SLACK
    return False


def rebalance(state: PortfolioState) -> tuple[float, list[float]]:
    """Restore the ideal fractions and leverage in one set of trades.

    Returns the debt change and the per-asset value transfers. Sales run first
    and fund the purchases; spare cash is deployed too. With fees the buys are
    scaled down to the cash actually available.
    """
    total = state.total
    equity = total - state.margin_debt
    if equity <= 0:
        raise EngineError("cannot rebalance a bankrupt portfolio")
    d_debt = state.target_leverage * equity - total
    transfers = [
        total * (ideal - h.shares * h.price / total) + ideal * d_debt
        for h, ideal in zip(state.holdings, state.ideal_fractions)
    ]

    for i, dt in enumerate(transfers):
        if dt < 0:
            amount = min(-dt, state.holdings[i].value)
            state.ledger.gains += sell_amount(state, i, amount)
    if d_debt < 0:
        repay = min(-d_debt, state.cash)
        state.margin_debt -= repay
        state.cash -= repay
    else:
        state.margin_debt += d_debt
        state.cash += d_debt
    buys = sum(dt for dt in transfers if dt > 0)
    if buys > 0:
        scale = min(1.0, state.cash / buys)
        for i, dt in enumerate(transfers):
            if dt > 0:
                buy_paper(state, i, min(dt * scale, state.cash))
    return d_debt, transfers


def reinvest_cash(state: PortfolioState) -> None:
    state.cash += state.config.periodic_investment
    budget = state.cash
    if budget <= 0:
        return
    for i, ideal in enumerate(state.ideal_fractions):
        buy_paper(state, i, min(ideal * budget, state.cash))


def step_day(state: PortfolioState, day: DayRecord) -> PortfolioState:
    """Advance one trading day. Sets ``state.bankrupt`` when equity is exhausted."""
    cfg = state.config
    state.day = day.index
    libor = day.libor
    for h, dpp, dptr in zip(state.holdings, day.dp_price, day.dp_total_return):
        spec = h.spec
        if spec.tracks_total_return:
            dp = evolve_letf_daily(dptr, spec.leverage_factor, spec.expense_ratio, libor)
        else:
            dp = evolve_etf_daily(dpp, spec.expense_ratio)
        if h.lots:
            loss = h.grow(dp)
            if loss:
                state.ledger.gains += loss
        model = spec.dividend_model
        if not model.is_zero and h.shares:
            dividend = accrue_dividend_cash(h.shares * h.price, model.rate(libor))
            state.cash += dividend
            record_dividend_gain(state.ledger, dividend)
    if state.margin_debt:
        state.margin_debt += accrue_margin_interest(state.margin_debt, cfg.margin_rate)

    if state.total - state.margin_debt <= 0:
        state.bankrupt = True
        return state
    if day.month_start:
        reinvest_cash(state)
    if check_rebalance_trigger(state):
        rebalance(state)
    if day.year_end and cfg.tax_enabled:
        settle_year_end(state)
    if state.equity <= 0 or state.unpaid_tax > 0:
        state.bankrupt = True
    return state


@dataclass
class Trajectory:
    """Per-day record of a backtest; row 0 is the state right after the initial purchase."""

    yields: np.ndarray
    total: np.ndarray | None = None
    margin_debt: np.ndarray | None = None
    fractions: np.ndarray | None = None
    leverage: np.ndarray | None = None
    gains: np.ndarray | None = None
    cumulative_tax: np.ndarray | None = None
    dates: list[date | None] | None = None
    asset_ids: tuple[str, ...] = ()
    initial_investment: float = 1.0
    bankrupt: bool = False
    insolvent: bool = False

    @property
    def final_yield(self) -> float:
        return float(self.yields[-1])


def _day_records(scenario: Scenario, history: MarketHistory):
    """Yield one DayRecord per history row, with columns ordered like the scenario assets."""
    for spec in scenario.assets:
        if spec.underlying_index not in history.dp_price:
            raise EngineError(f"{spec.asset_id}: index {spec.underlying_index!r} not in market history")
    price_cols = [history.dp_price[s.underlying_index].tolist() for s in scenario.assets]
    tr_cols = [history.dp_total_return[s.underlying_index].tolist() for s in scenario.assets]
    libor = history.libor.tolist()
    month_start, year_end = (a.tolist() for a in history.calendar_flags())
    dates = history.dates or [None] * len(history)
    for k in range(len(history)):
        yield DayRecord(
            k + 1,
            tuple(c[k] for c in price_cols),
            tuple(c[k] for c in tr_cols),
            libor[k],
            month_start[k],
            year_end[k],
            dates[k],
        )


def run_backtest(scenario: Scenario, history: MarketHistory, record: bool = True) -> Trajectory:
    """Simulate ``scenario`` over every row of ``history``.

    With ``record=False`` only the yield path is kept, which is all the
    Monte-Carlo metrics need.
    """
    if len(history) == 0:
        raise EngineError("empty market history")
    state = scenario.open()
    n_assets = len(scenario.assets)
    rows: list[tuple] = []
    yields: list[float] = []

    def snapshot(when):
        yields.append(state.yield_)
        if record:
            total = state.total
            equity = total - state.margin_debt
            rows.append((
                when,
                total,
                state.margin_debt,
                state.fractions(),
                total / equity if equity > 0 else float("nan"),
                state.ledger.gains,
                state.ledger.cumulative_tax_paid,
            ))

    snapshot(history.base_date)
    for day in _day_records(scenario, history):
        step_day(state, day)
        snapshot(day.date)
        if state.bankrupt:
            break

    traj = Trajectory(
        yields=np.array(yields),
        asset_ids=tuple(s.asset_id for s in scenario.assets),
        initial_investment=scenario.initial_investment,
        bankrupt=state.bankrupt,
        insolvent=state.unpaid_tax > 0,
    )
    if record:
        traj.dates = [r[0] for r in rows]
        traj.total = np.array([r[1] for r in rows])
        traj.margin_debt = np.array([r[2] for r in rows])
        traj.fractions = np.array([r[3] for r in rows]).reshape(len(rows), n_assets)
        traj.leverage = np.array([r[4] for r in rows])
        traj.gains = np.array([r[5] for r in rows])
        traj.cumulative_tax = np.array([r[6] for r in rows])
    return traj
