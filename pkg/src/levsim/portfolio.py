"""Lot-based portfolio state: assets, papers (lots), buying and selling.

Every lot of one asset evolves by the same daily percentage, so a holding keeps
a running unit price and each lot stores units ("shares"); the lot value is
``shares * price``. This is arithmetically the per-lot update, done once per asset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

from .errors import EngineError
from .marketdata import DividendModel
from .tax import TaxLedger

TaxScheme = Literal["optimized", "fifo"]

# relative slack when comparing requested amounts against available value/cash
_EPS = 1e-12


@dataclass(frozen=True)
class AssetSpec:
    asset_id: str
    underlying_index: str
    leverage_factor: float = 1.0
    expense_ratio: float = 0.0
    dividend_model: DividendModel = DividendModel()
    tracks_total_return: bool = False

    def __post_init__(self) -> None:
        if self.leverage_factor < 1:
            raise EngineError(f"{self.asset_id}: leverage factor below 1")
        if self.leverage_factor > 1 and not (self.tracks_total_return and self.dividend_model.is_zero):
            raise EngineError(f"{self.asset_id}: a leveraged ETF must track total return and pay no dividends")


@dataclass(frozen=True)
class EngineConfig:
    transaction_fee: float = 0.001
    margin_rate: float = 1.59  # yearly percent
    rebalance_fraction_trigger: float = 20.0  # absolute percentage points
    rebalance_leverage_trigger: float = 0.10  # relative deviation
    cgt: float = 0.25
    tax_enabled: bool = False
    tax_scheme: TaxScheme = "optimized"
    periodic_investment: float = 0.0  # currency per month

    def __post_init__(self) -> None:
        if not 0 <= self.transaction_fee < 1:
            raise EngineError("transaction_fee must be in [0, 1)")
        if not 0 <= self.cgt < 1:
            raise EngineError("cgt must be in [0, 1)")
        if self.tax_scheme not in ("optimized", "fifo"):
            raise EngineError(f"unknown tax scheme {self.tax_scheme!r}")


@dataclass
class PaperLot:
    shares: float
    cost_basis: float
    purchase_day: int


@dataclass
class Holding:
    spec: AssetSpec
    price: float = 1.0
    lots: list[PaperLot] = field(default_factory=list)
    shares: float = 0.0

    @property
    def value(self) -> float:
        return self.shares * self.price

    def lot_value(self, lot: PaperLot) -> float:
        return lot.shares * self.price

    def profit(self, lot: PaperLot) -> float:
        return lot.shares * self.price - lot.cost_basis

    def ordered(self, scheme: TaxScheme) -> list[PaperLot]:
        """Lots in selling order: purchase order (fifo) or least profitable first."""
        if scheme == "fifo":
            return list(self.lots)
        price = self.price
        return sorted(self.lots, key=lambda lot: lot.shares * price - lot.cost_basis)

    def grow(self, dp: float) -> float:
        """Apply a daily percent change; returns the loss realised if the asset is wiped out."""
        factor = 1.0 + dp / 100.0
        if factor > 0.0:
            self.price *= factor
            return 0.0
        # a daily drop of 100% or more leaves the lots worthless
        loss = -sum(lot.cost_basis for lot in self.lots)
        self.lots.clear()
        self.shares = 0.0
        self.price = 1.0
        return loss

    def add_lot(self, value: float, day: int) -> PaperLot:
        lot = PaperLot(value / self.price, value, day)
        self.lots.append(lot)
        self.shares += lot.shares
        return lot

    def sell_from_lot(self, lot: PaperLot, amount: float) -> float:
        """Sell ``amount`` of value from one lot; returns the realised gain.

        A sale covering the whole lot realises its full profit. A partial sale
        realises ``sign(P) * min(amount, |P|)`` and lowers the cost basis so the
        lot keeps the unrealised remainder of its profit.
        """
        value = lot.shares * self.price
        profit = value - lot.cost_basis
        if amount >= value:
            self.lots.remove(lot)
            self._recount()
            return profit
        if profit > 0:
            gain = min(amount, profit)
        elif profit < 0:
            gain = -min(amount, -profit)
        else:
            gain = 0.0
        lot.cost_basis -= amount - gain
        lot.shares -= amount / self.price
        self._recount()
        return gain

    def _recount(self) -> None:
        self.shares = sum(lot.shares for lot in self.lots)


@dataclass
class PortfolioState:
    holdings: list[Holding]
    ideal_fractions: tuple[float, ...]
    config: EngineConfig = field(default_factory=EngineConfig)
    target_leverage: float = 1.0
    cash: float = 0.0
    margin_debt: float = 0.0
    ledger: TaxLedger = field(default_factory=TaxLedger)
    initial_investment: float = 1.0
    day: int = 0
    bankrupt: bool = False
    unpaid_tax: float = 0.0

    def __post_init__(self) -> None:
        if len(self.ideal_fractions) != len(self.holdings):
            raise EngineError("one ideal fraction per holding required")
        if abs(sum(self.ideal_fractions) - 1.0) > 1e-9:
            raise EngineError("ideal fractions must sum to 1")
        if self.target_leverage < 1:
            raise EngineError("target leverage below 1")
        self.ledger.scheme = self.config.tax_scheme

    @classmethod
    def open(
        cls,
        assets: list[AssetSpec],
        fractions: tuple[float, ...],
        config: EngineConfig,
        initial_investment: float = 1.0,
        target_leverage: float = 1.0,
    ) -> PortfolioState:
        """Fund the account, borrow up to the target leverage and buy the ideal split."""
        if initial_investment <= 0:
            raise EngineError("initial investment must be positive")
        state = cls(
            holdings=[Holding(spec) for spec in assets],
            ideal_fractions=tuple(fractions),
            config=config,
            target_leverage=target_leverage,
            cash=initial_investment,
            initial_investment=initial_investment,
        )
        borrowed = (target_leverage - 1.0) * initial_investment
        state.margin_debt = borrowed
        state.cash += borrowed
        budget = state.cash
        for i, f in enumerate(state.ideal_fractions):
            buy_paper(state, i, min(f * budget, state.cash), 0)
        return state

    def holding(self, asset: str | int) -> Holding:
        if isinstance(asset, int):
            return self.holdings[asset]
        for h in self.holdings:
            if h.spec.asset_id == asset:
                return h
        raise KeyError(asset)

    def index_of(self, asset: str | int) -> int:
        if isinstance(asset, int):
            return asset
        return [h.spec.asset_id for h in self.holdings].index(asset)

    @property
    def total(self) -> float:
        return sum(h.shares * h.price for h in self.holdings) + self.cash

    @property
    def equity(self) -> float:
        return self.total - self.margin_debt - self.unpaid_tax

    @property
    def leverage(self) -> float:
        equity = self.total - self.margin_debt
        return self.total / equity if equity > 0 else float("inf")

    def fractions(self) -> list[float]:
        total = self.total
        if total <= 0:
            return [0.0] * len(self.holdings)
        return [h.shares * h.price / total for h in self.holdings]

    @property
    def yield_(self) -> float:
        return self.equity / self.initial_investment


def buy_paper(state: PortfolioState, asset: str | int, cash_amount: float, day: int | None = None) -> PaperLot | None:
    """Spend ``cash_amount`` on a new lot; the fee is taken off the delivered value."""
    if cash_amount < 0:
        raise EngineError("negative purchase amount")
    if cash_amount > state.cash * (1 + _EPS) + _EPS:
        raise EngineError(f"insufficient cash: need {cash_amount}, have {state.cash}")
    state.cash = max(state.cash - cash_amount, 0.0)
    net = cash_amount * (1.0 - state.config.transaction_fee)
    if net <= 0:
        return None
    return state.holding(asset).add_lot(net, state.day if day is None else day)


def sell_amount(state: PortfolioState, asset: str | int, amount: float, order: TaxScheme | None = None) -> float:
    """Sell ``amount`` of value from an asset, consuming lots in scheme order.

    Proceeds net of the fee go to cash. Returns the realised gain; recording it
    in the tax ledger is the caller's job.
    """
    holding = state.holding(asset)
    available = holding.value
    if amount < 0:
        raise EngineError("negative sale amount")
    if amount > available * (1 + _EPS) + _EPS:
        raise EngineError(f"oversell of {holding.spec.asset_id}: {amount} > {available}")
    remaining = min(amount, available)
    gain = 0.0
    for lot in holding.ordered(order or state.config.tax_scheme):
        if remaining <= 0:
            break
        value = holding.lot_value(lot)
        part = value if remaining >= value else remaining
        gain += holding.sell_from_lot(lot, part)
        remaining -= part
    state.cash += (1.0 - state.config.transaction_fee) * amount
    return gain
