"""Yearly capital-gains bookkeeping and the year-end tax settlement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .portfolio import PortfolioState


@dataclass
class TaxLedger:
    gains: float = 0.0
    cumulative_tax_paid: float = 0.0
    scheme: str = "optimized"


def record_dividend_gain(ledger: TaxLedger, dividend: float) -> TaxLedger:
    ledger.gains += dividend
    return ledger


def tax_sell_amount(gains: float, profit: float, cgt: float) -> float:
    """Amount to sell from a lot with profit ``profit`` to pay tax on ``gains``.

    Solves ``x = cgt * (gains + realised(x))`` where selling ``x`` from the lot
    realises ``sign(profit) * min(x, |profit|)``. Below the break-even point the
    sale itself is fully taxable (or fully deductible for a lossy lot); above it
    the lot's whole profit has been realised and the slope drops to ``cgt``.
    """
    if gains <= 0 or cgt == 0:
        return 0.0
    sign = math.copysign(1.0, profit) if profit != 0 else 0.0
    break_even = (1.0 - sign * cgt) / cgt * abs(profit)
    if gains <= break_even:
        return gains * cgt / (1.0 - sign * cgt)
    return (gains + profit) * cgt


def settle_year_end(state: PortfolioState) -> float:
    """Sell lots to pay the year's capital-gains tax; returns the tax paid.

    Gains are split between assets by their ideal fractions. Within an asset,
    lots are sold in scheme order until the tax is covered; gains an asset
    cannot cover spill over to the next asset. If the whole portfolio cannot
    cover the tax, the shortfall is recorded in ``state.unpaid_tax``.
    """
    ledger = state.ledger
    cfg = state.config
    if ledger.gains <= 0:
        return 0.0
    if cfg.cgt == 0:
        ledger.gains = 0.0
        return 0.0

    paid = 0.0
    carry = 0.0
    for i, holding in enumerate(state.holdings):
        carry, sold = _pay_from_holding(state, holding, state.ideal_fractions[i] * ledger.gains + carry)
        paid += sold
    # second sweep: spill-over left after the last asset goes back to whatever remains
    for holding in state.holdings:
        if carry <= 0:
            break
        carry, sold = _pay_from_holding(state, holding, carry)
        paid += sold

    ledger.gains = 0.0
    ledger.cumulative_tax_paid += paid
    # sale proceeds arrive net of the fee while the tax is owed in full
    state.cash -= cfg.transaction_fee * paid
    if carry > 0:
        state.unpaid_tax += carry * cfg.cgt
    if state.cash < 0:
        _cover_cash_deficit(state)
    return paid


def _pay_from_holding(state: PortfolioState, holding, gains: float) -> tuple[float, float]:
    """Returns (gains still uncovered, amount sold)."""
    if gains <= 0:
        return 0.0, 0.0
    cgt = state.config.cgt
    sold = 0.0
    for lot in holding.ordered(state.config.tax_scheme):
        value = holding.lot_value(lot)
        amount = tax_sell_amount(gains, holding.profit(lot), cgt)
        if amount <= value:
            holding.sell_from_lot(lot, amount)
            return 0.0, sold + amount
        holding.sell_from_lot(lot, value)
        sold += value
        gains = (amount - value) / cgt
    return gains, sold


def _cover_cash_deficit(state: PortfolioState) -> None:
    # the fee shortfall exceeded spare cash: sell a little more from the largest holding
    from .portfolio import sell_amount

    fee = state.config.transaction_fee
    holding = max(state.holdings, key=lambda h: h.value)
    needed = -state.cash / (1.0 - fee)
    if holding.value <= 0:
        state.unpaid_tax += -state.cash
        state.cash = 0.0
        return
    amount = min(needed, holding.value)
    state.ledger.gains += sell_amount(state, state.holdings.index(holding), amount)
    if state.cash < 0:
        state.unpaid_tax += -state.cash
        state.cash = 0.0
