"""Compiled single-realization simulator used by the Monte-Carlo driver.

Mirrors :func:`levsim.engine.run_backtest` (yield path only) operation for
operation, including float evaluation order, so both produce the same numbers.
Lots live in per-asset arrays kept in purchase order.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .engine import Scenario
from .marketdata import MarketHistory

_DAYS = 252.0
_EPS_TRIGGER = 1e-12


@njit(cache=True)
def _total(shares, price, cash):
    t = 0.0
    for i in range(shares.shape[0]):
        t += shares[i] * price[i]
    return t + cash


@njit(cache=True)
def _recount(i, lot_shares, alive, count, shares):
    s = 0.0
    for k in range(count[i]):
        if alive[i, k]:
            s += lot_shares[i, k]
    shares[i] = s


@njit(cache=True)
def _compact(i, lot_shares, lot_basis, alive, count):
    j = 0
    for k in range(count[i]):
        if alive[i, k]:
            lot_shares[i, j] = lot_shares[i, k]
            lot_basis[i, j] = lot_basis[i, k]
            alive[i, j] = True
            j += 1
    for k in range(j, count[i]):
        alive[i, k] = False
    count[i] = j


@njit(cache=True)
def _order(i, lot_shares, lot_basis, count, price, fifo):
    n = count[i]
    if fifo:
        return np.arange(n)
    keys = np.empty(n)
    for k in range(n):
        keys[k] = lot_shares[i, k] * price[i] - lot_basis[i, k]
    return np.argsort(keys, kind="mergesort")


@njit(cache=True)
def _sell_from_lot(i, k, amount, lot_shares, lot_basis, alive, count, shares, price):
    value = lot_shares[i, k] * price[i]
    profit = value - lot_basis[i, k]
    if amount >= value:
        alive[i, k] = False
        _recount(i, lot_shares, alive, count, shares)
        return profit
    if profit > 0:
        gain = min(amount, profit)
    elif profit < 0:
        gain = -min(amount, -profit)
    else:
        gain = 0.0
    lot_basis[i, k] -= amount - gain
    lot_shares[i, k] -= amount / price[i]
    _recount(i, lot_shares, alive, count, shares)
    return gain


@njit(cache=True)
def _tax_sell_amount(gains, profit, cgt):
    if gains <= 0 or cgt == 0:
        return 0.0
    if profit != 0:
        sign = math.copysign(1.0, profit)
    else:
        sign = 0.0
    break_even = (1.0 - sign * cgt) / cgt * abs(profit)
    if gains <= break_even:
        return gains * cgt / (1.0 - sign * cgt)
    return (gains + profit) * cgt


@njit(cache=True)
def simulate(
    dp_price, dp_tr, libor, month_start, year_end,
    lev, er, div_base, div_coef, tracks_tr, fractions,
    target_leverage, initial, fee, margin_rate, frac_trigger, lev_trigger,
    cgt, tax_enabled, fifo, periodic,
):
    """Returns (yields, bankrupt, insolvent); ``yields[0]`` is the post-purchase state."""
    n_days, n_assets = dp_price.shape
    cap = n_days + 2
    lot_shares = np.zeros((n_assets, cap))
    lot_basis = np.zeros((n_assets, cap))
    alive = np.zeros((n_assets, cap), dtype=np.bool_)
    count = np.zeros(n_assets, dtype=np.int64)
    shares = np.zeros(n_assets)
    price = np.ones(n_assets)
    yields = np.empty(n_days + 1)
    # scalars packed in an array so helpers can mutate them: cash, debt, gains, cum_tax, unpaid
    acc = np.zeros(5)
    CASH, DEBT, GAINS, CUMTAX, UNPAID = 0, 1, 2, 3, 4

    acc[CASH] = initial
    acc[DEBT] = (target_leverage - 1.0) * initial
    acc[CASH] += acc[DEBT]
    budget = acc[CASH]
    for i in range(n_assets):
        _buy(i, min(fractions[i] * budget, acc[CASH]), acc, fee, lot_shares, lot_basis, alive, count, shares, price)
    yields[0] = (_total(shares, price, acc[CASH]) - acc[DEBT] - acc[UNPAID]) / initial

    bankrupt = False
    last = 0
    for d in range(n_days):
        lr = libor[d]
        for i in range(n_assets):
            if tracks_tr[i]:
                dp = dp_tr[d, i] * lev[i] - er[i] / _DAYS - lr * (lev[i] - 1) / _DAYS
            else:
                dp = dp_price[d, i] - er[i] / _DAYS
            if count[i] > 0:
                factor = 1.0 + dp / 100.0
                if factor > 0.0:
                    price[i] *= factor
                else:
                    loss = 0.0
                    for k in range(count[i]):
                        loss += lot_basis[i, k]
                    loss = -loss
                    count[i] = 0
                    alive[i, :] = False
                    shares[i] = 0.0
                    price[i] = 1.0
                    if loss != 0.0:
                        acc[GAINS] += loss
            if not (div_base[i] == 0.0 and div_coef[i] == 0.0) and shares[i] != 0.0:
                rate = div_base[i] + div_coef[i] * lr
                dividend = shares[i] * price[i] * rate / (100.0 * _DAYS)
                acc[CASH] += dividend
                acc[GAINS] += dividend
        if acc[DEBT] != 0.0:
            acc[DEBT] += acc[DEBT] * margin_rate / (100.0 * _DAYS)

        if _total(shares, price, acc[CASH]) - acc[DEBT] <= 0:
            bankrupt = True
        else:
            if month_start[d]:
                acc[CASH] += periodic
                budget = acc[CASH]
                if budget > 0:
                    for i in range(n_assets):
                        _buy(i, min(fractions[i] * budget, acc[CASH]), acc, fee,
                             lot_shares, lot_basis, alive, count, shares, price)
            if _triggered(shares, price, acc, fractions, target_leverage, frac_trigger, lev_trigger):
                _rebalance(acc, fractions, target_leverage, fee, fifo,
                           lot_shares, lot_basis, alive, count, shares, price)
            if year_end[d] and tax_enabled:
                _settle(acc, fractions, fee, cgt, fifo, lot_shares, lot_basis, alive, count, shares, price)
            equity = _total(shares, price, acc[CASH]) - acc[DEBT] - acc[UNPAID]
            if equity <= 0 or acc[UNPAID] > 0:
                bankrupt = True
        yields[d + 1] = (_total(shares, price, acc[CASH]) - acc[DEBT] - acc[UNPAID]) / initial
        last = d + 1
        if bankrupt:
            break
    return yields[: last + 1], bankrupt, acc[UNPAID] > 0


@njit(cache=True)
def _buy(i, amount, acc, fee, lot_shares, lot_basis, alive, count, shares, price):
    acc[0] = max(acc[0] - amount, 0.0)
    net = amount * (1.0 - fee)
    if net <= 0:
        return
    k = count[i]
    lot_shares[i, k] = net / price[i]
    lot_basis[i, k] = net
    alive[i, k] = True
    count[i] = k + 1
    shares[i] += lot_shares[i, k]


@njit(cache=True)
def _sell_amount(i, amount, acc, fee, fifo, lot_shares, lot_basis, alive, count, shares, price):
    available = shares[i] * price[i]
    remaining = min(amount, available)
    gain = 0.0
    order = _order(i, lot_shares, lot_basis, count, price, fifo)
    for k in order:
        if remaining <= 0:
            break
        value = lot_shares[i, k] * price[i]
        part = value if remaining >= value else remaining
        gain += _sell_from_lot(i, k, part, lot_shares, lot_basis, alive, count, shares, price)
        remaining -= part
    _compact(i, lot_shares, lot_basis, alive, count)
    acc[0] += (1.0 - fee) * amount
    return gain


@njit(cache=True)
def _triggered(shares, price, acc, fractions, target_leverage, frac_trigger, lev_trigger):
    threshold = frac_trigger / 100.0 - _EPS_TRIGGER
    total = _total(shares, price, acc[0])
    if total > 0:
        for i in range(shares.shape[0]):
            if abs(shares[i] * price[i] / total - fractions[i]) >= threshold:
                return True
    if target_leverage > 1.0:
        equity = total - acc[1]
        if equity <= 0:
            return True
        deviation = abs(total / equity / target_leverage - 1.0)
        return deviation >= lev_trigger - _EPS_TRIGGER
    return False


@njit(cache=True)
def _rebalance(acc, fractions, target_leverage, fee, fifo, lot_shares, lot_basis, alive, count, shares, price):
    n_assets = shares.shape[0]
    total = _total(shares, price, acc[0])
    equity = total - acc[1]
    d_debt = target_leverage * equity - total
    transfers = np.empty(n_assets)
    for i in range(n_assets):
        transfers[i] = total * (fractions[i] - shares[i] * price[i] / total) + fractions[i] * d_debt
    for i in range(n_assets):
        if transfers[i] < 0:
            amount = min(-transfers[i], shares[i] * price[i])
            acc[2] += _sell_amount(i, amount, acc, fee, fifo, lot_shares, lot_basis, alive, count, shares, price)
    if d_debt < 0:
        repay = min(-d_debt, acc[0])
        acc[1] -= repay
        acc[0] -= repay
    else:
        acc[1] += d_debt
        acc[0] += d_debt
    buys = 0.0
    for i in range(n_assets):
        if transfers[i] > 0:
            buys += transfers[i]
    if buys > 0:
        scale = min(1.0, acc[0] / buys)
        for i in range(n_assets):
            if transfers[i] > 0:
                _buy(i, min(transfers[i] * scale, acc[0]), acc, fee, lot_shares, lot_basis, alive, count, shares, price)


@njit(cache=True)
def _pay(i, gains, cgt, fifo, lot_shares, lot_basis, alive, count, shares, price):
    if gains <= 0:
        return 0.0, 0.0
    sold = 0.0
    order = _order(i, lot_shares, lot_basis, count, price, fifo)
    for k in order:
        value = lot_shares[i, k] * price[i]
        amount = _tax_sell_amount(gains, value - lot_basis[i, k], cgt)
        if amount <= value:
            _sell_from_lot(i, k, amount, lot_shares, lot_basis, alive, count, shares, price)
            _compact(i, lot_shares, lot_basis, alive, count)
            return 0.0, sold + amount
        _sell_from_lot(i, k, value, lot_shares, lot_basis, alive, count, shares, price)
        sold += value
        gains = (amount - value) / cgt
    _compact(i, lot_shares, lot_basis, alive, count)
    return gains, sold


@njit(cache=True)
def _settle(acc, fractions, fee, cgt, fifo, lot_shares, lot_basis, alive, count, shares, price):
    gains = acc[2]
    if gains <= 0:
        return
    if cgt == 0:
        acc[2] = 0.0
        return
    n_assets = shares.shape[0]
    paid = 0.0
    carry = 0.0
    for i in range(n_assets):
        carry, sold = _pay(i, fractions[i] * gains + carry, cgt, fifo,
                           lot_shares, lot_basis, alive, count, shares, price)
        paid += sold
    for i in range(n_assets):
        if carry <= 0:
            break
        carry, sold = _pay(i, carry, cgt, fifo, lot_shares, lot_basis, alive, count, shares, price)
        paid += sold
    acc[2] = 0.0
    acc[3] += paid
    acc[0] -= fee * paid
    if carry > 0:
        acc[4] += carry * cgt
    if acc[0] < 0:
        best = 0
        for i in range(1, n_assets):
            if shares[i] * price[i] > shares[best] * price[best]:
                best = i
        value = shares[best] * price[best]
        needed = -acc[0] / (1.0 - fee)
        if value <= 0:
            acc[4] += -acc[0]
            acc[0] = 0.0
            return
        amount = min(needed, value)
        acc[2] += _sell_amount(best, amount, acc, fee, fifo, lot_shares, lot_basis, alive, count, shares, price)
        if acc[0] < 0:
            acc[4] += -acc[0]
            acc[0] = 0.0


def simulate_yields(scenario: Scenario, history: MarketHistory) -> tuple[np.ndarray, bool, bool]:
    """Compiled equivalent of ``run_backtest(scenario, history, record=False)``."""
    assets = scenario.assets
    cfg = scenario.engine
    dp_price = np.ascontiguousarray(np.column_stack([history.dp_price[a.underlying_index] for a in assets]))
    dp_tr = np.ascontiguousarray(np.column_stack([history.dp_total_return[a.underlying_index] for a in assets]))
    month_start, year_end = history.calendar_flags()
    return simulate(
        dp_price.astype(float), dp_tr.astype(float), np.asarray(history.libor, dtype=float),
        month_start, year_end,
        np.array([a.leverage_factor for a in assets], dtype=float),
        np.array([a.expense_ratio for a in assets], dtype=float),
        np.array([a.dividend_model.base for a in assets], dtype=float),
        np.array([a.dividend_model.libor_coefficient for a in assets], dtype=float),
        np.array([a.tracks_total_return for a in assets], dtype=np.bool_),
        np.array(scenario.fractions, dtype=float),
        float(scenario.target_leverage), float(scenario.initial_investment),
        float(cfg.transaction_fee), float(cfg.margin_rate),
        float(cfg.rebalance_fraction_trigger), float(cfg.rebalance_leverage_trigger),
        float(cfg.cgt), bool(cfg.tax_enabled), cfg.tax_scheme == "fifo", float(cfg.periodic_investment),
    )
