from levsim.marketdata import DividendModel
from levsim.portfolio import AssetSpec, EngineConfig, Holding, PaperLot, PortfolioState


def etf(name="S", index=None, er=0.0, dividend=0.0):
    return AssetSpec(name, index or name, 1.0, er, DividendModel(dividend))


def letf(name="S", index=None, factor=2.0, er=0.0):
    return AssetSpec(name, index or name, factor, er, tracks_total_return=True)


def make_state(lots, fractions, cash=0.0, debt=0.0, leverage=1.0, fee=0.0, **cfg):
    """``lots``: per asset a list of (value, cost_basis) pairs, purchase order."""
    holdings = []
    for i, asset_lots in enumerate(lots):
        h = Holding(etf(f"A{i}"))
        for day, (value, basis) in enumerate(asset_lots):
            h.lots.append(PaperLot(value, basis, day))
        h._recount()
        holdings.append(h)
    return PortfolioState(
        holdings=holdings,
        ideal_fractions=tuple(fractions),
        config=EngineConfig(transaction_fee=fee, **cfg),
        target_leverage=leverage,
        cash=cash,
        margin_debt=debt,
    )
