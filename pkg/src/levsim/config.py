"""Scenario configuration: a single JSON document, validated with pydantic.

Units: rates, expense ratios, dividend yields and the margin rate are yearly
percent; fees, fractions and the tax rate are decimal fractions; the fraction
rebalance trigger is in percentage points and the leverage trigger is a
relative deviation.
"""

from __future__ import annotations

import json
from datetime import date
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import marketdata as md
from .engine import Scenario
from .errors import ConfigError, DataError
from .montecarlo import VARIANTS, FundFamily, SamplerConfig
from .portfolio import EngineConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DividendModelCfg(_Strict):
    base: float = 0.0
    libor_coefficient: float = 0.0


class TotalReturnCfg(_Strict):
    # adj_close: the price file's Adj Close column; file: Close column of another file;
    # synthesize: price plus the dividend model; splice: synthesize, then chain the file once it starts
    source: Literal["adj_close", "file", "synthesize", "splice"] = "synthesize"
    file: str | None = None

    @model_validator(mode="after")
    def _needs_file(self):
        if self.source in ("file", "splice") and not self.file:
            raise ValueError(f"source {self.source!r} requires 'file'")
        return self


class AssetCfg(_Strict):
    id: str
    name: str | None = None
    price_file: str
    total_return: TotalReturnCfg = Field(default_factory=TotalReturnCfg)
    dividend_model: DividendModelCfg = Field(default_factory=DividendModelCfg)
    expense_ratio: float = Field(0.0, ge=0)
    letf_expense_ratio: float = Field(1.0, ge=0)

    def family(self) -> FundFamily:
        return FundFamily(
            name=self.name or self.id,
            index=self.id,
            expense_ratio=self.expense_ratio,
            dividend_model=md.DividendModel(self.dividend_model.base, self.dividend_model.libor_coefficient),
            letf_expense_ratio=self.letf_expense_ratio,
        )


class PortfolioCfg(_Strict):
    fractions: dict[str, float]

    @field_validator("fractions")
    @classmethod
    def _sum_to_one(cls, v: dict[str, float]) -> dict[str, float]:
        if any(f < 0 for f in v.values()):
            raise ValueError("fractions must be non-negative")
        total = sum(v.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"fractions sum to {total:g}, expected 1")
        return v


class LeverageCfg(_Strict):
    letf: Literal[2, 3] | None = None
    margin: float | None = Field(None, gt=1)

    @model_validator(mode="after")
    def _exclusive(self):
        if self.letf is not None and self.margin is not None:
            raise ValueError("letf and margin leverage are mutually exclusive")
        return self


class EngineCfg(_Strict):
    transaction_fee: float = Field(0.001, ge=0, lt=1)
    margin_rate: float = 1.59
    rebalance_fraction_trigger: float = Field(20.0, gt=0)
    rebalance_leverage_trigger: float = Field(0.10, gt=0)
    cgt: float = Field(0.25, ge=0, lt=1)
    tax_enabled: bool = False
    tax_scheme: Literal["optimized", "fifo"] = "optimized"
    periodic_investment: float = Field(0.0, ge=0)


class WindowCfg(_Strict):
    start: date
    end: date

    @model_validator(mode="after")
    def _ordered(self):
        if self.start > self.end:
            raise ValueError("window start after end")
        return self


class SamplerCfg(_Strict):
    block_length: int = Field(5, ge=1)
    realizations: int = Field(2000, ge=1)
    bootstrap_resamples: int = Field(300, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)


class FrontierCfg(_Strict):
    stock: str | None = None
    bond: str | None = None
    step_percent: int = Field(5, ge=1, le=100)
    variants: list[Literal["1x", "2x_letf", "3x_letf", "1.8x_margin"]] = list(VARIANTS)
    margin_target: float = Field(1.8, gt=1)


class ScenarioConfig(_Strict):
    data_dir: str = "."
    libor_file: str | None = None
    libor_constant: float = 0.0
    assets: list[AssetCfg] = Field(min_length=1)
    portfolio: PortfolioCfg
    leverage: LeverageCfg = Field(default_factory=LeverageCfg)
    engine: EngineCfg = Field(default_factory=EngineCfg)
    initial_investment: float = Field(1.0, gt=0)
    window: WindowCfg | None = None
    horizon_years: int = Field(10, ge=1)
    sampler: SamplerCfg = Field(default_factory=SamplerCfg)
    frontier: FrontierCfg = Field(default_factory=FrontierCfg)
    mode: Literal["backtest", "mc", "frontier"] = "backtest"
    output: str = "out"
    insolvency_warning_fraction: float = Field(0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _cross_checks(self):
        ids = [a.id for a in self.assets]
        if len(set(ids)) != len(ids):
            raise ValueError("asset ids must be unique")
        unknown = set(self.portfolio.fractions) - set(ids)
        if unknown:
            raise ValueError(f"portfolio.fractions names unknown assets: {sorted(unknown)}")
        return self

    # -- derived objects -------------------------------------------------

    def engine_config(self) -> EngineConfig:
        return EngineConfig(**self.engine.model_dump())

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(horizon_years=self.horizon_years, **self.sampler.model_dump())

    def scenario(self) -> Scenario:
        letf = self.leverage.letf or 1
        return Scenario(
            assets=tuple(a.family().fund(letf) for a in self.assets),
            fractions=tuple(self.portfolio.fractions.get(a.id, 0.0) for a in self.assets),
            engine=self.engine_config(),
            target_leverage=self.leverage.margin or 1.0,
            initial_investment=self.initial_investment,
        )

    def frontier_pair(self) -> tuple[FundFamily, FundFamily]:
        by_id = {a.id: a for a in self.assets}
        stock = self.frontier.stock or self.assets[0].id
        bond = self.frontier.bond or (self.assets[1].id if len(self.assets) > 1 else None)
        if stock not in by_id or bond not in by_id or stock == bond:
            raise ConfigError("frontier: need two distinct assets (frontier.stock, frontier.bond)")
        return by_id[stock].family(), by_id[bond].family()


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def parse_config_dict(raw: dict, base_dir: str | Path | None = None) -> ScenarioConfig:
    try:
        cfg = ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None
    if base_dir is not None and not Path(cfg.data_dir).is_absolute():
        cfg = cfg.model_copy(update={"data_dir": str(Path(base_dir) / cfg.data_dir)})
    return cfg


def parse_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config_dict(raw, base_dir=path.parent)


def load_market(cfg: ScenarioConfig) -> md.MarketHistory:
    """Read every asset's data files, build total-return series, align and window."""
    data = Path(cfg.data_dir)
    if cfg.libor_file:
        libor = md.load_rate_csv(data / cfg.libor_file)
    else:
        libor = md.RateSeries.constant(cfg.libor_constant)
    prices, totals = {}, {}
    for asset in cfg.assets:
        price = md.load_price_csv(data / asset.price_file, asset.id)
        model = asset.family().dividend_model
        src = asset.total_return
        if src.source == "adj_close":
            tr = price.total_return()
        elif src.source == "file":
            tr = md.load_price_csv(data / src.file, asset.id)
        elif src.source == "synthesize":
            tr = md.synthesize_total_return(price, model, libor)
        else:
            actual = md.load_price_csv(data / src.file, asset.id)
            tr = md.splice_total_return(md.synthesize_total_return(price, model, libor), actual)
        prices[asset.id] = md.PriceSeries(asset.id, price.dates, price.close)
        totals[asset.id] = tr
    history = md.align_histories(prices, totals, libor)
    if cfg.window is not None:
        history = md.slice_window(history, cfg.window.start, cfg.window.end)
    if len(history) == 0:
        raise DataError("no market data left after alignment")
    return history
