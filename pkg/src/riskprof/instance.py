"""Instance files and price-history ingestion.

Instance JSON::

    {"mu": 1.0, "m1": 0, "m2": 200,
     "stocks": [{"name": "AAA", "probs": [0.1, ...]}, ...]}

Probabilities may be numbers or decimal strings; loading always
re-validates.  :func:`dumps` is canonical (fixed key order, shortest
round-trip floats), so load/dump/load/dump is byte-stable.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .errors import InsufficientData, InvalidPriceSeries, NonPositivePrice, RiskProfError
from .return_model import MarginalDistribution, ReturnGrid, same_grid, validate_marginal

log = logging.getLogger(__name__)


class InvalidInstance(RiskProfError):
    pass


@dataclass
class Instance:
    grid: ReturnGrid
    stocks: list[MarginalDistribution]

    @property
    def k(self) -> int:
        return len(self.stocks)

    def to_dict(self) -> dict:
        return {
            "mu": self.grid.mu,
            "m1": self.grid.m1,
            "m2": self.grid.m2,
            "stocks": [{"name": s.name, "probs": [float(p) for p in s.probs]} for s in self.stocks],
        }


def from_dict(data: dict, floor: float = 0.0) -> Instance:
    try:
        grid = ReturnGrid(float(data["mu"]), data["m1"], data["m2"])
        raw = data["stocks"]
    except (KeyError, TypeError) as exc:
        raise InvalidInstance(f"instance is missing field {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise InvalidInstance("instance needs a non-empty 'stocks' list")
    stocks = []
    for idx, s in enumerate(raw):
        name = str(s.get("name", f"S{idx + 1}"))
        try:
            probs = [float(p) for p in s["probs"]]
        except (KeyError, TypeError, ValueError):
            raise InvalidInstance(f"stock {name!r} has no numeric 'probs' list", stock=name) from None
        dist = MarginalDistribution(grid, np.array(probs), name=name)
        try:
            validate_marginal(dist, floor)
        except RiskProfError as err:
            err.context.setdefault("stock", name)
            raise
        stocks.append(dist)
    return Instance(grid, stocks)


def loads(text: str, floor: float = 0.0) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInstance(f"not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInstance("instance must be a JSON object")
    return from_dict(data, floor)


def dumps(inst: Instance) -> str:
    return json.dumps(inst.to_dict(), indent=2) + "\n"


def load(path: str, floor: float = 0.0) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), floor)


# ---------------------------------------------------------------------------
# price histories

@dataclass
class PriceSeries:
    ticker: str
    observations: list[tuple[date, float]]

    def __post_init__(self) -> None:
        for d, p in self.observations:
            if not (p > 0 and math.isfinite(p)):
                raise NonPositivePrice(f"{self.ticker}: price {p} on {d} is not positive",
                                       ticker=self.ticker, date=str(d), price=p)
        days = [d for d, _ in self.observations]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise InvalidPriceSeries(f"{self.ticker}: dates must be strictly increasing",
                                     ticker=self.ticker)


def read_prices_csv(text: str) -> list[PriceSeries]:
    """Parse ``date,ticker,price`` rows; series come back in first-seen order."""
    reader = csv.DictReader(io.StringIO(text))
    need = {"date", "ticker", "price"}
    if reader.fieldnames is None or not need <= {f.strip() for f in reader.fieldnames}:
        raise InvalidPriceSeries(f"CSV header must contain {sorted(need)}")
    rows: dict[str, list] = defaultdict(list)
    for line, row in enumerate(reader, start=2):
        row = {k.strip(): (v or "").strip() for k, v in row.items() if k}
        try:
            d = date.fromisoformat(row["date"])
            p = float(row["price"])
        except ValueError:
            raise InvalidPriceSeries(f"line {line}: cannot parse {row}", line=line) from None
        rows[row["ticker"]].append((d, p))
    return [PriceSeries(t, sorted(obs)) for t, obs in rows.items()]


def period_returns(series: PriceSeries, period: int = 1) -> list[float]:
    """End/start percentages over consecutive non-overlapping windows of ``period`` steps."""
    prices = [p for _, p in series.observations]
    if period < 1 or len(prices) < period + 1:
        raise InsufficientData(
            f"{series.ticker}: {len(prices)} observations cannot span a period of {period}",
            ticker=series.ticker, observations=len(prices), period=period)
    return [100.0 * prices[t + period] / prices[t] for t in range(0, len(prices) - period, period)]


def snap(ret: float, grid: ReturnGrid) -> tuple[int, bool]:
    """Nearest grid level (ties downward) and whether clamping was needed."""
    level = math.ceil(ret / grid.mu - 0.5)
    clamped = min(grid.m2, max(grid.m1, level))
    return clamped, clamped != level


def ingest(prices: Sequence[PriceSeries], grid: ReturnGrid, period: int = 1) -> Instance:
    stocks = []
    for s in prices:
        counts: Counter = Counter()
        rets = period_returns(s, period)
        n_clamped = 0
        for r in rets:
            level, clamped = snap(r, grid)
            n_clamped += clamped
            counts[level] += 1
        if n_clamped:
            log.warning("%s: %d of %d returns fell outside [%g, %g] and were clamped",
                        s.ticker, n_clamped, len(rets), grid.lowest, grid.highest)
        probs = np.zeros(grid.m)
        for level, n in counts.items():
            probs[grid.index(level)] = n / len(rets)
        stocks.append(validate_marginal(MarginalDistribution(grid, probs, name=s.ticker)))
    if not stocks:
        raise InsufficientData("no price series given")
    same_grid(stocks)
    return Instance(grid, stocks)
