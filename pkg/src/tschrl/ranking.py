"""Score protocols on four metrics and rank them with a weighted sum."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .exceptions import ConfigurationError

METRICS = ("power", "delay", "throughput", "plr")
LOWER_IS_BETTER = {"power": True, "delay": True, "throughput": False, "plr": True}


@dataclass(frozen=True)
class RankingWeights:
    """Weights over (power, delay, throughput, reliability); must sum to one."""

    power: float
    delay: float
    throughput: float
    reliability: float

    def __post_init__(self):
        w = self.as_tuple()
        if any(not math.isfinite(x) or x < 0 for x in w):
            raise ConfigurationError(f"ranking weights must be finite and non-negative, got {w}")
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise ConfigurationError(f"ranking weights must sum to 1, got {math.fsum(w)}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.power, self.delay, self.throughput, self.reliability)

    @classmethod
    def parse(cls, text: str) -> "RankingWeights":
        if text in PRESETS:
            return PRESETS[text]
        try:
            parts = [float(x) for x in text.split(",")]
        except ValueError:
            raise ConfigurationError(f"cannot parse weights {text!r}") from None
        if len(parts) != 4:
            raise ConfigurationError(f"expected 4 weights or a preset name, got {text!r}")
        return cls(*parts)


PRESETS = {
    "balanced": RankingWeights(0.25, 0.25, 0.25, 0.25),
    "power": RankingWeights(0.7, 0.1, 0.1, 0.1),
    "delay": RankingWeights(0.1, 0.7, 0.1, 0.1),
    "throughput": RankingWeights(0.1, 0.1, 0.7, 0.1),
    "reliability": RankingWeights(0.1, 0.1, 0.1, 0.7),
}


@dataclass(frozen=True)
class ProtocolMetrics:
    name: str
    power: float
    delay: float
    throughput: float
    plr: float

    def value(self, metric: str) -> float:
        return getattr(self, metric)


def score(values, lower_is_better: bool) -> list[float]:
    """Map values linearly onto [0, 100], 100 for the best one.

    A single value scores 100; a set of identical values scores 0 each.
    """
    values = [float(v) for v in values]
    if not values:
        return []
    if len(values) == 1:
        return [100.0]
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    if lower_is_better:
        return [100.0 * (hi - v) / (hi - lo) for v in values]
    return [100.0 * (v - lo) / (hi - lo) for v in values]


@dataclass
class ScoreRow:
    protocol: ProtocolMetrics
    scores: dict[str, float] = field(default_factory=dict)
    total: float = 0.0

    @property
    def name(self) -> str:
        return self.protocol.name


def score_table(protocols, weights: RankingWeights) -> list[ScoreRow]:
    """Per-metric scores and weighted totals, in input order."""
    protocols = list(protocols)
    names = [p.name for p in protocols]
    if len(set(names)) != len(names):
        raise ConfigurationError("protocol names must be unique")
    rows = [ScoreRow(p) for p in protocols]
    for metric in METRICS:
        s = score([p.value(metric) for p in protocols], LOWER_IS_BETTER[metric])
        for row, v in zip(rows, s):
            row.scores[metric] = v
    w = weights.as_tuple()
    for row in rows:
        row.total = math.fsum(wi * row.scores[m] for wi, m in zip(w, METRICS))
    return rows


def rank(protocols, weights: RankingWeights) -> list[ScoreRow]:
    """Rows sorted by total score, best first; ties go to the lexically smaller name."""
    if not isinstance(weights, RankingWeights):
        weights = RankingWeights(*weights)
    return sorted(score_table(protocols, weights), key=lambda r: (-r.total, r.name))
