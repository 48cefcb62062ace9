"""Weighted quality scores, cross-evaluator consensus, thresholding and summaries."""

from __future__ import annotations

import bisect
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

if TYPE_CHECKING:
    from .evaluation import ScoreCard
    from .samples import SyntheticSample

CRITERIA = ("correctness", "code_quality", "security", "performance", "completeness")
DEFAULT_THRESHOLD = 8.5
DEFAULT_LENGTH_CAP = 200


class InvalidWeights(ValueError):
    pass


@dataclass(frozen=True)
class CriterionScores:
    correctness: float
    code_quality: float
    security: float
    performance: float
    completeness: float

    def __post_init__(self):
        for name in CRITERIA:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 10.0):
                raise ValueError(f"{name} must be in [0, 10], got {v!r}")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in CRITERIA)

    def to_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in CRITERIA}


@dataclass(frozen=True)
class WeightConfig:
    correctness: float = 0.3
    code_quality: float = 0.2
    security: float = 0.1
    performance: float = 0.1
    completeness: float = 0.1
    length: float = 0.2
    length_cap: int = DEFAULT_LENGTH_CAP

    def validate(self) -> "WeightConfig":
        ws = self.vector()
        if any(w < 0 or not math.isfinite(w) for w in ws):
            raise InvalidWeights("weights must be nonnegative")
        # math.fsum is exact-rounded, so 0.3+0.2+0.1+0.1+0.1+0.2 sums to 1.0
        if abs(math.fsum(ws) - 1.0) > 1e-12:
            raise InvalidWeights(f"weights must sum to 1, got {math.fsum(ws)!r}")
        if int(self.length_cap) != self.length_cap or self.length_cap < 1:
            raise InvalidWeights("length_cap must be a positive integer")
        return self

    def vector(self) -> tuple[float, ...]:
        return (self.correctness, self.code_quality, self.security,
                self.performance, self.completeness, self.length)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def line_count(text: str) -> int:
    return len(text.split("\n")) if text else 0


def length_score(line_count: int, length_cap: int = DEFAULT_LENGTH_CAP) -> float:
    """Map a line count onto [0, 10] with a log transform saturating at ``length_cap``.

    ``10 * min(1, ln(1 + n) / ln(1 + cap))``.
    """
    if line_count < 0:
        raise ValueError("line_count must be nonnegative")
    if length_cap < 1:
        raise ValueError("length_cap must be positive")
    return 10.0 * min(1.0, math.log1p(line_count) / math.log1p(length_cap))


def sample_length_score(sample: "SyntheticSample", length_cap: int = DEFAULT_LENGTH_CAP) -> float:
    return length_score(line_count(sample.buggy_code) + line_count(sample.fixed_code), length_cap)


def weighted_score(c: CriterionScores, length: float, w: WeightConfig = WeightConfig()) -> float:
    w.validate()
    if not 0.0 <= length <= 10.0:
        raise ValueError("length score must be in [0, 10]")
    vals = c.as_tuple() + (length,)
    return math.fsum(wi * vi for wi, vi in zip(w.vector(), vals))


@dataclass
class AggregateRecord:
    sample_id: str
    per_evaluator_totals: dict[str, float]
    final_score: float
    retained: bool = False

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "per_evaluator_totals": dict(self.per_evaluator_totals),
            "final_score": self.final_score,
            "retained": self.retained,
        }


@dataclass
class AggregateResult:
    records: list[AggregateRecord]
    excluded: list[str] = field(default_factory=list)


def aggregate(
    cards: Iterable["ScoreCard"],
    samples: Sequence["SyntheticSample"],
    w: WeightConfig = WeightConfig(),
    threshold: float = DEFAULT_THRESHOLD,
    combiner: str = "mean",
) -> AggregateResult:
    """Combine every evaluator's weighted total into one score per sample.

    The length score is computed once per sample and shared by all of its
    evaluators.  Samples without any card are listed in ``excluded``.
    """
    w.validate()
    if combiner not in ("mean", "median"):
        raise ValueError(f"unknown combiner {combiner!r}")
    by_sample: dict[str, dict[str, CriterionScores]] = defaultdict(dict)
    for card in cards:
        by_sample[card.sample_id][card.evaluator_model] = card.criteria
    records, excluded = [], []
    for s in samples:
        got = by_sample.get(s.id)
        if not got:
            excluded.append(s.id)
            continue
        ls = sample_length_score(s, w.length_cap)
        totals = {m: weighted_score(got[m], ls, w) for m in sorted(got)}
        vals = list(totals.values())
        final = math.fsum(vals) / len(vals) if combiner == "mean" else statistics.median(vals)
        records.append(AggregateRecord(s.id, totals, final, final >= threshold))
    return AggregateResult(records, excluded)


@dataclass
class FilterReport:
    threshold: float
    total: int
    retained: int
    retention_fraction: float
    threshold_percentile: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def filter_corpus(
    records: Sequence[AggregateRecord], threshold: float = DEFAULT_THRESHOLD
) -> tuple[list[AggregateRecord], FilterReport]:
    """Keep records with ``final_score >= threshold``.

    ``threshold_percentile`` is the percentage of records scoring strictly
    below the threshold, i.e. the threshold's percentile rank.
    """
    kept = []
    for r in records:
        r.retained = r.final_score >= threshold
        if r.retained:
            kept.append(r)
    n = len(records)
    report = FilterReport(
        threshold=threshold,
        total=n,
        retained=len(kept),
        retention_fraction=len(kept) / n if n else 0.0,
        threshold_percentile=100.0 * (n - len(kept)) / n if n else 0.0,
    )
    return kept, report


@dataclass(frozen=True)
class SummaryRow:
    group: str
    mean: float
    std: float
    count: int
    percentage: float


GROUPINGS = ("language", "bug_type", "generator_model", "evaluator_model")


def summarize(
    records: Sequence[AggregateRecord],
    corpus: Sequence["SyntheticSample"],
    group_by: str,
) -> list[SummaryRow]:
    """Mean, sample std (n-1), count and percentage of scores per group.

    For ``evaluator_model`` each evaluator's weighted totals are the values;
    otherwise each sample's final score is one value.  Percentages are
    against the number of values summarized.  Groups are sorted by name.
    """
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}")
    values: dict[str, list[float]] = defaultdict(list)
    if group_by == "evaluator_model":
        for r in records:
            for model, total in r.per_evaluator_totals.items():
                values[model].append(total)
    else:
        index = {s.id: s for s in corpus}
        for r in records:
            values[getattr(index[r.sample_id], group_by)].append(r.final_score)
    grand = sum(len(v) for v in values.values())
    rows = []
    for group in sorted(values):
        v = values[group]
        mean = math.fsum(v) / len(v)
        std = math.sqrt(math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1)) if len(v) > 1 else 0.0
        rows.append(SummaryRow(group, mean, std, len(v), 100.0 * len(v) / grand))
    return rows


def histogram(scores: Iterable[float], bin_width: float, lo: float = 0.0, hi: float = 10.0) -> list[tuple[float, int]]:
    """Counts over left-closed, right-open bins of ``bin_width`` covering [lo, hi].

    The top edge ``hi`` itself falls in the last bin.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    nbins = max(1, math.ceil((hi - lo) / bin_width - 1e-9))
    edges = [round(lo + i * bin_width, 10) for i in range(nbins)]
    counts = [0] * nbins
    for x in scores:
        if not lo <= x <= hi:
            raise ValueError(f"score {x} outside [{lo}, {hi}]")
        idx = min(bisect.bisect_right(edges, x) - 1, nbins - 1)
        counts[idx] += 1
    return list(zip(edges, counts))


def rows_to_dicts(rows: Sequence[SummaryRow]) -> list[dict]:
    return [dict(r.__dict__) for r in rows]
