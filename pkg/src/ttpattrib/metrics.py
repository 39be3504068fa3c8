"""Evaluation metrics: set overlap, rank summaries, and error rates.

Set comparison uses standard Jaccard, intersection over union, plus the
two directional difference percentages (how much of the truth the
prediction missed, and how much of the prediction is unsupported).
Rank summaries report mean and sample standard deviation, with the
(m + 1) / 2 uniform-guess baseline for context.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .taxonomy import HALLUCINATION_CATEGORIES, VALID, HallucinationVerdict, TechniqueId

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SetComparison:
    jaccard: float
    in_truth_not_pred_pct: float
    in_pred_not_truth_pct: float
    truth_size: int
    pred_size: int


def jaccard(truth: frozenset, pred: frozenset) -> float:
    """|A intersect B| / |A union B|; two empty sets count as identical."""
    union = truth | pred
    if not union:
        return 1.0
    return len(truth & pred) / len(union)


def compare_sets(truth: frozenset, pred: frozenset) -> SetComparison:
    missed = len(truth - pred)
    unsupported = len(pred - truth)
    return SetComparison(
        jaccard=jaccard(truth, pred),
        in_truth_not_pred_pct=100.0 * missed / len(truth) if truth else 0.0,
        in_pred_not_truth_pct=100.0 * unsupported / len(pred) if pred else 0.0,
        truth_size=len(truth),
        pred_size=len(pred),
    )


def compare_sets_oracle(truth: frozenset, pred: frozenset) -> SetComparison:
    """Element-by-element reference implementation for cross-checks."""
    inter = sum(1 for x in truth if x in pred)
    union_items = set()
    union_items.update(truth)
    union_items.update(pred)
    missed = sum(1 for x in truth if x not in pred)
    unsupported = sum(1 for x in pred if x not in truth)
    return SetComparison(
        jaccard=inter / len(union_items) if union_items else 1.0,
        in_truth_not_pred_pct=100.0 * missed / len(truth) if truth else 0.0,
        in_pred_not_truth_pct=100.0 * unsupported / len(pred) if pred else 0.0,
        truth_size=len(truth),
        pred_size=len(pred),
    )


@dataclass(frozen=True)
class RankSummary:
    mean: float
    std: float
    n: int
    baseline: float

    @property
    def beats_baseline(self) -> bool:
        return self.mean < self.baseline


def uniform_rank_std(m: int) -> float:
    """Standard deviation of a uniform draw over ranks 1..m."""
    if m < 1:
        raise ValidationError(f"need at least 1 actor, got {m}")
    return math.sqrt((m * m - 1) / 12.0)


def rank_summary(ranks: Sequence[int], n_actors: int) -> RankSummary:
    """Mean and sample (n-1) standard deviation of true-actor ranks."""
    if not ranks:
        raise ValidationError("cannot summarize an empty rank list")
    if n_actors < 1:
        raise ValidationError(f"need at least 1 actor, got {n_actors}")
    for r in ranks:
        if not 1 <= r <= n_actors:
            raise ValidationError(f"rank {r} outside 1..{n_actors}")
    n = len(ranks)
    mean = sum(ranks) / n
    if n == 1:
        std = 0.0
    else:
        std = math.sqrt(sum((r - mean) ** 2 for r in ranks) / (n - 1))
    return RankSummary(mean=mean, std=std, n=n, baseline=(n_actors + 1) / 2.0)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson correlation; None when either side has zero variance."""
    if len(xs) != len(ys):
        raise ValidationError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise ValidationError("correlation needs at least 2 points")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        return None
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Spearman rho: Pearson over average ranks."""
    return pearson(_average_ranks(xs), _average_ranks(ys))


def hallucination_rate(verdicts: Sequence[HallucinationVerdict]) -> float:
    """Fraction of parsed entries whose ID or name fails taxonomy checks."""
    if not verdicts:
        raise ValidationError("no parsed entries to rate")
    bad = sum(1 for v in verdicts if not v.is_valid)
    return bad / len(verdicts)


def hallucination_breakdown(verdicts: Sequence[HallucinationVerdict]) -> dict[str, int]:
    """Per-category tallies, valid entries included as their own row."""
    out = {cat: 0 for cat in (VALID, *HALLUCINATION_CATEGORIES)}
    for v in verdicts:
        out[v.category] += 1
    return out


def exhaustive_prediction(ordering: Iterable[TechniqueId]) -> frozenset:
    """Predict everything: the degenerate baseline set comparison needs."""
    return frozenset(ordering)


def exhaustive_baseline(
    truth_by_actor: Mapping[str, frozenset],
    ordering: Iterable[TechniqueId],
) -> dict[str, float]:
    """Jaccard each actor's truth set gets by predicting the whole taxonomy.

    The floor any real tagger has to beat; tiny when the taxonomy is large.
    """
    everything = exhaustive_prediction(ordering)
    return {actor: jaccard(frozenset(truth), everything)
            for actor, truth in truth_by_actor.items()}


@dataclass(frozen=True)
class FrequencyReport:
    """Per-technique occurrence counts for two datasets on a shared axis."""

    axis: tuple[TechniqueId, ...]
    counts_a: tuple[int, ...]
    counts_b: tuple[int, ...]
    correlation: float | None


def frequency_report(
    a: Mapping[TechniqueId, int],
    b: Mapping[TechniqueId, int],
) -> FrequencyReport:
    """Align two count maps on their union axis and correlate them.

    Techniques absent from one side count zero there. Correlation is
    Pearson over the paired counts, absent (not 0) when either side has
    zero variance.
    """
    axis = tuple(sorted(set(a) | set(b)))
    counts_a = tuple(int(a.get(t, 0)) for t in axis)
    counts_b = tuple(int(b.get(t, 0)) for t in axis)
    corr = pearson(counts_a, counts_b) if len(axis) >= 2 else None
    return FrequencyReport(axis=axis, counts_a=counts_a, counts_b=counts_b,
                           correlation=corr)


def write_comparison_csv(
    rows: Mapping[str, SetComparison],
    path: str | Path,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["actor", "jaccard", "in_truth_not_pred_pct", "in_pred_not_truth_pct"])
        for actor in sorted(rows):
            cmp = rows[actor]
            writer.writerow([
                actor,
                f"{cmp.jaccard:.6f}",
                f"{cmp.in_truth_not_pred_pct:.4f}",
                f"{cmp.in_pred_not_truth_pct:.4f}",
            ])


@dataclass(frozen=True)
class ConditionResult:
    """One evaluation condition: mean of per-fold means, std across folds."""
    label: str
    fold_means: tuple[float, ...]

    @property
    def mean(self) -> float:
        return sum(self.fold_means) / len(self.fold_means)

    @property
    def std(self) -> float:
        n = len(self.fold_means)
        if n == 1:
            return 0.0
        m = self.mean
        return math.sqrt(sum((x - m) ** 2 for x in self.fold_means) / (n - 1))


def format_rank_table(conditions: Sequence[ConditionResult], n_actors: int) -> str:
    """Aligned text table of mean rank per condition, baseline first."""
    lines = [f"{'condition':<28}{'mean rank':>12}{'std':>10}"]
    baseline = (n_actors + 1) / 2.0
    lines.append(f"{'Baseline (random)':<28}{baseline:>12.2f}{'-':>10}")
    for cond in conditions:
        lines.append(f"{cond.label:<28}{cond.mean:>12.2f}{cond.std:>10.2f}")
    return "\n".join(lines) + "\n"


def write_rank_table(
    conditions: Sequence[ConditionResult],
    n_actors: int,
    text_path: str | Path,
    csv_path: str | Path,
) -> None:
    text_path = Path(text_path)
    text_path.parent.mkdir(parents=True, exist_ok=True)
    text_path.write_text(format_rank_table(conditions, n_actors), encoding="utf-8")
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["condition", "mean_rank", "std", "n_folds"])
        writer.writerow(["Baseline (random)", f"{(n_actors + 1) / 2.0:.6f}", "", 0])
        for cond in conditions:
            writer.writerow([cond.label, f"{cond.mean:.6f}", f"{cond.std:.6f}", len(cond.fold_means)])
