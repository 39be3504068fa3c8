from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttpattrib.errors import ValidationError
from ttpattrib.metrics import (
    ConditionResult,
    compare_sets,
    compare_sets_oracle,
    exhaustive_baseline,
    exhaustive_prediction,
    format_rank_table,
    frequency_report,
    hallucination_breakdown,
    hallucination_rate,
    jaccard,
    pearson,
    rank_summary,
    spearman,
    uniform_rank_std,
    write_comparison_csv,
    write_rank_table,
)
from ttpattrib.taxonomy import (
    FABRICATED_SUBTECHNIQUE,
    UNKNOWN_ID,
    VALID,
    HallucinationVerdict,
    TechniqueId,
)

SETS = st.frozensets(st.integers(0, 15), max_size=12)


class TestSetComparison:
    def test_hand_case(self):
        cmp = compare_sets(frozenset("abc"), frozenset("bcd"))
        assert cmp.jaccard == pytest.approx(0.5)
        assert cmp.in_truth_not_pred_pct == pytest.approx(100 / 3)
        assert cmp.in_pred_not_truth_pct == pytest.approx(100 / 3)
        assert (cmp.truth_size, cmp.pred_size) == (3, 3)

    def test_identical_sets(self):
        cmp = compare_sets(frozenset("ab"), frozenset("ab"))
        assert cmp.jaccard == 1.0
        assert cmp.in_truth_not_pred_pct == 0.0
        assert cmp.in_pred_not_truth_pct == 0.0

    def test_empty_sets_count_as_identical(self):
        cmp = compare_sets(frozenset(), frozenset())
        assert cmp.jaccard == 1.0
        assert cmp.in_truth_not_pred_pct == 0.0
        assert cmp.in_pred_not_truth_pct == 0.0

    def test_one_side_empty(self):
        cmp = compare_sets(frozenset("ab"), frozenset())
        assert cmp.jaccard == 0.0
        assert cmp.in_truth_not_pred_pct == 100.0
        assert cmp.in_pred_not_truth_pct == 0.0

    @given(SETS, SETS)
    def test_matches_element_oracle(self, truth, pred):
        assert compare_sets(truth, pred) == compare_sets_oracle(truth, pred)

    @given(SETS, SETS)
    def test_jaccard_symmetry_and_bounds(self, a, b):
        assert jaccard(a, b) == jaccard(b, a)
        assert 0.0 <= jaccard(a, b) <= 1.0

    def test_exhaustive_prediction_baseline(self):
        ordering = tuple(TechniqueId(f"T{1000 + i}") for i in range(10))
        truth = frozenset(ordering[:4])
        cmp = compare_sets(truth, exhaustive_prediction(ordering))
        assert cmp.jaccard == pytest.approx(0.4)
        assert cmp.in_truth_not_pred_pct == 0.0
        assert cmp.in_pred_not_truth_pct == pytest.approx(60.0)

    def test_exhaustive_baseline_per_actor(self):
        # 40-of-600 subset lands near the familiar ~6.7% floor
        ordering = tuple(TechniqueId(f"T{1000 + i}") for i in range(600))
        got = exhaustive_baseline(
            {
                "narrow": frozenset(ordering[:40]),
                "complete": frozenset(ordering),
                "silent": frozenset(),
            },
            ordering,
        )
        assert got["narrow"] == pytest.approx(40 / 600)
        assert got["narrow"] == pytest.approx(0.0667, abs=5e-4)
        assert got["complete"] == 1.0
        assert got["silent"] == 0.0


class TestRankSummary:
    def test_uniform_sweep_mean_is_exact_midpoint(self):
        summary = rank_summary(list(range(1, 30)), n_actors=29)
        assert summary.mean == 15.0
        assert summary.baseline == 15.0
        # sample (n-1) std over 1..29
        assert summary.std == pytest.approx(math.sqrt(2030 / 28))
        assert not summary.beats_baseline

    def test_uniform_rank_std_closed_form(self):
        assert uniform_rank_std(29) == pytest.approx(math.sqrt(70))
        assert uniform_rank_std(29) == pytest.approx(8.3666, abs=5e-4)
        assert uniform_rank_std(8) == pytest.approx(math.sqrt(63 / 12))

    def test_single_rank(self):
        summary = rank_summary([3], n_actors=8)
        assert summary.mean == 3.0 and summary.std == 0.0 and summary.n == 1

    def test_bounds_checked(self):
        with pytest.raises(ValidationError):
            rank_summary([0], n_actors=5)
        with pytest.raises(ValidationError):
            rank_summary([6], n_actors=5)
        with pytest.raises(ValidationError):
            rank_summary([], n_actors=5)

    def test_beats_baseline(self):
        assert rank_summary([1, 1, 2], n_actors=8).beats_baseline


class TestFrequencyReport:
    def _counts(self, pairs):
        return {TechniqueId(f"T{1000 + k}"): v for k, v in pairs}

    def test_identical_counts_correlate_perfectly(self):
        a = self._counts([(0, 3), (1, 7), (2, 1)])
        report = frequency_report(a, dict(a))
        assert report.correlation == pytest.approx(1.0)
        assert report.counts_a == report.counts_b == (3, 7, 1)

    def test_union_axis_zero_filled(self):
        a = self._counts([(0, 2), (1, 5)])
        b = self._counts([(1, 1), (2, 4)])
        report = frequency_report(a, b)
        assert [t.canonical for t in report.axis] == ["T1000", "T1001", "T1002"]
        assert report.counts_a == (2, 5, 0)
        assert report.counts_b == (0, 1, 4)

    def test_hand_pearson_fixtures(self):
        a = self._counts([(0, 1), (1, 3), (2, 2), (3, 4)])
        # reversing [1,3,2,4] negates every deviation, so exactly -1
        reverse = self._counts([(0, 4), (1, 2), (2, 3), (3, 1)])
        assert frequency_report(a, reverse).correlation == pytest.approx(-1.0)
        ramp = self._counts([(0, 1), (1, 2), (2, 3), (3, 4)])
        assert frequency_report(a, ramp).correlation == pytest.approx(0.8)

    def test_constant_side_has_no_correlation(self):
        a = self._counts([(0, 5), (1, 5), (2, 5)])
        b = self._counts([(0, 1), (1, 2), (2, 3)])
        assert frequency_report(a, b).correlation is None

    def test_degenerate_axis(self):
        assert frequency_report(self._counts([(0, 2)]), {}).correlation is None


class TestCorrelation:
    def test_pearson_hand_cases(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_degenerate_variance_returns_none(self):
        assert pearson([1, 1, 1], [1, 2, 3]) is None
        assert pearson([1, 2, 3], [5, 5, 5]) is None

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            pearson([1], [2])
        with pytest.raises(ValidationError):
            pearson([1, 2], [1, 2, 3])

    def test_spearman_is_rank_pearson(self):
        # monotone but nonlinear: rho = 1 while r < 1
        xs = [1, 2, 3, 4, 5]
        ys = [1, 8, 27, 64, 125]
        assert spearman(xs, ys) == pytest.approx(1.0)
        assert pearson(xs, ys) < 1.0

    def test_spearman_with_ties(self):
        assert spearman([1, 2, 2, 3], [10, 20, 20, 30]) == pytest.approx(1.0)
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


class TestHallucinationMetrics:
    def test_rate_counts_invalid_verdicts(self):
        verdicts = [
            HallucinationVerdict(VALID),
            HallucinationVerdict(VALID),
            HallucinationVerdict(UNKNOWN_ID),
            HallucinationVerdict(FABRICATED_SUBTECHNIQUE),
        ]
        assert hallucination_rate(verdicts) == pytest.approx(0.5)
        breakdown = hallucination_breakdown(verdicts)
        assert breakdown[UNKNOWN_ID] == 1
        assert breakdown[FABRICATED_SUBTECHNIQUE] == 1

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            hallucination_rate([])


class TestReportWriters:
    def test_comparison_csv_layout(self, tmp_path):
        rows = {"apt-b": compare_sets(frozenset("ab"), frozenset("bc")),
                "apt-a": compare_sets(frozenset("ab"), frozenset("ab"))}
        path = tmp_path / "cmp.csv"
        write_comparison_csv(rows, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "actor,jaccard,in_truth_not_pred_pct,in_pred_not_truth_pct"
        assert lines[1].startswith("apt-a,1.000000,0.0000,0.0000")
        assert lines[2].startswith("apt-b,")

    def test_rank_table_has_baseline_first(self, tmp_path):
        conditions = [ConditionResult("Uniform prior", (10.4, 11.0)),
                      ConditionResult("Expert prior", (7.6, 7.9))]
        text = format_rank_table(conditions, n_actors=29)
        lines = text.splitlines()
        assert "Baseline (random)" in lines[1] and "15.00" in lines[1]
        assert "Uniform prior" in lines[2]
        assert "Expert prior" in lines[3]
        write_rank_table(conditions, 29, tmp_path / "r.txt", tmp_path / "r.csv")
        csv_lines = (tmp_path / "r.csv").read_text(encoding="utf-8").splitlines()
        assert csv_lines[0] == "condition,mean_rank,std,n_folds"
        assert csv_lines[1].startswith("Baseline (random),15.0")

    def test_condition_result_stats(self):
        cond = ConditionResult("x", (1.0, 2.0, 3.0))
        assert cond.mean == 2.0
        assert cond.std == pytest.approx(1.0)
        assert ConditionResult("y", (5.0,)).std == 0.0


class TestRandomizedOracleSweep:
    def test_thousand_random_pairs_match_oracle(self):
        rng = random.Random(7)
        universe = [TechniqueId(f"T{1000 + i}") for i in range(30)]
        for _ in range(1000):
            truth = frozenset(rng.sample(universe, rng.randint(0, 12)))
            pred = frozenset(rng.sample(universe, rng.randint(0, 12)))
            assert compare_sets(truth, pred) == compare_sets_oracle(truth, pred)
