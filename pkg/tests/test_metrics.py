from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from components.metrics import (
    aggregate_eer,
    far_frr,
    global_eer,
    mean_std,
    user_eer,
    write_eer_report_csv,
    writer_report,
)
from core.errors import MetricError
from core.storage import read_rows_csv
from data.models import ScoredQuery, Truth


def queries(genuine, negative, writer=1, truth=Truth.SKILLED):
    return ([ScoredQuery(writer_id=writer, truth=Truth.GENUINE, score=s) for s in genuine]
            + [ScoredQuery(writer_id=writer, truth=truth, score=s) for s in negative])


def sweep_oracle(genuine, negative):
    """Exhaustive sweep over scores and midpoints with exact rational rates."""
    distinct = sorted(set(genuine) | set(negative))
    candidates = distinct + [(a + b) / 2 for a, b in zip(distinct, distinct[1:])]
    best = None
    for t in candidates:
        far = Fraction(sum(1 for s in negative if s >= t), len(negative))
        frr = Fraction(sum(1 for s in genuine if s < t), len(genuine))
        key = (abs(far - frr), far + frr, t)
        if best is None or key < best[0]:
            best = (key, float((far + frr) / 2), t)
    return best[1], best[2]


class TestFarFrr:
    def test_perfect_separation(self):
        assert far_frr(queries([1.0], [0.0]), 0.5) == (0.0, 0.0)

    def test_inverted(self):
        assert far_frr(queries([0.0], [1.0]), 0.5) == (1.0, 1.0)

    def test_matches_counting(self):
        rng = np.random.default_rng(0)
        genuine, skilled = rng.normal(size=10).tolist(), rng.normal(size=10).tolist()
        for t in rng.normal(size=20):
            far, frr = far_frr(queries(genuine, skilled), float(t))
            assert far == sum(s >= t for s in skilled) / 10
            assert frr == sum(s < t for s in genuine) / 10

    def test_random_negatives(self):
        scores = queries([1.0], [0.0]) + [ScoredQuery(writer_id=1, truth=Truth.RANDOM, score=2.0)]
        assert far_frr(scores, 0.5, negatives="random_only") == (1.0, 0.0)

    def test_missing_class(self):
        with pytest.raises(MetricError):
            far_frr(queries([1.0], []), 0.5)
        with pytest.raises(MetricError):
            far_frr(queries([], [1.0]), 0.5)


class TestUserEer:
    def test_separable(self):
        eer, threshold = user_eer(queries([0.9, 0.8], [0.1, 0.2]))
        assert eer == 0.0
        assert 0.2 < threshold <= 0.8

    def test_interleaved(self):
        eer, _ = user_eer(queries([0.9, 0.2], [0.1, 0.8]))
        assert eer == 0.5

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_exhaustive_sweep(self, seed):
        rng = np.random.default_rng(seed)
        n_gen, n_neg = int(rng.integers(1, 15)), int(rng.integers(1, 15))
        # rounding creates ties between and within classes
        genuine = np.round(rng.normal(0.5, 1.0, n_gen), 1).tolist()
        negative = np.round(rng.normal(0.0, 1.0, n_neg), 1).tolist()
        eer, threshold = user_eer(queries(genuine, negative))
        expected_eer, expected_threshold = sweep_oracle(genuine, negative)
        assert eer == pytest.approx(expected_eer, abs=1e-12)
        assert threshold == expected_threshold

        ordered = sorted(set(genuine + negative))
        rates = [far_frr(queries(genuine, negative), t) for t in ordered]
        assert all(a[0] >= b[0] and a[1] <= b[1] for a, b in zip(rates, rates[1:]))

    @settings(max_examples=50, deadline=None)
    @given(
        genuine=st.lists(st.integers(-50, 50), min_size=1, max_size=12),
        negative=st.lists(st.integers(-50, 50), min_size=1, max_size=12),
    )
    def test_invariant_under_increasing_transform(self, genuine, negative):
        eer, _ = user_eer(queries(genuine, negative))
        transformed, _ = user_eer(queries([3.0 * s + 7 for s in genuine], [3.0 * s + 7 for s in negative]))
        assert eer == transformed
        assert 0.0 <= eer <= 1.0

    def test_rejects_several_writers(self):
        with pytest.raises(MetricError):
            user_eer(queries([1.0], [0.0], writer=1) + queries([1.0], [0.0], writer=2))

    def test_missing_skilled(self):
        with pytest.raises(MetricError):
            user_eer(queries([1.0, 0.5], [0.0], truth=Truth.RANDOM))


class TestAggregation:
    def test_single_writer(self):
        report = aggregate_eer([(1, 0.04)])
        assert report.mean_eer == 0.04
        assert report.std_eer == 0.0

    def test_two_writers(self):
        assert aggregate_eer([(1, 0.0), (2, 0.1)]).mean_eer == pytest.approx(0.05)

    def test_matches_two_pass_statistics(self):
        values = np.random.default_rng(3).uniform(0, 0.5, size=145).tolist()
        report = aggregate_eer(list(enumerate(values)))
        mean = sum(values) / len(values)
        variance = sum((v - mean) ** 2 for v in values) / len(values)
        assert report.mean_eer == pytest.approx(mean, rel=1e-12)
        assert report.std_eer == pytest.approx(variance ** 0.5, rel=1e-9)

    def test_empty(self):
        with pytest.raises(MetricError):
            aggregate_eer([])
        with pytest.raises(MetricError):
            mean_std([])


def test_writer_report_and_global_threshold():
    scores = queries([0.9, 0.8], [0.1, 0.2], writer=1) + queries([1.9, 1.8], [1.1, 1.2], writer=2)
    report = writer_report(scores)
    assert report.per_writer_eer == {1: 0.0, 2: 0.0}
    assert set(report.thresholds) == {1, 2}
    # one shared threshold cannot separate both writers
    assert global_eer(scores)[0] > 0.0


def test_eer_report_csv_has_footer(tmp_path):
    report = aggregate_eer([(1, 0.1), (2, 0.3)], thresholds={1: 0.5, 2: -0.2})
    rows = read_rows_csv(write_eer_report_csv(tmp_path / "eer_report.csv", report), ["writer_id", "eer", "threshold"])
    assert [r["writer_id"] for r in rows] == ["1", "2", "mean", "std"]
    assert float(rows[2]["eer"]) == pytest.approx(0.2)
    assert float(rows[3]["eer"]) == pytest.approx(0.1)
