# components/metrics.py
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from core.errors import MetricError
from core.storage import format_float, write_rows_csv
from data.models import EerReport, ScoredQuery, Truth

logger = logging.getLogger(__name__)

NegativeClass = Literal["skilled_only", "random_only"]

NEGATIVE_TRUTH: Dict[str, Truth] = {
    "skilled_only": Truth.SKILLED,
    "random_only": Truth.RANDOM,
}


def _split_scores(scores: Iterable[ScoredQuery], negatives: NegativeClass) -> Tuple[np.ndarray, np.ndarray]:
    if negatives not in NEGATIVE_TRUTH:
        raise MetricError(f"Unknown negative class '{negatives}'")
    negative_truth = NEGATIVE_TRUTH[negatives]
    genuine, negative = [], []
    for s in scores:
        if s.truth == Truth.GENUINE:
            genuine.append(s.score)
        elif s.truth == negative_truth:
            negative.append(s.score)
    if not genuine:
        raise MetricError("No genuine queries to compute FRR")
    if not negative:
        raise MetricError(f"No {negative_truth.value} queries to compute FAR")
    return np.sort(np.asarray(genuine)), np.sort(np.asarray(negative))


def _error_counts(genuine: np.ndarray, negative: np.ndarray, thresholds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(false accepts, false rejects) per threshold under accept <=> score >= threshold; inputs sorted."""
    false_rejects = np.searchsorted(genuine, thresholds, side="left")
    false_accepts = negative.shape[0] - np.searchsorted(negative, thresholds, side="left")
    return false_accepts, false_rejects


def far_frr(scores: Sequence[ScoredQuery], threshold: float,
            negatives: NegativeClass = "skilled_only") -> Tuple[float, float]:
    genuine, negative = _split_scores(scores, negatives)
    fa, fr = _error_counts(genuine, negative, np.array([threshold]))
    return float(fa[0]) / negative.shape[0], float(fr[0]) / genuine.shape[0]


def _equal_error(genuine: np.ndarray, negative: np.ndarray) -> Tuple[float, float]:
    """
    Sweep distinct scores and the midpoints between them. Picks the threshold minimizing
    |FAR - FRR|, then FAR + FRR, then the threshold itself; comparisons use integer counts
    so ties are exact.
    """
    distinct = np.unique(np.concatenate([genuine, negative]))
    thresholds = np.concatenate([distinct, (distinct[:-1] + distinct[1:]) / 2.0])

    n_gen, n_neg = genuine.shape[0], negative.shape[0]
    fa, fr = _error_counts(genuine, negative, thresholds)
    imbalance = np.abs(fa * n_gen - fr * n_neg)
    total = fa * n_gen + fr * n_neg
    best = np.lexsort((thresholds, total, imbalance))[0]

    far = fa[best] / n_neg
    frr = fr[best] / n_gen
    return float((far + frr) / 2.0), float(thresholds[best])


def user_eer(scores: Sequence[ScoredQuery], negatives: NegativeClass = "skilled_only") -> Tuple[float, float]:
    """EER and threshold of one writer's queries."""
    writers = {s.writer_id for s in scores}
    if len(writers) > 1:
        raise MetricError(f"user_eer expects the queries of one writer, got {len(writers)}")
    genuine, negative = _split_scores(scores, negatives)
    return _equal_error(genuine, negative)


def global_eer(scores: Sequence[ScoredQuery], negatives: NegativeClass = "skilled_only") -> Tuple[float, float]:
    """EER with a single threshold shared by all writers."""
    genuine, negative = _split_scores(scores, negatives)
    return _equal_error(genuine, negative)


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    if len(values) == 0:
        raise MetricError("Cannot aggregate an empty list")
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def aggregate_eer(per_writer: Sequence[Tuple[int, float]],
                  thresholds: Optional[Dict[int, float]] = None) -> EerReport:
    if len(per_writer) == 0:
        raise MetricError("No writers to aggregate")
    mean, std = mean_std([eer for _, eer in per_writer])
    return EerReport(
        per_writer_eer={int(w): float(eer) for w, eer in per_writer},
        mean_eer=mean,
        std_eer=std,
        thresholds=dict(thresholds or {}),
    )


def group_by_writer(scores: Iterable[ScoredQuery]) -> Dict[int, List[ScoredQuery]]:
    grouped: Dict[int, List[ScoredQuery]] = defaultdict(list)
    for s in scores:
        grouped[s.writer_id].append(s)
    return dict(grouped)


def writer_report(scores: Sequence[ScoredQuery], negatives: NegativeClass = "skilled_only") -> EerReport:
    """User-threshold EER of every writer, aggregated."""
    per_writer, thresholds = [], {}
    for writer_id, writer_scores in sorted(group_by_writer(scores).items()):
        eer, threshold = user_eer(writer_scores, negatives)
        per_writer.append((writer_id, eer))
        thresholds[writer_id] = threshold
    return aggregate_eer(per_writer, thresholds)


EER_REPORT_FIELDS = ["writer_id", "eer", "threshold"]


def write_eer_report_csv(path: Path, report: EerReport) -> Path:
    rows = [
        {
            "writer_id": writer_id,
            "eer": format_float(eer),
            "threshold": format_float(report.thresholds.get(writer_id)),
        }
        for writer_id, eer in sorted(report.per_writer_eer.items())
    ]
    rows.append({"writer_id": "mean", "eer": format_float(report.mean_eer), "threshold": ""})
    rows.append({"writer_id": "std", "eer": format_float(report.std_eer), "threshold": ""})
    logger.debug(f"[EVAL] Writing EER report for {len(report.per_writer_eer)} writers to {path}")
    return write_rows_csv(path, EER_REPORT_FIELDS, rows)
