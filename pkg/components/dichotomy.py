# components/dichotomy.py
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import ConfigurationError, DimensionError, FusionError, ProtocolError
from core.rng import STREAM_PAIRING, derive_rng
from core.storage import write_rows_csv
from data.models import (
    DissimilaritySample,
    FeatureVector,
    QueryBundle,
    SampleLabel,
    SignatureRecord,
    Truth,
    WriterSet,
)

logger = logging.getLogger(__name__)

VectorLike = Union[FeatureVector, np.ndarray, Sequence[float]]

# Pairing sub-streams so training, query and donor draws never share random numbers
_PART_GENUINES = 0
_PART_SKILLED = 1
_PART_DONORS = 2


def _values(v: VectorLike) -> np.ndarray:
    return v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=float)


def dichotomy_transform(xq: VectorLike, xr: VectorLike) -> np.ndarray:
    """Elementwise absolute difference between a questioned and a reference vector."""
    a, b = _values(xq), _values(xr)
    if a.shape != b.shape:
        raise DimensionError(f"Cannot compare vectors of shapes {a.shape} and {b.shape}")
    return np.abs(a - b)


def fuse_max(scores: Sequence[float]) -> float:
    """MAX fusion of the per-reference signed distances of one query."""
    if len(scores) == 0:
        raise FusionError("Cannot fuse an empty score list")
    return float(np.max(np.asarray(scores, dtype=float)))


# --- Reference / questioned partition ---

def partition_genuines(ws: WriterSet, writer_id: int, references: int, questioned: int,
                       seed: int) -> Tuple[List[SignatureRecord], List[SignatureRecord]]:
    """
    Draws the writer's references and questioned genuines from disjoint positions.
    The draw depends only on (seed, writer), so every protocol built with the same seed
    reuses the same references for a writer.
    """
    genuines = ws.genuine(writer_id)
    needed = references + questioned
    if len(genuines) < needed:
        raise ConfigurationError(
            f"Writer {writer_id} has {len(genuines)} genuine signatures; "
            f"{references} references + {questioned} questioned are required"
        )
    order = derive_rng(seed, STREAM_PAIRING, writer_id, _PART_GENUINES).permutation(len(genuines))
    ref_idx, q_idx = order[:references], order[references:needed]
    if set(ref_idx.tolist()) & set(q_idx.tolist()):
        raise ProtocolError(f"Writer {writer_id}: questioned genuines overlap the references")
    return [genuines[i] for i in ref_idx], [genuines[i] for i in q_idx]


def _draw_donors(ws: WriterSet, writer_id: int, count: int, seed: int) -> List[SignatureRecord]:
    """One genuine signature from each of `count` distinct other writers (cycling only if too few exist)."""
    if count == 0:
        return []
    others = [w for w in ws.writer_ids if w != writer_id]
    if not others:
        raise ConfigurationError(f"Writer {writer_id} has no other writers to draw random forgeries from")
    rng = derive_rng(seed, STREAM_PAIRING, writer_id, _PART_DONORS)
    donors: List[int] = []
    while len(donors) < count:
        donors.extend(others[i] for i in rng.permutation(len(others)))
    donors = donors[:count]
    picks = []
    for donor in donors:
        genuines = ws.genuine(donor)
        picks.append(genuines[int(rng.integers(len(genuines)))])
    return picks


# --- Training set ---

def build_training_set(split_part: WriterSet, genuine_per_writer: int, random_forgeries_per_writer: int,
                       seed: int, references: int = 12) -> List[DissimilaritySample]:
    """
    Dissimilarity samples for the writer-independent classifier.
    Positives pair each questioned genuine with every reference of its writer; negatives pair
    genuine signatures of other writers (random forgeries) with the same references.
    Skilled forgeries are never used here.
    """
    samples: List[DissimilaritySample] = []
    for writer_id in split_part.writer_ids:
        refs, questioned = partition_genuines(split_part, writer_id, references, genuine_per_writer, seed)
        forgeries = _draw_donors(split_part, writer_id, random_forgeries_per_writer, seed)

        for q in questioned:
            for r in refs:
                samples.append(DissimilaritySample(
                    u=dichotomy_transform(q.features, r.features),
                    label=SampleLabel.WITHIN_POSITIVE,
                    questioned_writer=writer_id,
                    reference_writer=writer_id,
                ))
        for f in forgeries:
            for r in refs:
                samples.append(DissimilaritySample(
                    u=dichotomy_transform(f.features, r.features),
                    label=SampleLabel.BETWEEN_NEGATIVE,
                    questioned_writer=f.writer_id,
                    reference_writer=writer_id,
                ))

    n_pos = sum(1 for s in samples if s.label == SampleLabel.WITHIN_POSITIVE)
    logger.info(f"[PAIRS] {len(samples)} training samples ({n_pos} within, {len(samples) - n_pos} between) "
                f"from {len(split_part)} writers")
    return samples


def build_validation_set(split_part: WriterSet, genuine_per_writer: int, random_forgeries_per_writer: int,
                         seed: int, references: int = 12) -> List[DissimilaritySample]:
    """Held-out samples built with the training protocol, for checking the trained dichotomizer."""
    return build_training_set(split_part, genuine_per_writer, random_forgeries_per_writer, seed, references)


# --- Verification queries ---

def build_optimization_queries(split_part: WriterSet, genuine_q: int, skilled_q: int, refs: int, seed: int,
                               random_q: int = 0) -> List[QueryBundle]:
    """
    Per writer: genuine_q genuine queries, skilled_q skilled-forgery queries and optionally random_q
    random-forgery queries, each carrying the writer's `refs` references.
    """
    bundles: List[QueryBundle] = []
    for writer_id in split_part.writer_ids:
        references, questioned = partition_genuines(split_part, writer_id, refs, genuine_q, seed)

        skilled = split_part.skilled(writer_id)
        if len(skilled) < skilled_q:
            raise ConfigurationError(
                f"Writer {writer_id} has {len(skilled)} skilled forgeries; {skilled_q} are required"
            )
        order = derive_rng(seed, STREAM_PAIRING, writer_id, _PART_SKILLED).permutation(len(skilled))
        forgeries = [skilled[i] for i in order[:skilled_q]]

        bundles.extend(QueryBundle(questioned=q, references=references, truth=Truth.GENUINE) for q in questioned)
        bundles.extend(QueryBundle(questioned=f, references=references, truth=Truth.SKILLED) for f in forgeries)
        bundles.extend(
            QueryBundle(questioned=f, references=references, truth=Truth.RANDOM)
            for f in _draw_donors(split_part, writer_id, random_q, seed)
        )

    logger.info(f"[PAIRS] {len(bundles)} query bundles from {len(split_part)} writers")
    return bundles


def stack_bundles(bundles: Sequence[QueryBundle]) -> np.ndarray:
    """Dissimilarity tensor of shape (n_bundles, R, D), one row per reference."""
    if not bundles:
        raise ConfigurationError("No query bundles to stack")
    n_refs = {len(b.references) for b in bundles}
    if len(n_refs) != 1:
        raise ConfigurationError(f"Query bundles carry different reference counts: {sorted(n_refs)}")
    questioned = np.vstack([b.questioned.features.values for b in bundles])
    references = np.stack([np.vstack([r.features.values for r in b.references]) for b in bundles])
    if questioned.shape[1] != references.shape[2]:
        raise DimensionError("Questioned and reference vectors differ in dimension")
    return np.abs(questioned[:, None, :] - references)


# --- Audit dump ---

PAIRS_FIELDS = ["questioned_writer", "reference_writer", "truth", "label"]


def write_pairs_csv(path: Path, samples: Optional[Sequence[DissimilaritySample]] = None,
                    bundles: Optional[Sequence[QueryBundle]] = None) -> Path:
    rows = []
    for s in samples or []:
        within = s.label == SampleLabel.WITHIN_POSITIVE
        rows.append({
            "questioned_writer": s.questioned_writer,
            "reference_writer": s.reference_writer,
            "truth": Truth.GENUINE.value if within else Truth.RANDOM.value,
            "label": "within_positive" if within else "between_negative",
        })
    for b in bundles or []:
        label = "within_positive" if b.truth == Truth.GENUINE else "between_negative"
        for r in b.references:
            rows.append({
                "questioned_writer": b.questioned.writer_id,
                "reference_writer": r.writer_id,
                "truth": b.truth.value,
                "label": label,
            })
    return write_rows_csv(path, PAIRS_FIELDS, rows)
