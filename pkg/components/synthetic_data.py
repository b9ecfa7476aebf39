# components/synthetic_data.py
"""
Synthetic multi-writer feature sets with planted informative and redundant dimensions.

Writers are Gaussian clusters in the informative subspace. Skilled forgeries sit at a fixed
offset from their victim's center, so they fall between the victim's genuines and other writers.
Redundant dimensions carry either independent noise or an exact copy of an informative dimension.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.errors import ConfigurationError, DatasetError, DimensionError
from core.rng import STREAM_LAYOUT, STREAM_SPLIT, STREAM_WRITER, derive_rng
from core.storage import dataset_paths, read_dataset_csv, read_json, write_dataset_csv, write_json
from data.models import (
    EvalSplit,
    FeatureVector,
    GeneratorSpec,
    NoiseKind,
    SignatureKind,
    SignatureRecord,
    SplitCounts,
    WriterSet,
)

logger = logging.getLogger(__name__)


class DimensionLayout(BaseModel):
    """Ground truth of a generated feature space; never shown to the optimizer."""

    model_config = ConfigDict(frozen=True)

    informative: List[int]
    redundant: List[int]
    noise_kinds: List[NoiseKind]
    duplicate_sources: Dict[int, int]


def dimension_layout(spec: GeneratorSpec) -> DimensionLayout:
    rng = derive_rng(spec.layout_seed, STREAM_LAYOUT, spec.D, spec.d_informative)
    informative = np.sort(rng.choice(spec.D, size=spec.d_informative, replace=False))
    redundant = np.setdiff1d(np.arange(spec.D), informative)

    n_duplicates = int(round(spec.duplicate_fraction * len(redundant)))
    duplicated = set(rng.choice(len(redundant), size=n_duplicates, replace=False).tolist())
    if spec.noise_kinds is not None:
        kinds = list(spec.noise_kinds)
    else:
        kinds = [NoiseKind.DUPLICATE_OF_INFORMATIVE if i in duplicated else NoiseKind.PURE_NOISE
                 for i in range(len(redundant))]

    sources = {}
    for dim, kind in zip(redundant, kinds):
        source = int(rng.choice(informative))
        if kind == NoiseKind.DUPLICATE_OF_INFORMATIVE:
            sources[int(dim)] = source

    return DimensionLayout(
        informative=informative.tolist(),
        redundant=redundant.tolist(),
        noise_kinds=kinds,
        duplicate_sources=sources,
    )


def _writer_records(spec: GeneratorSpec, layout: DimensionLayout, writer_id: int) -> List[SignatureRecord]:
    rng = derive_rng(spec.seed, STREAM_WRITER, writer_id)
    d = spec.d_informative

    center = rng.normal(0.0, spec.center_spread, size=d)
    genuine = center + rng.normal(0.0, spec.writer_spread, size=(spec.genuine_per_writer, d))

    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    forger_center = center + spec.forgery_offset * spec.writer_spread * direction
    skilled = forger_center + rng.normal(0.0, spec.writer_spread, size=(spec.skilled_per_writer, d))

    informative_part = np.vstack([genuine, skilled])
    n = informative_part.shape[0]
    X = np.empty((n, spec.D))
    X[:, layout.informative] = informative_part
    for dim, kind in zip(layout.redundant, layout.noise_kinds):
        if kind == NoiseKind.PURE_NOISE:
            X[:, dim] = rng.normal(0.0, spec.noise_spread, size=n)
    for dim, source in layout.duplicate_sources.items():
        X[:, dim] = X[:, source]

    kinds = [SignatureKind.GENUINE] * spec.genuine_per_writer + [SignatureKind.SKILLED_FORGERY] * spec.skilled_per_writer
    return [
        SignatureRecord(writer_id=writer_id, kind=kind, features=FeatureVector(values=row))
        for kind, row in zip(kinds, X)
    ]


def generate(spec: GeneratorSpec) -> WriterSet:
    layout = dimension_layout(spec)
    writers = {}
    for k in range(spec.n_writers):
        writer_id = spec.writer_id_offset + k + 1
        writers[writer_id] = _writer_records(spec, layout, writer_id)
    logger.info(f"[GEN] {spec.n_writers} writers, D={spec.D} ({spec.d_informative} informative, "
                f"{len(layout.duplicate_sources)} duplicated), forgery_offset={spec.forgery_offset}")
    return WriterSet(writers=writers)


def build_manifest(spec: GeneratorSpec) -> Dict[str, Any]:
    layout = dimension_layout(spec)
    return {
        "spec": spec.model_dump(mode="json"),
        "informative_dims": layout.informative,
        "redundant_dims": layout.redundant,
        "noise_kinds": [k.value for k in layout.noise_kinds],
        "duplicate_sources": {str(k): v for k, v in sorted(layout.duplicate_sources.items())},
        "writer_ids": [spec.writer_id_offset + 1, spec.writer_id_offset + spec.n_writers],
    }


def split(ws: WriterSet, counts: Union[SplitCounts, Tuple[int, int, int, int, int]], seed: int) -> EvalSplit:
    """Seeded partition of the writers into train / validation / optimization / selection / exploitation."""
    if not isinstance(counts, SplitCounts):
        counts = SplitCounts(**dict(zip(SplitCounts.model_fields, counts)))
    if counts.total > len(ws):
        raise ConfigurationError(f"Split needs {counts.total} writers, dataset has {len(ws)}")

    ids = ws.writer_ids
    shuffled = [ids[i] for i in derive_rng(seed, STREAM_SPLIT).permutation(len(ids))]
    parts, start = {}, 0
    for name, size in zip(SplitCounts.model_fields, counts.as_tuple()):
        parts[name] = ws.subset(shuffled[start:start + size])
        start += size
    logger.info(f"[SPLIT] seed={seed} " + " ".join(f"{k}={len(v)}" for k, v in parts.items()))
    return EvalSplit(**parts)


def align_target_spec(spec_a: GeneratorSpec, spec_b: GeneratorSpec) -> GeneratorSpec:
    """Checks that spec_b can share spec_a's layout and moves its writer ids past spec_a's when they collide."""
    if spec_a.D != spec_b.D:
        raise DimensionError(f"Transfer pair needs equal D, got {spec_a.D} and {spec_b.D}")
    if spec_a.d_informative != spec_b.d_informative or spec_a.layout_seed != spec_b.layout_seed:
        raise ConfigurationError("Transfer pair must share d_informative and layout_seed")

    a_first, a_last = spec_a.writer_id_offset + 1, spec_a.writer_id_offset + spec_a.n_writers
    b_first, b_last = spec_b.writer_id_offset + 1, spec_b.writer_id_offset + spec_b.n_writers
    if b_first <= a_last and a_first <= b_last:
        spec_b = spec_b.model_copy(update={"writer_id_offset": a_last})
        logger.info(f"[GEN] Target writer ids shifted to start at {a_last + 1}")
    return spec_b


def generate_transfer_pair(spec_a: GeneratorSpec, spec_b: GeneratorSpec) -> Tuple[WriterSet, WriterSet]:
    """Two datasets sharing the informative layout, with disjoint writer ids."""
    return generate(spec_a), generate(align_target_spec(spec_a, spec_b))


# ===== DATASET FILES =====

def save_dataset(directory: Path, ws: WriterSet, spec: GeneratorSpec) -> Tuple[Path, Path]:
    csv_path, manifest_path = dataset_paths(directory)
    write_dataset_csv(csv_path, ws)
    write_json(manifest_path, build_manifest(spec))
    return csv_path, manifest_path


def load_dataset(path: Path) -> WriterSet:
    """Load dataset.csv, given the file itself or its directory."""
    path = Path(path)
    if path.is_dir():
        path = dataset_paths(path)[0]
    return read_dataset_csv(path)


def load_manifest_spec(manifest_path: Path) -> GeneratorSpec:
    raw = read_json(manifest_path)
    try:
        return GeneratorSpec.model_validate(raw["spec"])
    except (KeyError, ValueError) as e:
        raise DatasetError(f"{manifest_path} does not record a generator spec: {e}")
