"""Shared fixtures: tiny writer sets, dissimilarity samples and wrapper contexts."""

from pathlib import Path
from typing import List

import numpy as np
import pytest

from components.bpso import WrapperContext
from components.dichotomy import build_optimization_queries, build_training_set
from components.prototype_selection import condense
from components.synthetic_data import generate, save_dataset, split
from core.config import ExperimentConfig, QueryCounts, TrainingPairs
from data.models import (
    DissimilaritySample,
    GeneratorSpec,
    IdpsoConfig,
    KernelParams,
    PrototypeSet,
    SampleLabel,
    SplitCounts,
)

TINY_SPEC = GeneratorSpec(
    n_writers=16,
    genuine_per_writer=8,
    skilled_per_writer=4,
    D=16,
    d_informative=4,
    writer_spread=1.0,
    center_spread=6.0,
    noise_spread=1.0,
    forgery_offset=3.0,
    duplicate_fraction=0.25,
    seed=3,
)
TINY_SPLIT = SplitCounts(train=4, validation=2, optimization=3, selection=3, exploitation=4)
TINY_REFERENCES = 4


def make_samples(X: np.ndarray, y: np.ndarray) -> List[DissimilaritySample]:
    """Dissimilarity samples from raw non-negative rows; labels are +1 / -1."""
    samples = []
    for i, (row, label) in enumerate(zip(X, y)):
        label = SampleLabel(int(label))
        writer = i + 1
        samples.append(DissimilaritySample(
            u=np.abs(row),
            label=label,
            questioned_writer=writer if label == SampleLabel.WITHIN_POSITIVE else writer + 1000,
            reference_writer=writer,
        ))
    return samples


def as_prototypes(samples: List[DissimilaritySample]) -> PrototypeSet:
    return PrototypeSet(samples=list(samples), origin_indices=list(range(len(samples))))


def two_clusters(seed: int, n: int = 100, d: int = 4, separation: float = 8.0, spread: float = 1.0):
    """Two Gaussian blobs in the positive orthant, one per label."""
    rng = np.random.default_rng(seed)
    half = n // 2
    near = np.abs(rng.normal(1.0, spread, size=(half, d)))
    far = np.abs(rng.normal(1.0 + separation, spread, size=(n - half, d)))
    X = np.vstack([near, far])
    y = np.array([1] * half + [-1] * (n - half))
    return X, y


@pytest.fixture(scope="session")
def tiny_writers():
    return generate(TINY_SPEC)


@pytest.fixture(scope="session")
def tiny_split(tiny_writers):
    return split(tiny_writers, TINY_SPLIT, seed=0)


@pytest.fixture(scope="session")
def tiny_prototypes(tiny_split):
    samples = build_training_set(tiny_split.train, 4, 4, seed=0, references=TINY_REFERENCES)
    return condense(samples, seed=0)


def _context(name, prototypes, part):
    bundles = build_optimization_queries(part, 4, 4, TINY_REFERENCES, seed=0)
    return WrapperContext(name, prototypes, bundles, KernelParams(gamma=0.05, c=1.0), seed=0)


@pytest.fixture
def opt_ctx(tiny_prototypes, tiny_split):
    return _context("opt", tiny_prototypes, tiny_split.optimization)


@pytest.fixture
def sel_ctx(tiny_prototypes, tiny_split):
    return _context("sel", tiny_prototypes, tiny_split.selection)


@pytest.fixture
def tiny_idpso():
    return IdpsoConfig(population=4, max_iterations=3, seed=0)


@pytest.fixture
def tiny_dataset_dir(tmp_path, tiny_writers) -> Path:
    directory = tmp_path / "data"
    save_dataset(directory, tiny_writers, TINY_SPEC)
    return directory


@pytest.fixture
def tiny_config(tmp_path, tiny_dataset_dir) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=tiny_dataset_dir / "dataset.csv",
        split=TINY_SPLIT,
        idpso=IdpsoConfig(population=4, max_iterations=3),
        kernel=KernelParams(gamma=0.05, c=1.0),
        references=TINY_REFERENCES,
        training=TrainingPairs(genuine_per_writer=4, random_forgeries_per_writer=4),
        queries=QueryCounts(genuine_q=4, skilled_q=4, random_q=2),
        replications=2,
        output_dir=tmp_path / "runs",
        seed=0,
    )


def pipeline_context(spec: GeneratorSpec, counts: SplitCounts = TINY_SPLIT, seed: int = 0,
                     kernel: KernelParams = KernelParams(gamma=0.05, c=1.0)) -> WrapperContext:
    """Full pipeline on a freshly generated set: condensed training prototypes plus exploitation queries."""
    parts = split(generate(spec), counts, seed)
    prototypes = condense(build_training_set(parts.train, 4, 4, seed=seed, references=TINY_REFERENCES), seed=seed)
    bundles = build_optimization_queries(parts.exploitation, 4, 4, TINY_REFERENCES, seed)
    return WrapperContext("exploit", prototypes, bundles, kernel, seed)
