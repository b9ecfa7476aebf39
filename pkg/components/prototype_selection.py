# components/prototype_selection.py
import logging
from pathlib import Path
from typing import List, Sequence

import numpy as np

from core.errors import ConfigurationError
from core.rng import STREAM_CNN, derive_rng
from core.storage import write_json
from data.models import DissimilaritySample, PrototypeSet

logger = logging.getLogger(__name__)


def _nearest(store: np.ndarray, origins: np.ndarray, size: int, x: np.ndarray) -> int:
    """Position in the store of the nearest prototype; equal distances go to the lower origin index."""
    d2 = np.sum((store[:size] - x) ** 2, axis=1)
    ties = np.flatnonzero(d2 == d2.min())
    return int(ties[np.argmin(origins[ties])])


def condense(train: Sequence[DissimilaritySample], seed: int) -> PrototypeSet:
    """
    Hart's Condensed Nearest Neighbors on Euclidean distance.

    The store starts with the first sample of each class in a seeded visiting order. Passes over
    that order add every sample the current store misclassifies under 1-NN, until a full pass adds
    nothing. At that point every input sample is classified correctly by the store.
    """
    if len(train) == 0:
        raise ConfigurationError("Cannot condense an empty training set")

    X = np.vstack([s.u for s in train])
    y = np.array([int(s.label) for s in train])
    n = len(train)
    order = derive_rng(seed, STREAM_CNN).permutation(n)

    store = np.empty_like(X)
    origins = np.empty(n, dtype=np.int64)
    store_labels = np.empty(n, dtype=y.dtype)
    in_store = np.zeros(n, dtype=bool)
    size = 0

    def add(i: int) -> None:
        nonlocal size
        store[size], origins[size], store_labels[size] = X[i], i, y[i]
        in_store[i] = True
        size += 1

    seen_labels = set()
    for i in order:
        if y[i] not in seen_labels:
            seen_labels.add(y[i])
            add(int(i))

    passes = 0
    while True:
        passes += 1
        added = 0
        for i in order:
            if in_store[i]:
                continue
            j = _nearest(store, origins, size, X[i])
            if store_labels[j] != y[i]:
                add(int(i))
                added += 1
        if added == 0:
            break

    kept = np.sort(origins[:size])
    logger.info(f"[CNN] Kept {size} of {n} samples after {passes} passes")
    return PrototypeSet(samples=[train[i] for i in kept], origin_indices=[int(i) for i in kept])


def is_consistent(train: Sequence[DissimilaritySample], prototypes: PrototypeSet) -> bool:
    """True when 1-NN over the prototypes labels every training sample correctly."""
    X = np.vstack([s.u for s in train])
    y = np.array([int(s.label) for s in train])
    store = prototypes.vectors
    origins = np.asarray(prototypes.origin_indices)
    labels = prototypes.labels
    for x, label in zip(X, y):
        if labels[_nearest(store, origins, len(prototypes), x)] != label:
            return False
    return True


def write_prototypes_json(path: Path, prototypes: PrototypeSet, seed: int) -> Path:
    return write_json(path, {
        "seed": seed,
        "size": len(prototypes),
        "origin_indices": list(prototypes.origin_indices),
    })
