# data/models/models.py
# All value types shared by the pipeline are consolidated here to avoid circular imports

import math
from enum import Enum, IntEnum
from functools import cached_property
from typing import Annotated, Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.errors import DimensionError, InvalidMaskError


class ArrayModel(BaseModel):
    """Frozen model that may hold numpy arrays; equality compares arrays elementwise."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def __eq__(self, other: Any) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        for name in type(self).model_fields:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True


def _frozen_array(value: Any, dtype) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# ===== ENUMS =====

class SignatureKind(str, Enum):
    GENUINE = "genuine"
    SKILLED_FORGERY = "skilled"


class Truth(str, Enum):
    """Ground truth of a questioned signature at verification time."""
    GENUINE = "genuine"
    SKILLED = "skilled"
    RANDOM = "random"


class SampleLabel(IntEnum):
    """Dissimilarity-space class; the value doubles as the SVM target."""
    WITHIN_POSITIVE = 1
    BETWEEN_NEGATIVE = -1


class StrategyKind(str, Enum):
    NV = "nv"
    PV = "pv"
    GV = "gv"


class NoiseKind(str, Enum):
    PURE_NOISE = "pure_noise"
    DUPLICATE_OF_INFORMATIVE = "duplicate_of_informative"


# ===== FEATURE SPACE =====

class FeatureVector(ArrayModel):
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, v):
        arr = _frozen_array(v, float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature vectors must be finite")
        return arr

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


class FeatureMask(ArrayModel):
    """Binary selection over feature dimensions; "1" keeps the feature."""

    bits: np.ndarray
    count: int = -1

    @model_validator(mode="before")
    @classmethod
    def _derive_count(cls, data):
        if isinstance(data, dict):
            bits = _frozen_array(data.get("bits"), bool)
            data = {**data, "bits": bits, "count": int(bits.sum())}
        return data

    @classmethod
    def all_ones(cls, dimension: int) -> "FeatureMask":
        return cls(bits=np.ones(dimension, dtype=bool))

    @classmethod
    def from_indices(cls, dimension: int, indices) -> "FeatureMask":
        bits = np.zeros(dimension, dtype=bool)
        bits[list(indices)] = True
        return cls(bits=bits)

    @classmethod
    def from_hex(cls, hex_bits: str, dimension: int) -> "FeatureMask":
        raw = np.frombuffer(bytes.fromhex(hex_bits), dtype=np.uint8)
        bits = np.unpackbits(raw)[:dimension]
        if bits.shape[0] != dimension:
            raise ValueError(f"hex mask too short for dimension {dimension}")
        return cls(bits=bits.astype(bool))

    @property
    def dimension(self) -> int:
        return int(self.bits.shape[0])

    @cached_property
    def key(self) -> bytes:
        """Hashable, order-preserving key: packed bits, MSB first."""
        return np.packbits(self.bits).tobytes()

    def to_hex(self) -> str:
        return self.key.hex()

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def hamming(self, other: "FeatureMask") -> int:
        return int(np.count_nonzero(self.bits != other.bits))

    def __hash__(self) -> int:
        return hash((self.dimension, self.key))


def apply_mask(v, m: FeatureMask) -> np.ndarray:
    """Entries of v where m is set, in ascending index order. Accepts a FeatureVector or an array (last axis masked)."""
    values = v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=float)
    if values.shape[-1] != m.dimension:
        raise DimensionError(f"Vector of length {values.shape[-1]} cannot take a mask of length {m.dimension}")
    if m.count < 1:
        raise InvalidMaskError("Mask selects no features")
    return values[..., m.bits]


# ===== SIGNATURES AND WRITERS =====

class SignatureRecord(ArrayModel):
    """One signature; skilled forgeries carry the id of the writer they imitate."""

    writer_id: int
    kind: SignatureKind
    features: FeatureVector


class WriterSet(ArrayModel):
    writers: Dict[int, List[SignatureRecord]]

    @model_validator(mode="after")
    def _check_writers(self):
        dims = set()
        for writer_id, records in self.writers.items():
            if not any(r.kind == SignatureKind.GENUINE for r in records):
                raise ValueError(f"writer {writer_id} has no genuine signature")
            for r in records:
                if r.writer_id != writer_id:
                    raise ValueError(f"record of writer {r.writer_id} filed under writer {writer_id}")
                dims.add(r.features.dimension)
        if len(dims) > 1:
            raise ValueError(f"mixed feature dimensions {sorted(dims)}")
        return self

    @property
    def writer_ids(self) -> List[int]:
        return sorted(self.writers)

    @property
    def dimension(self) -> int:
        for records in self.writers.values():
            return records[0].features.dimension
        return 0

    def genuine(self, writer_id: int) -> List[SignatureRecord]:
        return [r for r in self.writers[writer_id] if r.kind == SignatureKind.GENUINE]

    def skilled(self, writer_id: int) -> List[SignatureRecord]:
        return [r for r in self.writers[writer_id] if r.kind == SignatureKind.SKILLED_FORGERY]

    def subset(self, writer_ids) -> "WriterSet":
        return WriterSet(writers={w: self.writers[w] for w in sorted(writer_ids)})

    def __len__(self) -> int:
        return len(self.writers)


class EvalSplit(ArrayModel):
    train: WriterSet
    validation: WriterSet
    optimization: WriterSet
    selection: WriterSet
    exploitation: WriterSet

    @model_validator(mode="after")
    def _check_disjoint(self):
        parts = self.parts()
        names = list(parts)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                shared = set(parts[a].writers) & set(parts[b].writers)
                if shared:
                    raise ValueError(f"{a} and {b} share writers {sorted(shared)[:5]}")
        return self

    def parts(self) -> Dict[str, WriterSet]:
        return {
            "train": self.train,
            "validation": self.validation,
            "optimization": self.optimization,
            "selection": self.selection,
            "exploitation": self.exploitation,
        }


# ===== DISSIMILARITY SPACE =====

class DissimilaritySample(ArrayModel):
    u: np.ndarray
    label: SampleLabel
    questioned_writer: int
    reference_writer: int

    @field_validator("u", mode="before")
    @classmethod
    def _coerce(cls, v):
        arr = _frozen_array(v, float)
        if np.any(arr < 0):
            raise ValueError("dissimilarity vectors are non-negative")
        return arr

    @model_validator(mode="after")
    def _check_label(self):
        if self.label == SampleLabel.WITHIN_POSITIVE and self.questioned_writer != self.reference_writer:
            raise ValueError("within-class samples pair signatures of the same writer")
        return self


class QueryBundle(ArrayModel):
    questioned: SignatureRecord
    references: List[SignatureRecord]
    truth: Truth

    @model_validator(mode="after")
    def _check_references(self):
        if not self.references:
            raise ValueError("a query needs at least one reference")
        claimed = self.references[0].writer_id
        for r in self.references:
            if r.kind != SignatureKind.GENUINE or r.writer_id != claimed:
                raise ValueError("references must be genuine signatures of the claimed writer")
        return self

    @property
    def claimed_writer(self) -> int:
        return self.references[0].writer_id


class PrototypeSet(ArrayModel):
    samples: List[DissimilaritySample]
    origin_indices: List[int]

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.samples) != len(self.origin_indices):
            raise ValueError("one origin index per prototype")
        return self

    @cached_property
    def vectors(self) -> np.ndarray:
        return np.vstack([s.u for s in self.samples])

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=float)

    @property
    def dimension(self) -> int:
        return int(self.samples[0].u.shape[0]) if self.samples else 0

    def __len__(self) -> int:
        return len(self.samples)


# ===== DICHOTOMIZER =====

class KernelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=2.0 ** -11, gt=0)
    c: float = Field(default=1.0, gt=0)


class TrainedModel(ArrayModel):
    support_vectors: np.ndarray          # (n_sv, mask.count), already masked
    dual_coefficients: np.ndarray        # alpha_i * y_i
    bias: float
    params: KernelParams
    mask: FeatureMask
    weight_norm: float                   # ||w|| in kernel space
    support_indices: np.ndarray          # positions in the training PrototypeSet
    seed: int = 0
    iterations: int = 0
    max_violation: float = 0.0

    @model_validator(mode="after")
    def _check_box(self):
        if np.any(np.abs(self.dual_coefficients) > self.params.c * (1 + 1e-12)):
            raise ValueError("dual coefficients exceed the box constraint")
        return self


# ===== METRICS =====

class ScoredQuery(BaseModel):
    model_config = ConfigDict(frozen=True)

    writer_id: int
    truth: Truth
    score: float

    @field_validator("score")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("scores must be finite")
        return v


class EerReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_writer_eer: Dict[int, float]
    mean_eer: float
    std_eer: float
    thresholds: Dict[int, float] = Field(default_factory=dict)


# ===== OPTIMIZER =====

class IdpsoConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    population: int = Field(default=20, ge=2)
    c1: float = 2.0
    c2: float = 2.0
    w_initial: float = 0.9
    w_final: float = 0.4
    mu: float = 100.0
    max_iterations: int = Field(default=40, ge=1)
    v_clamp: float = Field(default=6.0, gt=0)
    seed: int = Field(default=0, ge=0)
    schedule: str = "idpso_logistic"
    audit_selection: bool = True

    @model_validator(mode="after")
    def _check_inertia(self):
        if self.w_final > self.w_initial:
            raise ValueError("w_final must not exceed w_initial")
        return self


class Particle(ArrayModel):
    position: FeatureMask
    velocity: np.ndarray
    pbest_position: FeatureMask
    pbest_fitness: float = math.inf


class ArchiveEntry(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mask: FeatureMask
    selection_fitness: float

    def rank_key(self) -> Tuple[float, int, bytes]:
        return (self.selection_fitness, self.mask.count, self.mask.key)


class ExternalArchive(BaseModel):
    """Elite store ranked by selection-set fitness, best first."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    capacity: int = Field(ge=1)
    entries: List[ArchiveEntry] = Field(default_factory=list)

    @property
    def head(self) -> Optional[ArchiveEntry]:
        return self.entries[0] if self.entries else None

    def __len__(self) -> int:
        return len(self.entries)


class TraceRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int
    best_opt_eer: float
    best_sel_eer: float
    archive_best_eer: float
    mean_popcount: float


class ConvergenceTrace(BaseModel):
    rows: List[TraceRow] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


class CandidateRecord(BaseModel):
    """One evaluated particle position; the raw material of the swarm projection plots."""

    model_config = ConfigDict(frozen=True)

    iteration: int
    particle: int
    popcount: int
    opt_eer: float
    sel_eer: float
    mask_hex: str


class RunResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    strategy: StrategyKind
    best_mask: FeatureMask
    returned_opt_eer: float
    returned_sel_eer: float
    best_logged_sel_eer: float
    overfitting_gap: float
    trace: ConvergenceTrace
    candidates: List[CandidateRecord]
    archive: ExternalArchive


# ===== SYNTHETIC DATA =====

class GeneratorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_writers: int = Field(default=70, ge=1)
    genuine_per_writer: int = Field(default=28, ge=1)
    skilled_per_writer: int = Field(default=16, ge=0)
    D: int = Field(default=64, ge=2)
    d_informative: int = Field(default=16, ge=1)
    writer_spread: float = Field(default=2.0, ge=0)
    center_spread: float = Field(default=6.0, gt=0)
    noise_spread: float = Field(default=5.0, ge=0)
    forgery_offset: float = Field(default=6.0, ge=0)
    noise_kinds: Optional[List[NoiseKind]] = None
    duplicate_fraction: float = Field(default=0.25, ge=0, le=1)
    layout_seed: int = Field(default=0, ge=0)
    writer_id_offset: int = Field(default=0, ge=0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_layout(self):
        if self.d_informative >= self.D:
            raise ValueError("d_informative must be smaller than D")
        if self.noise_kinds is not None and len(self.noise_kinds) != self.D - self.d_informative:
            raise ValueError("noise_kinds needs one entry per redundant dimension")
        return self


class SplitCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    train: Annotated[int, Field(ge=0)] = 20
    validation: Annotated[int, Field(ge=0)] = 10
    optimization: Annotated[int, Field(ge=0)] = 10
    selection: Annotated[int, Field(ge=0)] = 10
    exploitation: Annotated[int, Field(ge=0)] = 20

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.train, self.validation, self.optimization, self.selection, self.exploitation)

    @property
    def total(self) -> int:
        return sum(self.as_tuple())
