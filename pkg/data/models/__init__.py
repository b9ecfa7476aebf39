# data/models/__init__.py
# Export all models for easy importing

from .models import (
    ArchiveEntry,
    CandidateRecord,
    ConvergenceTrace,
    DissimilaritySample,
    EerReport,
    EvalSplit,
    ExternalArchive,
    FeatureMask,
    FeatureVector,
    GeneratorSpec,
    IdpsoConfig,
    KernelParams,
    NoiseKind,
    Particle,
    PrototypeSet,
    QueryBundle,
    RunResult,
    SampleLabel,
    ScoredQuery,
    SignatureKind,
    SignatureRecord,
    SplitCounts,
    StrategyKind,
    TraceRow,
    TrainedModel,
    Truth,
    WriterSet,
    apply_mask,
)

__all__ = [
    "ArchiveEntry", "CandidateRecord", "ConvergenceTrace", "DissimilaritySample", "EerReport",
    "EvalSplit", "ExternalArchive", "FeatureMask", "FeatureVector", "GeneratorSpec", "IdpsoConfig",
    "KernelParams", "NoiseKind", "Particle", "PrototypeSet", "QueryBundle", "RunResult",
    "SampleLabel", "ScoredQuery", "SignatureKind", "SignatureRecord", "SplitCounts",
    "StrategyKind", "TraceRow", "TrainedModel", "Truth", "WriterSet", "apply_mask",
]
