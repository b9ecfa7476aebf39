# components/harness.py
"""
Experiment orchestration behind the CLI subcommands.

Output layout under ExperimentConfig.output_dir:
    shared/rep_<r>/            training pairs and prototypes of replication r
    baseline/rep_<r>/          all-features run
    <nv|pv|gv>/rep_<r>/        one optimizer run per strategy
    eval/<dataset>_rep_<r>/    cmd_eval output
    summary.csv, summary.md    cmd_report output
"""

import asyncio
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from components.bpso import (
    WrapperContext,
    read_mask_json,
    run,
    write_best_mask_json,
    write_candidates_csv,
    write_trace_csv,
)
from components.dichotomizer import decision_function, load_model, save_model
from components.dichotomy import build_optimization_queries, build_training_set, build_validation_set, write_pairs_csv
from components.metrics import aggregate_eer, global_eer, write_eer_report_csv
from components.prototype_selection import condense, write_prototypes_json
from components.synthetic_data import align_target_spec, generate, load_dataset, load_manifest_spec, save_dataset, split
from core.config import ExperimentConfig, QueryCounts, load_generator_spec, settings
from core.errors import ConfigurationError, DimensionError, ProtocolError
from core.storage import dataset_paths, read_json, write_json
from data.models import (
    DissimilaritySample,
    EerReport,
    EvalSplit,
    FeatureMask,
    PrototypeSet,
    RunResult,
    StrategyKind,
    TrainedModel,
    Truth,
    WriterSet,
)

logger = logging.getLogger(__name__)

BASELINE = "baseline"


class ReplicationWorkspace:
    """Data shared by every run of one replication: split, prototypes and query contexts."""

    def __init__(self, config: ExperimentConfig, replication: int, split_: EvalSplit,
                 prototypes: PrototypeSet, validation: List[DissimilaritySample],
                 opt_ctx: WrapperContext, sel_ctx: WrapperContext, exploit_ctx: WrapperContext,
                 targets: Dict[str, WrapperContext]):
        self.config = config
        self.replication = replication
        self.seed = config.replication_seed(replication)
        self.split = split_
        self.prototypes = prototypes
        self.validation = validation
        self.opt_ctx = opt_ctx
        self.sel_ctx = sel_ctx
        self.exploit_ctx = exploit_ctx
        self.targets = targets

    def run_dir(self, name: str) -> Path:
        return self.config.output_dir / name / f"rep_{self.replication}"


def _target_context(name: str, target_ws: WriterSet, queries: QueryCounts, config: ExperimentConfig,
                    prototypes: PrototypeSet, seed: int) -> WrapperContext:
    bundles = build_optimization_queries(target_ws, queries.genuine_q, queries.skilled_q, config.references,
                                         seed, queries.random_q)
    return WrapperContext(name, prototypes, bundles, config.kernel, seed)


def prepare_replication(config: ExperimentConfig, ws: WriterSet, replication: int,
                        target_sets: Optional[Dict[str, WriterSet]] = None) -> ReplicationWorkspace:
    seed = config.replication_seed(replication)
    split_ = split(ws, config.split, seed)
    if set(split_.optimization.writers) & set(split_.selection.writers):
        raise ProtocolError("Optimization and selection writers overlap")

    pairs = config.training
    train_samples = build_training_set(split_.train, pairs.genuine_per_writer, pairs.random_forgeries_per_writer,
                                       seed, config.references)
    validation = build_validation_set(split_.validation, pairs.genuine_per_writer,
                                      pairs.random_forgeries_per_writer, seed, config.references)
    prototypes = condense(train_samples, seed)

    q = config.queries
    opt_bundles = build_optimization_queries(split_.optimization, q.genuine_q, q.skilled_q, config.references, seed)
    sel_bundles = build_optimization_queries(split_.selection, q.genuine_q, q.skilled_q, config.references, seed)

    shared_dir = config.output_dir / "shared" / f"rep_{replication}"
    write_pairs_csv(shared_dir / "pairs.csv", samples=train_samples)
    write_prototypes_json(shared_dir / "prototypes.json", prototypes, seed)

    targets = {}
    for target in config.targets:
        target_ws = (target_sets or {}).get(target.name) or load_dataset(target.dataset)
        targets[target.name] = _target_context(f"target:{target.name}", target_ws, target.queries, config,
                                               prototypes, seed)
    return ReplicationWorkspace(
        config=config,
        replication=replication,
        split_=split_,
        prototypes=prototypes,
        validation=validation,
        opt_ctx=WrapperContext("opt", prototypes, opt_bundles, config.kernel, seed),
        sel_ctx=WrapperContext("sel", prototypes, sel_bundles, config.kernel, seed),
        exploit_ctx=_target_context("exploit", split_.exploitation, q, config, prototypes, seed),
        targets=targets,
    )


def validation_accuracy(model: TrainedModel, samples: Sequence[DissimilaritySample]) -> Optional[float]:
    """Share of held-out dissimilarity samples on the correct side of the hyperplane."""
    if not samples:
        return None
    U = np.vstack([s.u for s in samples])
    labels = np.array([int(s.label) for s in samples])
    predicted = np.where(decision_function(model, U) >= 0, 1, -1)
    return float(np.mean(predicted == labels))


def _random_eer(ctx: WrapperContext, model: TrainedModel) -> Optional[float]:
    if Truth.RANDOM not in ctx.truths:
        return None
    return ctx.report(model, negatives="random_only").mean_eer


def _informative_selected(config: ExperimentConfig, mask: FeatureMask) -> Optional[int]:
    """How many of the generator's planted informative dimensions the mask keeps, when a manifest exists."""
    if not config.manifest_path.exists():
        return None
    informative = read_json(config.manifest_path).get("informative_dims")
    if informative is None:
        return None
    return int(mask.bits[informative].sum())


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    return value if value is not None and math.isfinite(value) else None


def evaluate_mask(workspace: ReplicationWorkspace, mask: FeatureMask, out_dir: Path) -> Dict:
    """Train with `mask`, score exploitation writers and every transfer target, and write the artifacts."""
    model = workspace.exploit_ctx.train(mask)
    scored = workspace.exploit_ctx.score(model)
    report = workspace.exploit_ctx.report(model)
    write_eer_report_csv(out_dir / "eer_report.csv", report)
    save_model(out_dir / "model.json", model)

    transfer = {}
    for name, ctx in workspace.targets.items():
        target_report = ctx.report(model)
        write_eer_report_csv(out_dir / f"eer_report_{name}.csv", target_report)
        transfer[name] = {"eer_mean": target_report.mean_eer, "eer_std": target_report.std_eer}

    return {
        "replication": workspace.replication,
        "seed": workspace.seed,
        "dimension": mask.dimension,
        "n_features": mask.count,
        "feature_fraction": mask.count / mask.dimension,
        "informative_selected": _informative_selected(workspace.config, mask),
        "eer_mean": report.mean_eer,
        "eer_std": report.std_eer,
        "random_eer_mean": _random_eer(workspace.exploit_ctx, model),
        "global_eer": global_eer(scored)[0],
        "validation_accuracy": validation_accuracy(model, workspace.validation),
        "transfer": transfer,
    }


def _load_targets(config: ExperimentConfig) -> Dict[str, WriterSet]:
    return {target.name: load_dataset(target.dataset) for target in config.targets}


# ===== COMMANDS =====

async def cmd_gen(spec_path: Path, out_dir: Path, seed: Optional[int] = None,
                  transfer_from: Optional[Path] = None) -> Tuple[Path, Path]:
    """Generate a dataset; with transfer_from, the new set shares the source dataset's layout."""
    spec = load_generator_spec(spec_path, {"seed": seed})
    if transfer_from is not None:
        source_spec = load_manifest_spec(dataset_paths(transfer_from)[1])
        spec = align_target_spec(source_spec, spec)
    ws = await asyncio.to_thread(generate, spec)
    csv_path, manifest_path = save_dataset(out_dir, ws, spec)
    logger.info(f"[GEN] Wrote {csv_path} and {manifest_path}")
    return csv_path, manifest_path


def _baseline_replication(config: ExperimentConfig, ws: WriterSet, targets: Dict[str, WriterSet],
                          replication: int) -> Dict:
    workspace = prepare_replication(config, ws, replication, targets)
    out_dir = workspace.run_dir(BASELINE)
    summary = evaluate_mask(workspace, FeatureMask.all_ones(ws.dimension), out_dir)
    summary.update({
        "strategy": BASELINE,
        "returned_opt_eer": None,
        "returned_sel_eer": None,
        "best_logged_sel_eer": None,
        "overfitting_gap": None,
    })
    write_json(out_dir / "summary.json", summary)
    logger.info(f"[EVAL] baseline rep {replication}: EER {summary['eer_mean']:.4f} (std {summary['eer_std']:.4f})")
    return summary


async def cmd_baseline(config: ExperimentConfig) -> EerReport:
    """All-features dichotomizer per replication; the report holds one mean exploitation EER per replication."""
    ws = load_dataset(config.dataset)
    targets = _load_targets(config)
    summaries = await asyncio.gather(*(
        asyncio.to_thread(_baseline_replication, config, ws, targets, r) for r in range(config.replications)
    ))
    return aggregate_eer([(s["replication"], s["eer_mean"]) for s in summaries])


async def _optimize_replication(config: ExperimentConfig, ws: WriterSet, targets: Dict[str, WriterSet],
                                replication: int, strategies: Sequence[StrategyKind],
                                semaphore: asyncio.Semaphore) -> Dict[StrategyKind, RunResult]:
    workspace = await asyncio.to_thread(prepare_replication, config, ws, replication, targets)
    idpso = config.idpso.model_copy(update={"seed": workspace.seed})

    results = {}
    for strategy in strategies:
        result = await run(idpso, strategy, workspace.opt_ctx, workspace.sel_ctx, semaphore)
        out_dir = workspace.run_dir(strategy.value)
        write_trace_csv(out_dir / "trace.csv", result.trace)
        write_candidates_csv(out_dir / "candidates.csv", result.candidates)
        write_best_mask_json(out_dir / "best_mask.json", result)

        summary = await asyncio.to_thread(evaluate_mask, workspace, result.best_mask, out_dir)
        summary.update({
            "strategy": strategy.value,
            "returned_opt_eer": _finite_or_none(result.returned_opt_eer),
            "returned_sel_eer": _finite_or_none(result.returned_sel_eer),
            "best_logged_sel_eer": _finite_or_none(result.best_logged_sel_eer),
            "overfitting_gap": _finite_or_none(result.overfitting_gap),
        })
        write_json(out_dir / "summary.json", summary)
        logger.info(f"[EVAL] {strategy.value} rep {replication}: {result.best_mask.count} features, "
                    f"EER {summary['eer_mean']:.4f}, gap {result.overfitting_gap:.4f}")
        results[strategy] = result
    return results


async def cmd_optimize(config: ExperimentConfig,
                       strategies: Optional[Sequence[StrategyKind]] = None) -> Dict[StrategyKind, List[RunResult]]:
    """One optimizer run per strategy per replication; strategies of a replication share fitness caches."""
    strategies = list(strategies or config.strategies)
    ws = load_dataset(config.dataset)
    targets = _load_targets(config)
    semaphore = asyncio.Semaphore(settings.MAX_WORKERS)

    per_replication = await asyncio.gather(*(
        _optimize_replication(config, ws, targets, r, strategies, semaphore) for r in range(config.replications)
    ))
    return {s: [results[s] for results in per_replication] for s in strategies}


async def cmd_eval(config: ExperimentConfig, mask_path: Optional[Path] = None, dataset: Optional[Path] = None,
                   replication: int = 0, model_path: Optional[Path] = None) -> EerReport:
    """
    Verify either the source exploitation writers or, for another dataset, all of its writers.
    With model_path, the saved dichotomizer is reused; otherwise one is trained on the source
    training split with the saved mask.
    """
    if mask_path is None and model_path is None:
        raise ConfigurationError("cmd_eval needs a mask file or a model file")
    saved_model = load_model(model_path) if model_path is not None else None
    mask = read_mask_json(read_json(mask_path)) if mask_path is not None else saved_model.mask
    if saved_model is not None and saved_model.mask != mask:
        raise ConfigurationError(f"Model {model_path} was trained with a different mask than {mask_path}")

    ws = load_dataset(config.dataset)
    if mask.dimension != ws.dimension:
        raise DimensionError(f"Mask has D={mask.dimension}, dataset {config.dataset} has D={ws.dimension}")

    workspace = await asyncio.to_thread(prepare_replication, config, ws, replication, _load_targets(config))
    transfer = dataset is not None and Path(dataset).resolve() != Path(config.dataset).resolve()
    if transfer:
        target_ws = load_dataset(dataset)
        if target_ws.dimension != mask.dimension:
            raise DimensionError(f"Mask has D={mask.dimension}, dataset {dataset} has D={target_ws.dimension}")
        ctx = _target_context("eval", target_ws, config.queries, config, workspace.prototypes, workspace.seed)
        name = Path(dataset).parent.name if Path(dataset).is_file() else Path(dataset).name
    else:
        ctx = workspace.exploit_ctx
        name = "source"

    model = saved_model or await asyncio.to_thread(ctx.train, mask)
    report = ctx.report(model)
    out_path = config.output_dir / "eval" / f"{name}_rep_{replication}" / "eer_report.csv"
    write_eer_report_csv(out_path, report)
    origin = model_path if saved_model is not None else "retrained"
    logger.info(f"[EVAL] {name}: {len(report.per_writer_eer)} writers, EER {report.mean_eer:.4f} (model: {origin})")
    return report
