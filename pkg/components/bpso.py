# components/bpso.py
"""
Binary IDPSO wrapper feature selection.

A swarm of bit masks moves under the velocity rule with a V-shaped transfer function.
Fitness is the mean user-threshold EER of a dichotomizer trained in the masked space.
Three ways of picking the returned mask are supported:
  - NV: global best on the optimization writers
  - PV: best of the final population on the selection writers
  - GV: head of an external archive fed by every population, ranked on the selection writers
"""

import asyncio
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from components.dichotomizer import signed_distances, train
from components.dichotomy import fuse_max, stack_bundles
from components.metrics import NegativeClass, writer_report
from core.cache import MaskCache
from core.config import settings
from core.errors import ConfigurationError, DimensionError, ProtocolError, SigselError
from core.rng import STREAM_SWARM_INIT, STREAM_SWARM_MOVE, derive_rng
from core.schedules import ScheduleRegistry
from core.storage import format_float, write_json, write_rows_csv
from data.models import (
    ArchiveEntry,
    CandidateRecord,
    ConvergenceTrace,
    EerReport,
    ExternalArchive,
    FeatureMask,
    IdpsoConfig,
    KernelParams,
    Particle,
    PrototypeSet,
    QueryBundle,
    RunResult,
    ScoredQuery,
    StrategyKind,
    TraceRow,
    TrainedModel,
)

logger = logging.getLogger(__name__)

MAX_REDRAWS = 10

# Initialization bands for a 2048-dimensional space, rescaled to D
LOW_BAND = (500, 1000)
HIGH_BAND_START = 1500
REFERENCE_DIMENSION = 2048


# ===== WRAPPER CONTEXT =====

class WrapperContext:
    """
    Everything a fitness evaluation needs: the condensed training prototypes and the query
    bundles of one writer group, pre-stacked as a (bundles, references, D) tensor.
    Carries its own fitness cache so repeated masks are scored once.
    """

    def __init__(self, name: str, prototypes: PrototypeSet, bundles: Sequence[QueryBundle],
                 kernel: KernelParams, seed: int, negatives: NegativeClass = "skilled_only"):
        self.name = name
        self.prototypes = prototypes
        self.kernel = kernel
        self.seed = seed
        self.negatives = negatives
        self.tensor = stack_bundles(bundles)
        self.truths = [b.truth for b in bundles]
        self.claimed_writers = [b.claimed_writer for b in bundles]
        self.writer_ids = sorted(set(self.claimed_writers))
        self.cache: MaskCache[float] = MaskCache(name=f"fitness:{name}")

        if prototypes.dimension != self.dimension:
            raise DimensionError(
                f"Context '{name}': prototypes have D={prototypes.dimension}, queries D={self.dimension}"
            )

    @property
    def dimension(self) -> int:
        return int(self.tensor.shape[2])

    def train(self, mask: FeatureMask) -> TrainedModel:
        return train(self.prototypes, self.kernel, mask, self.seed)

    def score(self, model: TrainedModel) -> List[ScoredQuery]:
        distances = signed_distances(model, self.tensor)
        return [
            ScoredQuery(writer_id=w, truth=truth, score=fuse_max(row))
            for w, truth, row in zip(self.claimed_writers, self.truths, distances)
        ]

    def report(self, model: TrainedModel, negatives: Optional[NegativeClass] = None) -> EerReport:
        return writer_report(self.score(model), negatives or self.negatives)


def evaluate_contexts(mask: FeatureMask, contexts: Sequence[WrapperContext]) -> List[float]:
    """
    Train once on the lead context's prototypes, then score every context.
    Any pipeline error yields +inf for the affected contexts.
    """
    lead = contexts[0]
    try:
        model = lead.train(mask)
    except SigselError as e:
        logger.debug(f"[BPSO] {type(e).__name__} for mask with {mask.count} features: {e}")
        return [math.inf] * len(contexts)

    values = []
    for ctx in contexts:
        try:
            values.append(ctx.report(model).mean_eer)
        except SigselError as e:
            logger.debug(f"[BPSO] {type(e).__name__} scoring context '{ctx.name}': {e}")
            values.append(math.inf)
    return values


def fitness(mask: FeatureMask, ctx: WrapperContext) -> float:
    """Mean user EER of the dichotomizer trained in the masked space; lower is better."""
    return evaluate_contexts(mask, [ctx])[0]


# ===== SWARM DYNAMICS =====

def _band(start: int, end: int, D: int) -> Tuple[int, int]:
    lo = -(-start * D // REFERENCE_DIMENSION)
    hi = end * D // REFERENCE_DIMENSION
    return lo, hi


def init_swarm(config: IdpsoConfig, D: int) -> List[Particle]:
    """Half the swarm starts sparse, half dense, with popcounts drawn in rescaled bands."""
    low = _band(*LOW_BAND, D)
    high = (_band(HIGH_BAND_START, REFERENCE_DIMENSION, D)[0], D)
    for lo, hi in (low, high):
        if lo < 1 or lo > hi:
            raise ConfigurationError(f"D={D} is too small for the initialization bands {low} and {high}")

    n_low = config.population // 2
    particles = []
    for i in range(config.population):
        rng = derive_rng(config.seed, STREAM_SWARM_INIT, i)
        lo, hi = low if i < n_low else high
        count = int(rng.integers(lo, hi + 1))
        position = FeatureMask.from_indices(D, rng.choice(D, size=count, replace=False))
        velocity = rng.uniform(-config.v_clamp, config.v_clamp, size=D)
        particles.append(Particle(position=position, velocity=velocity, pbest_position=position))
    return particles


def transfer_vshape(v):
    """|(2/pi) * arctan((pi/2) * v)|"""
    out = np.abs((2.0 / np.pi) * np.arctan((np.pi / 2.0) * np.asarray(v, dtype=float)))
    return float(out) if out.ndim == 0 else out


def update_velocity(p: Particle, gbest: FeatureMask, w: float, c1: float, c2: float,
                    rng: np.random.Generator, v_clamp: float = 6.0) -> np.ndarray:
    if gbest.dimension != p.position.dimension:
        raise DimensionError(f"gbest has D={gbest.dimension}, particle has D={p.position.dimension}")
    x = p.position.bits.astype(float)
    r1 = rng.random()
    r2 = rng.random()
    v = (w * p.velocity
         + c1 * r1 * (p.pbest_position.bits.astype(float) - x)
         + c2 * r2 * (gbest.bits.astype(float) - x))
    return np.clip(v, -v_clamp, v_clamp)


def update_position(p: Particle, v_new: np.ndarray, rng: np.random.Generator) -> FeatureMask:
    """Flip bit d when a uniform draw falls below T(v_new[d]); empty masks are redrawn."""
    D = p.position.dimension
    probabilities = transfer_vshape(v_new)
    for _ in range(MAX_REDRAWS):
        bits = p.position.bits ^ (rng.random(D) < probabilities)
        if bits.any():
            return FeatureMask(bits=bits)
    bits = np.zeros(D, dtype=bool)
    bits[int(rng.integers(D))] = True
    return FeatureMask(bits=bits)


class SwarmState(BaseModel):
    """Snapshot handed to parameter schedules."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: List[FeatureMask]
    gbest: FeatureMask

    def distance(self, index: int) -> float:
        return self.positions[index].hamming(self.gbest) / self.gbest.dimension

    def mean_distance(self) -> float:
        return float(np.mean([self.distance(i) for i in range(len(self.positions))]))


def adapt_params(config: IdpsoConfig, t: int, particle_index: int, swarm_state: SwarmState) -> Tuple[float, float, float]:
    if not 0 <= t <= config.max_iterations:
        raise ConfigurationError(f"Iteration {t} outside [0, {config.max_iterations}]")
    schedule = ScheduleRegistry.get(config.schedule)
    return schedule(config, t, swarm_state.distance(particle_index), swarm_state.mean_distance())


# ===== EXTERNAL ARCHIVE =====

def archive_update(archive: ExternalArchive, candidates: Sequence[Tuple[FeatureMask, float]]) -> ExternalArchive:
    """Merge, rank by (selection EER, feature count, mask bits), drop repeated masks, keep the best `capacity`."""
    merged = list(archive.entries) + [ArchiveEntry(mask=m, selection_fitness=f) for m, f in candidates]
    merged.sort(key=ArchiveEntry.rank_key)
    seen, kept = set(), []
    for entry in merged:
        if entry.mask.key in seen:
            continue
        seen.add(entry.mask.key)
        kept.append(entry)
        if len(kept) == archive.capacity:
            break
    return ExternalArchive(capacity=archive.capacity, entries=kept)


# ===== OPTIMIZATION LOOP =====

def _rank(mask: FeatureMask, value: float) -> Tuple[float, int, bytes]:
    return (value, mask.count, mask.key)


async def _evaluate(mask: FeatureMask, opt_ctx: WrapperContext, sel_ctx: WrapperContext, with_selection: bool,
                    semaphore: asyncio.Semaphore) -> Tuple[float, Optional[float]]:
    """Optimization (and optionally selection) fitness of one mask, through both caches."""
    contexts = [opt_ctx, sel_ctx] if with_selection else [opt_ctx]

    async def fetch_both() -> float:
        async with semaphore:
            values = await asyncio.to_thread(evaluate_contexts, mask, contexts)
        if with_selection:
            await sel_ctx.cache.put(mask.key, values[1])
        return values[0]

    async def fetch_selection() -> float:
        async with semaphore:
            values = await asyncio.to_thread(evaluate_contexts, mask, [sel_ctx])
        return values[0]

    opt_value = await opt_ctx.cache.get_or_fetch(mask.key, fetch_both)
    sel_value = await sel_ctx.cache.get_or_fetch(mask.key, fetch_selection) if with_selection else None
    return opt_value, sel_value


async def run(config: IdpsoConfig, strategy: StrategyKind, opt_ctx: WrapperContext, sel_ctx: WrapperContext,
              semaphore: Optional[asyncio.Semaphore] = None) -> RunResult:
    """
    Evolve the swarm on the optimization writers for config.max_iterations rounds and return the
    mask picked by `strategy`. The trajectory never depends on the strategy.
    """
    shared = set(opt_ctx.writer_ids) & set(sel_ctx.writer_ids)
    if shared:
        raise ProtocolError(f"Optimization and selection writers overlap: {sorted(shared)[:5]}")
    if opt_ctx.dimension != sel_ctx.dimension:
        raise DimensionError("Optimization and selection contexts differ in dimension")

    semaphore = semaphore or asyncio.Semaphore(settings.MAX_WORKERS)
    D = opt_ctx.dimension
    validate_each = strategy == StrategyKind.GV or config.audit_selection
    logger.info(f"[BPSO] Starting {strategy.value.upper()} run: D={D}, population={config.population}, "
                f"iterations={config.max_iterations}, schedule={config.schedule}")

    particles = init_swarm(config, D)
    archive = ExternalArchive(capacity=config.population)
    gbest: Optional[FeatureMask] = None
    gbest_fitness = math.inf
    rows: List[TraceRow] = []
    log: List[List[Tuple[FeatureMask, float, Optional[float]]]] = []

    for t in range(config.max_iterations):
        if t > 0:
            state = SwarmState(positions=[p.position for p in particles], gbest=gbest)
            moved = []
            for i, p in enumerate(particles):
                rng = derive_rng(config.seed, STREAM_SWARM_MOVE, t, i)
                w, c1, c2 = adapt_params(config, t, i, state)
                velocity = update_velocity(p, gbest, w, c1, c2, rng, config.v_clamp)
                position = update_position(p, velocity, rng)
                moved.append(p.model_copy(update={"position": position, "velocity": velocity}))
            particles = moved

        results = await asyncio.gather(*(
            _evaluate(p.position, opt_ctx, sel_ctx, validate_each, semaphore) for p in particles
        ))

        for i, (p, (opt_value, _)) in enumerate(zip(particles, results)):
            if opt_value < p.pbest_fitness:
                particles[i] = p.model_copy(update={"pbest_position": p.position, "pbest_fitness": opt_value})

        round_best = min(range(len(particles)), key=lambda i: _rank(particles[i].position, results[i][0]))
        if gbest is None or results[round_best][0] < gbest_fitness:
            gbest = particles[round_best].position
            gbest_fitness = results[round_best][0]

        if validate_each:
            archive = archive_update(archive, [(p.position, sel) for p, (_, sel) in zip(particles, results)])
            logger.debug(f"[ARCHIVE] t={t} size={len(archive)} head={archive.head.selection_fitness:.4f}")

        log.append([(p.position, opt_value, sel) for p, (opt_value, sel) in zip(particles, results)])
        gbest_sel = sel_ctx.cache.peek(gbest.key) if validate_each else None
        rows.append(TraceRow(
            iteration=t,
            best_opt_eer=gbest_fitness,
            best_sel_eer=math.nan if gbest_sel is None else gbest_sel,
            archive_best_eer=archive.head.selection_fitness if archive.head else math.nan,
            mean_popcount=float(np.mean([p.position.count for p in particles])),
        ))
        logger.debug(f"[BPSO] t={t} gbest_opt={gbest_fitness:.4f} gbest_count={gbest.count}")

    # Returned solution
    if strategy == StrategyKind.NV:
        best = gbest
        returned_opt, returned_sel = await _evaluate(best, opt_ctx, sel_ctx, True, semaphore)
    elif strategy == StrategyKind.PV:
        final = await asyncio.gather(*(
            _evaluate(mask, opt_ctx, sel_ctx, True, semaphore) for mask, _, _ in log[-1]
        ))
        log[-1] = [(mask, opt_value, sel) for (mask, _, _), (opt_value, sel) in zip(log[-1], final)]
        pick = min(range(len(final)), key=lambda i: _rank(log[-1][i][0], final[i][1]))
        best = log[-1][pick][0]
        returned_opt, returned_sel = final[pick]
    else:
        best = archive.head.mask
        returned_opt, returned_sel = await _evaluate(best, opt_ctx, sel_ctx, True, semaphore)

    logged_sel = [sel for round_log in log for _, _, sel in round_log if sel is not None]
    logged_sel.append(returned_sel)
    best_logged = min(logged_sel)
    gap = returned_sel - best_logged if math.isfinite(returned_sel) and math.isfinite(best_logged) else math.nan

    candidates = [
        CandidateRecord(
            iteration=t,
            particle=i,
            popcount=mask.count,
            opt_eer=opt_value,
            sel_eer=math.nan if sel is None else sel,
            mask_hex=mask.to_hex(),
        )
        for t, round_log in enumerate(log)
        for i, (mask, opt_value, sel) in enumerate(round_log)
    ]

    logger.info(f"[BPSO] {strategy.value.upper()} done: {best.count}/{D} features, opt={returned_opt:.4f}, "
                f"sel={returned_sel:.4f}, gap={gap:.4f} ({opt_ctx.cache.get_cache_info()})")
    return RunResult(
        strategy=strategy,
        best_mask=best,
        returned_opt_eer=returned_opt,
        returned_sel_eer=returned_sel,
        best_logged_sel_eer=best_logged,
        overfitting_gap=gap,
        trace=ConvergenceTrace(rows=rows),
        candidates=candidates,
        archive=archive,
    )


# ===== RUN ARTIFACTS =====

TRACE_FIELDS = ["iteration", "best_opt_eer", "best_sel_eer", "archive_best_eer", "mean_popcount"]
CANDIDATE_FIELDS = ["iteration", "particle", "popcount", "opt_eer", "sel_eer", "mask_hex"]


def write_trace_csv(path: Path, trace: ConvergenceTrace) -> Path:
    rows = [
        {
            "iteration": r.iteration,
            "best_opt_eer": format_float(r.best_opt_eer),
            "best_sel_eer": format_float(r.best_sel_eer),
            "archive_best_eer": format_float(r.archive_best_eer),
            "mean_popcount": format_float(r.mean_popcount),
        }
        for r in trace.rows
    ]
    return write_rows_csv(path, TRACE_FIELDS, rows)


def write_candidates_csv(path: Path, candidates: Sequence[CandidateRecord]) -> Path:
    rows = [
        {
            "iteration": c.iteration,
            "particle": c.particle,
            "popcount": c.popcount,
            "opt_eer": format_float(c.opt_eer),
            "sel_eer": format_float(c.sel_eer),
            "mask_hex": c.mask_hex,
        }
        for c in candidates
    ]
    return write_rows_csv(path, CANDIDATE_FIELDS, rows)


def write_best_mask_json(path: Path, result: RunResult) -> Path:
    return write_json(path, {
        "strategy": result.strategy.value,
        "dimension": result.best_mask.dimension,
        "count": result.best_mask.count,
        "mask": result.best_mask.to_hex(),
        "returned_opt_eer": format_float(result.returned_opt_eer),
        "returned_sel_eer": format_float(result.returned_sel_eer),
    })


def read_mask_json(payload: Dict) -> FeatureMask:
    try:
        return FeatureMask.from_hex(payload["mask"], int(payload["dimension"]))
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigurationError(f"Mask file is malformed: {e}")
