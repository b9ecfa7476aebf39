import asyncio
import math

import numpy as np
import pytest

from components.bpso import (
    SwarmState,
    WrapperContext,
    adapt_params,
    archive_update,
    fitness,
    init_swarm,
    read_mask_json,
    run,
    transfer_vshape,
    update_position,
    update_velocity,
    write_best_mask_json,
    write_candidates_csv,
    write_trace_csv,
)
from components.dichotomy import build_optimization_queries
from components.synthetic_data import dimension_layout
from core.errors import ConfigurationError, ProtocolError
from core.storage import read_json, read_rows_csv
from data.models import (
    ExternalArchive,
    FeatureMask,
    IdpsoConfig,
    KernelParams,
    NoiseKind,
    Particle,
    StrategyKind,
)
from tests.conftest import TINY_REFERENCES, TINY_SPEC, pipeline_context


def particle(bits, velocity=None, pbest=None):
    position = FeatureMask(bits=np.asarray(bits, dtype=bool))
    velocity = np.zeros(position.dimension) if velocity is None else np.asarray(velocity, dtype=float)
    return Particle(position=position, velocity=velocity, pbest_position=pbest or position)


class TestInitSwarm:
    def test_bands_at_full_dimension(self):
        config = IdpsoConfig(population=20, seed=1)
        counts = [p.position.count for p in init_swarm(config, 2048)]
        assert all(500 <= c <= 1000 for c in counts[:10])
        assert all(1500 <= c <= 2048 for c in counts[10:])

    def test_bands_are_rescaled(self):
        counts = [p.position.count for p in init_swarm(IdpsoConfig(population=7, seed=2), 64)]
        assert all(16 <= c <= 31 for c in counts[:3])
        assert all(47 <= c <= 64 for c in counts[3:])

    def test_velocities_within_clamp(self):
        for p in init_swarm(IdpsoConfig(population=4, v_clamp=2.0), 64):
            assert np.all(np.abs(p.velocity) <= 2.0)
            assert p.pbest_position == p.position

    def test_dimension_too_small(self):
        with pytest.raises(ConfigurationError):
            init_swarm(IdpsoConfig(population=2), 2)

    def test_deterministic(self):
        config = IdpsoConfig(population=6, seed=5)
        assert init_swarm(config, 128) == init_swarm(config, 128)


class TestTransfer:
    def test_zero(self):
        assert transfer_vshape(0.0) == 0.0

    @pytest.mark.parametrize("v", [2 / math.pi, -2 / math.pi])
    def test_half_point(self, v):
        assert transfer_vshape(v) == pytest.approx(0.5, abs=1e-12)

    def test_even_and_bounded(self):
        v = np.linspace(-50.0, 50.0, 1000)
        out = transfer_vshape(v)
        assert np.allclose(out, transfer_vshape(-v), atol=0.0)
        assert np.all((out >= 0.0) & (out < 1.0))

    def test_monotone_in_magnitude(self):
        out = transfer_vshape(np.linspace(0.0, 20.0, 200))
        assert np.all(np.diff(out) > 0)


class TestUpdateVelocity:
    def test_inertia_only(self):
        p = particle([1, 0, 1, 0], velocity=[1.0, -2.0, 0.5, 0.0])
        gbest = FeatureMask.from_indices(4, [1])
        v = update_velocity(p, gbest, w=0.5, c1=0.0, c2=0.0, rng=np.random.default_rng(0))
        assert v.tolist() == [0.5, -1.0, 0.25, 0.0]

    def test_clamped(self):
        p = particle([1, 1], velocity=[10.0, -10.0])
        v = update_velocity(p, p.position, w=1.0, c1=2.0, c2=2.0, rng=np.random.default_rng(0))
        assert v.tolist() == [6.0, -6.0]

    def test_pulled_towards_gbest(self):
        p = particle([0, 0, 0])
        gbest = FeatureMask.from_indices(3, [0, 2])
        v = update_velocity(p, gbest, w=0.0, c1=0.0, c2=2.0, rng=np.random.default_rng(1))
        assert v[0] > 0 and v[2] > 0 and v[1] == 0


class TestUpdatePosition:
    def test_zero_velocity_keeps_position(self):
        p = particle([1, 0, 1, 1, 0])
        assert update_position(p, np.zeros(5), np.random.default_rng(0)) == p.position

    def test_large_velocity_flips_nearly_everything(self):
        bits = np.arange(1000) % 2 == 0
        p = particle(bits)
        new = update_position(p, np.full(1000, 1e6), np.random.default_rng(0))
        assert new.hamming(p.position) / 1000 > 0.95

    def test_never_empty(self):
        p = particle([1, 0, 0])
        # flips bit 0 for sure and nothing else, so every draw would be empty
        v = np.array([1e300, 0.0, 0.0])
        new = update_position(p, v, np.random.default_rng(3))
        assert new.count == 1

    def test_deterministic(self):
        p = particle(np.arange(50) % 3 == 0)
        v = np.linspace(-3.0, 3.0, 50)
        assert update_position(p, v, np.random.default_rng(8)) == update_position(p, v, np.random.default_rng(8))


class TestAdaptParams:
    @pytest.fixture
    def state(self):
        positions = [FeatureMask.from_indices(10, range(k, k + 3)) for k in range(4)]
        return SwarmState(positions=positions, gbest=positions[0])

    def test_endpoints(self, state):
        config = IdpsoConfig(max_iterations=40)
        for i in range(4):
            assert adapt_params(config, 0, i, state) == pytest.approx((0.9, 2.0, 2.0))
            assert adapt_params(config, 40, i, state)[0] == pytest.approx(0.4)

    def test_inertia_never_increases(self, state):
        config = IdpsoConfig(max_iterations=40)
        for i in range(4):
            w = [adapt_params(config, t, i, state)[0] for t in range(41)]
            assert all(a >= b for a, b in zip(w, w[1:]))
            assert all(0.4 <= x <= 0.9 for x in w)

    def test_far_particles_keep_more_inertia(self, state):
        config = IdpsoConfig(max_iterations=40)
        near = adapt_params(config, 20, 0, state)[0]
        far = adapt_params(config, 20, 3, state)[0]
        assert far > near

    def test_linear_schedule(self, state):
        config = IdpsoConfig(max_iterations=10, schedule="linear")
        assert adapt_params(config, 5, 2, state)[0] == pytest.approx(0.65)

    def test_out_of_range(self, state):
        with pytest.raises(ConfigurationError):
            adapt_params(IdpsoConfig(max_iterations=10), 11, 0, state)

    def test_unknown_schedule(self, state):
        with pytest.raises(ConfigurationError):
            adapt_params(IdpsoConfig(schedule="nope"), 0, 0, state)


class TestArchive:
    def test_keeps_best_distinct_masks(self):
        a = FeatureMask.from_indices(4, [0])
        b = FeatureMask.from_indices(4, [0, 1])
        c = FeatureMask.from_indices(4, [2])
        archive = archive_update(ExternalArchive(capacity=2), [(b, 0.1), (a, 0.3), (b, 0.1), (c, 0.1)])
        # equal EER: fewer features first, then the mask bits
        assert [e.mask for e in archive.entries] == [c, b]

    def test_head_never_gets_worse(self):
        archive = ExternalArchive(capacity=3)
        mask = FeatureMask.from_indices(4, [1])
        archive = archive_update(archive, [(mask, 0.2)])
        archive = archive_update(archive, [(FeatureMask.from_indices(4, [2]), 0.5)])
        assert archive.head.mask == mask

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_global_top_k(self, seed):
        rng = np.random.default_rng(seed)
        pool = [FeatureMask(bits=rng.random(12) < 0.5) for _ in range(30)]
        pool = [m for m in pool if m.count > 0]
        value = {m.key: float(np.round(rng.uniform(0, 0.3), 2)) for m in pool}
        capacity = int(rng.integers(1, 8))

        archive, seen = ExternalArchive(capacity=capacity), {}
        for _ in range(int(rng.integers(1, 10))):
            chunk = [pool[i] for i in rng.integers(0, len(pool), size=int(rng.integers(1, 6)))]
            archive = archive_update(archive, [(m, value[m.key]) for m in chunk])
            seen.update({m.key: m for m in chunk})

        expected = sorted(seen.values(), key=lambda m: (value[m.key], m.count, m.key))[:capacity]
        assert [e.mask for e in archive.entries] == expected


class TestFitness:
    def test_empty_mask_is_infinite(self, opt_ctx):
        assert fitness(FeatureMask(bits=np.zeros(opt_ctx.dimension, dtype=bool)), opt_ctx) == math.inf

    def test_full_mask_matches_baseline(self, opt_ctx):
        mask = FeatureMask.all_ones(opt_ctx.dimension)
        baseline = opt_ctx.report(opt_ctx.train(mask)).mean_eer
        assert fitness(mask, opt_ctx) == baseline
        assert 0.0 <= baseline <= 1.0

    def test_noise_dimensions_score_worse_than_informative_ones(self):
        layout = dimension_layout(TINY_SPEC)
        noise = [d for d, kind in zip(layout.redundant, layout.noise_kinds) if kind == NoiseKind.PURE_NOISE]
        informative_eer, noise_eer = [], []
        for seed in range(5):
            ctx = pipeline_context(TINY_SPEC.model_copy(update={"seed": seed}), seed=seed)
            informative_eer.append(fitness(FeatureMask.from_indices(TINY_SPEC.D, layout.informative), ctx))
            noise_eer.append(fitness(FeatureMask.from_indices(TINY_SPEC.D, noise), ctx))
        assert np.mean(noise_eer) >= np.mean(informative_eer)


class TestRun:
    def test_single_round(self, opt_ctx, sel_ctx):
        config = IdpsoConfig(population=2, max_iterations=1, seed=0)
        result = asyncio.run(run(config, StrategyKind.NV, opt_ctx, sel_ctx))
        assert len(result.trace) == 1
        assert len(result.candidates) == 2
        assert result.best_mask.count >= 1

    @pytest.mark.parametrize("strategy", list(StrategyKind))
    def test_single_round_returns_the_better_of_two(self, strategy, opt_ctx, sel_ctx):
        config = IdpsoConfig(population=2, max_iterations=1, seed=0)
        result = asyncio.run(run(config, strategy, opt_ctx, sel_ctx))
        column = "opt_eer" if strategy == StrategyKind.NV else "sel_eer"
        masks = [FeatureMask.from_hex(c.mask_hex, opt_ctx.dimension) for c in result.candidates]
        values = [getattr(c, column) for c in result.candidates]
        better = min(range(2), key=lambda i: (values[i], masks[i].count, masks[i].key))
        assert result.best_mask == masks[better]

    def test_archive_head_never_rises(self, tiny_idpso, opt_ctx, sel_ctx):
        result = asyncio.run(run(tiny_idpso, StrategyKind.GV, opt_ctx, sel_ctx))
        heads = [r.archive_best_eer for r in result.trace.rows]
        assert all(a >= b for a, b in zip(heads, heads[1:]))

    @pytest.mark.parametrize("seed", range(10))
    def test_archive_head_beats_final_population(self, seed, opt_ctx, sel_ctx):
        config = IdpsoConfig(population=4, max_iterations=3, seed=seed)
        pv = asyncio.run(run(config, StrategyKind.PV, opt_ctx, sel_ctx))
        gv = asyncio.run(run(config, StrategyKind.GV, opt_ctx, sel_ctx))
        assert gv.archive.head.selection_fitness <= pv.returned_sel_eer
        assert gv.returned_sel_eer == gv.archive.head.selection_fitness

    def test_trace_has_one_row_per_round(self, tiny_idpso, opt_ctx, sel_ctx):
        result = asyncio.run(run(tiny_idpso, StrategyKind.PV, opt_ctx, sel_ctx))
        assert [r.iteration for r in result.trace.rows] == [0, 1, 2]
        assert len(result.candidates) == tiny_idpso.population * tiny_idpso.max_iterations
        best = [r.best_opt_eer for r in result.trace.rows]
        assert all(a >= b for a, b in zip(best, best[1:]))

    def test_strategy_does_not_change_the_trajectory(self, tmp_path, tiny_idpso, opt_ctx, sel_ctx):
        nv = asyncio.run(run(tiny_idpso, StrategyKind.NV, opt_ctx, sel_ctx))
        pv = asyncio.run(run(tiny_idpso, StrategyKind.PV, opt_ctx, sel_ctx))
        a = write_trace_csv(tmp_path / "nv.csv", nv.trace).read_bytes()
        b = write_trace_csv(tmp_path / "pv.csv", pv.trace).read_bytes()
        assert a == b
        assert [c.mask_hex for c in nv.candidates] == [c.mask_hex for c in pv.candidates]

    def test_global_validation_is_never_worse_on_selection(self, tiny_idpso, opt_ctx, sel_ctx):
        pv = asyncio.run(run(tiny_idpso, StrategyKind.PV, opt_ctx, sel_ctx))
        gv = asyncio.run(run(tiny_idpso, StrategyKind.GV, opt_ctx, sel_ctx))
        assert gv.returned_sel_eer <= pv.returned_sel_eer
        assert gv.overfitting_gap == 0.0
        assert gv.best_mask == gv.archive.head.mask

    def test_gap_is_non_negative(self, tiny_idpso, opt_ctx, sel_ctx):
        nv = asyncio.run(run(tiny_idpso, StrategyKind.NV, opt_ctx, sel_ctx))
        assert not nv.overfitting_gap < 0.0
        assert nv.best_logged_sel_eer <= nv.returned_sel_eer

    def test_without_audit_only_gv_fills_the_archive(self, opt_ctx, sel_ctx):
        config = IdpsoConfig(population=4, max_iterations=2, seed=0, audit_selection=False)
        nv = asyncio.run(run(config, StrategyKind.NV, opt_ctx, sel_ctx))
        gv = asyncio.run(run(config, StrategyKind.GV, opt_ctx, sel_ctx))
        assert len(nv.archive) == 0
        assert len(gv.archive) > 0
        assert all(math.isnan(c.sel_eer) for c in nv.candidates)

    def test_overlapping_writers(self, tiny_idpso, tiny_prototypes, tiny_split, opt_ctx):
        bundles = build_optimization_queries(tiny_split.optimization, 4, 4, TINY_REFERENCES, seed=1)
        leaky = WrapperContext("leaky", tiny_prototypes, bundles, KernelParams(gamma=0.05), seed=0)
        with pytest.raises(ProtocolError):
            asyncio.run(run(tiny_idpso, StrategyKind.NV, opt_ctx, leaky))

    def test_deterministic(self, tmp_path, tiny_idpso, opt_ctx, sel_ctx):
        first = asyncio.run(run(tiny_idpso, StrategyKind.GV, opt_ctx, sel_ctx))
        opt_ctx.cache.clear()
        sel_ctx.cache.clear()
        second = asyncio.run(run(tiny_idpso, StrategyKind.GV, opt_ctx, sel_ctx))
        assert first.best_mask == second.best_mask
        a = write_candidates_csv(tmp_path / "a.csv", first.candidates).read_bytes()
        b = write_candidates_csv(tmp_path / "b.csv", second.candidates).read_bytes()
        assert a == b


def test_run_artifacts(tmp_path, tiny_idpso, opt_ctx, sel_ctx):
    result = asyncio.run(run(tiny_idpso, StrategyKind.GV, opt_ctx, sel_ctx))
    rows = read_rows_csv(write_trace_csv(tmp_path / "trace.csv", result.trace), ["iteration", "best_opt_eer"])
    assert len(rows) == tiny_idpso.max_iterations

    payload = read_json(write_best_mask_json(tmp_path / "best_mask.json", result))
    assert payload["strategy"] == "gv"
    assert read_mask_json(payload) == result.best_mask

    with pytest.raises(ConfigurationError):
        read_mask_json({"strategy": "gv"})
