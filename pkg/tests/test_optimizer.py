import math

import pytest

from simulator.models import DesignEvaluation, DesignSpace, FrontierRow, Objective, SirPolicy
from simulator.optimizer import (
    InfeasibleDesignError,
    build_manifest,
    candidate_designs,
    divergence_sweep,
    evaluate_design,
    evaluate_designs,
    grid_search,
    is_feasible,
    objective_value,
    power_sweep,
)


@pytest.fixture
def space(small_room, bulb_factory):
    return DesignSpace(
        template=bulb_factory(small_room, counts=(2, 2, 2)),
        boards_per_layer_range=((2, 3), (2, 3), (2, 2)),
        divergence_range=(20.0, 40.0, 10.0),
        power_constraint=7.0,
        per_board_power=1.0,
    )


@pytest.fixture
def lenient(protocol):
    return protocol.model_copy(update={"strict_coverage": False})


def _evaluation(mean_sir=10.0, zero=0, std=0.5):
    return DesignEvaluation(
        boards_per_layer=(2, 2, 2), divergence_angle=30.0, total_boards=6,
        mean_sir=mean_sir, zero_signal_placements=zero, illum_mean=1.0, illum_std=std,
    )


class TestDesignSpace:
    def test_candidates_cover_every_combination(self, space):
        designs = candidate_designs(space)
        assert len(designs) == 2 * 2 * 1 * 3
        assert {d.divergence_angle for d in designs} == {20.0, 30.0, 40.0}
        assert all(d.half_intensity_angle == d.divergence_angle for d in designs)
        assert all(d.power_per_board == 1.0 for d in designs)

    def test_divergence_values_include_endpoint(self, space):
        wide = space.model_copy(update={"divergence_range": (5.0, 40.0, 5.0)})
        values = wide.divergence_values()
        assert values[0] == 5.0 and values[-1] == 40.0
        assert len(values) == 8

    def test_feasibility(self, space):
        by_total = {d.total_boards: d for d in candidate_designs(space)}
        assert is_feasible(by_total[7], 7.0)
        assert not is_feasible(by_total[8], 7.0)

    def test_range_must_match_layers(self, space):
        with pytest.raises(ValueError):
            DesignSpace(**{**space.model_dump(), "boards_per_layer_range": ((2, 3),)})


class TestObjective:
    def test_sir_only(self):
        assert objective_value(_evaluation(), Objective.SIR_ONLY) == 10.0

    def test_illumination_ratio(self):
        assert objective_value(_evaluation(), Objective.SIR_OVER_ILLUM_VARIANCE) == pytest.approx(40.0)
        assert objective_value(_evaluation(std=0.0), Objective.SIR_OVER_ILLUM_VARIANCE) == math.inf

    def test_coverage_holes(self):
        holed = _evaluation(zero=2)
        assert objective_value(holed, Objective.SIR_ONLY) == -math.inf
        assert objective_value(holed, Objective.SIR_ONLY, strict_coverage=False) == 10.0


class TestGridSearch:
    def test_matches_exhaustive_enumeration(self, space, protocol):
        result = grid_search(space, protocol)

        scored = []
        for design in candidate_designs(space):
            if not is_feasible(design, space.power_constraint):
                continue
            evaluation = evaluate_design(design, protocol)
            value = objective_value(evaluation, space.objective, protocol.strict_coverage)
            scored.append((-value, evaluation.total_boards, evaluation.divergence_angle,
                           evaluation.boards_per_layer, evaluation))
        best = min(scored, key=lambda s: s[:4])[-1]

        assert result.feasible_count == len(scored) == 9
        assert result.best_design.boards_per_layer == best.boards_per_layer
        assert result.best_design.divergence_angle == best.divergence_angle
        assert result.best_sir == pytest.approx(best.mean_sir_db)

    def test_singleton_feasible_set(self, space, protocol):
        single = space.model_copy(update={"divergence_range": (30.0, 30.0, 1.0), "power_constraint": 6.0})
        result = grid_search(single, protocol)
        assert result.feasible_count == 1
        assert result.best_design.boards_per_layer == (2, 2, 2)
        assert result.best_design.divergence_angle == 30.0

    def test_nothing_fits_budget(self, space, protocol):
        with pytest.raises(InfeasibleDesignError, match="No feasible design"):
            grid_search(space.with_budget(5.0), protocol)

    def test_thread_count_does_not_change_result(self, space, protocol):
        assert grid_search(space, protocol, threads=1) == grid_search(space, protocol, threads=4)

    def test_cache_is_filled(self, space, protocol):
        cache = {}
        evaluate_designs(candidate_designs(space)[:2], protocol, cache=cache)
        assert len(cache) == 2


class TestPowerSweep:
    def test_frontier(self, space, lenient):
        rows = power_sweep(space, [6.0, 7.0, 8.0], lenient)
        assert [r.budget for r in rows] == [6.0, 7.0, 8.0]
        unconstrained = [r.sir_unconstrained_db for r in rows]
        assert unconstrained == sorted(unconstrained)
        for row in rows:
            assert row.sir_constrained_db <= row.sir_unconstrained_db + 1e-12
            assert row.illum_variance >= 0.0

    def test_budgets_must_ascend(self, space, lenient):
        with pytest.raises(ValueError):
            power_sweep(space, [8.0, 6.0], lenient)

    def test_budget_below_smallest_bulb_is_reported_not_raised(self, space, lenient):
        rows = power_sweep(space, [5.0, 6.0, 7.0], lenient)
        assert [r.budget for r in rows] == [5.0, 6.0, 7.0]
        assert not rows[0].feasible
        assert rows[0].sir_unconstrained_db is None
        assert rows[0].unconstrained_boards == ()
        assert all(r.feasible for r in rows[1:])
        assert rows[1].unconstrained_boards == (2, 2, 2)

    def test_manifest_chooses_largest_feasible_budget(self, space, lenient):
        rows = power_sweep(space, [6.0, 7.0], lenient) + [FrontierRow(budget=8.0, feasible=False)]
        manifest = build_manifest(space, lenient, rows)
        assert manifest["chosen"]["budget"] == 7.0
        assert manifest["frontier"][-1]["feasible"] is False
        assert build_manifest(space, lenient, [FrontierRow(budget=5.0, feasible=False)])["chosen"] is None

    def test_manifest(self, space, lenient):
        rows = power_sweep(space, [7.0], lenient)
        manifest = build_manifest(space, lenient, rows)
        assert manifest["seed"] == lenient.seed
        assert len(manifest["frontier"]) == 1
        assert manifest["chosen"]["unconstrained"]["boards_per_layer"] == list(rows[0].unconstrained_boards)
        assert build_manifest(space, lenient, [])["chosen"] is None


class TestDivergenceSweep:
    def test_single_angle(self, bulb_factory, protocol):
        rows = divergence_sweep(bulb_factory(protocol.room), [25.0], [0.2], protocol)
        assert len(rows) == 1
        assert rows[0].angle == 25.0
        assert rows[0].mean_sir == rows[0].per_power[0.2]

    def test_power_order_does_not_matter(self, bulb_factory, protocol):
        template = bulb_factory(protocol.room)
        forward = divergence_sweep(template, [20.0, 35.0], [0.1, 0.5, 1.0], protocol)
        backward = divergence_sweep(template, [20.0, 35.0], [1.0, 0.5, 0.1], protocol)
        assert [r.mean_sir for r in forward] == [r.mean_sir for r in backward]

    def test_rejects_bad_input(self, bulb_factory, protocol):
        template = bulb_factory(protocol.room)
        with pytest.raises(ValueError):
            divergence_sweep(template, [95.0], [1.0], protocol)
        with pytest.raises(ValueError):
            divergence_sweep(template, [20.0], [], protocol)

    def test_total_power_matters_only_with_detection_threshold(self, bulb_factory, protocol):
        template = bulb_factory(protocol.room)
        blind = divergence_sweep(template, [20.0], [0.5, 50.0], protocol)[0]
        assert blind.per_power[0.5] == pytest.approx(blind.per_power[50.0], rel=1e-9)

        thresholded = protocol.model_copy(update={"sir_policy": SirPolicy(sensitivity_w=1e-4)})
        row = divergence_sweep(template, [20.0], [0.5, 50.0], thresholded)[0]
        assert row.per_power[0.5] != pytest.approx(row.per_power[50.0], rel=1e-6)
