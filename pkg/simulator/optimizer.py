"""
Bulb design optimizer.

Exhaustive search over boards-per-layer and divergence angle under a total
power budget, maximizing mean SIR or mean SIR over floor illumination variance.
"""

import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

from joblib import Parallel, delayed

from simulator.channel import floor_irradiance_map
from simulator.geometry import build_bulb
from simulator.metrics import illumination_stats, mean_placement_sir, to_db
from simulator.models import (
    BulbDesign,
    DesignEvaluation,
    DesignSpace,
    DivergenceRow,
    EvalProtocol,
    FrontierRow,
    Objective,
    OptimResult,
)


logger = logging.getLogger(__name__)

BUDGET_TOLERANCE = 1e-12

CacheKey = Tuple[Tuple[int, ...], float, float, float]


class InfeasibleDesignError(ValueError):
    """No design of the space can be built within the power budget"""


def evaluate_design(design: BulbDesign, protocol: EvalProtocol) -> DesignEvaluation:
    """
    Mean SIR over the protocol's receiver-pair placements plus floor illumination.

    Args:
        design: Bulb design; it is re-centred on the protocol room's ceiling
        protocol: Placement and scoring protocol

    Returns:
        DesignEvaluation; zero_signal_placements > 0 flags coverage holes

    Raises:
        ValueError: if the design's boards overlap
    """
    design = design.centered_in(protocol.room)
    boards = build_bulb(design)
    mean_sir, zero = mean_placement_sir(boards, protocol)
    stats = illumination_stats(floor_irradiance_map(boards, protocol.room))
    return DesignEvaluation(
        boards_per_layer=design.boards_per_layer,
        divergence_angle=design.divergence_angle,
        total_boards=design.total_boards,
        mean_sir=mean_sir,
        zero_signal_placements=zero,
        illum_mean=stats.mean,
        illum_std=stats.std,
    )


def objective_value(evaluation: DesignEvaluation, objective: Objective, strict_coverage: bool = True) -> float:
    if strict_coverage and evaluation.zero_signal_placements > 0:
        return -math.inf
    if objective == Objective.SIR_ONLY:
        return evaluation.mean_sir
    variance = evaluation.illum_variance
    if variance <= 0.0:
        return math.inf
    return evaluation.mean_sir / variance


def candidate_designs(space: DesignSpace) -> List[BulbDesign]:
    """Every (boards per layer, divergence) combination, budget ignored"""
    ranges = [range(lo, hi + 1) for lo, hi in space.boards_per_layer_range]
    designs = []
    for counts in itertools.product(*ranges):
        base = space.template.with_board_counts(counts).model_copy(
            update={"power_per_board": space.per_board_power}
        )
        for angle in space.divergence_values():
            designs.append(base.with_divergence(angle, space.half_intensity_follows_divergence))
    return designs


def is_feasible(design: BulbDesign, budget: float) -> bool:
    return design.total_power <= budget * (1.0 + BUDGET_TOLERANCE)


def _cache_key(design: BulbDesign) -> CacheKey:
    return (design.boards_per_layer, design.divergence_angle,
            design.half_intensity_angle, design.power_per_board)


def _safe_evaluate(design: BulbDesign, protocol: EvalProtocol) -> Optional[DesignEvaluation]:
    try:
        return evaluate_design(design, protocol)
    except ValueError as e:
        logger.info("Skipping design %s @ %.1f deg: %s",
                    design.boards_per_layer, design.divergence_angle, e)
        return None


def evaluate_designs(
    designs: Sequence[BulbDesign],
    protocol: EvalProtocol,
    threads: int = 1,
    cache: Optional[Dict[CacheKey, Optional[DesignEvaluation]]] = None,
) -> List[Optional[DesignEvaluation]]:
    """
    Evaluate designs in parallel; results come back in input order.

    Designs whose boards overlap evaluate to None.
    """
    cache = {} if cache is None else cache
    pending = []
    seen = set()
    for design in designs:
        key = _cache_key(design)
        if key not in cache and key not in seen:
            pending.append(design)
            seen.add(key)

    if pending:
        results = Parallel(n_jobs=threads, prefer="threads")(
            delayed(_safe_evaluate)(design, protocol) for design in pending
        )
        for design, result in zip(pending, results):
            cache[_cache_key(design)] = result

    return [cache[_cache_key(d)] for d in designs]


def _rank_key(objective: float, evaluation: DesignEvaluation):
    return (-objective, evaluation.total_boards, evaluation.divergence_angle, evaluation.boards_per_layer)


def grid_search(
    space: DesignSpace,
    protocol: EvalProtocol,
    threads: int = 1,
    cache: Optional[Dict[CacheKey, Optional[DesignEvaluation]]] = None,
) -> OptimResult:
    """
    Exhaustive search over the feasible designs of a space.

    Ties on the objective go to fewer boards, then smaller divergence, then
    the lexicographically smaller board counts.

    Raises:
        InfeasibleDesignError: when no design fits the budget or every fitting design overlaps
    """
    candidates = [d for d in candidate_designs(space) if is_feasible(d, space.power_constraint)]
    if not candidates:
        raise InfeasibleDesignError(
            f"No feasible design: the smallest bulb exceeds the {space.power_constraint} W budget"
        )

    evaluations = evaluate_designs(candidates, protocol, threads, cache)
    scored = [
        (objective_value(e, space.objective, protocol.strict_coverage), e, d)
        for d, e in zip(candidates, evaluations)
        if e is not None
    ]
    if not scored:
        raise InfeasibleDesignError("No feasible design: every design within budget has overlapping boards")

    best_objective, best_eval, best_design = min(scored, key=lambda s: _rank_key(s[0], s[1]))
    logger.info("budget %.3f W, %s: best %s @ %.1f deg (%d feasible)",
                space.power_constraint, space.objective.value,
                best_eval.boards_per_layer, best_eval.divergence_angle, len(scored))

    return OptimResult(
        best_design=best_design.centered_in(protocol.room),
        best_objective=best_objective,
        best_sir=best_eval.mean_sir_db,
        illum_std=best_eval.illum_std,
        feasible_count=len(scored),
        frontier=[(space.power_constraint, best_objective)],
    )


def power_sweep(
    space: DesignSpace,
    budgets: Sequence[float],
    protocol: EvalProtocol,
    threads: int = 1,
) -> List[FrontierRow]:
    """
    Best SIR with and without the illumination objective for each budget.

    Evaluations are cached across budgets and objectives. A budget that no
    design fits yields a row with feasible=False and the sweep moves on.

    Raises:
        ValueError: when budgets are not ascending
    """
    if any(b2 < b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError(f"budgets must be ascending, got {list(budgets)}")

    cache: Dict[CacheKey, Optional[DesignEvaluation]] = {}
    rows = []
    for budget in budgets:
        try:
            sir_only = grid_search(space.with_budget(budget).with_objective(Objective.SIR_ONLY),
                                   protocol, threads, cache)
            constrained = grid_search(space.with_budget(budget).with_objective(Objective.SIR_OVER_ILLUM_VARIANCE),
                                      protocol, threads, cache)
        except InfeasibleDesignError as e:
            logger.warning("budget %.3f W skipped: %s", budget, e)
            rows.append(FrontierRow(budget=budget, feasible=False))
            continue
        rows.append(FrontierRow(
            budget=budget,
            sir_unconstrained_db=sir_only.best_sir,
            sir_constrained_db=constrained.best_sir,
            illum_variance=constrained.illum_std ** 2,
            objective=constrained.best_objective,
            unconstrained_boards=sir_only.best_design.boards_per_layer,
            constrained_boards=constrained.best_design.boards_per_layer,
            unconstrained_divergence=sir_only.best_design.divergence_angle,
            constrained_divergence=constrained.best_design.divergence_angle,
        ))
    return rows


def divergence_sweep(
    template: BulbDesign,
    angles: Sequence[float],
    powers: Sequence[float],
    protocol: EvalProtocol,
    follow_half_intensity: bool = True,
    threads: int = 1,
) -> List[DivergenceRow]:
    """
    Mean SIR per divergence angle, averaged over total bulb powers.

    Each total power is spread evenly over the template's boards.
    """
    if not powers:
        raise ValueError("divergence_sweep needs at least one total power")
    for angle in angles:
        if not 0.0 < angle < 90.0:
            raise ValueError(f"divergence angle must be in (0, 90), got {angle}")

    designs = {}
    for angle in angles:
        for total in powers:
            designs[(angle, total)] = template.with_divergence(angle, follow_half_intensity).model_copy(
                update={"power_per_board": total / template.total_boards}
            )
    keys = list(designs)
    evaluations = dict(zip(keys, evaluate_designs([designs[k] for k in keys], protocol, threads)))

    rows = []
    for angle in angles:
        per_power = {}
        for total in powers:
            evaluation = evaluations[(angle, total)]
            if evaluation is None:
                raise ValueError(f"Template boards overlap at {angle} deg")
            per_power[total] = evaluation.mean_sir
        mean = math.fsum(per_power.values()) / len(per_power)
        logger.info("divergence %.1f deg: mean SIR %.4f dB", angle, to_db(mean))
        rows.append(DivergenceRow(angle=angle, mean_sir=mean, per_power=per_power))
    return rows


def build_manifest(space: DesignSpace, protocol: EvalProtocol,
                   rows: Sequence[FrontierRow]) -> Dict[str, Any]:
    """Reproducibility record for an optimizer run; the chosen design is the largest feasible budget's"""
    feasible = [r for r in rows if r.feasible]
    chosen = feasible[-1] if feasible else None
    return {
        "design_space": space.model_dump(mode="json"),
        "eval_protocol": protocol.model_dump(mode="json"),
        "seed": protocol.seed,
        "frontier": [r.model_dump(mode="json") for r in rows],
        "chosen": {
            "budget": chosen.budget,
            "unconstrained": {
                "boards_per_layer": list(chosen.unconstrained_boards),
                "divergence_angle": chosen.unconstrained_divergence,
            },
            "constrained": {
                "boards_per_layer": list(chosen.constrained_boards),
                "divergence_angle": chosen.constrained_divergence,
            },
        } if chosen else None,
    }
