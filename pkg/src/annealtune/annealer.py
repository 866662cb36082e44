"""Simulated-annealing control loop with a Pareto archive.

One temperature drives both objectives: multi-objective deterioration is
collapsed to a scalar before the Metropolis test. The initial and final
temperatures are calibrated from a short probe walk rather than set by
hand, the schedule is geometric, and the current solution periodically
returns to an archived base point.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any

from .evaluator import ObjectiveEvaluator
from .pareto import (
    ArchiveAction,
    ArchiveEntry,
    ObjectiveVector,
    ParetoArchive,
    scalar_deterioration,
)
from .search_space import (
    Configuration,
    RunConfig,
    SearchSpace,
    neighbor,
    random_configuration,
)

#: consecutive outer steps without a best-error improvement before stopping
STAGNATION_OUTER_STEPS = 3

#: probability of jumping back to a random archived solution at an
#: outer-step boundary
RETURN_TO_BASE_PROBABILITY = 0.5


class CalibrationError(RuntimeError):
    """The probe walk observed no deterioration, so no temperature fits."""


def _truncate1(x: float) -> float:
    # reported to one decimal, truncated toward zero (not rounded)
    return math.floor(x * 10 + 1e-9) / 10


@dataclass(frozen=True)
class AnnealingSchedule:
    t_init: float
    t_final: float
    cooling_rate: float
    iteration_budget: int
    outer_iterations: float
    inner_iterations: float

    @property
    def outer_reported(self) -> float:
        return _truncate1(self.outer_iterations)

    @property
    def inner_reported(self) -> float:
        return _truncate1(self.inner_iterations)

    @property
    def outer_steps(self) -> int:
        """Temperature steps the executor actually runs."""
        return math.ceil(self.outer_iterations)

    @property
    def inner_steps(self) -> int:
        """Evaluations per temperature step (budget may truncate the last)."""
        return max(1, round(self.inner_iterations))


def plan_schedule(
    t_init: float, t_final: float, cooling_rate: float, iteration_budget: int
) -> AnnealingSchedule:
    """Derive outer/inner iteration counts from the temperature range.

    outer = ln(t_final/t_init) / ln(cooling_rate); inner = budget / outer.
    Both are kept at full precision; reporting truncates to one decimal.
    """
    if not 0.0 < t_final < t_init:
        raise ValueError("need 0 < t_final < t_init")
    if not 0.0 < cooling_rate < 1.0:
        raise ValueError("cooling_rate must lie in (0, 1)")
    if iteration_budget < 1:
        raise ValueError("iteration_budget must be >= 1")
    outer = math.log(t_final / t_init) / math.log(cooling_rate)
    return AnnealingSchedule(
        t_init=t_init,
        t_final=t_final,
        cooling_rate=cooling_rate,
        iteration_budget=iteration_budget,
        outer_iterations=outer,
        inner_iterations=iteration_budget / outer,
    )


def acceptance_probability(delta_f: float, temperature: float) -> float:
    """min(1, exp(-delta_f / T)); 1 whenever the move does not deteriorate."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    if delta_f <= 0.0:
        return 1.0
    return math.exp(-delta_f / temperature)


def initial_temperature(delta_f_ave: float, acceptance: float) -> float:
    """Invert the acceptance law: the temperature at which an average
    deterioration is accepted with the given probability."""
    if not 0.0 < acceptance < 1.0:
        raise ValueError("acceptance probability must lie in (0, 1)")
    if delta_f_ave <= 0.0:
        raise ValueError("average deterioration must be positive")
    return -delta_f_ave / math.log(acceptance)


def cool(temperature: float, cooling_rate: float) -> float:
    """Geometric decay: one outer step multiplies T by the cooling rate."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    return temperature * cooling_rate


def metropolis_accepts(
    delta_f: float, temperature: float, rng: random.Random
) -> tuple[bool, float]:
    """The acceptance test: improvements pass outright, deteriorations pass
    when a uniform draw does not exceed the acceptance probability (ties
    accept). Returns (accepted, probability)."""
    probability = acceptance_probability(delta_f, temperature)
    if delta_f < 0.0:
        return True, probability
    return rng.random() <= probability, probability


@dataclass(frozen=True)
class CalibrationReport:
    delta_f_ave: float
    probe_count: int
    t_init: float
    t_final: float


def _probe_walk(
    space: SearchSpace,
    evaluator: ObjectiveEvaluator,
    probe_count: int,
    rng: random.Random,
) -> tuple[list[float], Configuration, ObjectiveVector]:
    start = random_configuration(space, rng)
    start_objectives = evaluator.evaluate(start)
    current, current_objectives = start, start_objectives
    deteriorations: list[float] = []
    for _ in range(probe_count):
        nxt = neighbor(current, space, rng)
        nxt_objectives = evaluator.evaluate(nxt)
        delta = scalar_deterioration(
            current_objectives, nxt_objectives, evaluator.flops_max
        )
        if delta > 0.0:
            deteriorations.append(delta)
        current, current_objectives = nxt, nxt_objectives
    return deteriorations, start, start_objectives


def _calibrate_with_start(
    space: SearchSpace,
    evaluator: ObjectiveEvaluator,
    p_init: float,
    probe_count: int,
    rng: random.Random,
    p_final: float,
) -> tuple[CalibrationReport, Configuration, ObjectiveVector]:
    if probe_count < 2:
        raise ValueError("probe_count must be >= 2")
    deteriorations, start, start_objectives = _probe_walk(
        space, evaluator, probe_count, rng
    )
    if not deteriorations:
        raise CalibrationError(
            f"no deteriorating step in {probe_count} probes; "
            "retry with a larger probe_count"
        )
    delta_f_ave = sum(deteriorations) / len(deteriorations)
    report = CalibrationReport(
        delta_f_ave=delta_f_ave,
        probe_count=probe_count,
        t_init=initial_temperature(delta_f_ave, p_init),
        t_final=initial_temperature(delta_f_ave, p_final),
    )
    return report, start, start_objectives


def calibrate_initial_temperature(
    space: SearchSpace,
    evaluator: ObjectiveEvaluator,
    p_init: float,
    probe_count: int,
    rng: random.Random,
    p_final: float = 0.0357,
) -> CalibrationReport:
    """Short random walk; the mean of the positive scalar deteriorations
    fixes both temperatures through the inverted acceptance law."""
    report, _, _ = _calibrate_with_start(
        space, evaluator, p_init, probe_count, rng, p_final
    )
    return report


@dataclass
class AnnealerState:
    current: Configuration
    current_objectives: ObjectiveVector
    temperature: float
    iteration: int
    rng: random.Random
    rejected_streak: int = 0


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    temperature: float
    current_config: Configuration
    current_objectives: ObjectiveVector
    candidate_config: Configuration
    candidate_objectives: ObjectiveVector
    delta_f: float
    probability: float
    accepted: bool
    archive_action: ArchiveAction

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "temperature": self.temperature,
            "current": self.current_config.as_dict(),
            "current_objectives": [
                self.current_objectives.error_rate,
                self.current_objectives.flops,
            ],
            "candidate": self.candidate_config.as_dict(),
            "candidate_objectives": [
                self.candidate_objectives.error_rate,
                self.candidate_objectives.flops,
            ],
            "delta_f": self.delta_f,
            "probability": self.probability,
            "accepted": self.accepted,
            "archive": self.archive_action.value,
        }


def step(
    state: AnnealerState,
    schedule: AnnealingSchedule,
    archive: ParetoArchive,
    evaluator: ObjectiveEvaluator,
) -> StepRecord:
    """One annealing move: propose a neighbor, evaluate, offer to the
    archive, and accept or reject by the Metropolis rule.

    The acceptance uniform is drawn only for deteriorating candidates, so an
    evaluator failure leaves the state untouched (the evaluation happens
    before any mutation).
    """
    if state.iteration >= schedule.iteration_budget:
        raise ValueError("iteration budget exhausted")
    if state.temperature < schedule.t_final:
        raise ValueError("temperature below the final temperature")
    before = state.current
    candidate = neighbor(state.current, evaluator.space, state.rng)
    candidate_objectives = evaluator.evaluate(candidate)
    delta_f = scalar_deterioration(
        state.current_objectives, candidate_objectives, evaluator.flops_max
    )
    accepted, probability = metropolis_accepts(
        delta_f, state.temperature, state.rng
    )
    state.iteration += 1
    action = archive.insert(
        ArchiveEntry(candidate, candidate_objectives, state.iteration)
    )
    record = StepRecord(
        iteration=state.iteration,
        temperature=state.temperature,
        current_config=before,
        current_objectives=state.current_objectives,
        candidate_config=candidate,
        candidate_objectives=candidate_objectives,
        delta_f=delta_f,
        probability=probability,
        accepted=accepted,
        archive_action=action,
    )
    if accepted:
        state.current = candidate
        state.current_objectives = candidate_objectives
        state.rejected_streak = 0
    else:
        state.rejected_streak += 1
    return record


@dataclass
class RunResult:
    archive: ParetoArchive
    trace: list[StepRecord]
    calibration: CalibrationReport
    schedule: AnnealingSchedule
    stop_reason: str
    evaluations: int


def run(run_config: RunConfig, evaluator: ObjectiveEvaluator) -> RunResult:
    """Full tuning run: calibrate, plan, anneal, return the archive.

    The calibration walk's starting point doubles as the initial solution
    (evaluation 1 of the budget), so total evaluator calls stay within
    iteration_budget + probe_count. Stops on budget exhaustion, on cooling
    past t_final, or when the best archived error rate stagnates for
    STAGNATION_OUTER_STEPS consecutive outer steps.
    """
    space = evaluator.space
    if not space.mutable_domains():
        raise ValueError("search space has no mutable domain")
    rng = random.Random(run_config.seed_number)
    calibration, start, start_objectives = _calibrate_with_start(
        space,
        evaluator,
        run_config.initial_acceptance_probability,
        run_config.probe_count,
        rng,
        run_config.final_acceptance_probability,
    )
    schedule = plan_schedule(
        calibration.t_init,
        calibration.t_final,
        run_config.cooling_rate,
        run_config.iteration_budget,
    )
    archive = ParetoArchive()
    # the reused calibration start is evaluation 1 of the budget
    state = AnnealerState(
        current=start,
        current_objectives=start_objectives,
        temperature=schedule.t_init,
        iteration=1,
        rng=rng,
    )
    action = archive.insert(ArchiveEntry(start, start_objectives, 1))
    trace = [
        StepRecord(
            iteration=1,
            temperature=state.temperature,
            current_config=start,
            current_objectives=start_objectives,
            candidate_config=start,
            candidate_objectives=start_objectives,
            delta_f=0.0,
            probability=1.0,
            accepted=True,
            archive_action=action,
        )
    ]
    evaluations = 1 + run_config.probe_count  # calibration walk, start reused

    best_error = archive.best_error_rate()
    stagnant = 0
    stop_reason: str | None = None
    for _outer in range(schedule.outer_steps):
        for _inner in range(schedule.inner_steps):
            if state.iteration >= run_config.iteration_budget:
                stop_reason = "budget"
                break
            trace.append(step(state, schedule, archive, evaluator))
            evaluations += 1
        if stop_reason is not None:
            break
        state.temperature = cool(state.temperature, run_config.cooling_rate)
        if state.temperature < schedule.t_final:
            stop_reason = "temperature"
            break
        new_best = archive.best_error_rate()
        if new_best < best_error:
            best_error = new_best
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= STAGNATION_OUTER_STEPS:
                stop_reason = "stagnation"
                break
        if len(archive) > 0 and rng.random() < RETURN_TO_BASE_PROBABILITY:
            base = rng.choice(archive.entries)
            state.current = base.config
            state.current_objectives = base.objectives
    if stop_reason is None:
        stop_reason = "schedule"
    return RunResult(
        archive=archive,
        trace=trace,
        calibration=calibration,
        schedule=schedule,
        stop_reason=stop_reason,
        evaluations=evaluations,
    )
