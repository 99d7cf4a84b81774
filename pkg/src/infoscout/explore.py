"""Exploration loop: sample actions, score them, go to the best one or backtrack, map along the way."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .crm import BeliefMap, CRMConfig, coverage, map_entropy
from .infogain import CRMIEvaluator, InfoEvalConfig
from .optimize import OptimizeConfig, bo_loop, naive_greedy
from .plan import PlanConfig, PlanningError, astar, gen_actions, split_actions
from .sensor import SensorConfig, simulate_scan
from .surrogate import SampleSet, as_actions
from .world import GroundTruthMap, Pose, is_free

log = logging.getLogger(__name__)

ENGINES = ("ng", "gpbo", "bkio")


@dataclass(frozen=True)
class ExplorationConfig:
    info_threshold: float = 2.0
    n_loop: int = 100
    engine: str = "bkio"
    seed: int = 0
    coverage_epsilon: float = 0.05
    timing: bool = True  # False records zero times so that outputs are reproducible byte for byte
    sensor: SensorConfig = field(default_factory=SensorConfig)
    crm: CRMConfig = field(default_factory=CRMConfig)
    info: InfoEvalConfig = field(default_factory=InfoEvalConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    optimize: OptimizeConfig = field(default_factory=OptimizeConfig)

    def __post_init__(self):
        if self.info_threshold < 0:
            raise ValueError("info_threshold must be non-negative")
        if self.n_loop < 1:
            raise ValueError("n_loop must be at least 1")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")


@dataclass
class StepRecord:
    step_index: int
    chosen: Pose
    chosen_crmi: float
    eval_time: float
    step_time: float
    entropy_after: float
    coverage_after: float
    distance_after: float
    backtracked: bool
    explicit_evals: int


def choose_action(candidates: list, belief: BeliefMap, cfg: ExplorationConfig, rng):
    """Run the configured engine on one belief snapshot; returns (pose, crmi, explicit evals)."""
    evaluate = CRMIEvaluator(belief, cfg.sensor, cfg.info)
    if cfg.engine == "ng":
        res = naive_greedy(candidates, evaluate)
    else:
        n = min(cfg.plan.n_explicit, len(candidates))
        split = split_actions(candidates, n, rng)
        xs = as_actions(split.explicit)
        ys = [evaluate(p) for p in split.explicit]
        samples = SampleSet(xs, ys, cfg.optimize.noise_sigma)
        if split.query:
            backend = "gp" if cfg.engine == "gpbo" else "bki"
            res = bo_loop(samples, split.query, backend, evaluate, cfg.optimize, rng)
        else:
            i = int(np.argmax(ys))
            res = naive_greedy([split.explicit[i]], lambda p: ys[i])
    pose, value = res.best
    return pose, value, evaluate.calls


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    def __call__(self) -> float:
        return time.perf_counter() if self.enabled else 0.0


def run_exploration(truth: GroundTruthMap, start: Pose, cfg: ExplorationConfig = ExplorationConfig(),
                    belief: BeliefMap | None = None):
    """Explore ``truth`` from ``start``; returns the final belief and one record per step.

    A step picks the best candidate action. Above the information threshold the robot
    drives there and pushes it on the history stack; otherwise it pops the stack and
    returns to the new top (ending when the stack is empty). Scans are taken along the
    executed path.
    """
    if not is_free(truth, start):
        raise ValueError(f"start pose {start} is not free in the ground truth")
    clock = _Clock(cfg.timing)
    rng = np.random.default_rng(cfg.seed)
    belief = belief.copy() if belief is not None else BeliefMap.for_world(truth, cfg.crm)
    sensor = cfg.sensor
    belief.integrate_scan(simulate_scan(truth, start, sensor, rng), sensor)
    history = [start]
    current = start
    distance = 0.0
    records = []
    step = 0
    while history and step < cfg.n_loop:
        step += 1
        t0 = clock()
        goal, value, n_evals, eval_time = None, math.nan, 0, 0.0
        candidates, _ = gen_actions(current, belief, rng, cfg.plan)
        if candidates:
            te = clock()
            goal, value, n_evals = choose_action(candidates, belief, cfg, rng)
            eval_time = clock() - te
        path = None
        if goal is not None and value > cfg.info_threshold:
            try:
                path = astar(belief, current, goal, cfg.plan)
            except PlanningError:
                log.info("step %d: no path to the chosen action, backtracking", step)
        backtracked = path is None
        if backtracked:
            value = math.nan
            history.pop()
            goal = history[-1] if history else None
            if goal is not None:
                try:
                    path = astar(belief, current, goal, cfg.plan)
                except PlanningError:
                    log.info("step %d: cannot return to %s", step, goal)
        if path is not None:
            current, travelled = _execute(truth, belief, path, sensor, rng)
            distance += travelled
            if not backtracked:
                history.append(current)
        chosen = goal if goal is not None else current
        records.append(StepRecord(
            step, chosen, value, eval_time, max(clock() - t0, eval_time),
            map_entropy(belief), coverage(belief, cfg.coverage_epsilon), distance, backtracked, n_evals))
    return belief, records


def _execute(truth, belief, path, sensor, rng):
    """Drive along ``path`` scanning every cell or so; stops early if the truth blocks the way."""
    res = belief.geometry.resolution
    pose = path.waypoints[0]
    last_scan = None
    travelled = 0.0
    wps = path.waypoints
    for i, wp in enumerate(wps):
        if i > 0:
            if not is_free(truth, wp):
                break
            travelled += math.hypot(wp.x - pose.x, wp.y - pose.y)
        pose = wp
        last = i == len(wps) - 1
        if i > 0 and not last and math.hypot(pose.x - last_scan.x, pose.y - last_scan.y) < res - 1e-9:
            continue
        if i == 0 and not last:
            last_scan = pose
            continue
        belief.integrate_scan(simulate_scan(truth, pose, sensor, rng), sensor)
        last_scan = pose
    if pose is not wps[-1]:
        # blocked: scan where the robot stopped
        belief.integrate_scan(simulate_scan(truth, pose, sensor, rng), sensor)
    return pose, travelled
