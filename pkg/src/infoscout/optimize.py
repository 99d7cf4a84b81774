"""UCB acquisition, the multi-epoch surrogate optimization loop and the exhaustive greedy baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .surrogate import (BKIAccumulator, BKIConfig, GPCache, KernelConfig, Prediction, SampleSet,
                        as_actions)
from .world import Pose

BACKENDS = ("gp", "bki")


@dataclass(frozen=True)
class UCBConfig:
    alpha: float = 1.0
    alpha_schedule: str = "constant"  # or "gp_ucb"
    delta: float = 0.1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.alpha_schedule not in ("constant", "gp_ucb"):
            raise ValueError(f"unknown alpha schedule {self.alpha_schedule!r}")
        if self.alpha_schedule == "gp_ucb" and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def gp_ucb_alpha(n_actions: int, epoch: int, delta: float) -> float:
    """alpha_T = 2 ln(|D| T^2 pi^2 / (6 delta))."""
    return 2.0 * math.log(n_actions * epoch ** 2 * math.pi ** 2 / (6.0 * delta))


def alpha_at(cfg: UCBConfig, epoch: int, n_actions: int) -> float:
    if cfg.alpha_schedule == "constant":
        return cfg.alpha
    return gp_ucb_alpha(n_actions, epoch, cfg.delta)


def ucb(pred: Prediction, cfg: UCBConfig = UCBConfig(), epoch: int = 1, n_actions: int = 1) -> np.ndarray:
    """Acquisition mean + sqrt(alpha) * std per query."""
    var = np.asarray(pred.variance, dtype=float)
    if np.any(var < 0):
        raise ValueError("variances must be non-negative")
    return np.asarray(pred.mean, dtype=float) + math.sqrt(alpha_at(cfg, epoch, n_actions)) * np.sqrt(var)


@dataclass(frozen=True)
class OptimizeConfig:
    n_epoch: int = 30
    ucb: UCBConfig = field(default_factory=UCBConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    bki: BKIConfig = field(default_factory=BKIConfig)
    noise_sigma: float = 1e-2
    cache: bool = True
    random_ties: bool = False

    def __post_init__(self):
        if self.n_epoch < 1:
            raise ValueError("n_epoch must be at least 1")


@dataclass
class OptimizationResult:
    best_actions: list = field(default_factory=list)
    best_values: list = field(default_factory=list)
    epochs_run: int = 0
    explicit_evals: int = 0

    @property
    def best(self) -> tuple[Pose, float]:
        """Highest-valued suggestion; the earliest wins ties."""
        i = int(np.argmax(self.best_values))
        return self.best_actions[i], self.best_values[i]


def _argmax(values: np.ndarray, rng, random_ties: bool) -> int:
    if not random_ties:
        return int(np.argmax(values))
    top = np.flatnonzero(values == values.max())
    return int(top[0]) if len(top) == 1 else int(rng.choice(top))


def _key(action) -> tuple:
    return tuple(float(v) for v in np.asarray(action, dtype=float).reshape(3))


def bo_loop(samples: SampleSet, queries, backend: str, evaluate: Callable[[Pose], float],
            cfg: OptimizeConfig = OptimizeConfig(), rng=None) -> OptimizationResult:
    """Surrogate-guided search for the highest-CRMI action.

    Each epoch predicts CRMI over the remaining queries, ranks them by UCB and compares
    the top score with the best explicitly known value. The incumbent is re-emitted if
    it wins; otherwise the top query is evaluated with ``evaluate`` (or read from the
    sample set when already present), added to the samples and dropped from the pool.
    Every emitted value is an explicit CRMI.
    """
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if len(samples) < 1:
        raise ValueError("at least one initial sample is required")
    q = as_actions(queries)
    if len(q) == 0:
        raise ValueError("queries must be nonempty")
    if cfg.random_ties and rng is None:
        raise ValueError("random tie-breaking needs a random generator")
    data = samples.copy()
    data.noise_sigma = cfg.noise_sigma
    known = {}
    for a, v in zip(data.actions, data.values):
        known.setdefault(_key(a), float(v))
    active = np.ones(len(q), dtype=bool)
    if backend == "gp":
        model = GPCache(q, data, cfg.kernel, cache=cfg.cache)
    else:
        model = BKIAccumulator(q, cfg.kernel, cfg.bki)
        model.add_many(data)
    n_actions = len(q) + len(data)
    result = OptimizationResult()
    for epoch in range(1, cfg.n_epoch + 1):
        if not active.any():
            break
        pool = np.flatnonzero(active)
        f = ucb(model.predict(active), cfg.ucb, epoch, n_actions)
        pick = pool[_argmax(f, rng, cfg.random_ties)]
        f_top = f[pool == pick][0]
        inc = _argmax(data.values, rng, cfg.random_ties)
        if data.values[inc] > f_top:
            action, value = data.actions[inc], float(data.values[inc])
        else:
            action = q[pick]
            active[pick] = False
            value = known.get(_key(action))
            if value is None:
                value = float(evaluate(Pose.from_array(action)))
                result.explicit_evals += 1
                known[_key(action)] = value
                data.append(action, value)
                model.add(action, value)
        result.best_actions.append(Pose.from_array(action))
        result.best_values.append(value)
        result.epochs_run = epoch
    return result


def naive_greedy(actions, evaluate: Callable[[Pose], float]) -> OptimizationResult:
    """Evaluate every action explicitly and return the best one (lowest index on ties)."""
    acts = as_actions(actions)
    if len(acts) == 0:
        raise ValueError("actions must be nonempty")
    values = np.array([evaluate(Pose.from_array(a)) for a in acts], dtype=float)
    i = int(np.argmax(values))
    return OptimizationResult([Pose.from_array(acts[i])], [float(values[i])], 1, len(acts))
