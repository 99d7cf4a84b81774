"""Surrogate CRMI predictors over SE(2) actions: Matern 5/2 kernel, exact GP, Bayesian kernel inference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.spatial import cKDTree

SQRT5 = math.sqrt(5.0)
GP_JITTER = 1e-8


@dataclass(frozen=True)
class KernelConfig:
    length_scale: float = 1.5
    truncation_radius: float = 4.0  # in multiples of length_scale, BKI only
    heading_weight: float = 0.5     # meters per radian of heading difference

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")
        if self.heading_weight < 0:
            raise ValueError("heading_weight must be non-negative")

    @property
    def cutoff(self) -> float:
        return self.truncation_radius * self.length_scale


@dataclass(frozen=True)
class BKIConfig:
    zeta: float = 0.001
    theta0: float = 0.0
    sigma_theta: float = 100.0

    def __post_init__(self):
        if self.zeta < 0:
            raise ValueError("zeta must be non-negative")
        if not self.sigma_theta > 0:
            raise ValueError("sigma_theta must be positive")


@dataclass
class SampleSet:
    """Explicitly evaluated (action, CRMI) pairs; actions are rows of (x, y, heading)."""

    actions: np.ndarray
    values: np.ndarray
    noise_sigma: float = 1e-2

    def __post_init__(self):
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float)).reshape(-1, 3)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.actions) != len(self.values):
            raise ValueError("actions and values differ in length")
        if not np.all(np.isfinite(self.values)) or not np.all(np.isfinite(self.actions)):
            raise ValueError("samples must be finite")
        if np.any(self.values < 0):
            raise ValueError("CRMI samples must be non-negative")

    def __len__(self):
        return len(self.values)

    def copy(self) -> "SampleSet":
        return SampleSet(self.actions.copy(), self.values.copy(), self.noise_sigma)

    def append(self, action, value: float) -> None:
        if not math.isfinite(value) or value < 0:
            raise ValueError("CRMI samples must be finite and non-negative")
        self.actions = np.vstack([self.actions, np.asarray(action, dtype=float).reshape(1, 3)])
        self.values = np.append(self.values, float(value))


@dataclass
class Prediction:
    mean: np.ndarray
    variance: np.ndarray
    cov: np.ndarray | None = field(default=None, repr=False)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.variance, 0.0))


def as_actions(poses) -> np.ndarray:
    """Stack poses (objects with x, y, heading, or array rows) into an (n, 3) array."""
    if isinstance(poses, np.ndarray):
        return np.atleast_2d(poses).astype(float).reshape(-1, 3)
    return np.array([[p.x, p.y, p.heading] if hasattr(p, "heading") else list(p) for p in poses],
                    dtype=float).reshape(-1, 3)


def embed_actions(actions, cfg: KernelConfig) -> np.ndarray:
    """Map (x, y, heading) to (x, y, w cos heading, w sin heading).

    Distances in this space use the chord 2 sin(|dpsi| / 2) for the heading, which is
    wrap-aware, close to |dpsi| for small turns and keeps the Matern Gram matrix PSD
    (the arc length itself does not).
    """
    a = as_actions(actions)
    w = cfg.heading_weight
    return np.column_stack([a[:, 0], a[:, 1], w * np.cos(a[:, 2]), w * np.sin(a[:, 2])])


def action_distances(a: np.ndarray, b: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Pairwise action distance: planar offset plus the weighted heading chord."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    chord = 2.0 * np.sin(0.5 * np.abs(a[:, None, 2] - b[None, :, 2]))
    return np.sqrt(dx * dx + dy * dy + (cfg.heading_weight * chord) ** 2)


def matern52_from_distance(r, length_scale: float):
    s = SQRT5 * np.asarray(r, dtype=float) / length_scale
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def matern52(a, b, cfg: KernelConfig = KernelConfig()) -> float:
    """Matern 5/2 correlation between two actions."""
    r = action_distances(np.asarray(a, dtype=float).reshape(1, 3), np.asarray(b, dtype=float).reshape(1, 3), cfg)
    return float(matern52_from_distance(r, cfg.length_scale)[0, 0])


def kernel_matrix(a, b, cfg: KernelConfig) -> np.ndarray:
    return matern52_from_distance(action_distances(a, b, cfg), cfg.length_scale)


def _signal_variance(y: np.ndarray, signal_variance) -> float:
    if signal_variance is not None:
        return float(signal_variance)
    var = float(np.var(y)) if len(y) > 1 else 0.0
    return var if var > 0 else 1.0


def gp_posterior(train: SampleSet, queries, cfg: KernelConfig = KernelConfig(),
                 full_cov: bool = False, signal_variance: float | None = None) -> Prediction:
    """Exact GP regression posterior at ``queries``.

    The prior mean is the training mean and, unless ``signal_variance`` is given, the
    kernel is scaled by the empirical variance of the training values.
    """
    x = train.actions
    y = train.values
    q = as_actions(queries)
    return _gp_predict(kernel_matrix(x, x, cfg), kernel_matrix(q, x, cfg), y,
                       train.noise_sigma, full_cov, signal_variance,
                       kernel_matrix(q, q, cfg) if full_cov else None)


def _gp_predict(k_train, k_cross, y, noise_sigma, full_cov=False, signal_variance=None, k_query=None):
    s2 = _signal_variance(y, signal_variance)
    mu = float(y.mean())
    n = len(y)
    gram = k_train + (noise_sigma ** 2 / s2 + GP_JITTER) * np.eye(n)
    factor = cho_factor(gram, lower=True, check_finite=False)
    alpha = cho_solve(factor, y - mu, check_finite=False)
    mean = mu + k_cross @ alpha
    v = solve_triangular(factor[0], k_cross.T, lower=True, check_finite=False)
    var = s2 * np.maximum(1.0 - np.einsum("ij,ij->j", v, v), 0.0)
    cov = None
    if full_cov:
        cov = s2 * (k_query - v.T @ v)
    return Prediction(mean, var, cov)


def bki_posterior(train: SampleSet, queries, kcfg: KernelConfig = KernelConfig(),
                  bcfg: BKIConfig = BKIConfig(), truncate: bool = True) -> Prediction:
    """Closed-form BKI posterior: mean (ybar + zeta theta0)/(zeta + kbar), variance sigma^2/(zeta + kbar).

    Dense evaluation; with ``truncate`` kernel weights beyond the cutoff radius are zero.
    """
    q = as_actions(queries)
    r = action_distances(q, train.actions, kcfg)
    k = matern52_from_distance(r, kcfg.length_scale)
    if truncate:
        k[r > kcfg.cutoff] = 0.0
    return bki_from_sums(k.sum(axis=1), k @ train.values, bcfg)


def bki_from_sums(kbar: np.ndarray, ybar: np.ndarray, bcfg: BKIConfig) -> Prediction:
    denom = bcfg.zeta + kbar
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(denom > 0, (ybar + bcfg.zeta * bcfg.theta0) / denom, bcfg.theta0)
        var = np.where(denom > 0, bcfg.sigma_theta ** 2 / denom, np.inf)
    return Prediction(mean, var)


class QueryIndex:
    """k-d tree over query actions in the embedded (x, y, w cos, w sin) space."""

    def __init__(self, queries, cfg: KernelConfig = KernelConfig()):
        self.cfg = cfg
        self.actions = as_actions(queries)
        self._tree = cKDTree(embed_actions(self.actions, cfg)) if len(self.actions) else None

    def __len__(self):
        return len(self.actions)

    def neighbors(self, action) -> np.ndarray:
        if self._tree is None:
            return np.zeros(0, dtype=np.int64)
        found = self._tree.query_ball_point(embed_actions(np.asarray(action, dtype=float), self.cfg)[0],
                                            self.cfg.cutoff)
        return np.sort(np.asarray(found, dtype=np.int64))

    def accumulate(self, action, value: float):
        """Queries affected by one training sample and their kernel weights."""
        idx = self.neighbors(action)
        if idx.size == 0:
            return idx, np.zeros(0)
        r = action_distances(self.actions[idx], np.asarray(action, dtype=float).reshape(1, 3), self.cfg)[:, 0]
        keep = r <= self.cfg.cutoff
        idx, r = idx[keep], r[keep]
        return idx, matern52_from_distance(r, self.cfg.length_scale)


def build_query_index(queries, cfg: KernelConfig = KernelConfig()) -> QueryIndex:
    return QueryIndex(queries, cfg)


def accumulate(sample, index: QueryIndex):
    """``sample`` is an (action, value) pair; returns (query indices, kernel weights)."""
    action, value = sample
    return index.accumulate(action, value)


class BKIAccumulator:
    """Running kernel sums over a fixed query set; each added sample costs one radius search."""

    def __init__(self, queries, kcfg: KernelConfig = KernelConfig(), bcfg: BKIConfig = BKIConfig(),
                 index: QueryIndex | None = None):
        self.index = index if index is not None else QueryIndex(queries, kcfg)
        self.bcfg = bcfg
        n = len(self.index)
        self.kbar = np.zeros(n)
        self.ybar = np.zeros(n)

    def add(self, action, value: float) -> None:
        idx, w = self.index.accumulate(action, value)
        self.kbar[idx] += w
        self.ybar[idx] += w * value

    def add_many(self, samples: SampleSet) -> None:
        for a, v in zip(samples.actions, samples.values):
            self.add(a, v)

    def predict(self, mask: np.ndarray | None = None) -> Prediction:
        if mask is None:
            return bki_from_sums(self.kbar, self.ybar, self.bcfg)
        return bki_from_sums(self.kbar[mask], self.ybar[mask], self.bcfg)


class GPCache:
    """Incrementally grown kernel blocks for repeated GP prediction over a fixed query pool."""

    def __init__(self, queries, samples: SampleSet, cfg: KernelConfig = KernelConfig(), cache: bool = True):
        self.cfg = cfg
        self.cache = cache
        self.queries = as_actions(queries)
        self.samples = samples.copy()
        if cache:
            self._k_train = kernel_matrix(self.samples.actions, self.samples.actions, cfg)
            self._k_cross = kernel_matrix(self.queries, self.samples.actions, cfg)

    def add(self, action, value: float) -> None:
        a = np.asarray(action, dtype=float).reshape(1, 3)
        if self.cache:
            row = kernel_matrix(a, self.samples.actions, self.cfg)
            n = len(self.samples)
            grown = np.empty((n + 1, n + 1))
            grown[:n, :n] = self._k_train
            grown[n, :n] = grown[:n, n] = row[0]
            grown[n, n] = 1.0
            self._k_train = grown
            self._k_cross = np.hstack([self._k_cross, kernel_matrix(self.queries, a, self.cfg)])
        self.samples.append(a[0], value)

    def predict(self, mask: np.ndarray | None = None) -> Prediction:
        q = self.queries if mask is None else self.queries[mask]
        if self.cache:
            k_train = self._k_train
            k_cross = self._k_cross if mask is None else self._k_cross[mask]
        else:
            k_train = kernel_matrix(self.samples.actions, self.samples.actions, self.cfg)
            k_cross = kernel_matrix(q, self.samples.actions, self.cfg)
        return _gp_predict(k_train, k_cross, self.samples.values, self.samples.noise_sigma)
