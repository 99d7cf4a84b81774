"""Explicit CRMI of a candidate pose.

The information a beam carries about one of its cells is computed on a discrete
outcome space: the range axis [0, Z_m] is cut into ``round(1/lambda_z)`` bins and a
separate Max atom holds "no return". Under the cause model of :mod:`infoscout.crm`
the outcome probabilities are affine in the cell's occupancy value, so for each
cell the mutual information is a (bins x occupancy values) double sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .crm import BeliefMap, CRMConfig, bin_values
from .sensor import DEFAULT_OCCUPIED_THRESHOLD, SensorConfig, _cast
from .world import Pose

_LOG2E = 1.0 / math.log(2.0)
CLAMP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class InfoEvalConfig:
    lambda_z: float = 0.1
    lambda_m: float = 0.1
    occupied_threshold: float = DEFAULT_OCCUPIED_THRESHOLD

    def __post_init__(self):
        for name in ("lambda_z", "lambda_m"):
            val = getattr(self, name)
            if not 0 < val <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if abs(1.0 / self.lambda_m - round(1.0 / self.lambda_m)) > 1e-9:
            raise ValueError("1/lambda_m must be an integer")

    @property
    def n_range_bins(self) -> int:
        return max(1, int(round(1.0 / self.lambda_z)))

    @property
    def n_occupancy_bins(self) -> int:
        return int(round(1.0 / self.lambda_m)) + 1


class ClampStats:
    """Counts per-cell MI terms that came out negative beyond round-off and were zeroed."""

    def __init__(self):
        self.clamped = 0
        self.terms = 0

    def add(self, clamped: int, terms: int):
        self.clamped += int(clamped)
        self.terms += int(terms)

    def reset(self):
        self.clamped = self.terms = 0

    @property
    def rate(self) -> float:
        return self.clamped / self.terms if self.terms else 0.0


CLAMP_STATS = ClampStats()


@dataclass(frozen=True)
class BeamContext:
    """What a beam looks like to one of its cells: the chain's expected occupancies and entry ranges."""

    mhat: np.ndarray
    entries: np.ndarray
    sensor: SensorConfig
    crm: CRMConfig = CRMConfig()


def _gauss_bin_masses(mu: float, sigma: float, zmax: float, n_bins: int) -> np.ndarray:
    edges = np.linspace(0.0, zmax, n_bins + 1)
    cdf = 0.5 * (1.0 + np.array([math.erf((e - mu) / (sigma * math.sqrt(2.0))) for e in edges]))
    cdf[0], cdf[-1] = 0.0, 1.0  # tails fold into the end bins
    return np.diff(cdf)


def outcome_matrix(ctx: BeamContext, k: int, values: np.ndarray, n_range_bins: int) -> np.ndarray:
    """P(outcome | cell k has occupancy v) by direct enumeration of the cause model.

    Rows index the occupancy values, columns the range bins followed by the Max atom.
    """
    crm, sensor = ctx.crm, ctx.sensor
    sigma = crm.likelihood_sigma(sensor)
    n = len(ctx.mhat)
    per_cause = np.zeros((n, n_range_bins + 1))
    for l in range(n):
        per_cause[l, :n_range_bins] = (1.0 - crm.miss_rate) * _gauss_bin_masses(
            ctx.entries[l], sigma, sensor.max_range, n_range_bins)
        per_cause[l, n_range_bins] = crm.miss_rate
    spurious = np.append(np.full(n_range_bins, 1.0 / n_range_bins), 0.0)
    out = np.zeros((len(values), n_range_bins + 1))
    for row, v in enumerate(values):
        m = np.array(ctx.mhat, dtype=float)
        m[k] = v
        survive = 1.0
        for l in range(n):
            out[row] += survive * m[l] * per_cause[l]
            survive *= 1.0 - m[l]
        out[row, n_range_bins] += survive
        out[row] = (1.0 - crm.spurious_rate) * out[row] + crm.spurious_rate * spurious
    return out


def cell_beam_mi(belief_before, ctx: BeamContext, k: int, info: InfoEvalConfig = InfoEvalConfig()) -> float:
    """Mutual information (bits) between cell ``k`` of a beam and that beam's measurement.

    Evaluated as H(before) - E_z[H(after)] over the discretized outcome space; the
    conditioning history enters through the current beliefs of the chain.
    """
    pmf = np.asarray(belief_before, dtype=float)
    if pmf.ndim != 1 or np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-9:
        raise ValueError("belief pmf must be non-negative and sum to 1")
    if len(pmf) != info.n_occupancy_bins:
        raise ValueError("pmf length does not match lambda_m")
    if not 0 <= k < len(ctx.mhat):
        raise ValueError("cell index outside the chain")
    values = bin_values(len(pmf))
    lik = outcome_matrix(ctx, k, values, info.n_range_bins)
    joint = pmf[:, None] * lik
    p_z = joint.sum(axis=0)
    h_before = -np.sum(pmf[pmf > 0] * np.log2(pmf[pmf > 0]))
    h_after = 0.0
    for b in range(lik.shape[1]):
        if p_z[b] <= 0:
            continue
        post = joint[:, b] / p_z[b]
        nz = post > 0
        h_after -= p_z[b] * np.sum(post[nz] * np.log2(post[nz]))
    mi = h_before - h_after
    if mi < -CLAMP_TOLERANCE:
        CLAMP_STATS.add(1, 1)
    else:
        CLAMP_STATS.add(0, 1)
    return max(mi, 0.0)


@numba.njit(cache=True)
def _bin_masses_into(out, mu, sigma, zmax, nz, scale):
    width = zmax / nz
    lo = int(math.floor((mu - 8.0 * sigma) / width))
    hi = int(math.floor((mu + 8.0 * sigma) / width))
    if lo < 0:
        lo = 0
    if hi > nz - 1:
        hi = nz - 1
    inv = 1.0 / (sigma * 1.4142135623730951)
    for b in range(lo, hi + 1):
        c0 = 0.0 if b == 0 else 0.5 * (1.0 + math.erf((b * width - mu) * inv))
        c1 = 1.0 if b == nz - 1 else 0.5 * (1.0 + math.erf(((b + 1) * width - mu) * inv))
        out[b] = scale * (c1 - c0)


@numba.njit(cache=True)
def _chain_mi(pmf, mhat, values, cells, entries, n, sigma, eps, miss, zmax, nz, work_p, work_a, work_r):
    """Sum of per-cell MI over one chain. Returns (bits, clamped terms, terms)."""
    nb = nz + 1
    kb = values.shape[0]
    for l in range(n):
        for b in range(nb):
            work_p[l, b] = 0.0
        _bin_masses_into(work_p[l], entries[l], sigma, zmax, nz, 1.0 - miss)
        work_p[l, nz] = miss
    # suffix R and prefix A over outcomes
    for b in range(nb):
        work_r[n - 1, b] = 0.0
    work_r[n - 1, nz] = 1.0
    for l in range(n - 2, -1, -1):
        mn = mhat[cells[l + 1]]
        for b in range(nb):
            work_r[l, b] = mn * work_p[l + 1, b] + (1.0 - mn) * work_r[l + 1, b]
    for b in range(nb):
        work_a[b] = 0.0
    s = 1.0
    u = 1.0 / nz
    total = 0.0
    clamped = 0
    for l in range(n):
        c = cells[l]
        ml = mhat[c]
        mi = 0.0
        for b in range(nb):
            beta = (1.0 - eps) * s * (work_p[l, b] - work_r[l, b])
            if beta == 0.0:
                continue
            alpha = (1.0 - eps) * (work_a[b] + s * work_r[l, b])
            if b < nz:
                alpha += eps * u
            marg = alpha + beta * ml
            if marg <= 0.0:
                continue
            for q in range(kb):
                pv = pmf[c, q]
                if pv == 0.0:
                    continue
                cond = alpha + beta * values[q]
                if cond <= 0.0:
                    continue
                mi += pv * cond * math.log(cond / marg)
        mi *= 1.4426950408889634
        if mi < 0.0:
            if mi < -1e-12:
                clamped += 1
            mi = 0.0
        total += mi
        for b in range(nb):
            work_a[b] += ml * s * work_p[l, b]
        s *= 1.0 - ml
    return total, clamped, n


@numba.njit(cache=True)
def _crmi_fan(pmf, mhat, values, ox, oy, heading, offsets, rmax, res, x0, y0, width, height,
              thr, sigma, eps, miss, nz):
    cap = 2 * int(math.ceil(rmax / res)) + 4
    cells = np.empty(cap, dtype=np.int64)
    entries = np.empty(cap)
    exits = np.empty(cap)
    work_p = np.empty((cap, nz + 1))
    work_r = np.empty((cap, nz + 1))
    work_a = np.empty(nz + 1)
    gx = (ox - x0) / res
    gy = (oy - y0) / res
    total = 0.0
    clamped = 0
    terms = 0
    for j in range(offsets.shape[0]):
        a = heading + offsets[j]
        n = _cast(gx, gy, math.cos(a), math.sin(a), rmax / res, width, height, cells, entries, exits)
        for i in range(n):
            entries[i] *= res
            if mhat[cells[i]] > thr:
                n = i + 1
                break
        if n == 0:
            continue
        t, c, k = _chain_mi(pmf, mhat, values, cells, entries, n, sigma, eps, miss, rmax, nz,
                            work_p, work_a, work_r)
        total += t
        clamped += c
        terms += k
    return total, clamped, terms


def evaluate_crmi(belief: BeliefMap, pose: Pose, sensor: SensorConfig,
                  info: InfoEvalConfig = InfoEvalConfig()) -> float:
    """CRMI (bits) of a virtual scan at ``pose``: the sum over beams and their cells of per-cell MI.

    Cells seen by several beams are counted once per beam. The belief is read only.
    """
    g = belief.geometry
    if not g.contains(pose.x, pose.y):
        raise ValueError(f"pose {pose} lies outside the map extent")
    if info.n_occupancy_bins != belief.config.n_bins:
        raise ValueError("lambda_m does not match the belief discretization")
    crm = belief.config
    total, clamped, terms = _crmi_fan(
        belief.pmf, belief.mhat_flat(), belief.values, pose.x, pose.y, pose.heading,
        sensor.beam_offsets(), sensor.max_range, g.resolution, g.origin[0], g.origin[1],
        g.width, g.height, info.occupied_threshold, crm.likelihood_sigma(sensor),
        crm.spurious_rate, crm.miss_rate, info.n_range_bins)
    CLAMP_STATS.add(clamped, terms)
    return float(total)


class CRMIEvaluator:
    """Callable bound to one belief snapshot that counts its explicit evaluations."""

    def __init__(self, belief: BeliefMap, sensor: SensorConfig, info: InfoEvalConfig = InfoEvalConfig()):
        self.belief = belief
        self.sensor = sensor
        self.info = info
        self.calls = 0

    def __call__(self, pose) -> float:
        if not isinstance(pose, Pose):
            pose = Pose.from_array(pose)
        self.calls += 1
        return evaluate_crmi(self.belief, pose, self.sensor, self.info)
