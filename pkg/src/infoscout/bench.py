"""Run configuration, Monte Carlo harness, aggregation and CSV/plot-data output."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .crm import CRMConfig
from .explore import ENGINES, ExplorationConfig, StepRecord, run_exploration
from .infogain import InfoEvalConfig
from .optimize import OptimizeConfig, UCBConfig
from .plan import PlanConfig
from .sensor import SensorConfig
from .surrogate import BKIConfig, KernelConfig
from .world import GroundTruthMap, Pose, generate_structured, generate_unstructured, load_map

log = logging.getLogger(__name__)

CSV_COLUMNS = ["step", "chosen_x", "chosen_y", "chosen_heading", "crmi_bits", "eval_time_s", "step_time_s",
               "entropy_bits", "coverage", "distance_m", "backtracked", "explicit_evals"]
PLOT_KINDS = ("entropy-step", "coverage-step", "entropy-time", "coverage-distance")
_PLOT_SPEC = {  # kind -> (record field on the y axis, cumulative x field or None for step)
    "entropy-step": ("entropy_after", None),
    "coverage-step": ("coverage_after", None),
    "entropy-time": ("entropy_after", "step_time"),
    "coverage-distance": ("coverage_after", "distance_after"),
}


@dataclass(frozen=True)
class WorldConfig:
    kind: str = "structured"  # structured | unstructured | file
    width: float = 24.0
    height: float = 14.0
    resolution: float = 0.2
    seed: int = 1
    n_obstacles: int = 40
    path: str = ""
    start_x: float = 1.2
    start_y: float = 1.2
    start_heading: float = 0.0

    def __post_init__(self):
        if self.kind not in ("structured", "unstructured", "file"):
            raise ValueError(f"unknown world kind {self.kind!r}")

    def build(self) -> GroundTruthMap:
        if self.kind == "file":
            return load_map(self.path)
        if self.kind == "structured":
            return generate_structured(self.width, self.height, self.resolution, seed=self.seed,
                                       start=(self.start_x, self.start_y))
        return generate_unstructured(self.width, self.height, self.resolution, self.n_obstacles,
                                     seed=self.seed, start=(self.start_x, self.start_y))

    @property
    def start(self) -> Pose:
        return Pose(self.start_x, self.start_y, self.start_heading)


@dataclass(frozen=True)
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    trials: int = 5
    engines: tuple = ENGINES
    output_dir: str = "out"

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.engines:
            raise ValueError("at least one engine is required")
        for e in self.engines:
            if e not in ENGINES:
                raise ValueError(f"unknown engine {e!r}")
        if self.world.kind == "file" and not Path(self.world.path).is_file():
            raise ValueError(f"map file {self.world.path!r} does not exist")


# --- config file ------------------------------------------------------------

def _parse(text: str, like):
    if isinstance(like, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        return tuple(t.strip() for t in text.split(",") if t.strip())
    return text.strip()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(value)
    return str(value)


def _section(obj, skip=()) -> dict:
    return {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)
            if f.name not in skip and not dataclasses.is_dataclass(getattr(obj, f.name))}


def _load(cls, default, values: dict, section: str):
    kw = {}
    names = {f.name for f in dataclasses.fields(cls)}
    for key, text in values.items():
        if key not in names:
            continue
        try:
            kw[key] = _parse(text, getattr(default, key))
        except ValueError as exc:
            raise ValueError(f"[{section}] {key}: {exc}") from None
    return replace(default, **kw)


_EXPLORE_SKIP = ("engine", "sensor", "crm", "info", "plan", "optimize")


def config_to_ini(cfg: RunConfig) -> str:
    ex = cfg.exploration
    opt = ex.optimize
    parser = configparser.ConfigParser()
    parser["world"] = _section(cfg.world)
    parser["sensor"] = _section(ex.sensor)
    parser["crm"] = _section(ex.crm)
    parser["infogain"] = _section(ex.info)
    parser["surrogate"] = {**_section(opt.kernel), **_section(opt.bki), "noise_sigma": _fmt(opt.noise_sigma)}
    parser["optimize"] = {**{k: _fmt(getattr(opt, k)) for k in ("n_epoch", "cache", "random_ties")},
                          **_section(opt.ucb)}
    parser["plan"] = _section(ex.plan)
    parser["explore"] = _section(ex, skip=_EXPLORE_SKIP)
    parser["bench"] = {"trials": str(cfg.trials), "engines": _fmt(tuple(cfg.engines)),
                       "output_dir": cfg.output_dir}
    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in parser[name].items()]
        lines.append("")
    return "\n".join(lines)


def config_from_ini(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    known = {"world", "sensor", "crm", "infogain", "surrogate", "optimize", "plan", "explore", "bench"}
    for name in parser.sections():
        if name not in known:
            raise ValueError(f"unknown config section [{name}]")
    base = RunConfig()
    allowed = configparser.ConfigParser()
    allowed.read_string(config_to_ini(base))
    for name in parser.sections():
        for key in parser[name]:
            if key not in allowed[name]:
                raise ValueError(f"unknown key {key!r} in section [{name}]")
    sec = {name: dict(parser[name]) if parser.has_section(name) else {} for name in known}
    ex = base.exploration
    opt = ex.optimize
    optimize = replace(
        _load(OptimizeConfig, opt, {**sec["optimize"], **{k: v for k, v in sec["surrogate"].items()
                                                          if k == "noise_sigma"}}, "optimize"),
        ucb=_load(UCBConfig, opt.ucb, sec["optimize"], "optimize"),
        kernel=_load(KernelConfig, opt.kernel, sec["surrogate"], "surrogate"),
        bki=_load(BKIConfig, opt.bki, sec["surrogate"], "surrogate"),
    )
    explore_vals = {k: v for k, v in sec["explore"].items() if k not in _EXPLORE_SKIP}
    exploration = replace(
        _load(ExplorationConfig, ex, explore_vals, "explore"),
        sensor=_load(SensorConfig, ex.sensor, sec["sensor"], "sensor"),
        crm=_load(CRMConfig, ex.crm, sec["crm"], "crm"),
        info=_load(InfoEvalConfig, ex.info, sec["infogain"], "infogain"),
        plan=_load(PlanConfig, ex.plan, sec["plan"], "plan"),
        optimize=optimize,
    )
    world = _load(WorldConfig, base.world, sec["world"], "world")
    bench = sec["bench"]
    cfg = RunConfig(
        world=world, exploration=exploration,
        trials=int(bench.get("trials", base.trials)),
        engines=_parse(bench["engines"], ()) if "engines" in bench else base.engines,
        output_dir=bench.get("output_dir", base.output_dir).strip(),
    )
    return cfg


def load_config(path) -> RunConfig:
    return config_from_ini(Path(path).read_text())


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(config_to_ini(cfg))


# --- running -----------------------------------------------------------------

@dataclass
class TrialResult:
    engine: str
    trial: int
    seed: int
    records: list | None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.records is not None


def _run_trial(args) -> TrialResult:
    world, start, ex_cfg, engine, trial = args
    cfg = replace(ex_cfg, engine=engine, seed=ex_cfg.seed + trial)
    try:
        _, records = run_exploration(world, start, cfg)
        return TrialResult(engine, trial, cfg.seed, records)
    except Exception:  # a failed trial is recorded and the benchmark goes on
        return TrialResult(engine, trial, cfg.seed, None, traceback.format_exc())


def run_trials(cfg: RunConfig, serial: bool = False, workers: int | None = None) -> list[TrialResult]:
    cfg.validate()
    world = cfg.world.build()
    jobs = [(world, cfg.world.start, cfg.exploration, e, t) for e in cfg.engines for t in range(cfg.trials)]
    if serial or len(jobs) == 1 or (workers or os.cpu_count() or 1) == 1:
        results = [_run_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    for r in results:
        if not r.ok:
            log.error("trial %d of %s failed:\n%s", r.trial, r.engine, r.error)
    return results


# --- output ------------------------------------------------------------------

def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def record_row(r: StepRecord) -> list:
    return [r.step_index, r.chosen.x, r.chosen.y, r.chosen.heading, r.chosen_crmi, r.eval_time, r.step_time,
            r.entropy_after, r.coverage_after, r.distance_after, r.backtracked, r.explicit_evals]


def write_records(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_num(v) for v in record_row(r)])


def read_records(path) -> dict:
    """Columns of a per-run CSV as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _series(records: list, name: str, cumulative: bool = False) -> np.ndarray:
    s = np.array([float(getattr(r, name)) for r in records])
    return np.cumsum(s) if cumulative else s


def _stack(runs: list, name: str, cumulative: bool = False):
    """Per-step mean, population std and count over the runs that reached each step."""
    n = max((len(r) for r in runs), default=0)
    grid = np.full((len(runs), n), np.nan)
    for i, recs in enumerate(runs):
        s = _series(recs, name, cumulative)
        grid[i, :len(s)] = s
    count = np.sum(~np.isnan(grid), axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.array([np.mean(c[~np.isnan(c)]) if k else np.nan for c, k in zip(grid.T, count)])
        std = np.array([np.std(c[~np.isnan(c)]) if k else np.nan for c, k in zip(grid.T, count)])
    return mean, std, count


def emit_plot_data(records_by_engine: dict, kind: str, path) -> None:
    """Write a columnar plot file: step, then per engine the mean and std of the plotted quantity.

    The time and distance kinds add a per-engine mean x column (cumulative step time or
    distance travelled).
    """
    if kind not in _PLOT_SPEC:
        raise ValueError(f"unknown plot kind {kind!r}")
    if not records_by_engine or not any(records_by_engine.values()):
        raise ValueError("no records to plot")
    y_name, x_name = _PLOT_SPEC[kind]
    y_label = y_name.split("_")[0]
    header = ["step"]
    cols = []
    for engine, runs in records_by_engine.items():
        if x_name is not None:
            xm, _, _ = _stack(runs, x_name, cumulative=(x_name == "step_time"))
            header.append(f"{engine}_{'time' if x_name == 'step_time' else 'distance'}_mean")
            cols.append(xm)
        m, s, _ = _stack(runs, y_name)
        header += [f"{engine}_{y_label}_mean", f"{engine}_{y_label}_std"]
        cols += [m, s]
    n = max(len(c) for c in cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([str(i + 1)] + [_num(c[i]) if i < len(c) else "nan" for c in cols])


AGG_FIELDS = [("entropy", "entropy_after"), ("coverage", "coverage_after"),
              ("eval_time", "eval_time"), ("step_time", "step_time"), ("distance", "distance_after")]


@dataclass
class EngineSummary:
    engine: str
    trials_ok: int
    trials_failed: int
    eval_time_mean: float
    eval_time_std: float
    step_time_mean: float
    step_time_std: float
    final_coverage: list
    final_entropy: list
    total_time: list
    total_distance: list
    explicit_evals_mean: float


@dataclass
class AggregateMetrics:
    per_step: dict  # engine -> {column name -> array}
    summaries: dict  # engine -> EngineSummary
    failed: list

    def summary_table(self) -> str:
        lines = [f"{'engine':<8}{'eval time per step [s]':>26}{'step time per step [s]':>26}"
                 f"{'final coverage':>18}{'final entropy [bit]':>22}{'evals/step':>12}{'ok/failed':>11}"]
        for e, s in self.summaries.items():
            lines.append(
                f"{e:<8}{s.eval_time_mean:>17.4f} ± {s.eval_time_std:<6.4f}{s.step_time_mean:>17.4f} ± "
                f"{s.step_time_std:<6.4f}{_mean(s.final_coverage):>18.4f}{_mean(s.final_entropy):>22.1f}"
                f"{s.explicit_evals_mean:>12.1f}{f'{s.trials_ok}/{s.trials_failed}':>11}")
        return "\n".join(lines)


def _mean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else math.nan


def aggregate(results: list[TrialResult]) -> AggregateMetrics:
    engines = list(dict.fromkeys(r.engine for r in results))
    per_step, summaries = {}, {}
    for e in engines:
        runs = [r.records for r in results if r.engine == e and r.ok and r.records]
        n_failed = sum(1 for r in results if r.engine == e and not r.ok)
        cols = {}
        for label, name in AGG_FIELDS:
            m, s, count = _stack(runs, name)
            cols[f"{label}_mean"], cols[f"{label}_std"] = m, s
            cols["count"] = count
        cols["step"] = np.arange(1, len(cols["count"]) + 1)
        per_step[e] = cols
        ev = np.array([x.eval_time for recs in runs for x in recs])
        st = np.array([x.step_time for recs in runs for x in recs])
        summaries[e] = EngineSummary(
            e, len(runs), n_failed,
            _mean(ev), float(np.std(ev)) if len(ev) else math.nan,
            _mean(st), float(np.std(st)) if len(st) else math.nan,
            [recs[-1].coverage_after for recs in runs], [recs[-1].entropy_after for recs in runs],
            [float(sum(x.step_time for x in recs)) for recs in runs],
            [recs[-1].distance_after for recs in runs],
            _mean([x.explicit_evals for recs in runs for x in recs]))
    failed = [(r.engine, r.trial, r.error) for r in results if not r.ok]
    return AggregateMetrics(per_step, summaries, failed)


def write_outputs(cfg: RunConfig, results: list[TrialResult], agg: AggregateMetrics, out: Path) -> None:
    (out / "runs").mkdir(parents=True, exist_ok=True)
    for r in results:
        if r.ok:
            write_records(r.records, out / "runs" / f"{r.engine}_trial{r.trial:02d}.csv")
    for e, cols in agg.per_step.items():
        names = ["step", "count"] + [f"{lab}_{s}" for lab, _ in AGG_FIELDS for s in ("mean", "std")]
        with open(out / f"aggregate_{e}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for i in range(len(cols["step"])):
                w.writerow([_num(cols[n][i]) for n in names])
    by_engine = {e: [r.records for r in results if r.engine == e and r.ok and r.records] for e in cfg.engines}
    by_engine = {e: runs for e, runs in by_engine.items() if runs}
    if by_engine:
        for kind in PLOT_KINDS:
            emit_plot_data(by_engine, kind, out / f"plot_{kind}.csv")
    text = agg.summary_table()
    if agg.failed:
        text += "\n\nfailed trials:\n" + "\n".join(f"  {e} trial {t}: {err.strip().splitlines()[-1]}"
                                                  for e, t, err in agg.failed)
    (out / "summary.txt").write_text(text + "\n")
    save_config(cfg, out / "config.ini")


def run_benchmark(cfg: RunConfig, serial: bool = False, out: str | Path | None = None) -> AggregateMetrics:
    """Run every (engine, trial) pair and write run CSVs, aggregates, plot data and a summary."""
    results = run_trials(cfg, serial=serial)
    agg = aggregate(results)
    write_outputs(cfg, results, agg, Path(out or cfg.output_dir))
    return agg


# --- checks and ablation -----------------------------------------------------

def benchmark_checks(agg: AggregateMetrics) -> list[tuple[str, bool, str]]:
    """Relative timing and quality checks between engines; each is (name, passed, detail).

    ``passed`` is None for a check that could not run.
    """
    s = agg.summaries
    checks = []
    for e, summ in s.items():
        checks.append((f"{e} trials completed", summ.trials_failed == 0 and summ.trials_ok > 0,
                       f"{summ.trials_ok} ok, {summ.trials_failed} failed"))
    t = {e: summ.eval_time_mean for e, summ in s.items()}
    if not any(v > 0 for v in t.values()):
        checks.append(("timing checks", None, "skipped, timing disabled"))
        t = {}
    if {"ng", "gpbo", "bkio"} <= set(t):
        checks.append(("eval time bkio < gpbo < ng", t["bkio"] < t["gpbo"] < t["ng"],
                       f"bkio {t['bkio']:.4f} s, gpbo {t['gpbo']:.4f} s, ng {t['ng']:.4f} s"))
    if "ng" in s:
        for e, limit in (("bkio", 0.30), ("gpbo", 0.50)):
            if e in t and "ng" in t:
                ratio = t[e] / t["ng"]
                checks.append((f"eval time {e} <= {limit:.2f} x ng", ratio <= limit, f"ratio {ratio:.3f}"))
        cov_ng, ent_ng = _mean(s["ng"].final_coverage), _mean(s["ng"].final_entropy)
        for e in ("bkio", "gpbo"):
            if e in s:
                cov, ent = _mean(s[e].final_coverage), _mean(s[e].final_entropy)
                checks.append((f"final coverage {e} within 10 points of ng", abs(cov - cov_ng) <= 0.10,
                               f"{cov:.4f} vs {cov_ng:.4f}"))
                rel = abs(ent - ent_ng) / ent_ng if ent_ng > 0 else abs(ent - ent_ng)
                checks.append((f"final entropy {e} within 15% of ng", rel <= 0.15,
                               f"{ent:.1f} vs {ent_ng:.1f} bits"))
    return checks


@dataclass
class AblationRow:
    engine: str
    n_epoch: int
    eval_time_mean: float
    eval_time_std: float
    step_time_mean: float
    step_time_std: float
    final_coverage: float
    final_entropy: float
    coverage_per_trial: list = field(default_factory=list)


def ablate_epochs(base: RunConfig, epoch_values, engines=("bkio",), serial: bool = False,
                  out: str | Path | None = None) -> list[AblationRow]:
    """Rerun the benchmark for each epoch count and tabulate cost and final map quality."""
    values = list(epoch_values)
    if not values:
        raise ValueError("epoch_values must be nonempty")
    root = Path(out or base.output_dir)
    rows = []
    for n in values:
        ex = replace(base.exploration, optimize=replace(base.exploration.optimize, n_epoch=int(n)))
        cfg = replace(base, exploration=ex, engines=tuple(engines))
        agg = run_benchmark(cfg, serial=serial, out=root / f"epochs_{n}")
        for e in engines:
            s = agg.summaries[e]
            rows.append(AblationRow(e, int(n), s.eval_time_mean, s.eval_time_std, s.step_time_mean,
                                    s.step_time_std, _mean(s.final_coverage), _mean(s.final_entropy),
                                    list(s.final_coverage)))
    root.mkdir(parents=True, exist_ok=True)
    (root / "ablation.txt").write_text(format_ablation(rows) + "\n")
    with open(root / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["engine", "n_epoch", "eval_time_mean", "eval_time_std", "step_time_mean", "step_time_std",
                    "final_coverage", "final_entropy"])
        for r in rows:
            w.writerow([r.engine, r.n_epoch] + [_num(v) for v in (r.eval_time_mean, r.eval_time_std,
                                                                    r.step_time_mean, r.step_time_std,
                                                                    r.final_coverage, r.final_entropy)])
    return rows


def format_ablation(rows: list[AblationRow]) -> str:
    lines = [f"{'method':<12}{'eval time per step [s]':>26}{'step time per step [s]':>26}"
             f"{'final coverage':>18}{'final entropy [bit]':>22}"]
    for r in rows:
        lines.append(f"{f'{r.engine}-{r.n_epoch}':<12}{r.eval_time_mean:>17.4f} ± {r.eval_time_std:<6.4f}"
                     f"{r.step_time_mean:>17.4f} ± {r.step_time_std:<6.4f}{r.final_coverage:>18.4f}"
                     f"{r.final_entropy:>22.1f}")
    return "\n".join(lines)
