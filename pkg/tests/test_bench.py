import math
from dataclasses import replace

import numpy as np
import pytest

from infoscout.bench import (CSV_COLUMNS, PLOT_KINDS, RunConfig, TrialResult, WorldConfig, ablate_epochs,
                             aggregate, benchmark_checks, config_from_ini, config_to_ini, emit_plot_data,
                             read_records, run_benchmark, write_records)
from infoscout.explore import ExplorationConfig, StepRecord
from infoscout.optimize import OptimizeConfig, UCBConfig
from infoscout.plan import PlanConfig
from infoscout.world import Pose

TINY_WORLD = WorldConfig(kind="structured", width=6.0, height=6.0, seed=3, start_x=1.0, start_y=1.0)
TINY_EXPLORE = ExplorationConfig(n_loop=3, timing=False, plan=PlanConfig(n_points=6, n_explicit=18, radius=2.5))


def tiny(**kw):
    return RunConfig(world=TINY_WORLD, exploration=TINY_EXPLORE, **kw)


def fake_records(values, coverage=None):
    cov = coverage or [0.1 * (i + 1) for i in range(len(values))]
    return [StepRecord(i + 1, Pose(0.0, 0.0), 3.0, 0.01 * (i + 1), 0.02 * (i + 1), v, c, 0.5 * (i + 1), False, 5)
            for i, (v, c) in enumerate(zip(values, cov))]


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    agg = run_benchmark(tiny(trials=1, engines=("bkio",)), serial=True, out=out)
    return out, agg


class TestTinyRun:
    def test_files(self, outputs):
        out, _ = outputs
        assert sorted(p.name for p in (out / "runs").iterdir()) == ["bkio_trial00.csv"]
        for name in ["aggregate_bkio.csv", "summary.txt", "config.ini"] + [f"plot_{k}.csv" for k in PLOT_KINDS]:
            assert (out / name).is_file(), name

    def test_run_csv(self, outputs):
        out, agg = outputs
        text = (out / "runs" / "bkio_trial00.csv").read_text().splitlines()
        assert text[0].split(",") == CSV_COLUMNS
        cols = read_records(out / "runs" / "bkio_trial00.csv")
        assert np.all((cols["coverage"] >= 0) & (cols["coverage"] <= 1))
        np.testing.assert_array_equal(cols["step"], np.arange(1, len(text)))
        assert agg.summaries["bkio"].trials_ok == 1

    def test_byte_identical_rerun(self, outputs, tmp_path):
        out, _ = outputs
        run_benchmark(tiny(trials=1, engines=("bkio",)), serial=True, out=tmp_path)
        for name in ["runs/bkio_trial00.csv", "aggregate_bkio.csv", "plot_entropy-step.csv", "config.ini"]:
            assert (out / name).read_bytes() == (tmp_path / name).read_bytes(), name

    def test_config_saved(self, outputs):
        out, _ = outputs
        assert config_from_ini((out / "config.ini").read_text()) == tiny(trials=1, engines=("bkio",))


class TestPlotData:
    def test_three_steps_four_lines(self, tmp_path):
        path = tmp_path / "p.csv"
        emit_plot_data({"ng": [fake_records([5.0, 4.0, 3.0])]}, "entropy-step", path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "step,ng_entropy_mean,ng_entropy_std"

    def test_means_match_raw_csvs(self, tmp_path):
        runs = [fake_records([9.0, 7.0, 6.5]), fake_records([8.0, 6.0]), fake_records([10.0, 5.0, 4.0, 1.0])]
        paths = []
        for i, r in enumerate(runs):
            paths.append(tmp_path / f"r{i}.csv")
            write_records(r, paths[-1])
        emit_plot_data({"bkio": runs}, "entropy-step", tmp_path / "plot.csv")
        plot = read_records(tmp_path / "plot.csv")
        raw = [read_records(p)["entropy_bits"] for p in paths]
        for step in range(4):
            vals = [r[step] for r in raw if len(r) > step]
            assert abs(plot["bkio_entropy_mean"][step] - np.mean(vals)) <= 1e-12
            assert abs(plot["bkio_entropy_std"][step] - np.std(vals)) <= 1e-12

    def test_time_axis_is_cumulative(self, tmp_path):
        emit_plot_data({"ng": [fake_records([3.0, 2.0, 1.0])]}, "entropy-time", tmp_path / "t.csv")
        cols = read_records(tmp_path / "t.csv")
        np.testing.assert_allclose(cols["ng_time_mean"], [0.02, 0.06, 0.12])

    def test_bad_kind(self, tmp_path):
        with pytest.raises(ValueError):
            emit_plot_data({"ng": [fake_records([1.0])]}, "bogus", tmp_path / "x.csv")


class TestCSV:
    def test_round_trip_nan_and_bools(self, tmp_path):
        recs = fake_records([2.0, 1.0])
        recs[1] = replace(recs[1], chosen_crmi=math.nan, backtracked=True)
        write_records(recs, tmp_path / "r.csv")
        cols = read_records(tmp_path / "r.csv")
        assert math.isnan(cols["crmi_bits"][1]) and cols["backtracked"][1] == 1.0
        np.testing.assert_array_equal(cols["entropy_bits"], [2.0, 1.0])


class TestAggregate:
    def test_failed_trial_recorded(self):
        results = [TrialResult("ng", 0, 0, fake_records([3.0, 2.0])), TrialResult("ng", 1, 1, None, "Boom\n")]
        agg = aggregate(results)
        assert agg.summaries["ng"].trials_ok == 1 and agg.summaries["ng"].trials_failed == 1
        assert agg.failed == [("ng", 1, "Boom\n")]
        assert any(name == "ng trials completed" and ok is False for name, ok, _ in benchmark_checks(agg))

    def test_checks(self):
        res = [TrialResult("ng", 0, 0, fake_records([10.0, 8.0])),
               TrialResult("bkio", 0, 0, [replace(r, eval_time=r.eval_time * 0.1) for r in fake_records([10.0, 8.5])])]
        checks = {n: ok for n, ok, _ in benchmark_checks(aggregate(res))}
        assert checks["eval time bkio <= 0.30 x ng"] is True
        assert checks["final entropy bkio within 15% of ng"] is True

    def test_timing_skipped(self):
        recs = [replace(r, eval_time=0.0, step_time=0.0) for r in fake_records([1.0])]
        checks = benchmark_checks(aggregate([TrialResult("ng", 0, 0, recs), TrialResult("bkio", 0, 0, recs)]))
        assert ("timing checks", None, "skipped, timing disabled") in checks


class TestConfig:
    def test_round_trip_defaults(self):
        assert config_from_ini(config_to_ini(RunConfig())) == RunConfig()

    def test_round_trip_custom(self):
        opt = OptimizeConfig(n_epoch=7, ucb=UCBConfig(alpha_schedule="gp_ucb", delta=0.2), cache=False)
        cfg = replace(tiny(trials=2, engines=("ng", "gpbo")),
                      exploration=replace(TINY_EXPLORE, optimize=opt, info_threshold=1.5))
        assert config_from_ini(config_to_ini(cfg)) == cfg

    def test_partial_file(self):
        cfg = config_from_ini("[optimize]\nn_epoch = 12\n[bench]\ntrials = 3\n")
        assert cfg.exploration.optimize.n_epoch == 12 and cfg.trials == 3
        assert cfg.exploration.plan == PlanConfig()

    @pytest.mark.parametrize("text", ["[nope]\na = 1\n", "[plan]\nradius_m = 3\n", "[optimize]\ncache = maybe\n",
                                      "[plan]\nradius = -1\n"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            config_from_ini(text)

    def test_validate(self):
        with pytest.raises(ValueError):
            RunConfig(engines=("ng", "fast")).validate()
        with pytest.raises(ValueError):
            RunConfig(trials=0).validate()


class TestAblation:
    def test_single_row(self, tmp_path):
        rows = ablate_epochs(tiny(trials=1), [2], engines=("bkio",), serial=True, out=tmp_path)
        assert len(rows) == 1 and rows[0].n_epoch == 2 and rows[0].engine == "bkio"
        assert (tmp_path / "ablation.txt").read_text().count("bkio-2") == 1
        assert len((tmp_path / "ablation.csv").read_text().splitlines()) == 2
        assert 0 <= rows[0].final_coverage <= 1
