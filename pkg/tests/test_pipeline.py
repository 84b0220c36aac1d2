from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from basinflow.errors import DirectiveError, MissingDataError, RequestParseError
from basinflow.fixtures import write_basin_fixture
from basinflow.forcing import TimeWindow
from basinflow.pipeline import (
    FeedbackDirective,
    SimulationRequest,
    apply_feedback,
    parse_request,
    read_manifest_file,
    retrieve_datasets,
    run_pipeline,
)

STEPS = 24


@pytest.fixture(scope="module")
def fixture_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    write_basin_fixture(root, rows=12, cols=12, steps=STEPS, seed=7)
    return root


def make_request(root, **kwargs):
    start = datetime(2021, 6, 1)
    base = dict(
        basin="little_fork",
        window=TimeWindow(start=start, end=start + timedelta(hours=STEPS), dt=3600),
        data_root=Path(root),
    )
    base.update(kwargs)
    return SimulationRequest(**base)


class TestParseRequest:
    DEFAULTS = {"dt": 3600}

    def _defaults(self, root):
        return {"dt": 3600, "data_root": root}

    def test_named_basin_and_year_pair(self, fixture_root):
        req = parse_request(
            "simulate floods for the Little Bighorn basin from 2020 to 2022",
            {**self._defaults(fixture_root), "basin": None})
        assert req.basin == "Little Bighorn"
        assert req.window.start == datetime(2020, 1, 1)
        assert req.window.end == datetime(2022, 12, 31)

    def test_dashed_basin_name(self, fixture_root):
        for dash in ("-", "–"):  # hyphen and en dash both appear in names
            req = parse_request(
                f"I want to simulate the streamflow of the Mad{dash}Redwood "
                "basin from 2020 to 2022", self._defaults(fixture_root))
            assert req.basin == f"Mad{dash}Redwood"

    def test_quoted_basin(self, fixture_root):
        req = parse_request('run "little_fork" from 2021 to 2021',
                            self._defaults(fixture_root))
        assert req.basin == "little_fork"

    def test_iso_date_pair(self, fixture_root):
        req = parse_request(
            "flows for the Yellow basin 2021-06-01 to 2021-06-04",
            self._defaults(fixture_root))
        assert req.window.start == datetime(2021, 6, 1)
        assert req.window.end == datetime(2021, 6, 4)

    def test_defaults_pass_through(self, fixture_root):
        defaults = {
            **self._defaults(fixture_root),
            "basin": "little_fork",
            "start": datetime(2021, 6, 1),
            "end": datetime(2021, 6, 2),
        }
        req = parse_request("run it", defaults)
        assert req.basin == "little_fork"
        assert req.window.n_steps == 24

    def test_no_window_anywhere(self, fixture_root):
        with pytest.raises(RequestParseError):
            parse_request("simulate the Blue basin", self._defaults(fixture_root))

    def test_no_basin_anywhere(self, fixture_root):
        with pytest.raises(RequestParseError):
            parse_request("simulate from 2020 to 2021",
                          self._defaults(fixture_root))


class TestRetrieveDatasets:
    def test_complete_fixture(self, fixture_root):
        manifest, notes = retrieve_datasets(make_request(fixture_root))
        for key in ("dem", "ddm", "fam", "gauges", "precip", "pet", "discharge"):
            assert key in manifest
        assert notes == []

    def test_missing_pet_notified(self, tmp_path):
        write_basin_fixture(tmp_path, name="nopet", rows=8, cols=8,
                            steps=6, with_pet=False)
        manifest, notes = retrieve_datasets(make_request(tmp_path, basin="nopet"))
        assert "pet" not in manifest
        assert any("pet" in n for n in notes)

    def test_missing_dem_errors(self, tmp_path):
        basin = tmp_path / "empty_basin"
        basin.mkdir()
        with pytest.raises(MissingDataError, match="dem"):
            retrieve_datasets(make_request(tmp_path, basin="empty_basin"))


class TestRunPipeline:
    def test_full_run_artifacts(self, fixture_root, tmp_path):
        out = run_pipeline(make_request(fixture_root), tmp_path / "out")
        for name in ("report.md", "combined_maps.png", "results.png",
                     "timeseries.csv", "ledger.csv", "metrics.csv",
                     "param_ranges.csv", "notifications.log", "run_manifest.txt"):
            assert (out / name).exists(), name
        report = (out / "report.md").read_text()
        assert "little_fork" in report
        assert "NSE" in report

    def test_ledger_closes(self, fixture_root, tmp_path):
        out = run_pipeline(make_request(fixture_root), tmp_path / "out")
        rows = (out / "ledger.csv").read_text().strip().split("\n")[1:]
        first = rows[0].split(",")  # pre-run storage snapshot
        initial_storage = float(first[4]) + float(first[5]) + float(first[6])
        steps = rows[1:]
        precip_in = sum(float(r.split(",")[1]) for r in steps)
        et = sum(float(r.split(",")[2]) for r in steps)
        outflow = sum(float(r.split(",")[3]) for r in steps)
        last = steps[-1].split(",")
        final_storage = float(last[4]) + float(last[5]) + float(last[6])
        residual = initial_storage + precip_in - et - outflow - final_storage
        assert abs(residual) / max(initial_storage + precip_in, 1.0) <= 1e-6

    def test_rerun_byte_identical(self, fixture_root, tmp_path):
        req = make_request(fixture_root)
        out_a = run_pipeline(req, tmp_path / "a")
        out_b = run_pipeline(req, tmp_path / "b")
        for name in ("report.md", "results.png", "combined_maps.png",
                     "timeseries.csv", "ledger.csv", "metrics.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    def test_stage_order_and_dependencies(self, fixture_root, tmp_path):
        out = run_pipeline(make_request(fixture_root), tmp_path / "out")
        manifest = (out / "run_manifest.txt").read_text()
        order = []
        deps = {}
        for line in manifest.split("\n"):
            if line.startswith("stage.") and line.split(" = ")[0].endswith(".status"):
                order.append(line.split(".")[2])
            if line.startswith("stage.") and ".deps" in line:
                name = line.split(".")[2]
                value = line.split(" = ")[1].strip()
                deps[name] = [d for d in value.split(",") if d]
        assert order == ["retrieve", "terrain", "descriptors", "outlet",
                         "params", "simulate", "metrics", "report"]
        for name, dep_list in deps.items():
            for dep in dep_list:
                assert order.index(dep) < order.index(name)

    def test_ungauged_and_no_discharge(self, tmp_path):
        write_basin_fixture(tmp_path / "data", name="bare", rows=8, cols=8,
                            steps=6, with_gauges=False, with_discharge=False)
        out = run_pipeline(make_request(tmp_path / "data", basin="bare",
                                        window=TimeWindow(
                                            start=datetime(2021, 6, 1),
                                            end=datetime(2021, 6, 1, 6), dt=3600)),
                           tmp_path / "out")
        report = (out / "report.md").read_text()
        assert "ungauged" in report
        assert "no observations" in report.lower()

    def test_derives_terrain_when_absent(self, tmp_path):
        write_basin_fixture(tmp_path / "data", name="flat", rows=8, cols=8,
                            steps=6, with_terrain=False)
        out = run_pipeline(make_request(tmp_path / "data", basin="flat",
                                        window=TimeWindow(
                                            start=datetime(2021, 6, 1),
                                            end=datetime(2021, 6, 1, 6), dt=3600)),
                           tmp_path / "out")
        notes = (out / "notifications.log").read_text()
        assert "deriving directions" in notes

    def test_overrides_applied_and_clamped(self, fixture_root, tmp_path):
        req = make_request(fixture_root, overrides={"wm": 999.0, "b": 2.5})
        out = run_pipeline(req, tmp_path / "out")
        report = (out / "report.md").read_text()
        assert "- wm: 250" in report  # clamped to the range top
        assert "- b: 2.5" in report
        notes = (out / "notifications.log").read_text()
        assert "wm=999" in notes

    def test_decider_exec_seat(self, fixture_root, tmp_path):
        script = tmp_path / "decider.py"
        script.write_text(
            "import sys\nsys.stdin.read()\n"
            'print(\'{"code":"wm=50, b=3.0","explanation":"fixed"}\')\n')
        wrapper = tmp_path / "decider.sh"
        wrapper.write_text(f"#!/bin/sh\nexec python3 {script} \"$@\"\n")
        wrapper.chmod(0o755)
        req = make_request(fixture_root, decider=f"exec:{wrapper}")
        out = run_pipeline(req, tmp_path / "out")
        report = (out / "report.md").read_text()
        assert "- wm: 50" in report
        assert "decider" in (out / "notifications.log").read_text()

    def test_decider_failure_falls_back(self, fixture_root, tmp_path):
        req = make_request(fixture_root, decider="exec:/nonexistent/decider")
        out = run_pipeline(req, tmp_path / "out")
        notes = (out / "notifications.log").read_text()
        assert "using heuristic" in notes

    def test_failure_names_stage_and_path(self, tmp_path):
        basin = tmp_path / "data" / "hollow"
        basin.mkdir(parents=True)
        req = make_request(tmp_path / "data", basin="hollow")
        with pytest.raises(MissingDataError, match=r"stage retrieve: .*dem\.asc"):
            run_pipeline(req, tmp_path / "out")


class TestFeedback:
    def _run(self, fixture_root, tmp_path):
        return run_pipeline(make_request(fixture_root), tmp_path / "base")

    def test_set_param(self, fixture_root, tmp_path):
        out = self._run(fixture_root, tmp_path)
        req = apply_feedback(out / "run_manifest.txt",
                             [FeedbackDirective(kind="set_param", name="wm",
                                                value=120.0)])
        assert req.overrides["wm"] == 120.0
        out2 = run_pipeline(req, tmp_path / "fb")
        report = (out2 / "report.md").read_text()
        assert "- wm: 120 (user override)" in report

    def test_set_gauge_routes_rule0(self, fixture_root, tmp_path):
        out = self._run(fixture_root, tmp_path)
        req = apply_feedback(out / "run_manifest.txt",
                             [FeedbackDirective(kind="set_gauge",
                                                gauge_id="10010500")])
        out2 = run_pipeline(req, tmp_path / "fb")
        report = (out2 / "report.md").read_text()
        assert "Outlet gauge: 10010500" in report
        assert "rule 0" in report

    def test_out_of_range_value_accepted_then_clamped(self, fixture_root, tmp_path):
        out = self._run(fixture_root, tmp_path)
        req = apply_feedback(out / "run_manifest.txt",
                             [FeedbackDirective(kind="set_param", name="wm",
                                                value=999.0)])
        out2 = run_pipeline(req, tmp_path / "fb")
        assert "wm=999" in (out2 / "notifications.log").read_text()
        assert "- wm: 250" in (out2 / "report.md").read_text()

    def test_unknown_parameter_rejected(self, fixture_root, tmp_path):
        out = self._run(fixture_root, tmp_path)
        with pytest.raises(DirectiveError):
            apply_feedback(out / "run_manifest.txt",
                           [FeedbackDirective(kind="set_param", name="zeta",
                                              value=1.0)])

    def test_extend_window(self, fixture_root, tmp_path):
        out = self._run(fixture_root, tmp_path)
        new_end = datetime(2021, 6, 1) + timedelta(hours=STEPS + 12)
        req = apply_feedback(out / "run_manifest.txt",
                             [FeedbackDirective(kind="extend_window",
                                                new_end=new_end)])
        assert req.window.n_steps == STEPS + 12

    def test_rerun_directive_is_identity(self, fixture_root, tmp_path):
        out = self._run(fixture_root, tmp_path)
        req = apply_feedback(out / "run_manifest.txt",
                             [FeedbackDirective(kind="rerun")])
        base = read_manifest_file(out / "run_manifest.txt")
        assert req.basin == base["basin"]
        assert req.overrides == {}
