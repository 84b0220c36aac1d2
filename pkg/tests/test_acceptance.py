"""Acceptance suite: one test per criterion, stated tolerances pinned.

A terminal-summary hook in conftest.py prints one pass/fail line per
criterion after the run, with the runtime detail recorded here.
"""

import time
from datetime import datetime, timedelta

import numpy as np
import pytest

from basinflow import kernel_backend
from basinflow.errors import NoViableGaugeError
from basinflow.fixtures import synthetic_dem, write_basin_fixture
from basinflow.forcing import ForcingSeries, TimeWindow
from basinflow.gauges import select_outlet
from basinflow.grid import d8_flow_directions, delineate_basin, flow_accumulation
from basinflow.metrics import PairedSeries, bias, cc, kge, nse, rmse
from basinflow.params import (
    PARAM_NAMES,
    default_ranges,
    heuristic_init,
    parse_decider_json,
    validate,
)
from basinflow.pipeline import (
    FeedbackDirective,
    SimulationRequest,
    apply_feedback,
    run_pipeline,
)
from basinflow.report import render_markdown
from basinflow.routing import RoutingParams, RoutingState, route_step, simulate
from basinflow.waterbalance import CellState, CrestParams, cell_step
from conftest import make_raster
from test_gauges import candidate
from test_report import make_context
from test_routing import make_crest, make_routing, uniform_forcing, window

from basinflow.grid import BasinDescriptors
from oracles import oracle_accumulation, oracle_d8, oracle_delineate


#: runtime detail per criterion, read by the terminal-summary hook
PASS_DETAILS = {}


def report_pass(criterion, text):
    PASS_DETAILS[criterion] = f"{text} (kernels: {kernel_backend})"


def test_criterion_1_terrain_oracle_equivalence(rng):
    start = time.perf_counter()
    for _ in range(200):
        values = rng.permutation(36).astype(np.float64)
        values += rng.uniform(0.0, 0.5, size=36)
        dem = make_raster(values.reshape(6, 6))
        dirs = d8_flow_directions(dem)
        valid = dem.valid_mask().tolist()
        assert dirs.codes.tolist() == oracle_d8(dem.values.tolist(), valid)
        acc = flow_accumulation(dirs)
        assert acc.values.astype(int).tolist() == oracle_accumulation(
            dirs.codes.tolist())
        outlet = (int(rng.integers(6)), int(rng.integers(6)))
        mask = delineate_basin(dirs, outlet)
        assert mask.member.tolist() == oracle_delineate(dirs.codes.tolist(), outlet)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    report_pass(1, f"200 random 6x6 DEMs match the brute-force oracle "
                   f"exactly in {elapsed:.2f}s")


def test_criterion_2_water_balance_conservation_and_monotonicity(rng):
    dt = 3600.0
    worst = 0.0
    for _ in range(100_000):
        wm = rng.uniform(5.0, 250.0)
        params = CrestParams(
            wm=wm, b=rng.uniform(0.1, 20.0), im=rng.uniform(0.01, 0.5),
            ke=rng.uniform(0.001, 1.0), fc=rng.uniform(0.0, 150.0),
            iwu=rng.uniform(0.0, min(25.0, wm)))
        w0 = rng.uniform(0.0, wm)
        precip = rng.uniform(0.0, 100.0)
        pet = rng.uniform(0.0, 30.0)
        state, f = cell_step(CellState(w=w0), params, precip, pet, dt)
        residual = abs(precip - ((state.w - w0) + f.actual_et + f.overland
                                 + f.interflow_recharge))
        if residual > worst:
            worst = residual
        assert residual <= 1e-9

    def runoff(w0, params, precip, pet):
        _, fx = cell_step(CellState(w=w0), params, precip, pet, dt)
        return fx.overland + fx.interflow_recharge

    for _ in range(10_000):
        wm = rng.uniform(5.0, 250.0)
        base = CrestParams(
            wm=wm, b=rng.uniform(0.1, 20.0), im=rng.uniform(0.01, 0.5),
            ke=rng.uniform(0.001, 1.0), fc=rng.uniform(0.0, 150.0), iwu=0.0)
        w0 = rng.uniform(0.0, wm)
        precip = rng.uniform(0.0, 80.0)
        pet = rng.uniform(0.0, 25.0)
        r0 = runoff(w0, base, precip, pet)
        up = {
            "wm": CrestParams(wm=rng.uniform(wm, 250.0), b=base.b, im=base.im,
                              ke=base.ke, fc=base.fc, iwu=0.0),
            "b": CrestParams(wm=wm, b=rng.uniform(base.b, 20.0), im=base.im,
                             ke=base.ke, fc=base.fc, iwu=0.0),
            "im": CrestParams(wm=wm, b=base.b, im=rng.uniform(base.im, 0.5),
                              ke=base.ke, fc=base.fc, iwu=0.0),
            "ke": CrestParams(wm=wm, b=base.b, im=base.im,
                              ke=rng.uniform(base.ke, 1.0), fc=base.fc, iwu=0.0),
        }
        assert runoff(w0, up["wm"], precip, pet) <= r0 + 1e-9
        assert runoff(w0, up["b"], precip, pet) >= r0 - 1e-9
        assert runoff(w0, up["im"], precip, pet) >= r0 - 1e-9
        assert runoff(w0, up["ke"], precip, pet) <= r0 + 1e-9
    report_pass(2, f"1e5 draws conserve mass to {worst:.2e} mm; "
                   "monotonicity holds on 1e4 paired draws")


def test_criterion_3_routing_mass_ledger(rng):
    dem = synthetic_dem(20, 20, 1000.0, seed=13)
    dirs = d8_flow_directions(dem)
    fam = flow_accumulation(dirs)
    mask = delineate_basin(dirs, (19, 19))
    steps = 500
    win = window(steps)
    precip = []
    for t in range(steps):
        wet = rng.random() < 0.3
        value = rng.uniform(0.0, 8.0) if wet else 0.0
        precip.append(make_raster(np.full((20, 20), value)))
    pet = [make_raster(np.full((20, 20), 0.1))] * steps
    series = ForcingSeries(window=win, precip=precip, pet=pet)
    out = simulate(dem, dirs, fam, mask, series,
                   make_crest(wm=80.0, b=2.0, fc=5.0, iwu=10.0),
                   make_routing(alpha=1.5, beta=0.6, alpha0=2.0,
                                under=0.2, leaki=0.1))
    closure = out.ledger_closure()
    assert closure <= 1e-6

    # impulse on a 3-cell strip with transfer fraction forced to 1
    from basinflow.grid import DirectionGrid
    strip = DirectionGrid(np.array([[1, 1, 0]], dtype=np.int16), 1000.0)
    channels = np.ones((1, 3), dtype=bool)
    state = RoutingState(surface=np.array([[10.0, 0.0, 0.0]]),
                         subsurface=np.zeros((1, 3)))
    arrivals = []
    for _ in range(4):
        state, flux = route_step(state, strip, channels, make_routing(),
                                 3600.0, 1000.0)
        arrivals.append(flux)
    assert arrivals[:2] == [0.0, 0.0]
    assert arrivals[2] == pytest.approx(10.0, abs=1e-12)
    assert arrivals[3] == 0.0
    report_pass(3, f"500-step 20x20 ledger closes to {closure:.2e} relative; "
                   "impulse arrives at step 3 exactly")


def test_criterion_4_steady_state_discharge():
    start = time.perf_counter()
    dem = synthetic_dem(20, 20, 1000.0, seed=9)
    dirs = d8_flow_directions(dem)
    fam = flow_accumulation(dirs)
    mask = delineate_basin(dirs, (19, 19))
    assert mask.count == 400
    steps = 120
    win = window(steps)
    rain = 5.0
    series = uniform_forcing(win, dem.shape, rain)
    out = simulate(dem, dirs, fam, mask, series,
                   make_crest(wm=5.0, iwu=25.0, fc=0.0, im=0.01),
                   make_routing(alpha=3.0, beta=0.5, alpha0=5.0))
    expected = rain / 1000.0 / win.dt * mask.count * 1000.0 * 1000.0
    tail = out.outlet_q[60:]
    max_rel = float(np.max(np.abs(tail - expected)) / expected)
    elapsed = time.perf_counter() - start
    assert max_rel <= 0.02
    assert elapsed < 10.0
    report_pass(4, f"steady outlet within {100 * max_rel:.3f}% of rain*area "
                   f"in {elapsed:.2f}s")


def test_criterion_5_metric_identities():
    obs = np.array([1.0, 2.0, 3.0, 4.0, 6.0])

    def paired(o, s):
        return PairedSeries(timestamps=list(range(len(o))), q_obs=np.asarray(o),
                            q_sim=np.asarray(s))

    p = paired(obs, obs.copy())
    assert nse(p) == 1.0
    assert kge(p) == 1.0
    assert cc(p) == pytest.approx(1.0, abs=1e-15)
    assert rmse(p) == 0.0
    assert bias(p) == (0.0, 0.0)

    mean = paired(obs, np.full(obs.size, obs.mean()))
    assert abs(nse(mean)) <= 1e-12

    doubled = paired(obs, 2.0 * obs)
    assert kge(doubled) == pytest.approx(1.0 - np.sqrt(2.0), abs=1e-12)

    triple = paired([1.0, 2.0, 3.0], [1.0, 1.0, 3.0])
    assert nse(triple) == pytest.approx(0.5, abs=1e-12)
    assert rmse(triple) == pytest.approx(np.sqrt(1.0 / 3.0), abs=1e-12)
    report_pass(5, "identity, mean-predictor, doubled-sim, and hand-computed "
                   "values all inside 1e-12")


def test_criterion_6_outlet_rule_engine(rng):
    # rule 0: user hint wins outright
    r = select_outlet([candidate("01", elevation_m=10.0),
                       candidate("03453500", elevation_m=900.0)],
                      user_hint="03453500")
    assert r.gauge_id == "03453500"
    # rule 1: reservoir exclusion
    r = select_outlet([candidate("01", elevation_m=5.0, on_or_below_reservoir=True),
                       candidate("02", elevation_m=50.0)])
    assert r.gauge_id == "02"
    # rule 2: elevation ranking
    r = select_outlet([candidate("01", elevation_m=120.0),
                       candidate("02", elevation_m=80.0)])
    assert r.gauge_id == "02"
    # rule 3: area tie-break
    r = select_outlet([candidate("01", drainage_area_km2=500.0),
                       candidate("02", drainage_area_km2=900.0)])
    assert r.gauge_id == "02"
    # rule 4: record tie-break
    r = select_outlet([candidate("01", completeness=0.7),
                       candidate("02", completeness=0.99)])
    assert r.gauge_id == "02"
    # rule 5: re-evaluation
    r = select_outlet([candidate("01", elevation_m=10.0,
                                 upstream_reservoir_free=False),
                       candidate("02", elevation_m=99.0)])
    assert r.gauge_id == "02"
    rules = [rule for rule, _ in r.rule_trace]
    assert rules[:6] == [0, 1, 2, 3, 4, 5]

    # dominated-candidate insertion over randomized inventories
    for _ in range(1000):
        cands = [candidate(
            f"{i:08d}",
            elevation_m=float(rng.uniform(10.0, 500.0)),
            drainage_area_km2=float(rng.uniform(50.0, 2000.0)),
            fam_value=int(rng.integers(10, 5000)),
            completeness=float(rng.uniform(0.1, 0.99)),
        ) for i in range(4)]
        baseline = select_outlet(cands).gauge_id
        dominated = candidate(
            "99999999",
            elevation_m=max(c.elevation_m for c in cands) + 1.0,
            drainage_area_km2=min(c.drainage_area_km2 for c in cands) - 1.0,
            fam_value=min(c.fam_value for c in cands) - 1,
            completeness=min(c.completeness for c in cands) * 0.5)
        assert select_outlet(cands + [dominated]).gauge_id == baseline
    report_pass(6, "rules 0-5 fixtures pass; dominated insertion never "
                   "changes the winner over 1000 inventories")


def test_criterion_7_parameter_ranges(rng, tmp_path):
    table = default_ranges()

    def assert_in_range(proposal):
        for name in PARAM_NAMES:
            value = proposal.value(name)
            assert table[name].lower <= value <= table[name].upper, (
                f"{name}={value}")

    # heuristic over randomized descriptors
    for _ in range(4000):
        desc = BasinDescriptors(
            area_km2=float(rng.uniform(1e-3, 1e7)),
            relief_m=float(rng.uniform(0.0, 10000.0)),
            mean_slope=float(rng.uniform(0.0, 5.0)),
            drainage_density=float(rng.uniform(0.0, 1.0)),
            impervious_fraction=float(rng.uniform(0.0, 1.0)))
        assert_in_range(heuristic_init(desc))

    # decider lines with wild values
    for _ in range(4000):
        parts = []
        for name in rng.choice(PARAM_NAMES, size=rng.integers(1, 14),
                               replace=False):
            parts.append(f"{name}={rng.uniform(-1e4, 1e4):.4g}")
        line = ('{"code":"crest_args = types.SimpleNamespace('
                + ", ".join(parts) + ')","explanation":"x"}')
        assert_in_range(parse_decider_json(line))

    # feedback overrides merged through a stored manifest
    root = tmp_path / "data"
    write_basin_fixture(root, rows=8, cols=8, steps=4, seed=1)
    start = datetime(2021, 6, 1)
    req = SimulationRequest(
        basin="little_fork",
        window=TimeWindow(start=start, end=start + timedelta(hours=4), dt=3600),
        data_root=root)
    out = run_pipeline(req, tmp_path / "base")
    desc = BasinDescriptors(area_km2=64.0, relief_m=100.0, mean_slope=0.02,
                            drainage_density=0.2, impervious_fraction=0.05)
    for _ in range(2000):
        name = str(rng.choice(PARAM_NAMES))
        value = float(rng.uniform(-1e4, 1e4))
        fed = apply_feedback(out / "run_manifest.txt",
                             [FeedbackDirective(kind="set_param", name=name,
                                                value=value)])
        proposal = heuristic_init(desc)
        for override, val in fed.overrides.items():
            proposal = proposal.with_value(override, val)
        clamped, _ = validate(proposal)
        assert_in_range(clamped)
    report_pass(7, "heuristic, decider, and feedback paths emit in-range "
                   "values on 1e4 randomized inputs")


def test_criterion_8_report_contract(tmp_path):
    markers = ("# ", "## Analysis", "## Figures", "## Data Tables",
               "## Discussion")
    text = render_markdown(make_context(tmp_path))
    positions = [text.index(m) for m in markers]
    assert positions == sorted(positions)
    assert text.count("](combined_maps.png)") == 1
    assert text.count("](results.png)") == 1

    eps = 1e-9
    below = render_markdown(make_context(tmp_path, bias_percent=-90.0 - eps))
    at = render_markdown(make_context(tmp_path, bias_percent=-90.0))
    above = render_markdown(make_context(tmp_path, bias_percent=-90.0 + eps))
    assert "Warm-up period" in below
    assert "Warm-up period" not in at
    assert "Warm-up period" not in above
    report_pass(8, "section order, single embeds, and the -90% warm-up "
                   "boundary all hold")


def test_criterion_9_end_to_end_determinism(tmp_path):
    root = tmp_path / "data"
    write_basin_fixture(root, rows=20, cols=20, steps=72, seed=7)
    start = datetime(2021, 6, 1)
    req = SimulationRequest(
        basin="little_fork",
        window=TimeWindow(start=start, end=start + timedelta(hours=72), dt=3600),
        data_root=root)
    t0 = time.perf_counter()
    out_a = run_pipeline(req, tmp_path / "a")
    elapsed = time.perf_counter() - t0
    out_b = run_pipeline(req, tmp_path / "b")
    for name in ("report.md", "results.png", "combined_maps.png"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
    assert elapsed < 30.0
    report_pass(9, f"two runs byte-identical; full pipeline took {elapsed:.2f}s")
