"""Staged pipeline: request parsing, dataset retrieval, terrain, outlet
selection, parameter initialization, simulation, metrics, and report.

Stages run in a fixed order and abort on the first failure with the stage
name prefixed to the error. Every run writes a plain-text manifest
(request keys, stage log with dependency records) that the feedback loop
reads back and mutates into the next request.
"""

import re
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from . import forcing as forcing_mod
from . import gauges as gauges_mod
from . import grid as grid_mod
from . import metrics as metrics_mod
from . import params as params_mod
from . import report as report_mod
from . import routing as routing_mod
from .errors import (
    BasinflowError,
    DirectiveError,
    MissingDataError,
    ParseError,
    RequestParseError,
)
from .forcing import FallbackPolicy, ForcingSeries, TimeWindow

#: accumulation threshold (cells) for the drainage-density descriptor;
#: independent of the routing parameter th, which is in km^2
DESCRIPTOR_CHANNEL_CELLS = 25


@dataclass(frozen=True)
class SimulationRequest:
    basin: str
    window: TimeWindow
    data_root: Path
    gauge_hint: str | None = None
    overrides: dict = field(default_factory=dict)
    decider: str = "none"
    channel_threshold_cells: int = DESCRIPTOR_CHANNEL_CELLS

    def __post_init__(self):
        object.__setattr__(self, "data_root", Path(self.data_root))
        if not self.data_root.is_dir():
            raise RequestParseError(f"data root {self.data_root} does not exist")


@dataclass(frozen=True)
class FeedbackDirective:
    """One of set_param / set_gauge / extend_window / rerun."""

    kind: str
    name: str | None = None
    value: float | None = None
    gauge_id: str | None = None
    new_end: datetime | None = None


# ---------------------------------------------------------------------------
# request parsing

_QUOTED_RE = re.compile(r"[\"']([^\"']+)[\"']")
_ISO_DATE_RE = re.compile(r"\b(\d{4}-\d{2}-\d{2})\b")
_YEAR_RE = re.compile(r"\b(19\d{2}|20\d{2})\b")


def _basin_from_text(text):
    quoted = _QUOTED_RE.search(text)
    if quoted:
        return quoted.group(1).strip()
    tokens = text.split()
    for i, token in enumerate(tokens):
        if token.strip(".,!?;:").lower() == "basin" and i > 0:
            phrase = []
            for prev in reversed(tokens[:i]):
                word = prev.strip(".,!?;:")
                if word and word[0].isalpha() and word[0].isupper():
                    phrase.append(word)
                else:
                    break
            if phrase:
                return " ".join(reversed(phrase))
    return None


def _window_from_text(text, dt):
    iso = _ISO_DATE_RE.findall(text)
    if len(iso) >= 2:
        start = datetime.fromisoformat(iso[0])
        end = datetime.fromisoformat(iso[1])
        return TimeWindow(start=start, end=end, dt=dt)
    years = [y for y in _YEAR_RE.findall(text)]
    if len(years) >= 2:
        return TimeWindow(start=datetime(int(years[0]), 1, 1),
                          end=datetime(int(years[1]), 12, 31), dt=dt)
    if len(years) == 1:
        year = int(years[0])
        return TimeWindow(start=datetime(year, 1, 1),
                          end=datetime(year, 12, 31), dt=dt)
    return None


def parse_request(text, defaults):
    """Resolve a free-form request line against defaults.

    ``defaults`` is a dict that may carry basin, start, end, dt,
    data_root, gauge_hint, decider, overrides. The parser looks for a
    quoted basin name or a capitalized phrase before the word "basin",
    and a 4-digit year pair or ISO date pair for the window.
    """
    if not text or not text.strip():
        raise RequestParseError("empty request text")
    dt = int(defaults.get("dt", 3600))

    basin = _basin_from_text(text) or defaults.get("basin")
    if not basin:
        raise RequestParseError("no basin name in request and no default")

    window = _window_from_text(text, dt)
    if window is None:
        start, end = defaults.get("start"), defaults.get("end")
        if start is None or end is None:
            raise RequestParseError("no simulation window in request and no default")
        window = TimeWindow(start=start, end=end, dt=dt)

    data_root = defaults.get("data_root")
    if data_root is None:
        raise RequestParseError("no data root configured")
    return SimulationRequest(
        basin=basin,
        window=window,
        data_root=Path(data_root),
        gauge_hint=defaults.get("gauge_hint"),
        overrides=dict(defaults.get("overrides") or {}),
        decider=defaults.get("decider", "none"),
    )


# ---------------------------------------------------------------------------
# dataset retrieval


def basin_directory(data_root, basin):
    """Resolve the fixture directory: exact name first, then a slug."""
    root = Path(data_root)
    exact = root / basin
    if exact.is_dir():
        return exact
    slug = re.sub(r"[^a-z0-9]+", "_", basin.lower()).strip("_")
    slugged = root / slug
    if slugged.is_dir():
        return slugged
    raise MissingDataError(f"no basin directory {exact} (or {slugged})")


def retrieve_datasets(req):
    """Resolve fixture paths; mandatory DEM, everything else optional."""
    basin_dir = basin_directory(req.data_root, req.basin)
    manifest = {"basin_dir": basin_dir}
    notifications = []

    dem = basin_dir / "dem.asc"
    if not dem.exists():
        raise MissingDataError(f"missing mandatory DEM: {dem}")
    manifest["dem"] = dem

    for key, rel in (("ddm", "ddm.asc"), ("fam", "fam.asc"),
                     ("gauges", "gauges.csv"), ("landcover", "landcover.asc"),
                     ("landcover_classes", "landcover_classes.txt")):
        path = basin_dir / rel
        if path.exists():
            manifest[key] = path
    for key, rel in (("precip", "precip"), ("pet", "pet"), ("discharge", "discharge")):
        path = basin_dir / rel
        if path.is_dir():
            manifest[key] = path

    if "ddm" not in manifest:
        notifications.append("terrain: ddm.asc absent, deriving directions from the DEM")
    if "fam" not in manifest:
        notifications.append("terrain: fam.asc absent, deriving accumulation")
    if "gauges" not in manifest:
        notifications.append("outlet: gauges.csv absent, running ungauged")
    if "precip" not in manifest:
        notifications.append("forcing: precip/ absent, falling back to zero rainfall")
    if "pet" not in manifest:
        notifications.append("forcing: pet/ absent, falling back to constant PET")
    if "discharge" not in manifest:
        notifications.append("metrics: discharge/ absent, skipping verification")
    return manifest, notifications


def _load_impervious_table(path):
    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}:{lineno}: expected 'class = fraction'")
            key, _, value = stripped.partition("=")
            table[int(key.strip())] = float(value.strip())
    return table


def _make_decider(spec):
    if not spec or spec == "none":
        return None
    if spec.startswith("exec:"):
        return params_mod.SubprocessDecider([spec[len("exec:"):]])
    if spec.startswith("http:") or spec.startswith("https:"):
        url = spec if spec.startswith("http://") or spec.startswith("https://") else spec[len("http:"):]
        return params_mod.HttpDecider(url)
    raise RequestParseError(f"unknown decider spec {spec!r} (use none, exec:PATH, http:URL)")


def _load_forcing(manifest, window, notifications):
    precip = ([None] * window.n_steps if "precip" not in manifest
              else forcing_mod.load_series(manifest["precip"], window, allow_gaps=True))
    pet = ([None] * window.n_steps if "pet" not in manifest
           else forcing_mod.load_series(manifest["pet"], window, allow_gaps=True))
    series = ForcingSeries(window=window, precip=precip, pet=pet)
    template = None
    if any(r is None for r in precip + pet):
        template = grid_mod.read_ascii_grid(manifest["dem"])
        filled, log = forcing_mod.fallback_fill(series, FallbackPolicy(), template=template)
        notifications.extend(log)
        return filled
    return series


# ---------------------------------------------------------------------------
# run manifest


def _manifest_lines(req, out_dir):
    yield "# run manifest"
    yield f"basin = {req.basin}"
    yield f"data_root = {req.data_root.resolve()}"
    yield f"start = {req.window.start.isoformat()}"
    yield f"end = {req.window.end.isoformat()}"
    yield f"dt = {req.window.dt}"
    yield f"gauge_hint = {req.gauge_hint or ''}"
    yield f"decider = {req.decider}"
    yield f"out_dir = {Path(out_dir).resolve()}"
    for name in sorted(req.overrides):
        yield f"override.{name} = {req.overrides[name]!r}"


def read_manifest_file(path):
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("#") or "=" not in stripped:
                continue
            key, _, value = stripped.partition("=")
            entries[key.strip()] = value.strip()
    return entries


def apply_feedback(manifest_path, directives):
    """Merge feedback directives into the stored request.

    set_param accepts any of the 13 parameter names (values are clamped
    later by validation); set_gauge routes through the rule-0 hint;
    extend_window replaces the end instant; rerun changes nothing.
    """
    entries = read_manifest_file(manifest_path)
    try:
        window = TimeWindow(start=datetime.fromisoformat(entries["start"]),
                            end=datetime.fromisoformat(entries["end"]),
                            dt=int(entries["dt"]))
        base = SimulationRequest(
            basin=entries["basin"],
            window=window,
            data_root=Path(entries["data_root"]),
            gauge_hint=entries.get("gauge_hint") or None,
            overrides={key[len("override."):]: float(value)
                       for key, value in entries.items()
                       if key.startswith("override.")},
            decider=entries.get("decider", "none"),
        )
    except KeyError as exc:
        raise ParseError(f"{manifest_path}: manifest missing key {exc}")

    req = base
    for directive in directives:
        if directive.kind == "set_param":
            if directive.name not in params_mod.PARAM_NAMES:
                raise DirectiveError(f"unknown parameter {directive.name!r}")
            value = float(directive.value)
            if not np.isfinite(value):
                raise DirectiveError(f"non-finite value for {directive.name}")
            overrides = dict(req.overrides)
            overrides[directive.name] = value
            req = replace(req, overrides=overrides)
        elif directive.kind == "set_gauge":
            req = replace(req, gauge_hint=directive.gauge_id)
        elif directive.kind == "extend_window":
            window = TimeWindow(start=req.window.start, end=directive.new_end,
                                dt=req.window.dt)
            req = replace(req, window=window)
        elif directive.kind == "rerun":
            continue
        else:
            raise DirectiveError(f"unknown directive kind {directive.kind!r}")
    return req


# ---------------------------------------------------------------------------
# the pipeline


class _StageLog:
    def __init__(self):
        self.records = []

    def run(self, name, deps, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except BasinflowError as exc:
            exc.args = (f"stage {name}: {exc}",)
            self.records.append((name, deps, "failed", time.perf_counter() - start))
            raise
        self.records.append((name, deps, "ok", time.perf_counter() - start))
        return result

    def lines(self):
        for idx, (name, deps, status, seconds) in enumerate(self.records, start=1):
            yield f"stage.{idx}.{name}.status = {status}"
            yield f"stage.{idx}.{name}.deps = {','.join(deps)}"
            yield f"stage.{idx}.{name}.seconds = {seconds:.4f}"


def run_pipeline(req, out_dir):
    """Execute every stage and write all artifacts into ``out_dir``.

    Returns the output directory. Artifacts: report.md, combined_maps.png,
    results.png, timeseries.csv, ledger.csv, metrics.csv, param_ranges.csv,
    notifications.log, run_manifest.txt.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stages = _StageLog()
    notifications = []

    manifest, notes = stages.run("retrieve", (), lambda: retrieve_datasets(req))
    notifications.extend(notes)

    def terrain_stage():
        dem = grid_mod.read_ascii_grid(manifest["dem"])
        if "ddm" in manifest:
            raw = grid_mod.read_ascii_grid(manifest["ddm"])
            dirs = grid_mod.DirectionGrid(raw.values.astype(np.int16), raw.cell_size,
                                          raw.origin_x, raw.origin_y)
        else:
            dirs = grid_mod.d8_flow_directions(dem)
        if "fam" in manifest:
            fam = grid_mod.read_ascii_grid(manifest["fam"])
        else:
            fam = grid_mod.flow_accumulation(dirs)
        return dem, dirs, fam

    dem, dirs, fam = stages.run("terrain", ("retrieve",), terrain_stage)

    def descriptors_stage():
        # provisional basin: upstream closure of the highest-accumulation cell
        flat = int(np.argmax(fam.values))
        prov_outlet = (flat // fam.cols, flat % fam.cols)
        prov_mask = grid_mod.delineate_basin(dirs, prov_outlet)
        landcover = (grid_mod.read_ascii_grid(manifest["landcover"])
                     if "landcover" in manifest else None)
        table = (_load_impervious_table(manifest["landcover_classes"])
                 if "landcover_classes" in manifest else None)
        desc = grid_mod.basin_descriptors(
            dem, fam, prov_mask, req.channel_threshold_cells,
            landcover=landcover, impervious_table=table)
        return desc, prov_mask

    desc, prov_mask = stages.run("descriptors", ("terrain",), descriptors_stage)

    def outlet_stage():
        if "gauges" not in manifest:
            return None, None, prov_mask
        candidates = gauges_mod.load_gauges(manifest["gauges"])
        if not candidates:
            notifications.append("outlet: gauge inventory is empty, running ungauged")
            return None, None, prov_mask
        result = gauges_mod.select_outlet(candidates, user_hint=req.gauge_hint)
        selected = next(c for c in candidates if c.id == result.gauge_id)
        mask = grid_mod.delineate_basin(dirs, (selected.row, selected.col))
        return result, candidates, mask

    selection, candidates, mask = stages.run("outlet", ("retrieve", "terrain"), outlet_stage)

    def params_stage():
        decider = _make_decider(req.decider)
        if decider is None:
            proposal = params_mod.heuristic_init(desc)
        else:
            try:
                proposal = decider.propose(desc)
                notifications.append(f"params: external decider {req.decider} accepted")
            except Exception as exc:  # timeout, transport, or format failure
                notifications.append(
                    f"params: external decider failed ({exc}); using heuristic")
                proposal = params_mod.heuristic_init(desc)
        for name, value in sorted(req.overrides.items()):
            proposal = proposal.with_value(name, float(value), rationale="user override")
        proposal, violations = params_mod.validate(proposal)
        for violation in violations:
            notifications.append(f"params: {violation}")
        return proposal

    proposal = stages.run("params", ("descriptors",), params_stage)

    def simulate_stage():
        series = _load_forcing(manifest, req.window, notifications)
        result = routing_mod.simulate(dem, dirs, fam, mask, series,
                                      proposal.crest, proposal.routing,
                                      notifications=notifications)
        return result, series

    output, series = stages.run("simulate", ("retrieve", "terrain", "outlet", "params"),
                                simulate_stage)

    def metrics_stage():
        if selection is None or "discharge" not in manifest:
            return None, None
        path = Path(manifest["discharge"]) / f"{selection.gauge_id}.csv"
        if not path.exists():
            notifications.append(f"metrics: no observations for gauge "
                                 f"{selection.gauge_id}, skipping")
            return None, None
        _, q_obs = gauges_mod.load_discharge(path, req.window)
        paired = metrics_mod.PairedSeries(timestamps=output.timestamps,
                                          q_obs=q_obs, q_sim=output.outlet_q)
        return metrics_mod.compute_all(paired), q_obs

    bundle, q_obs = stages.run("metrics", ("retrieve", "outlet", "simulate"),
                               metrics_stage)

    def report_stage():
        maps_path = out_dir / "combined_maps.png"
        hydro_path = out_dir / "results.png"
        report_mod.render_maps(dem, fam, mask, candidates or [], maps_path)
        precip_mean = np.array([
            float(np.mean(np.where(r.values[mask.member] == r.nodata, 0.0,
                                   r.values[mask.member])))
            for r in series.precip])
        report_mod.render_hydrograph(output.outlet_q, q_obs, precip_mean,
                                     hydro_path, timestamps=output.timestamps)

        ctx = report_mod.ReportContext(
            basin_name=req.basin,
            window=req.window,
            maps_figure=str(maps_path),
            hydrograph_figure=str(hydro_path),
            gauge_id=selection.gauge_id if selection else None,
            gauge_explanation=selection.explanation if selection else "",
            proposal=proposal,
            metrics=bundle,
            descriptors=desc,
            run_args={
                "basin": req.basin,
                "start": req.window.start.isoformat(),
                "end": req.window.end.isoformat(),
                "dt_seconds": req.window.dt,
                "data_root": str(req.data_root.resolve()),
                "decider": req.decider,
                "member_cells": output.member_count,
            },
            notifications=notifications,
        )
        (out_dir / "report.md").write_text(report_mod.render_markdown(ctx),
                                           encoding="utf-8")
        output.write_timeseries_csv(out_dir / "timeseries.csv")
        output.write_ledger_csv(out_dir / "ledger.csv")
        params_mod.write_ranges_csv(out_dir / "param_ranges.csv")
        _write_metrics_csv(out_dir / "metrics.csv", bundle)
        (out_dir / "notifications.log").write_text(
            "".join(f"{note}\n" for note in notifications), encoding="utf-8")

    stages.run("report", ("descriptors", "outlet", "params", "simulate", "metrics"),
               report_stage)

    manifest_text = "\n".join(list(_manifest_lines(req, out_dir)) + list(stages.lines()))
    (out_dir / "run_manifest.txt").write_text(manifest_text + "\n", encoding="utf-8")
    return out_dir


def _write_metrics_csv(path, bundle):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        if bundle is None:
            fh.write("status,no observations\n")
            return
        for key, value in bundle.as_dict().items():
            fh.write(f"{key},{'' if value is None else repr(value)}\n")
