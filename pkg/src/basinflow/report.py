"""Markdown report and its two figures.

The report keeps a fixed section order (title/basin info, analysis,
figures, data tables, discussion) so downstream checks can scan headings;
both PNGs are drawn with the in-tree rasterizer and are byte-stable for
identical inputs.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, IncompleteContextError, ShapeError
from .params import PARAM_NAMES
from .rasterize import (
    BLACK,
    BLUE,
    Canvas,
    GRAY,
    GREEN,
    LIGHT_GRAY,
    RED,
    STEEL,
    WHITE,
)

HYDROGRAPH_SIZE = (1200, 600)
MAP_PANEL = 360
WARMUP_BIAS_PERCENT = -90.0


@dataclass
class ReportContext:
    """Everything render_markdown needs, already computed."""

    basin_name: str
    window: object
    maps_figure: str
    hydrograph_figure: str
    gauge_id: str | None = None
    gauge_explanation: str = ""
    proposal: object | None = None
    metrics: object | None = None
    descriptors: object | None = None
    run_args: dict = field(default_factory=dict)
    notifications: list = field(default_factory=list)


def _format(value, digits=4):
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


# ---------------------------------------------------------------------------
# results.png


def _series_points(values, x0, x1, y0, y1, vmax):
    """Map a series onto pixel coordinates inside the plot box.

    y0 is the box top, y1 the bottom (value 0); vmax spans the full box.
    """
    n = len(values)
    points = []
    for i, v in enumerate(values):
        x = x0 if n == 1 else x0 + (x1 - x0) * i / (n - 1)
        frac = 0.0 if vmax <= 0 else min(max(v / vmax, 0.0), 1.0)
        y = y1 - (y1 - y0) * frac
        points.append((int(round(x)), int(round(y))))
    return points


def render_hydrograph(sim, obs, precip, path, timestamps=None):
    """Draw discharge lines with inverted precipitation bars into a PNG.

    ``obs`` and ``precip`` may be None; sim must be non-empty. Output is
    a fixed 1200x600 image, byte-identical for identical inputs.
    """
    sim = np.asarray(sim, dtype=np.float64)
    if sim.size == 0:
        raise EmptyInputError("cannot render an empty hydrograph")
    obs_arr = None if obs is None else np.asarray(obs, dtype=np.float64)
    precip_arr = None if precip is None else np.asarray(precip, dtype=np.float64)

    width, height = HYDROGRAPH_SIZE
    canvas = Canvas(width, height)
    left, right, top, bottom = 80, 30, 40, 60
    x0, x1 = left, width - right
    y0, y1 = top, height - bottom

    qmax = float(sim.max())
    if obs_arr is not None and np.isfinite(obs_arr).any():
        qmax = max(qmax, float(np.nanmax(obs_arr)))
    qmax = qmax * 1.05 if qmax > 0 else 1.0

    # frame and horizontal grid
    for k in range(5):
        gy = y1 - (y1 - y0) * k // 4
        canvas.hline(x0, x1, gy, LIGHT_GRAY)
        label = f"{qmax * k / 4:.2f}"
        canvas.text(x0 - Canvas.text_width(label) - 6, gy - 3, label)
    canvas.hline(x0, x1, y1, BLACK)
    canvas.vline(x0, y0, y1, BLACK)

    # precipitation bars hang from the top quarter
    if precip_arr is not None and precip_arr.size:
        pmax = float(precip_arr.max())
        if pmax > 0:
            band = (y1 - y0) // 4
            bar_w = max(1, (x1 - x0) // max(1, precip_arr.size))
            for i, p in enumerate(precip_arr):
                bh = int(round(band * p / pmax))
                bx = x0 if precip_arr.size == 1 else x0 + (x1 - x0) * i // max(1, precip_arr.size - 1)
                canvas.fill_rect(bx, y0, bar_w, bh, STEEL)
        canvas.text(x1 - Canvas.text_width("PRECIP (MM)"), y0 + 4, "PRECIP (MM)", STEEL)

    sim_points = _series_points(sim, x0, x1, y0, y1, qmax)
    if obs_arr is not None:
        segment = []
        for i, v in enumerate(obs_arr):
            if np.isfinite(v):
                segment.append((i, v))
            else:
                _draw_obs_segment(canvas, segment, obs_arr.size, x0, x1, y0, y1, qmax)
                segment = []
        _draw_obs_segment(canvas, segment, obs_arr.size, x0, x1, y0, y1, qmax)
    canvas.polyline(sim_points, BLUE, thickness=2)

    # legend and axis label
    canvas.text(x0 + 8, 8, "DISCHARGE (M3/S)")
    lx = x0 + 8
    canvas.hline(lx, lx + 18, 22, BLUE)
    canvas.hline(lx, lx + 18, 23, BLUE)
    lx = canvas.text(lx + 24, 19, "SIMULATED") + 16
    if obs_arr is not None:
        canvas.hline(lx, lx + 18, 22, RED)
        canvas.text(lx + 24, 19, "OBSERVED")
    else:
        canvas.text(lx, 19, "(NO OBSERVATIONS)", GRAY)

    # x tick labels
    n = sim.size
    for k in range(5):
        i = (n - 1) * k // 4
        tx = x0 if n == 1 else x0 + (x1 - x0) * i // max(1, n - 1)
        canvas.vline(tx, y1, y1 + 4, BLACK)
        label = timestamps[i].strftime("%Y-%m-%d %H") if timestamps else f"STEP {i}"
        canvas.text(min(tx - Canvas.text_width(label) // 2, width - Canvas.text_width(label) - 2),
                    y1 + 10, label)

    canvas.save(path)
    return Path(path)


def _draw_obs_segment(canvas, segment, n, x0, x1, y0, y1, qmax):
    if len(segment) < 1:
        return
    points = []
    for i, v in segment:
        x = x0 if n == 1 else x0 + (x1 - x0) * i / (n - 1)
        frac = 0.0 if qmax <= 0 else min(max(v / qmax, 0.0), 1.0)
        points.append((int(round(x)), int(round(y1 - (y1 - y0) * frac))))
    if len(points) == 1:
        canvas.fill_rect(points[0][0] - 1, points[0][1] - 1, 3, 3, RED)
    else:
        canvas.polyline(points, RED, thickness=1)


# ---------------------------------------------------------------------------
# combined_maps.png


def _panel_block(scalar, valid, panel, colormap):
    """Scale a (rows, cols) scalar field into an RGB pixel block."""
    rows, cols = scalar.shape
    cell = max(1, min(panel // cols, panel // rows))
    norm = np.zeros_like(scalar, dtype=np.float64)
    if valid.any():
        vmin = scalar[valid].min()
        vmax = scalar[valid].max()
        span = vmax - vmin
        if span > 0:
            norm = np.where(valid, (scalar - vmin) / span, 0.0)
        else:
            norm = np.where(valid, 0.5, 0.0)
    rgb = colormap(norm)
    rgb[~valid] = (230, 230, 230)
    block = np.repeat(np.repeat(rgb, cell, axis=0), cell, axis=1)
    return block.astype(np.uint8), cell


def _gray_ramp(norm):
    level = (40 + norm * 200).astype(np.uint8)
    return np.stack([level, level, level], axis=-1).astype(np.float64)


def _blue_ramp(norm):
    r = 235 - norm * 204
    g = 240 - norm * 121
    b = 250 - norm * 70
    return np.stack([r, g, b], axis=-1)


def render_maps(dem, fam, mask, gauges, path):
    """Three panels: DEM grayscale, log-scaled accumulation, basin mask;
    gauges are marked and labeled on every panel."""
    if dem.shape != fam.shape or dem.shape != mask.shape:
        raise ShapeError("dem/fam/mask shapes differ")
    rows, cols = dem.shape
    margin, title_h = 14, 18
    width = 3 * MAP_PANEL + 4 * margin
    height = MAP_PANEL + title_h + 2 * margin + 14
    canvas = Canvas(width, height)

    valid = dem.valid_mask()
    fam_log = np.log1p(np.maximum(fam.values, 0.0))
    member = mask.member

    boundary = member & ~(
        np.roll(member, 1, 0) & np.roll(member, -1, 0)
        & np.roll(member, 1, 1) & np.roll(member, -1, 1))
    basin_rgb = np.empty((rows, cols, 3), dtype=np.float64)
    basin_rgb[:] = (245, 245, 245)
    basin_rgb[member] = (190, 225, 190)
    basin_rgb[boundary] = GREEN
    ro, co = mask.outlet_cell
    basin_rgb[ro, co] = RED

    panels = [
        ("DEM (M)", *_panel_block(dem.values, valid, MAP_PANEL, _gray_ramp)),
        ("FLOW ACCUMULATION (LOG)", *_panel_block(fam_log, fam.valid_mask(), MAP_PANEL, _blue_ramp)),
        ("BASIN MASK", basin_rgb.astype(np.uint8).repeat(
            max(1, min(MAP_PANEL // cols, MAP_PANEL // rows)), axis=0).repeat(
            max(1, min(MAP_PANEL // cols, MAP_PANEL // rows)), axis=1),
         max(1, min(MAP_PANEL // cols, MAP_PANEL // rows))),
    ]

    for idx, (title, block, cell) in enumerate(panels):
        px = margin + idx * (MAP_PANEL + margin)
        py = margin + title_h
        canvas.text(px, margin, title)
        h, w = block.shape[:2]
        canvas.blit(px, py, block)
        canvas.fill_rect(px - 1, py - 1, w + 2, 1, GRAY)
        canvas.fill_rect(px - 1, py + h, w + 2, 1, GRAY)
        canvas.fill_rect(px - 1, py - 1, 1, h + 2, GRAY)
        canvas.fill_rect(px + w, py - 1, 1, h + 2, GRAY)
        for gauge in gauges:
            gx = px + gauge.col * cell + cell // 2
            gy = py + gauge.row * cell + cell // 2
            canvas.fill_rect(gx - 2, gy - 2, 5, 5, RED)
            canvas.fill_rect(gx - 1, gy - 1, 3, 3, WHITE)
            canvas.text(min(gx + 5, width - Canvas.text_width(gauge.id) - 2),
                        max(gy - 3, 0), gauge.id, BLACK)
    canvas.save(path)
    return Path(path)


# ---------------------------------------------------------------------------
# report.md


def render_markdown(ctx):
    """Assemble the Markdown report; section order is fixed."""
    for figure in (ctx.maps_figure, ctx.hydrograph_figure):
        if not figure or not Path(figure).exists():
            raise IncompleteContextError(f"required figure missing: {figure!r}")

    m = ctx.metrics
    lines = [f"# {ctx.basin_name} Basin Simulation Report", ""]

    # 1. title and basin information
    lines.append(f"Simulation window: {ctx.window.start.isoformat()} to "
                 f"{ctx.window.end.isoformat()} at {ctx.window.dt} s steps.")
    if ctx.gauge_id:
        lines.append(f"Outlet gauge: {ctx.gauge_id}. {ctx.gauge_explanation}".rstrip())
    else:
        lines.append("Outlet gauge: none (ungauged run; outlet taken at the "
                     "highest-accumulation cell).")
    if ctx.descriptors is not None:
        d = ctx.descriptors
        lines.append(
            f"Basin area {_format(d.area_km2, 1)} km2, relief {_format(d.relief_m, 1)} m, "
            f"mean slope {_format(d.mean_slope)}, drainage density "
            f"{_format(d.drainage_density, 3)}, impervious fraction "
            f"{_format(d.impervious_fraction, 3)}.")
    lines.append("The basin and gauge map appears in the Figures section "
                 "(combined_maps.png).")
    lines.append("")

    # 2. analysis
    lines += ["## Analysis", ""]
    lines.append("### Simulation vs Observation")
    if m is not None and m.n_pairs > 0:
        lines.append(
            f"Simulated discharge was compared against {m.n_pairs} jointly valid "
            f"observed steps; the hydrograph overlay is results.png.")
    else:
        lines.append("No observations were available, so the run is reported "
                     "without a comparison series.")
    lines.append("")
    lines.append("### Model Performance Metrics")
    if m is not None and m.n_pairs > 0:
        lines.append(
            f"NSE {_format(m.nse)}, KGE {_format(m.kge)}, CC {_format(m.cc)}, "
            f"RMSE {_format(m.rmse)} m3/s, mean bias {_format(m.bias_mean)} m3/s, "
            f"volume bias {_format(m.bias_percent, 2)} %.")
    else:
        lines.append("Verification metrics were skipped: no observations.")
    lines.append("")
    lines.append("### CREST Parameters")
    lines.append("The run used the parameter vector listed in the Data Tables "
                 "section, with a rationale per value.")
    lines.append("")
    lines.append("### Conclusion")
    lines.append(_conclusion_sentence(m))
    lines.append("")

    # 3. required images
    lines += ["## Figures", ""]
    lines.append("![Basin, terrain, and gauge maps](combined_maps.png)")
    lines.append("")
    lines.append("![Simulated and observed discharge with precipitation](results.png)")
    lines.append("")

    # 4. data tables (vertical key: value listing)
    lines += ["## Data Tables", "", "### Run Arguments", ""]
    for key, value in ctx.run_args.items():
        lines.append(f"- {key}: {value}")
    lines += ["", "### Metrics", ""]
    if m is not None and m.n_pairs > 0:
        for key, value in m.as_dict().items():
            lines.append(f"- {key}: {_format(value)}")
    else:
        lines.append("- metrics: no observations")
    lines += ["", "### Parameters", ""]
    if ctx.proposal is not None:
        for name in PARAM_NAMES:
            value = ctx.proposal.value(name)
            why = ctx.proposal.rationale.get(name, "")
            suffix = f" ({why})" if why else ""
            lines.append(f"- {name}: {value:.6g}{suffix}")
    else:
        lines.append("- parameters: not recorded")
    lines.append("")

    # 5. discussion
    lines += ["## Discussion", ""]
    lines.append(_performance_sentence(m))
    if m is not None and m.bias_percent is not None and m.bias_percent < WARMUP_BIAS_PERCENT:
        lines.append("")
        lines.append(
            f"Warm-up period: the volume bias of {_format(m.bias_percent, 2)} % is "
            "strongly negative, which usually means the storages started too dry "
            "for this window. Extending the simulation start earlier, or seeding "
            "initial soil water closer to capacity, should be considered before "
            "reading the early hydrograph.")
    lines.append("")
    lines.append("Recommended next steps: review the parameter rationale above, "
                 "adjust values through the feedback loop, and rerun to compare "
                 "metric changes.")
    if ctx.notifications:
        lines += ["", "Data notes:"]
        for note in ctx.notifications:
            lines.append(f"- {note}")
    lines.append("")
    return "\n".join(lines)


def _conclusion_sentence(m):
    if m is None or m.n_pairs == 0 or m.nse is None:
        return ("The simulation completed and conserved mass; skill is not "
                "quantified without observations.")
    if m.nse >= 0.5:
        return (f"With NSE {_format(m.nse)} the simulation tracks the observed "
                "hydrograph reasonably well for an uncalibrated first run.")
    return (f"With NSE {_format(m.nse)} the first-guess run leaves room for "
            "calibration; the parameter table is the starting point.")


def _performance_sentence(m):
    if m is None or m.n_pairs == 0:
        return ("Performance evaluation: no observed discharge was available, "
                "so only mass balance and qualitative behavior were checked.")
    return (f"Performance evaluation: NSE {_format(m.nse)} and KGE "
            f"{_format(m.kge)} summarize the fit; RMSE {_format(m.rmse)} m3/s "
            f"with volume bias {_format(m.bias_percent, 2)} %.")
