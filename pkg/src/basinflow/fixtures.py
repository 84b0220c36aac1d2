"""Deterministic synthetic basin fixtures for tests and demos.

The DEM ramps toward one corner along the chebyshev distance, so every
cell has a strictly lower D8 neighbor on the way to the outlet: no pits,
single fully connected basin. All files are seeded and byte-stable.
"""

import csv
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .grid import Raster, d8_flow_directions, flow_accumulation, write_ascii_grid

DEFAULT_BASIN_NAME = "little_fork"


def synthetic_dem(rows=20, cols=20, cell_size=1000.0, seed=7, outlet=None):
    """DEM draining to ``outlet`` (default lower-right corner)."""
    rng = np.random.default_rng(seed)
    if outlet is None:
        outlet = (rows - 1, cols - 1)
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    cheb = np.maximum(np.abs(rr - outlet[0]), np.abs(cc - outlet[1]))
    # ramp step of 10 m dominates the <1 m noise, keeping descent strict
    values = 10.0 * cheb + rng.uniform(0.0, 1.0, size=(rows, cols))
    return Raster(values=values, cell_size=cell_size, origin_x=500000.0,
                  origin_y=4000000.0)


def write_basin_fixture(root, name=DEFAULT_BASIN_NAME, rows=20, cols=20,
                        cell_size=1000.0, steps=72, dt=3600, seed=7,
                        start=None, with_terrain=True, with_gauges=True,
                        with_discharge=True, with_pet=True):
    """Write a complete fixture directory; returns (basin_dir, window_start)."""
    start = start or datetime(2021, 6, 1)
    basin_dir = Path(root) / name
    basin_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed + 1)

    outlet = (rows - 1, cols - 1)
    dem = synthetic_dem(rows, cols, cell_size, seed, outlet)
    write_ascii_grid(dem, basin_dir / "dem.asc")

    dirs = d8_flow_directions(dem)
    fam = flow_accumulation(dirs)
    if with_terrain:
        ddm = Raster(values=dirs.codes.astype(np.float64), cell_size=cell_size,
                     origin_x=dem.origin_x, origin_y=dem.origin_y)
        write_ascii_grid(ddm, basin_dir / "ddm.asc")
        write_ascii_grid(fam, basin_dir / "fam.asc")

    outlet_id = "10010000"
    if with_gauges:
        gauge_rows = [
            # the natural outlet: lowest elevation, full accumulation, clean record
            (outlet_id, "Little Fork at Mouth", outlet[0], outlet[1],
             float(dem.values[outlet]), fam.values[outlet] * dem.cell_area_km2,
             int(fam.values[outlet]), "1988-10-01", "2023-09-30", 0.98,
             False, True),
            # an interior tributary gauge
            ("10010500", "Little Fork Above Falls", rows // 2, cols // 2,
             float(dem.values[rows // 2, cols // 2]),
             fam.values[rows // 2, cols // 2] * dem.cell_area_km2,
             int(fam.values[rows // 2, cols // 2]), "2002-05-01", "2023-09-30",
             0.91, False, True),
            # a regulated gauge that rule 1 must reject
            ("10009900", "Little Fork Below Dam", rows - 1, cols - 2,
             float(dem.values[rows - 1, cols - 2]) - 0.5,
             fam.values[rows - 1, cols - 2] * dem.cell_area_km2,
             int(fam.values[rows - 1, cols - 2]), "1975-10-01", "2023-09-30",
             0.99, True, False),
        ]
        with open(basin_dir / "gauges.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "name", "row", "col", "elevation_m",
                             "drainage_area_km2", "fam_value", "record_start",
                             "record_end", "completeness", "on_or_below_reservoir",
                             "upstream_reservoir_free"])
            for row in gauge_rows:
                writer.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.3f}",
                                 f"{row[5]:.3f}", row[6], row[7], row[8],
                                 f"{row[9]:.2f}", str(row[10]).lower(),
                                 str(row[11]).lower()])

    # storm: 12 wet hours, intensity varying by step, then dry
    precip_dir = basin_dir / "precip"
    precip_dir.mkdir(exist_ok=True)
    (precip_dir / "manifest.txt").write_text(
        "pattern = precip_%Y%m%d%H.asc\nunits = mm/h\ndt = 3600\n", encoding="utf-8")
    intensities = np.zeros(steps)
    wet = min(12, steps)
    intensities[:wet] = rng.uniform(2.0, 6.0, size=wet)
    for i in range(steps):
        stamp = start + timedelta(seconds=dt * i)
        field = np.full((rows, cols), intensities[i])
        write_ascii_grid(
            Raster(values=field, cell_size=cell_size, origin_x=dem.origin_x,
                   origin_y=dem.origin_y),
            precip_dir / stamp.strftime("precip_%Y%m%d%H.asc"))

    if with_pet:
        pet_dir = basin_dir / "pet"
        pet_dir.mkdir(exist_ok=True)
        (pet_dir / "manifest.txt").write_text(
            "pattern = pet_%Y%m%d.asc\nunits = mm/day\ndt = 86400\n", encoding="utf-8")
        n_days = (steps * dt + 86399) // 86400
        for day in range(n_days):
            stamp = start + timedelta(days=day)
            field = np.full((rows, cols), 3.0)
            write_ascii_grid(
                Raster(values=field, cell_size=cell_size, origin_x=dem.origin_x,
                       origin_y=dem.origin_y),
                pet_dir / stamp.strftime("pet_%Y%m%d.asc"))

    if with_discharge and with_gauges:
        discharge_dir = basin_dir / "discharge"
        discharge_dir.mkdir(exist_ok=True)
        # plausible storm response: rise over the wet spell, then recession
        base = 2.0
        peak = 0.004 * rows * cols * cell_size * cell_size / 1e6  # scale with area
        q = np.empty(steps)
        for i in range(steps):
            if i < wet:
                q[i] = base + peak * (i + 1) / wet
            else:
                q[i] = base + peak * np.exp(-(i - wet) / 18.0)
        q += rng.normal(0.0, 0.02 * peak, size=steps)
        q = np.maximum(q, 0.1)
        with open(discharge_dir / f"{outlet_id}.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", "q_m3s"])
            for i in range(steps):
                stamp = start + timedelta(seconds=dt * i)
                writer.writerow([stamp.strftime("%Y-%m-%dT%H:%M:%S"), f"{q[i]:.4f}"])

    return basin_dir, start
