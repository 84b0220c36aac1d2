"""Forcing ingestion: precipitation and PET series on the model grid.

A forcing directory holds a plain-text ``manifest.txt`` (key = value lines
declaring the per-step file pattern, native units, and native cadence) plus
one ASCII grid per native step. Ingestion aligns everything to the model
window and step, converting units and disaggregating daily sources.
"""

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import DataRangeError, MissingDataError, ParseError, StepError
from .grid import read_ascii_grid

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"

#: climatological default used when PET is missing entirely (mm per day)
DEFAULT_PET_MM_PER_DAY = 3.0

KNOWN_UNITS = ("mm/step", "mm/h", "mm/day")


@dataclass(frozen=True)
class TimeWindow:
    """Half-open simulation window [start, end) at a fixed step."""

    start: datetime
    end: datetime
    dt: int

    def __post_init__(self):
        if self.start >= self.end:
            raise StepError(f"window start {self.start} not before end {self.end}")
        if self.dt <= 0:
            raise StepError(f"dt must be positive, got {self.dt}")
        span = (self.end - self.start).total_seconds()
        if span % self.dt != 0:
            raise StepError(f"window span {span:.0f}s not divisible by dt={self.dt}s")

    @property
    def n_steps(self):
        return int((self.end - self.start).total_seconds() // self.dt)

    def timestamps(self):
        return [self.start + timedelta(seconds=self.dt * i) for i in range(self.n_steps)]


@dataclass
class ForcingSeries:
    """Per-step precipitation and PET rasters (mm per model step)."""

    window: TimeWindow
    precip: list  # Raster per step; None marks a gap before fallback_fill
    pet: list

    def __post_init__(self):
        n = self.window.n_steps
        if len(self.precip) != n or len(self.pet) != n:
            raise StepError(
                f"series lengths ({len(self.precip)}, {len(self.pet)}) != window steps ({n})")

    @property
    def timestamps(self):
        return self.window.timestamps()

    def gap_steps(self):
        """(kind, index) for every missing raster."""
        gaps = [("precip", i) for i, r in enumerate(self.precip) if r is None]
        gaps += [("pet", i) for i, r in enumerate(self.pet) if r is None]
        return gaps


@dataclass
class FallbackPolicy:
    """Gap-fill defaults: dry precipitation, climatological-constant PET."""

    precip_mm_per_step: float = 0.0
    pet_mm_per_day: float = DEFAULT_PET_MM_PER_DAY


@dataclass(frozen=True)
class ForcingManifest:
    pattern: str
    units: str
    dt: int


def read_manifest(path):
    """Parse a key = value manifest (pattern, units, dt)."""
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            entries[key.strip().lower()] = value.strip()
    for required in ("pattern", "units", "dt"):
        if required not in entries:
            raise ParseError(f"{path}: manifest missing key {required!r}")
    units = entries["units"]
    if units not in KNOWN_UNITS:
        raise ParseError(f"{path}: unknown units {units!r} (expected one of {KNOWN_UNITS})")
    try:
        native_dt = int(entries["dt"])
    except ValueError:
        raise ParseError(f"{path}: dt must be an integer, got {entries['dt']!r}")
    return ForcingManifest(pattern=entries["pattern"], units=units, dt=native_dt)


def _to_mm_per_step(raster, units, step_seconds):
    if units == "mm/step":
        return raster
    if units == "mm/h":
        factor = step_seconds / 3600.0
    elif units == "mm/day":
        factor = step_seconds / 86400.0
    else:
        raise ParseError(f"unknown units {units!r}")
    scaled = np.where(raster.valid_mask(), raster.values * factor, raster.nodata)
    return raster.with_values(scaled)


def _check_nonnegative(raster, timestamp, what):
    vals = raster.values[raster.valid_mask()]
    if vals.size and vals.min() < 0:
        raise DataRangeError(
            f"{what} at {timestamp.strftime(TIMESTAMP_FORMAT)} contains negative values")


def disaggregate_pet(daily, dt):
    """Split daily PET rasters uniformly into per-step rasters.

    ``dt`` must divide 86400 s; each per-day sum is preserved to well under
    1e-9 mm because every step gets exactly value/steps.
    """
    if 86400 % dt != 0:
        raise StepError(f"dt={dt}s does not divide a day")
    steps = 86400 // dt
    out = []
    for day_raster in daily:
        split = np.where(day_raster.valid_mask(),
                         day_raster.values / steps, day_raster.nodata)
        per_step = day_raster.with_values(split)
        out.extend([per_step] * steps)
    return out


def load_series(directory, window, allow_gaps=False):
    """Load one forcing variable (a directory with manifest + step files).

    Returns a list of per-step rasters in mm/step aligned to the window,
    with None at gaps when ``allow_gaps``; otherwise the first missing step
    raises MissingDataError naming its timestamp.
    """
    directory = Path(directory)
    manifest = read_manifest(directory / "manifest.txt")

    if manifest.dt == window.dt:
        stamps = window.timestamps()
        per_file_steps = 1
    elif manifest.dt > window.dt:
        if manifest.dt % window.dt != 0:
            raise StepError(
                f"native dt {manifest.dt}s not a multiple of model dt {window.dt}s")
        if manifest.dt != 86400:
            raise StepError("coarse forcing is only supported at daily cadence")
        # daily files: one per day covering the window
        if (window.start.hour, window.start.minute, window.start.second) != (0, 0, 0):
            raise StepError("daily forcing requires a midnight-aligned window")
        n_days = math.ceil(window.n_steps * window.dt / 86400)
        stamps = [window.start + timedelta(days=i) for i in range(n_days)]
        per_file_steps = 86400 // window.dt
    else:
        raise StepError(
            f"native dt {manifest.dt}s finer than model dt {window.dt}s is not supported")

    loaded = []
    for stamp in stamps:
        path = directory / stamp.strftime(manifest.pattern)
        if not path.exists():
            if allow_gaps:
                loaded.append(None)
                continue
            raise MissingDataError(
                f"missing forcing step {stamp.strftime(TIMESTAMP_FORMAT)}: {path}")
        raster = read_ascii_grid(path)
        _check_nonnegative(raster, stamp, directory.name)
        loaded.append(_to_mm_per_step(raster, manifest.units, manifest.dt))

    if per_file_steps > 1:
        if any(r is None for r in loaded):
            # expand gaps so fallback_fill sees per-step holes
            expanded = []
            for r in loaded:
                if r is None:
                    expanded.extend([None] * per_file_steps)
                else:
                    expanded.extend(disaggregate_pet([r], window.dt))
            loaded = expanded
        else:
            loaded = disaggregate_pet(loaded, window.dt)
    return loaded[: window.n_steps]


def ingest_forcing(precip_dir, pet_dir, window):
    """Strict ingestion: every step present, values validated nonnegative."""
    precip = load_series(precip_dir, window, allow_gaps=False)
    pet = load_series(pet_dir, window, allow_gaps=False)
    return ForcingSeries(window=window, precip=precip, pet=pet)


def _constant_raster(template, value):
    vals = np.where(template.valid_mask(), value, template.nodata)
    return template.with_values(vals)


def fallback_fill(series, policy=None, template=None):
    """Fill gaps per policy and log every substitution.

    Non-gap steps pass through untouched (same objects). Returns
    (filled ForcingSeries, list of notification strings).
    """
    policy = policy or FallbackPolicy()
    log = []
    reference = template
    for r in series.precip + series.pet:
        if r is not None:
            reference = reference or r
            break
    if reference is None:
        raise MissingDataError("cannot fill gaps: no raster available as a shape template")

    pet_per_step = policy.pet_mm_per_day * series.window.dt / 86400.0
    stamps = series.timestamps

    precip = list(series.precip)
    pet = list(series.pet)
    for i, r in enumerate(precip):
        if r is None:
            precip[i] = _constant_raster(reference, policy.precip_mm_per_step)
            log.append(
                f"fallback: precip {stamps[i].strftime(TIMESTAMP_FORMAT)} "
                f"filled with {policy.precip_mm_per_step} mm/step")
    for i, r in enumerate(pet):
        if r is None:
            pet[i] = _constant_raster(reference, pet_per_step)
            log.append(
                f"fallback: pet {stamps[i].strftime(TIMESTAMP_FORMAT)} "
                f"filled with constant {policy.pet_mm_per_day} mm/day")
    return ForcingSeries(window=series.window, precip=precip, pet=pet), log
