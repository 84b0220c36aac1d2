"""Raster container and terrain algorithms.

Rasters are georeferenced 2-D float grids (row 0 = northernmost row,
origin at the lower-left corner, square cells). Terrain work is D8:
flow directions, upstream-count accumulation, basin delineation by
upstream closure, clipping, and scalar basin descriptors.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import (
    BoundsError,
    CycleError,
    EmptyInputError,
    ParseError,
    ShapeError,
)

D8_CODES = (1, 2, 4, 8, 16, 32, 64, 128)
OUTLET = 0

#: direction code -> (drow, dcol); row axis points south
D8_OFFSETS = {
    1: (0, 1),     # E
    2: (1, 1),     # SE
    4: (1, 0),     # S
    8: (1, -1),    # SW
    16: (0, -1),   # W
    32: (-1, -1),  # NW
    64: (-1, 0),   # N
    128: (-1, 1),  # NE
}

DEFAULT_NODATA = -9999.0


@dataclass(frozen=True)
class Raster:
    """Georeferenced 2-D grid of values.

    Attributes
    ----------
    values : (rows, cols) float64 array, row 0 at the top (north)
    cell_size : cell edge length in meters (square cells)
    origin_x, origin_y : map coordinates of the lower-left corner
    nodata : sentinel value marking missing cells
    """

    values: np.ndarray
    cell_size: float
    origin_x: float = 0.0
    origin_y: float = 0.0
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ShapeError(f"raster values must be 2-D and non-empty, got shape {vals.shape}")
        if self.cell_size <= 0:
            raise ShapeError(f"cell_size must be positive, got {self.cell_size}")
        finite = np.isfinite(vals) | (vals == self.nodata)
        if not finite.all():
            raise ShapeError("raster contains non-finite values that are not the nodata sentinel")
        object.__setattr__(self, "values", vals)

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def cell_area_km2(self):
        return (self.cell_size / 1000.0) ** 2

    def valid_mask(self):
        """Boolean array, True where the cell holds a real value."""
        return self.values != self.nodata

    def same_georef(self, other):
        return (self.shape == other.shape
                and self.cell_size == other.cell_size
                and self.origin_x == other.origin_x
                and self.origin_y == other.origin_y)

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class DirectionGrid:
    """D8 direction codes on the same georeferencing as a Raster.

    Codes: E=1, SE=2, S=4, SW=8, W=16, NW=32, N=64, NE=128; 0 marks an
    outlet (no strictly lower neighbor) or a nodata cell.
    """

    codes: np.ndarray
    cell_size: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int16)
        if codes.ndim != 2:
            raise ShapeError(f"direction codes must be 2-D, got shape {codes.shape}")
        legal = np.isin(codes, (OUTLET,) + D8_CODES)
        if not legal.all():
            bad = codes[~legal].ravel()[0]
            raise ShapeError(f"illegal direction code {bad}")
        object.__setattr__(self, "codes", codes)

    @property
    def shape(self):
        return self.codes.shape

    @property
    def rows(self):
        return self.codes.shape[0]

    @property
    def cols(self):
        return self.codes.shape[1]

    def downstream(self, row, col):
        """(row, col) of the downstream neighbor, or None for outlets."""
        code = int(self.codes[row, col])
        if code == OUTLET:
            return None
        dr, dc = D8_OFFSETS[code]
        nr, nc = row + dr, col + dc
        if not (0 <= nr < self.rows and 0 <= nc < self.cols):
            return None  # pointing off-grid acts as an outlet
        return nr, nc

    def masked(self, member):
        """Copy with codes zeroed outside the member set."""
        codes = np.where(member, self.codes, OUTLET).astype(np.int16)
        return DirectionGrid(codes, self.cell_size, self.origin_x, self.origin_y)


@dataclass(frozen=True)
class BasinMask:
    """Boolean membership grid plus the outlet cell it drains to."""

    member: np.ndarray
    outlet_cell: tuple
    cell_size: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        member = np.asarray(self.member, dtype=bool)
        r, c = self.outlet_cell
        if not (0 <= r < member.shape[0] and 0 <= c < member.shape[1]):
            raise BoundsError(f"outlet cell {self.outlet_cell} outside grid {member.shape}")
        if not member[r, c]:
            raise ShapeError("outlet cell is not a member of its own basin mask")
        object.__setattr__(self, "member", member)
        object.__setattr__(self, "outlet_cell", (int(r), int(c)))

    @property
    def shape(self):
        return self.member.shape

    @property
    def count(self):
        return int(self.member.sum())

    def area_km2(self):
        return self.count * (self.cell_size / 1000.0) ** 2


@dataclass(frozen=True)
class BasinDescriptors:
    """Scalar morphology cues extracted from the terrain rasters."""

    area_km2: float
    relief_m: float
    mean_slope: float
    drainage_density: float
    impervious_fraction: float = 0.05


# ---------------------------------------------------------------------------
# ESRI ASCII grid I/O

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def read_ascii_grid(path):
    """Read an ESRI ASCII grid file into a Raster.

    Header keys are matched case-insensitively; NODATA_value is optional
    and defaults to -9999. Raises ParseError (with the offending line
    number) on malformed headers and ShapeError when the value count does
    not match nrows*ncols.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")

    header = {}
    body_start = 0
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            body_start = lineno
            continue
        key = parts[0].lower()
        if key in _HEADER_KEYS or key == "nodata_value":
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'key value', got {line!r}")
            try:
                header[key] = float(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric header value {parts[1]!r}")
            body_start = lineno
        else:
            break

    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"{path}:1: missing header keys {missing}")
    rows = int(header["nrows"])
    cols = int(header["ncols"])
    if rows < 1 or cols < 1 or header["nrows"] != rows or header["ncols"] != cols:
        raise ParseError(f"{path}:1: nrows/ncols must be positive integers")
    nodata = header.get("nodata_value", DEFAULT_NODATA)

    try:
        flat = np.array(" ".join(lines[body_start:]).split(), dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}:{body_start + 1}: non-numeric grid value ({exc})")
    if flat.size != rows * cols:
        raise ShapeError(
            f"{path}: expected {rows * cols} values ({rows}x{cols}), found {flat.size}")

    return Raster(
        values=flat.reshape(rows, cols),
        cell_size=header["cellsize"],
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"],
        nodata=nodata,
    )


def write_ascii_grid(raster, path):
    """Write a Raster as an ESRI ASCII grid.

    Values are written with repr(), which round-trips float64 exactly
    through decimal text.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {raster.cols}\n")
        fh.write(f"nrows {raster.rows}\n")
        fh.write(f"xllcorner {repr(raster.origin_x)}\n")
        fh.write(f"yllcorner {repr(raster.origin_y)}\n")
        fh.write(f"cellsize {repr(raster.cell_size)}\n")
        fh.write(f"NODATA_value {repr(raster.nodata)}\n")
        for row in raster.values:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Terrain algorithms


def d8_flow_directions(dem):
    """Steepest-descent D8 directions for a DEM.

    Gradient is drop over distance with diagonal distance cell_size*sqrt(2);
    ties pick the lowest code value; cells with no strictly lower valid
    neighbor (including one-cell grids) become outlets. Nodata cells get
    code 0 and are never chosen as a downstream target.
    """
    valid = dem.valid_mask()
    if not valid.any():
        raise EmptyInputError("DEM has no valid cells")
    codes = _kernels.flow_directions(np.ascontiguousarray(dem.values), valid)
    return DirectionGrid(codes, dem.cell_size, dem.origin_x, dem.origin_y)


def flow_accumulation(dirs):
    """Number of cells draining through each cell, counting itself.

    Computed in topological order; raises CycleError naming one cell on a
    cycle if the direction grid is not acyclic.
    """
    acc, cycle_cell = _kernels.accumulate(np.ascontiguousarray(dirs.codes))
    if cycle_cell >= 0:
        raise CycleError((cycle_cell // dirs.cols, cycle_cell % dirs.cols))
    return Raster(
        values=acc.astype(np.float64),
        cell_size=dirs.cell_size,
        origin_x=dirs.origin_x,
        origin_y=dirs.origin_y,
        nodata=DEFAULT_NODATA,
    )


def delineate_basin(dirs, outlet):
    """Upstream closure of all cells whose D8 path reaches the outlet."""
    row, col = outlet
    if not (0 <= row < dirs.rows and 0 <= col < dirs.cols):
        raise BoundsError(f"outlet {outlet} outside grid {dirs.shape}")
    member = _kernels.delineate(np.ascontiguousarray(dirs.codes), int(row), int(col))
    return BasinMask(member, (int(row), int(col)), dirs.cell_size,
                     dirs.origin_x, dirs.origin_y)


def clip(raster, mask):
    """Set non-member cells to nodata; member cells pass through bit-exact."""
    if raster.shape != mask.shape:
        raise ShapeError(f"raster shape {raster.shape} != mask shape {mask.shape}")
    if raster.cell_size != mask.cell_size:
        raise ShapeError("raster and mask cell sizes differ")
    values = np.where(mask.member, raster.values, raster.nodata)
    return raster.with_values(values)


def _max_drop_slopes(dem, member):
    """Per-member-cell max drop to any neighbor over distance (rise/run)."""
    rows, cols = dem.shape
    valid = dem.valid_mask()
    best = np.full((rows, cols), -np.inf)
    for code, (dr, dc) in D8_OFFSETS.items():
        dist = dem.cell_size * (np.sqrt(2.0) if code in (2, 8, 32, 128) else 1.0)
        src = (slice(max(0, -dr), rows - max(0, dr)),
               slice(max(0, -dc), cols - max(0, dc)))
        dst = (slice(max(0, dr), rows - max(0, -dr)),
               slice(max(0, dc), cols - max(0, -dc)))
        g = (dem.values[src] - dem.values[dst]) / dist
        contrib = np.where(valid[dst], g, -np.inf)
        best[src] = np.maximum(best[src], contrib)
    slopes = np.where(np.isfinite(best), np.maximum(best, 0.0), 0.0)
    return slopes[member]


def basin_descriptors(dem, fam, mask, channel_threshold_cells,
                      landcover=None, impervious_table=None):
    """Scalar basin cues for parameter initialization.

    area from member count, relief from member elevation extremes, mean
    slope from per-cell max drop over distance, drainage density as the
    fraction of member cells at or above the accumulation threshold, and
    impervious fraction from an optional land-cover raster with a
    class-id -> fraction table (uniform 0.05 without one).
    """
    if dem.shape != mask.shape or fam.shape != mask.shape:
        raise ShapeError("dem/fam/mask shapes differ")
    member = mask.member & dem.valid_mask()
    if not member.any():
        raise EmptyInputError("basin mask selects no valid cells")

    elev = dem.values[member]
    area_km2 = float(member.sum()) * (dem.cell_size / 1000.0) ** 2
    relief = float(elev.max() - elev.min())
    mean_slope = float(_max_drop_slopes(dem, member).mean())
    density = float((fam.values[member] >= channel_threshold_cells).mean())

    if landcover is not None and impervious_table:
        classes = landcover.values[member]
        fractions = np.array([impervious_table.get(int(c), 0.05) for c in classes])
        impervious = float(fractions.mean())
    else:
        impervious = 0.05

    return BasinDescriptors(
        area_km2=area_km2,
        relief_m=relief,
        mean_slope=mean_slope,
        drainage_density=density,
        impervious_fraction=min(max(impervious, 0.0), 1.0),
    )
