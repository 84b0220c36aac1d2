"""Per-cell water balance: ET, variable-infiltration-curve runoff,
impervious split, and the overland/interflow partition.

Update order within one step: evapotranspiration first (rainfall, then
soil storage, scaled by ke), impervious split of the effective rainfall,
saturation-excess runoff from the infiltration curve, and finally the
intensity-above-fc split into overland flow and interflow recharge.
Every step conserves mass: precip = dw + et + overland + interflow.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataRangeError


@dataclass(frozen=True)
class CrestParams:
    """Water-balance parameters.

    wm : maximum soil-water storage capacity (mm), in [5, 250]
    b : infiltration curve exponent, in [0.1, 20]
    im : impervious area fraction, in [0.01, 0.50]
    ke : PET utilisation coefficient, in [0.001, 1.0]
    fc : saturated hydraulic conductivity proxy (mm/h), in [0, 150]
    iwu : initial soil-water content (mm), in [0, 25]
    """

    wm: float
    b: float
    im: float
    ke: float
    fc: float
    iwu: float


@dataclass(frozen=True)
class CellState:
    """Soil water storage of one cell (mm), in [0, wm]."""

    w: float


@dataclass(frozen=True)
class CellFluxes:
    """Per-step outputs of one cell (mm, all nonnegative)."""

    actual_et: float
    overland: float
    interflow_recharge: float


def init_cell(params):
    """Initial state: soil water at iwu, clamped into [0, wm]."""
    return CellState(w=min(max(params.iwu, 0.0), params.wm))


def cell_step(state, params, precip, pet, dt):
    """Advance one cell by one step.

    Parameters
    ----------
    state : CellState
    params : CrestParams
    precip, pet : forcing for this step (mm/step, nonnegative)
    dt : step length in seconds (fc is an intensity threshold in mm/h)

    Returns
    -------
    (CellState, CellFluxes)
    """
    if precip < 0 or pet < 0:
        raise DataRangeError(f"negative forcing: precip={precip}, pet={pet}")
    w_new, et, overland, interflow = _kernels.wb_cell(
        state.w, params.wm, params.b, params.im, params.ke, params.fc,
        precip, pet, float(dt))
    return CellState(w=w_new), CellFluxes(actual_et=et, overland=overland,
                                          interflow_recharge=interflow)


def grid_step(w, precip, pet, params, dt):
    """Vectorized sweep over member cells (1-D float64 arrays).

    Returns (w_new, actual_et, overland, interflow) arrays. Cells are
    independent, so the sweep is safe to split across threads.
    """
    w = np.asarray(w, dtype=np.float64)
    precip = np.asarray(precip, dtype=np.float64)
    pet = np.asarray(pet, dtype=np.float64)
    if precip.size and (precip.min() < 0 or pet.min() < 0):
        raise DataRangeError("negative forcing in grid sweep")
    return _kernels.wb_grid_step(
        np.ascontiguousarray(w), np.ascontiguousarray(precip),
        np.ascontiguousarray(pet),
        params.wm, params.b, params.im, params.ke, params.fc, float(dt))
