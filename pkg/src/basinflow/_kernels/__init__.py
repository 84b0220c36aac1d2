"""Kernel backend selection.

The hot loops (D8 scan, accumulation, delineation, water-balance sweep,
routing advection) exist twice: a Cython extension (``_speed``) and a
pure-numpy fallback (``pure``). The compiled backend is preferred when
importable; set ``BASINFLOW_KERNELS=pure`` or ``=compiled`` to force one.
"""

import os

from . import pure

_requested = os.environ.get("BASINFLOW_KERNELS", "auto").strip().lower()

if _requested in ("auto", ""):
    try:
        from . import _speed as _impl
    except ImportError:
        _impl = pure
elif _requested in ("compiled", "c", "speed"):
    from . import _speed as _impl  # ImportError here means the build is missing
elif _requested in ("pure", "python", "py"):
    _impl = pure
else:
    raise ValueError(f"unknown BASINFLOW_KERNELS value: {_requested!r}")

BACKEND_NAME = _impl.BACKEND_NAME

flow_directions = _impl.flow_directions
downstream_offsets = _impl.downstream_offsets
topological_order = _impl.topological_order
accumulate = _impl.accumulate
delineate = _impl.delineate
wb_cell = _impl.wb_cell
wb_grid_step = _impl.wb_grid_step
route_step = _impl.route_step

DEPTH_FLOOR_MM = pure.DEPTH_FLOOR_MM
OVERLAND_EXPONENT = pure.OVERLAND_EXPONENT
