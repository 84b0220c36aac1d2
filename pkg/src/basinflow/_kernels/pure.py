"""Pure-numpy kernel backend.

Mirrors the compiled extension in ``_speed.pyx``; both expose the same
functions with identical semantics so the caller can swap backends freely.
Direction codes: E=1, SE=2, S=4, SW=8, W=16, NW=32, N=64, NE=128, outlet 0.
"""

import numpy as np

BACKEND_NAME = "pure"

SQRT2 = np.sqrt(2.0)

# neighbor scan order = ascending code value, which is also the tie-break order
D8_CODES = np.array([1, 2, 4, 8, 16, 32, 64, 128], dtype=np.int16)
D8_DROW = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)
D8_DCOL = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
D8_DIST = np.array([1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2])

_CODE_TO_IDX = {int(c): k for k, c in enumerate(D8_CODES)}

# surface-depth floor (mm) before the velocity power law
DEPTH_FLOOR_MM = 1e-3
# fixed velocity exponent on overland (non-channel) cells
OVERLAND_EXPONENT = 0.6


def flow_directions(values, valid):
    """D8 steepest-descent codes for a DEM.

    Parameters
    ----------
    values : (rows, cols) float64 array of elevations
    valid : (rows, cols) bool array, False where nodata

    Returns
    -------
    (rows, cols) int16 array of direction codes; cells with no strictly
    lower valid neighbor (and nodata cells) get 0.
    """
    rows, cols = values.shape
    grads = np.full((8, rows, cols), -np.inf)
    for k in range(8):
        dr, dc = int(D8_DROW[k]), int(D8_DCOL[k])
        src = (slice(max(0, -dr), rows - max(0, dr)),
               slice(max(0, -dc), cols - max(0, dc)))
        dst = (slice(max(0, dr), rows - max(0, -dr)),
               slice(max(0, dc), cols - max(0, -dc)))
        g = (values[src] - values[dst]) / D8_DIST[k]
        grads[k][src] = np.where(valid[dst], g, -np.inf)
    # argmax takes the first maximum, which is the lowest code on ties
    best = np.argmax(grads, axis=0)
    best_grad = np.take_along_axis(grads, best[None], axis=0)[0]
    codes = np.where(valid & (best_grad > 0.0), D8_CODES[best], 0)
    return codes.astype(np.int16)


def downstream_offsets(codes):
    """Per-cell downstream flat index, or -1 for outlet cells."""
    rows, cols = codes.shape
    target = np.full(rows * cols, -1, dtype=np.int64)
    flat_codes = codes.ravel()
    for k in range(8):
        hit = flat_codes == D8_CODES[k]
        if not hit.any():
            continue
        idx = np.nonzero(hit)[0]
        r = idx // cols + D8_DROW[k]
        c = idx % cols + D8_DCOL[k]
        inside = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
        target[idx[inside]] = r[inside] * cols + c[inside]
        # edge cells pointing off-grid behave as outlets
    return target


def topological_order(codes):
    """Flat indices sorted upstream-to-downstream (Kahn's algorithm).

    Returns (order, cycle_cell): cycle_cell is -1 when acyclic, otherwise
    the smallest flat index on a cycle and ``order`` is truncated.
    """
    n = codes.size
    target = downstream_offsets(codes)
    indeg = np.zeros(n, dtype=np.int64)
    valid_t = target[target >= 0]
    np.add.at(indeg, valid_t, 1)
    order = np.empty(n, dtype=np.int64)
    queue = list(np.nonzero(indeg == 0)[0])
    head = 0
    count = 0
    while head < len(queue):
        i = queue[head]
        head += 1
        order[count] = i
        count += 1
        t = target[i]
        if t >= 0:
            indeg[t] -= 1
            if indeg[t] == 0:
                queue.append(t)
    if count < n:
        cycle_cell = int(np.nonzero(indeg > 0)[0][0])
        return order[:count], cycle_cell
    return order, -1


def accumulate(codes):
    """Upstream cell counts (each cell counts itself, so minimum is 1).

    Returns (acc, cycle_cell) with acc int64; cycle_cell as in
    ``topological_order``.
    """
    order, cycle_cell = topological_order(codes)
    if cycle_cell >= 0:
        return None, cycle_cell
    target = downstream_offsets(codes)
    acc = np.ones(codes.size, dtype=np.int64)
    for i in order:
        t = target[i]
        if t >= 0:
            acc[t] += acc[i]
    return acc.reshape(codes.shape), -1


def delineate(codes, outlet_row, outlet_col):
    """Boolean mask of all cells whose D8 path reaches the outlet cell."""
    rows, cols = codes.shape
    target = downstream_offsets(codes)
    # reverse adjacency, then BFS upstream from the outlet
    member = np.zeros(rows * cols, dtype=bool)
    start = outlet_row * cols + outlet_col
    member[start] = True
    order = np.argsort(target, kind="stable")
    sorted_targets = target[order]
    stack = [start]
    while stack:
        j = stack.pop()
        lo = np.searchsorted(sorted_targets, j, side="left")
        hi = np.searchsorted(sorted_targets, j, side="right")
        for i in order[lo:hi]:
            if not member[i]:
                member[i] = True
                stack.append(int(i))
    return member.reshape(rows, cols)


def wb_cell(w, wm, b, im, ke, fc, precip, pet, dt):
    """Single-cell water-balance update.

    Returns (w_new, actual_et, overland, interflow_recharge), all mm.
    ET draws from rainfall first, then soil; runoff from the variable
    infiltration curve; the share of soil-input intensity above fc (mm/h)
    goes overland, the rest recharges interflow.
    """
    e_pot = pet * ke
    actual_et = min(e_pot, precip + w)
    soil_draw = actual_et - precip
    if soil_draw > 0.0:
        w = w - soil_draw
        if w < 0.0:
            w = 0.0
    peff = precip - e_pot
    if peff < 0.0:
        peff = 0.0
    direct = im * peff
    psoil = (1.0 - im) * peff
    if w >= wm:
        r = psoil
        w_new = wm
    else:
        imax = wm * (1.0 + b)
        frac_left = 1.0 - w / wm
        if frac_left < 0.0:
            frac_left = 0.0
        i_point = imax * (1.0 - frac_left ** (1.0 / (1.0 + b)))
        if i_point + psoil >= imax:
            r = psoil - (wm - w)
        else:
            r = psoil - (wm - w) + wm * (1.0 - (i_point + psoil) / imax) ** (1.0 + b)
        if r < 0.0:
            r = 0.0
        elif r > psoil:
            r = psoil
        w_new = w + (psoil - r)
        if w_new > wm:  # clamp residue becomes runoff so mass closes exactly
            r += w_new - wm
            w_new = wm
        elif w_new < 0.0:
            w_new = 0.0
    rate = psoil / (dt / 3600.0)
    if rate <= fc:
        frac_over = 0.0
    else:
        frac_over = (rate - fc) / rate
    overland = direct + r * frac_over
    interflow = r * (1.0 - frac_over)
    return w_new, actual_et, overland, interflow


def wb_grid_step(w, precip, pet, wm, b, im, ke, fc, dt):
    """Vectorized water-balance sweep over flattened member cells.

    All array arguments are 1-D float64 of equal length; parameters are
    scalars (spatially uniform). Returns (w_new, et, overland, interflow).
    """
    e_pot = pet * ke
    actual_et = np.minimum(e_pot, precip + w)
    soil_draw = np.maximum(actual_et - precip, 0.0)
    w1 = np.maximum(w - soil_draw, 0.0)
    peff = np.maximum(precip - e_pot, 0.0)
    direct = im * peff
    psoil = (1.0 - im) * peff

    imax = wm * (1.0 + b)
    frac_left = np.maximum(1.0 - w1 / wm, 0.0)
    i_point = imax * (1.0 - frac_left ** (1.0 / (1.0 + b)))
    sat = (w1 >= wm) | (i_point + psoil >= imax)
    curve = np.where(
        sat,
        0.0,
        wm * np.maximum(1.0 - (i_point + psoil) / imax, 0.0) ** (1.0 + b),
    )
    r = np.where(w1 >= wm, psoil, psoil - (wm - w1) + curve)
    r = np.clip(r, 0.0, psoil)
    w_new = np.where(w1 >= wm, wm, w1 + (psoil - r))
    over = w_new > wm
    r = np.where(over, r + (w_new - wm), r)
    w_new = np.where(over, wm, np.maximum(w_new, 0.0))

    rate = psoil / (dt / 3600.0)
    frac_over = np.where(rate > fc, (rate - fc) / np.where(rate > 0, rate, 1.0), 0.0)
    overland = direct + r * frac_over
    interflow = r * (1.0 - frac_over)
    return w_new, actual_et, overland, interflow


def route_step(surface, subsurface, codes, channel, member,
               alpha, beta, alpha0, under, leaki, dt, cell_len):
    """One explicit advection step along the D8 network.

    Leak moves ``leaki * subsurface`` into the surface store first; each
    member cell then sends ``min(1, v*dt/hop)`` of its start-of-step storage
    downstream (start-of-step sends keep the hop to one cell per step).
    Water leaving the member set, or sent by outlet cells, is the outlet
    flux. Returns (surface', subsurface', outlet_mm_cells).
    """
    rows, cols = surface.shape
    m = member
    surf = surface.copy()
    sub = subsurface.copy()

    leak = np.where(m, leaki * sub, 0.0)
    sub = sub - leak
    surf = surf + leak

    target = downstream_offsets(codes)
    flat_codes = codes.ravel()
    diagonal = (flat_codes == 2) | (flat_codes == 8) | (flat_codes == 32) | (flat_codes == 128)
    hop = np.where(diagonal, cell_len * SQRT2, float(cell_len))
    tgt_member = np.zeros(codes.size, dtype=bool)
    has_t = target >= 0
    tgt_member[has_t] = m.ravel()[target[has_t]]
    sends_out = ~(has_t & tgt_member)  # outlet cells or edges of the member set

    mflat = m.ravel()
    surf_flat = surf.ravel()
    sub_flat = sub.ravel()

    q = np.maximum(surf_flat, DEPTH_FLOOR_MM)
    v = np.where(channel.ravel(), alpha * q ** beta, alpha0 * q ** OVERLAND_EXPONENT)
    f = np.minimum(1.0, v * dt / hop)
    f_sub = np.minimum(1.0, under * dt / hop)

    sent = np.where(mflat, f * surf_flat, 0.0)
    sent_sub = np.where(mflat, f_sub * sub_flat, 0.0)
    surf_flat = surf_flat - sent
    sub_flat = sub_flat - sent_sub

    stay = mflat & ~sends_out
    np.add.at(surf_flat, target[stay], sent[stay])
    np.add.at(sub_flat, target[stay], sent_sub[stay])
    out = mflat & sends_out
    outlet_mm = float(np.sum(sent[out]) + np.sum(sent_sub[out]))

    return surf_flat.reshape(rows, cols), sub_flat.reshape(rows, cols), outlet_mm
