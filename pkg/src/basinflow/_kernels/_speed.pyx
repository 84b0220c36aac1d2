# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend; mirrors pure.py exactly (same arithmetic,
same iteration order, so results match the fallback bit-for-bit)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"

DEPTH_FLOOR_MM = 1e-3
OVERLAND_EXPONENT = 0.6

cdef double SQRT2 = sqrt(2.0)

# scan order = ascending code value = tie-break order
cdef short[8] CODES = [1, 2, 4, 8, 16, 32, 64, 128]
cdef long[8] DROW = [0, 1, 1, 1, 0, -1, -1, -1]
cdef long[8] DCOL = [1, 1, 0, -1, -1, -1, 0, 1]
cdef double[8] DIST = [1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2]

cdef int[129] CODE_TO_K
cdef int _k
for _k in range(129):
    CODE_TO_K[_k] = -1
for _k in range(8):
    CODE_TO_K[CODES[_k]] = _k


def flow_directions(values, valid):
    """D8 steepest-descent codes; ties keep the lowest code value."""
    cdef double[:, ::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.uint8_t[:, ::1] ok = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef Py_ssize_t rows = vals.shape[0], cols = vals.shape[1]
    out = np.zeros((rows, cols), dtype=np.int16)
    cdef short[:, ::1] codes = out
    cdef Py_ssize_t r, c, nr, nc
    cdef int k
    cdef double z, grad, best
    cdef short best_code
    for r in range(rows):
        for c in range(cols):
            if not ok[r, c]:
                continue
            z = vals[r, c]
            best = 0.0
            best_code = 0
            for k in range(8):
                nr = r + DROW[k]
                nc = c + DCOL[k]
                if nr < 0 or nr >= rows or nc < 0 or nc >= cols:
                    continue
                if not ok[nr, nc]:
                    continue
                grad = (z - vals[nr, nc]) / DIST[k]
                if grad > best:
                    best = grad
                    best_code = CODES[k]
            codes[r, c] = best_code
    return out


def downstream_offsets(codes):
    """Per-cell downstream flat index, -1 for outlets and off-grid hops."""
    cdef short[:, ::1] cd = np.ascontiguousarray(codes, dtype=np.int16)
    cdef Py_ssize_t rows = cd.shape[0], cols = cd.shape[1]
    out = np.full(rows * cols, -1, dtype=np.int64)
    cdef long[::1] target = out
    cdef Py_ssize_t r, c, nr, nc
    cdef int k
    for r in range(rows):
        for c in range(cols):
            k = CODE_TO_K[cd[r, c]] if cd[r, c] > 0 else -1
            if k < 0:
                continue
            nr = r + DROW[k]
            nc = c + DCOL[k]
            if 0 <= nr < rows and 0 <= nc < cols:
                target[r * cols + c] = nr * cols + nc
    return out


def topological_order(codes):
    """(order, cycle_cell) by Kahn's algorithm; cycle_cell -1 when acyclic."""
    target_arr = downstream_offsets(codes)
    cdef long[::1] target = target_arr
    cdef Py_ssize_t n = target.shape[0]
    indeg_arr = np.zeros(n, dtype=np.int64)
    cdef long[::1] indeg = indeg_arr
    order_arr = np.empty(n, dtype=np.int64)
    cdef long[::1] order = order_arr
    queue_arr = np.empty(n, dtype=np.int64)
    cdef long[::1] queue = queue_arr
    cdef Py_ssize_t i, head = 0, tail = 0, count = 0
    cdef long t
    for i in range(n):
        t = target[i]
        if t >= 0:
            indeg[t] += 1
    for i in range(n):
        if indeg[i] == 0:
            queue[tail] = i
            tail += 1
    while head < tail:
        i = queue[head]
        head += 1
        order[count] = i
        count += 1
        t = target[i]
        if t >= 0:
            indeg[t] -= 1
            if indeg[t] == 0:
                queue[tail] = t
                tail += 1
    if count < n:
        for i in range(n):
            if indeg[i] > 0:
                return order_arr[:count], int(i)
    return order_arr, -1


def accumulate(codes):
    """Upstream cell counts (cell included); (None, cycle_cell) on a cycle."""
    order_arr, cycle = topological_order(codes)
    if cycle >= 0:
        return None, cycle
    target_arr = downstream_offsets(codes)
    cdef long[::1] target = target_arr
    cdef long[::1] order = order_arr
    cdef Py_ssize_t n = target.shape[0]
    acc_arr = np.ones(n, dtype=np.int64)
    cdef long[::1] acc = acc_arr
    cdef Py_ssize_t j
    cdef long i, t
    for j in range(n):
        i = order[j]
        t = target[i]
        if t >= 0:
            acc[t] += acc[i]
    rows = np.asarray(codes).shape[0]
    cols = np.asarray(codes).shape[1]
    return acc_arr.reshape(rows, cols), -1


def delineate(codes, outlet_row, outlet_col):
    """Upstream closure of the outlet cell (reverse-adjacency BFS)."""
    target_arr = downstream_offsets(codes)
    cdef long[::1] target = target_arr
    cdef Py_ssize_t n = target.shape[0]
    cdef Py_ssize_t rows = np.asarray(codes).shape[0]
    cdef Py_ssize_t cols = np.asarray(codes).shape[1]

    # CSR reverse adjacency: upstream neighbors of every cell
    rev_start_arr = np.zeros(n + 1, dtype=np.int64)
    cdef long[::1] rev_start = rev_start_arr
    rev_list_arr = np.empty(n, dtype=np.int64)
    cdef long[::1] rev_list = rev_list_arr
    fill_arr = np.zeros(n, dtype=np.int64)
    cdef long[::1] fill = fill_arr
    cdef Py_ssize_t i
    cdef long t
    for i in range(n):
        t = target[i]
        if t >= 0:
            rev_start[t + 1] += 1
    for i in range(n):
        rev_start[i + 1] += rev_start[i]
    for i in range(n):
        t = target[i]
        if t >= 0:
            rev_list[rev_start[t] + fill[t]] = i
            fill[t] += 1

    member_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] member = member_arr
    stack_arr = np.empty(n, dtype=np.int64)
    cdef long[::1] stack = stack_arr
    cdef Py_ssize_t top = 0
    cdef long start = outlet_row * cols + outlet_col, j, up
    cdef Py_ssize_t p
    member[start] = 1
    stack[top] = start
    top += 1
    while top > 0:
        top -= 1
        j = stack[top]
        for p in range(rev_start[j], rev_start[j + 1]):
            up = rev_list[p]
            if not member[up]:
                member[up] = 1
                stack[top] = up
                top += 1
    return member_arr.reshape(rows, cols).astype(bool)


cdef inline (double, double, double, double) _wb_cell(
        double w, double wm, double b, double im, double ke, double fc,
        double precip, double pet, double dt) noexcept:
    cdef double e_pot, actual_et, soil_draw, peff, direct, psoil
    cdef double imax, frac_left, i_point, r, w_new, rate, frac_over
    e_pot = pet * ke
    actual_et = precip + w
    if e_pot < actual_et:
        actual_et = e_pot
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
        i_point = imax * (1.0 - pow(frac_left, 1.0 / (1.0 + b)))
        if i_point + psoil >= imax:
            r = psoil - (wm - w)
        else:
            r = psoil - (wm - w) + wm * pow(1.0 - (i_point + psoil) / imax, 1.0 + b)
        if r < 0.0:
            r = 0.0
        elif r > psoil:
            r = psoil
        w_new = w + (psoil - r)
        if w_new > wm:
            r += w_new - wm
            w_new = wm
        elif w_new < 0.0:
            w_new = 0.0
    rate = psoil / (dt / 3600.0)
    if rate <= fc:
        frac_over = 0.0
    else:
        frac_over = (rate - fc) / rate
    return w_new, actual_et, direct + r * frac_over, r * (1.0 - frac_over)


def wb_cell(double w, double wm, double b, double im, double ke, double fc,
            double precip, double pet, double dt):
    """Single-cell water-balance update; see pure.wb_cell."""
    return _wb_cell(w, wm, b, im, ke, fc, precip, pet, dt)


def wb_grid_step(w, precip, pet, double wm, double b, double im, double ke,
                 double fc, double dt):
    """Water-balance sweep over flattened member cells."""
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(precip, dtype=np.float64)
    cdef double[::1] ev = np.ascontiguousarray(pet, dtype=np.float64)
    cdef Py_ssize_t n = wv.shape[0]
    w_new_arr = np.empty(n, dtype=np.float64)
    et_arr = np.empty(n, dtype=np.float64)
    over_arr = np.empty(n, dtype=np.float64)
    inter_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] w_new = w_new_arr
    cdef double[::1] et = et_arr
    cdef double[::1] over = over_arr
    cdef double[::1] inter = inter_arr
    cdef Py_ssize_t i
    cdef (double, double, double, double) res
    for i in range(n):
        res = _wb_cell(wv[i], wm, b, im, ke, fc, pv[i], ev[i], dt)
        w_new[i] = res[0]
        et[i] = res[1]
        over[i] = res[2]
        inter[i] = res[3]
    return w_new_arr, et_arr, over_arr, inter_arr


def route_step(surface, subsurface, codes, channel, member,
               double alpha, double beta, double alpha0, double under,
               double leaki, double dt, double cell_len):
    """One advection step; see pure.route_step for the scheme."""
    cdef double[:, ::1] surf_in = np.ascontiguousarray(surface, dtype=np.float64)
    cdef double[:, ::1] sub_in = np.ascontiguousarray(subsurface, dtype=np.float64)
    cdef short[:, ::1] cd = np.ascontiguousarray(codes, dtype=np.int16)
    cdef cnp.uint8_t[:, ::1] chan = np.ascontiguousarray(channel, dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] memb = np.ascontiguousarray(member, dtype=np.uint8)
    cdef Py_ssize_t rows = surf_in.shape[0], cols = surf_in.shape[1]
    cdef Py_ssize_t n = rows * cols

    surf_arr = np.empty((rows, cols), dtype=np.float64)
    sub_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] surf = surf_arr
    cdef double[:, ::1] sub = sub_arr
    sent_arr = np.zeros(n, dtype=np.float64)
    sent_sub_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] sent = sent_arr
    cdef double[::1] sent_sub = sent_sub_arr

    cdef Py_ssize_t r, c, nr, nc
    cdef int k
    cdef double leak, q, v, f, f_sub, hop, outlet_mm = 0.0
    cdef long idx

    # pass 1: leak, then compute and subtract every cell's send
    for r in range(rows):
        for c in range(cols):
            surf[r, c] = surf_in[r, c]
            sub[r, c] = sub_in[r, c]
            if not memb[r, c]:
                continue
            leak = leaki * sub[r, c]
            sub[r, c] -= leak
            surf[r, c] += leak
            k = CODE_TO_K[cd[r, c]] if cd[r, c] > 0 else -1
            hop = cell_len * (DIST[k] if k >= 0 else 1.0)
            q = surf[r, c]
            if q < DEPTH_FLOOR_MM:
                q = DEPTH_FLOOR_MM
            if chan[r, c]:
                v = alpha * pow(q, beta)
            else:
                v = alpha0 * pow(q, OVERLAND_EXPONENT)
            f = v * dt / hop
            if f > 1.0:
                f = 1.0
            f_sub = under * dt / hop
            if f_sub > 1.0:
                f_sub = 1.0
            idx = r * cols + c
            sent[idx] = f * surf[r, c]
            sent_sub[idx] = f_sub * sub[r, c]
            surf[r, c] -= sent[idx]
            sub[r, c] -= sent_sub[idx]

    # pass 2: deliver downstream or to the outlet, in ascending cell order
    for r in range(rows):
        for c in range(cols):
            if not memb[r, c]:
                continue
            idx = r * cols + c
            k = CODE_TO_K[cd[r, c]] if cd[r, c] > 0 else -1
            if k >= 0:
                nr = r + DROW[k]
                nc = c + DCOL[k]
                if 0 <= nr < rows and 0 <= nc < cols and memb[nr, nc]:
                    surf[nr, nc] += sent[idx]
                    sub[nr, nc] += sent_sub[idx]
                    continue
            outlet_mm += sent[idx] + sent_sub[idx]

    return surf_arr, sub_arr, outlet_mm
