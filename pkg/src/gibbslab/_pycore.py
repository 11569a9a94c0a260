"""Pure-Python kernel backend.

Reference implementation of the hot operations; the compiled backend in
``_fastcore.pyx`` mirrors this file statement by statement (same scan order,
same uniform-draw protocol) so results agree bitwise.  Keep the two in sync.
"""

from __future__ import annotations

import math

from .core import (
    KIND_AREA,
    KIND_NONE,
    KIND_PAIR_TABLE,
    KIND_STRAUSS,
)

BACKEND = "python"

_INF = math.inf


def _cell_index(state, x):
    m = state.m
    cid = 0
    for a in range(state.d):
        c = int((x[a] - state.grid_lo) / state.cell)
        if c < 0:
            c = 0
        elif c >= m:
            c = m - 1
        cid = cid * m + c
    return cid


def _insert(state, i):
    cid = _cell_index(state, state.points[i])
    h = int(state.head[cid])
    state.nxt[i] = h
    state.prv[i] = -1
    if h >= 0:
        state.prv[h] = i
    state.head[cid] = i
    state.cell_of[i] = cid


def _remove(state, i):
    p = int(state.prv[i])
    nx = int(state.nxt[i])
    if p >= 0:
        state.nxt[p] = nx
    else:
        state.head[int(state.cell_of[i])] = nx
    if nx >= 0:
        state.prv[nx] = p
    state.cell_of[i] = -1


def rebuild(state):
    state.head.fill(-1)
    for i in range(state.n):
        _insert(state, i)


def _axis_cells(ci, k, m, periodic):
    """Cells to visit along one axis, each at most once, fixed order."""
    if periodic and 2 * k + 1 >= m:
        return list(range(m))
    cells = []
    for o in range(-k, k + 1):
        c = ci + o
        if periodic:
            c = c % m
        elif c < 0 or c >= m:
            continue
        cells.append(c)
    return cells


def _scan_cells(state, x, r):
    """Cell ids intersecting the r-ball around x, in canonical order."""
    m = state.m
    k = int(math.ceil(r / state.cell))
    axes = []
    for a in range(state.d):
        ci = int((x[a] - state.grid_lo) / state.cell)
        if ci < 0:
            ci = 0
        elif ci >= m:
            ci = m - 1
        axes.append(_axis_cells(ci, k, m, state.periodic))
    if state.d == 1:
        return axes[0]
    if state.d == 2:
        return [c0 * m + c1 for c0 in axes[0] for c1 in axes[1]]
    return [
        (c0 * m + c1) * m + c2
        for c0 in axes[0]
        for c1 in axes[1]
        for c2 in axes[2]
    ]


def _dist2(state, x, j):
    pts = state.points
    period = state.grid_side
    half = 0.5 * period
    s = 0.0
    for a in range(state.d):
        dx = x[a] - pts[j, a]
        if state.periodic:
            if dx > half:
                dx -= period
            elif dx < -half:
                dx += period
        s += dx * dx
    return s


def neighbors_within(state, x, r, skip=-1):
    """Indices with distance(x, p) <= r, grid-accelerated, no duplicates."""
    out = []
    r2 = r * r
    for cid in _scan_cells(state, x, r):
        j = int(state.head[cid])
        while j >= 0:
            if j != skip and _dist2(state, x, j) <= r2:
                out.append(j)
            j = int(state.nxt[j])
    return out


def _interp_table(desc, r):
    tab = desc.table
    k = len(tab) - 1
    u = (r - desc.sigma) * k / (desc.rng_range - desc.sigma)
    i = int(u)
    if i >= k:
        return float(tab[k])
    frac = u - i
    return float(tab[i]) + frac * (float(tab[i + 1]) - float(tab[i]))


def cond_energy(state, desc, x, skip=-1):
    """Energy cost h(x, state) of inserting x; +inf encodes exclusion.

    ``skip`` masks one index, which evaluates h against the state minus
    that point without mutating anything.  An exact coordinate collision is
    rejected as +inf (configurations stay simple).
    """
    kind = desc.kind
    if kind == KIND_NONE:
        for cid in _scan_cells(state, x, 0.0):
            j = int(state.head[cid])
            while j >= 0:
                if j != skip and _dist2(state, x, j) == 0.0:
                    return _INF
                j = int(state.nxt[j])
        return 0.0
    if kind == KIND_STRAUSS:
        r2 = desc.pair_r * desc.pair_r
        count = 0
        for cid in _scan_cells(state, x, desc.pair_r):
            j = int(state.head[cid])
            while j >= 0:
                if j != skip:
                    d2 = _dist2(state, x, j)
                    if d2 == 0.0:
                        return _INF
                    if d2 <= r2:
                        count += 1
                j = int(state.nxt[j])
        return desc.beta0 * count
    if kind == KIND_PAIR_TABLE:
        rng = desc.rng_range
        r2 = rng * rng
        s2 = desc.sigma * desc.sigma
        h = 0.0
        for cid in _scan_cells(state, x, rng):
            j = int(state.head[cid])
            while j >= 0:
                if j != skip:
                    d2 = _dist2(state, x, j)
                    if d2 < s2 or d2 == 0.0:
                        return _INF
                    if d2 <= r2:
                        h += _interp_table(desc, math.sqrt(d2))
                j = int(state.nxt[j])
        return h
    # area family
    nbr = []
    rr = 2.0 * desc.area_r
    r2 = rr * rr
    for cid in _scan_cells(state, x, rr):
        j = int(state.head[cid])
        while j >= 0:
            if j != skip:
                d2 = _dist2(state, x, j)
                if d2 == 0.0:
                    return _INF
                if d2 <= r2:
                    nbr.append(j)
            j = int(state.nxt[j])
    cells = _delta_area_count(state, desc, x, nbr)
    return desc.gamma * cells * desc.lat_delta * desc.lat_delta


def _delta_area_count(state, desc, x, nbr):
    """Lattice cells whose centers lie in B_R(x) and in no neighbor disk."""
    R = desc.area_r
    r2 = R * R
    delta = desc.lat_delta
    mlat = desc.lat_m
    lo = state.grid_lo
    period = state.grid_side
    half = 0.5 * period
    pts = state.points
    periodic = state.periodic
    count = 0
    i_lo = int(math.ceil((x[0] - R - lo) / delta - 0.5))
    i_hi = int(math.floor((x[0] + R - lo) / delta - 0.5))
    j_lo = int(math.ceil((x[1] - R - lo) / delta - 0.5))
    j_hi = int(math.floor((x[1] + R - lo) / delta - 0.5))
    if i_hi - i_lo + 1 > mlat:
        i_lo, i_hi = 0, mlat - 1
    if j_hi - j_lo + 1 > mlat:
        j_lo, j_hi = 0, mlat - 1
    for i in range(i_lo, i_hi + 1):
        ii = i % mlat
        if ii < 0:
            ii += mlat
        cx = lo + (ii + 0.5) * delta
        dx = x[0] - cx
        if periodic:
            if dx > half:
                dx -= period
            elif dx < -half:
                dx += period
        dx2 = dx * dx
        if dx2 > r2:
            continue
        for j in range(j_lo, j_hi + 1):
            jj = j % mlat
            if jj < 0:
                jj += mlat
            cy = lo + (jj + 0.5) * delta
            dy = x[1] - cy
            if periodic:
                if dy > half:
                    dy -= period
                elif dy < -half:
                    dy += period
            if dx2 + dy * dy > r2:
                continue
            covered = False
            for q in nbr:
                ex = cx - pts[q, 0]
                if periodic:
                    if ex > half:
                        ex -= period
                    elif ex < -half:
                        ex += period
                ey = cy - pts[q, 1]
                if periodic:
                    if ey > half:
                        ey -= period
                    elif ey < -half:
                        ey += period
                if ex * ex + ey * ey <= r2:
                    covered = True
                    break
            if not covered:
                count += 1
    return count


def delta_area_cells(state, desc, x, skip=-1):
    nbr = neighbors_within(state, x, 2.0 * desc.area_r, skip)
    return _delta_area_count(state, desc, x, nbr)


def area_total_cells(state, desc):
    """Covered lattice cells over the whole grid domain (d = 2)."""
    R = desc.area_r
    delta = desc.lat_delta
    mlat = desc.lat_m
    lo = state.grid_lo
    count = 0
    for i in range(mlat):
        cx = lo + (i + 0.5) * delta
        for j in range(mlat):
            cy = lo + (j + 0.5) * delta
            if neighbors_within(state, (cx, cy), R):
                count += 1
    return count


def pair_total_energy(state, desc):
    """Sum of the pair potential over unordered pairs; +inf on exclusion."""
    if desc.kind == KIND_NONE:
        return 0.0
    rng = desc.pair_r if desc.kind == KIND_STRAUSS else desc.rng_range
    r2 = rng * rng
    s2 = desc.sigma * desc.sigma
    total = 0.0
    for i in range(state.n):
        x = state.points[i]
        for cid in _scan_cells(state, x, rng):
            j = int(state.head[cid])
            while j >= 0:
                if j > i:
                    d2 = _dist2(state, x, j)
                    if d2 <= r2:
                        if d2 == 0.0:
                            return _INF
                        if desc.kind == KIND_STRAUSS:
                            total += desc.beta0
                        else:
                            if d2 < s2:
                                return _INF
                            total += _interp_table(desc, math.sqrt(d2))
                j = int(state.nxt[j])
    return total


def _count_box(state, lo, hi):
    pts = state.points
    count = 0
    for i in range(state.n_frozen, state.n):
        inside = True
        for a in range(state.d):
            v = pts[i, a]
            if v < lo[a] or v > hi[a]:
                inside = False
                break
        if inside:
            count += 1
    return count


def _kill(state, idx):
    """Remove live point idx with swap-from-last, keeping the grid exact."""
    last = state.n - 1
    _remove(state, idx)
    if idx != last:
        _remove(state, last)
        state.points[idx, : state.d] = state.points[last, : state.d]
        _insert(state, idx)
    state.n = last


def mh_run(state, desc, n_steps, gen):
    """Birth-death Metropolis chain; returns (steps_done, births, deaths).

    Returns early (steps_done < n_steps) when point capacity is exhausted
    before consuming any draw for the pending step; the caller grows the
    arrays and re-enters.
    """
    d = state.d
    lo = state.box_lo
    side = state.box_hi - state.box_lo
    vol = state.volume
    births = deaths = 0
    x = [0.0] * d
    u = gen.random
    for step in range(n_steps):
        if state.n + 1 > state.capacity:
            return step, births, deaths
        if u() < 0.5:
            for a in range(d):
                x[a] = lo + side * u()
            h = cond_energy(state, desc, x)
            u_acc = u()
            nlive = state.n_live
            if u_acc * (nlive + 1) < vol * math.exp(-h):
                i = state.n
                for a in range(d):
                    state.points[i, a] = x[a]
                state.n = i + 1
                _insert(state, i)
                births += 1
        else:
            nlive = state.n_live
            if nlive == 0:
                continue
            j = int(u() * nlive)
            if j >= nlive:
                j = nlive - 1
            idx = state.n_frozen + j
            h = cond_energy(state, desc, state.points[idx], skip=idx)
            u_acc = u()
            if u_acc * vol * math.exp(-h) < nlive:
                _kill(state, idx)
                deaths += 1
    return n_steps, births, deaths


def ctmc_run(state, desc, t_start, t_max, gen,
             ev_t, ev_kind, ev_xy, n_ev,
             sample_times, sample_counts, n_sample,
             count_lo, count_hi, record):
    """Thinned birth-death chain over [t_start, t_max].

    Fills event arrays from slot ``n_ev`` and sample counts from slot
    ``n_sample``; returns (t_reached, n_ev, n_sample, done).  done = 0 means
    an array filled up (caller grows and re-enters at t_reached).
    """
    d = state.d
    lo = state.box_lo
    side = state.box_hi - state.box_lo
    vol = state.volume
    bstar = desc.bstar
    birth_flow = bstar * vol
    n_samples_total = len(sample_times)
    ev_cap = len(ev_t)
    t = t_start
    x = [0.0] * d
    u = gen.random
    while True:
        if state.n + 1 > state.capacity:
            return t, n_ev, n_sample, 0
        if record and n_ev + 1 > ev_cap:
            return t, n_ev, n_sample, 0
        q = birth_flow + state.n_live
        ut = u()
        dt = _INF if ut <= 0.0 else -math.log(ut) / q
        t_next = t + dt
        while n_sample < n_samples_total and sample_times[n_sample] < t_next:
            sample_counts[n_sample] = _count_box(state, count_lo, count_hi)
            n_sample += 1
        if t_next >= t_max:
            while n_sample < n_samples_total and sample_times[n_sample] <= t_max:
                sample_counts[n_sample] = _count_box(state, count_lo, count_hi)
                n_sample += 1
            return t_max, n_ev, n_sample, 1
        t = t_next
        ue = u()
        if ue * q < birth_flow:
            for a in range(d):
                x[a] = lo + side * u()
            h = cond_energy(state, desc, x)
            u_acc = u()
            if u_acc * bstar < math.exp(-h):
                i = state.n
                for a in range(d):
                    state.points[i, a] = x[a]
                state.n = i + 1
                _insert(state, i)
                if record:
                    ev_t[n_ev] = t
                    ev_kind[n_ev] = 0
                    for a in range(d):
                        ev_xy[n_ev, a] = x[a]
                    n_ev += 1
        else:
            nlive = state.n_live
            j = int(u() * nlive)
            if j >= nlive:
                j = nlive - 1
            idx = state.n_frozen + j
            if record:
                ev_t[n_ev] = t
                ev_kind[n_ev] = 1
                for a in range(d):
                    ev_xy[n_ev, a] = state.points[idx, a]
                n_ev += 1
            _kill(state, idx)


def accumulate_tent(points, amp, r, x0, delta, grid):
    """Add sum_p amp*max(0, 1 - |p - q|/r) to each quad node q of ``grid``.

    ``grid`` is the (m, m) node array over [x0, x0 + m*delta]^2 with nodes at
    cell midpoints; patches are clamped, periodic wrap is not needed because
    callers guarantee the averaging box plus kernel support stays inside the
    window.
    """
    m = grid.shape[0]
    for p in points:
        px = float(p[0])
        py = float(p[1])
        i_lo = max(0, int(math.ceil((px - r - x0) / delta - 0.5)))
        i_hi = min(m - 1, int(math.floor((px + r - x0) / delta - 0.5)))
        j_lo = max(0, int(math.ceil((py - r - x0) / delta - 0.5)))
        j_hi = min(m - 1, int(math.floor((py + r - x0) / delta - 0.5)))
        for i in range(i_lo, i_hi + 1):
            dx = px - (x0 + (i + 0.5) * delta)
            dx2 = dx * dx
            for j in range(j_lo, j_hi + 1):
                dy = py - (x0 + (j + 0.5) * delta)
                rho = math.sqrt(dx2 + dy * dy)
                if rho < r:
                    grid[i, j] += amp * (1.0 - rho / r)
