# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Mirror of ``gibbslab._pycore``: same data layout, same scan order, same
uniform-draw protocol, so chains agree with the Python backend bit for bit.
Any change here must be applied to the mirror as well.
"""

from libc.math cimport INFINITY, ceil, exp, floor, log, sqrt
from libc.stdlib cimport free, malloc
from cpython.pycapsule cimport PyCapsule_GetPointer

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t

from .core import KIND_AREA, KIND_NONE, KIND_PAIR_TABLE, KIND_STRAUSS

cnp.import_array()

BACKEND = "compiled"

cdef enum:
    MAX_M = 128  # per-axis cell cap, kept in sync with core.ChainState

cdef int K_NONE = KIND_NONE
cdef int K_STRAUSS = KIND_STRAUSS
cdef int K_TABLE = KIND_PAIR_TABLE
cdef int K_AREA = KIND_AREA


cdef struct Ctx:
    double* pts
    cnp.int64_t* head
    cnp.int64_t* nxt
    cnp.int64_t* prv
    cnp.int64_t* cell_of
    cnp.int64_t* scratch
    int d
    int m
    bint periodic
    double grid_lo
    double cell
    double period
    double half
    Py_ssize_t n
    Py_ssize_t n_frozen
    Py_ssize_t capacity


cdef struct Desc:
    int kind
    double rng_range
    double beta0
    double pair_r
    double sigma
    double gamma
    double area_r
    double lat_delta
    double bstar
    int lat_m
    const double* table
    Py_ssize_t table_len


cdef class _Scratch:
    cdef cnp.int64_t* buf

    def __cinit__(self, Py_ssize_t size):
        self.buf = <cnp.int64_t*> malloc(size * sizeof(cnp.int64_t))
        if self.buf == NULL:
            raise MemoryError()

    def __dealloc__(self):
        if self.buf != NULL:
            free(self.buf)


cdef _load(object state, Ctx* c, object scratch_holder):
    cdef cnp.ndarray pts = state.points
    cdef cnp.ndarray head = state.head
    cdef cnp.ndarray nxt = state.nxt
    cdef cnp.ndarray prv = state.prv
    cdef cnp.ndarray cell_of = state.cell_of
    c.pts = <double*> cnp.PyArray_DATA(pts)
    c.head = <cnp.int64_t*> cnp.PyArray_DATA(head)
    c.nxt = <cnp.int64_t*> cnp.PyArray_DATA(nxt)
    c.prv = <cnp.int64_t*> cnp.PyArray_DATA(prv)
    c.cell_of = <cnp.int64_t*> cnp.PyArray_DATA(cell_of)
    c.scratch = (<_Scratch> scratch_holder).buf if scratch_holder is not None else NULL
    c.d = state.d
    c.m = state.m
    c.periodic = state.periodic
    c.grid_lo = state.grid_lo
    c.cell = state.cell
    c.period = state.grid_side
    c.half = 0.5 * state.grid_side
    c.n = state.n
    c.n_frozen = state.n_frozen
    c.capacity = state.points.shape[0]


cdef _load_desc(object desc, Desc* dd, object keepalive):
    dd.kind = desc.kind
    dd.rng_range = desc.rng_range
    dd.beta0 = desc.beta0
    dd.pair_r = desc.pair_r
    dd.sigma = desc.sigma
    dd.gamma = desc.gamma
    dd.area_r = desc.area_r
    dd.lat_delta = desc.lat_delta
    dd.bstar = desc.bstar
    dd.lat_m = desc.lat_m
    cdef cnp.ndarray tab = keepalive
    dd.table = <const double*> cnp.PyArray_DATA(tab)
    dd.table_len = tab.shape[0]


cdef inline long _cell_index(Ctx* c, const double* x) noexcept nogil:
    cdef long cid = 0, cc
    cdef int a
    for a in range(c.d):
        cc = <long> ((x[a] - c.grid_lo) / c.cell)
        if cc < 0:
            cc = 0
        elif cc >= c.m:
            cc = c.m - 1
        cid = cid * c.m + cc
    return cid


cdef inline void _insert(Ctx* c, Py_ssize_t i) noexcept nogil:
    cdef long cid = _cell_index(c, c.pts + i * c.d)
    cdef cnp.int64_t h = c.head[cid]
    c.nxt[i] = h
    c.prv[i] = -1
    if h >= 0:
        c.prv[h] = i
    c.head[cid] = i
    c.cell_of[i] = cid


cdef inline void _unlink(Ctx* c, Py_ssize_t i) noexcept nogil:
    cdef cnp.int64_t p = c.prv[i]
    cdef cnp.int64_t nx = c.nxt[i]
    if p >= 0:
        c.nxt[p] = nx
    else:
        c.head[c.cell_of[i]] = nx
    if nx >= 0:
        c.prv[nx] = p
    c.cell_of[i] = -1


cdef inline void _kill(Ctx* c, Py_ssize_t idx) noexcept nogil:
    cdef Py_ssize_t last = c.n - 1
    cdef int a
    _unlink(c, idx)
    if idx != last:
        _unlink(c, last)
        for a in range(c.d):
            c.pts[idx * c.d + a] = c.pts[last * c.d + a]
        _insert(c, idx)
    c.n = last


cdef inline double _dist2(Ctx* c, const double* x, Py_ssize_t j) noexcept nogil:
    cdef double s = 0.0, dx
    cdef int a
    for a in range(c.d):
        dx = x[a] - c.pts[j * c.d + a]
        if c.periodic:
            if dx > c.half:
                dx -= c.period
            elif dx < -c.half:
                dx += c.period
        s += dx * dx
    return s


cdef inline int _fill_axis(Ctx* c, double xa, double r, int* buf) noexcept nogil:
    """Cells along one axis, at most once each, same order as the mirror."""
    cdef int m = c.m
    cdef int ci = <int> ((xa - c.grid_lo) / c.cell)
    cdef long k
    cdef int count = 0, o, cc
    if ci < 0:
        ci = 0
    elif ci >= m:
        ci = m - 1
    k = <long> ceil(r / c.cell)
    if c.periodic and 2 * k + 1 >= m:
        for o in range(m):
            buf[o] = o
        return m
    for o in range(-k, k + 1):
        cc = ci + o
        if c.periodic:
            cc = cc % m
            if cc < 0:
                cc += m
        elif cc < 0 or cc >= m:
            continue
        buf[count] = cc
        count += 1
    return count


cdef Py_ssize_t _gather(Ctx* c, const double* x, double r,
                        Py_ssize_t skip, cnp.int64_t* out) noexcept nogil:
    """Neighbors within r, in canonical scan order, excluding exact matches
    of ``skip``; exact coordinate collisions are reported by the callers."""
    cdef int b0[MAX_M]
    cdef int b1[MAX_M]
    cdef int b2[MAX_M]
    cdef int n0, n1, n2, i0, i1, i2
    cdef long cid
    cdef cnp.int64_t j
    cdef double r2 = r * r
    cdef Py_ssize_t count = 0
    n0 = _fill_axis(c, x[0], r, b0)
    if c.d == 1:
        for i0 in range(n0):
            j = c.head[b0[i0]]
            while j >= 0:
                if j != skip and _dist2(c, x, j) <= r2:
                    out[count] = j
                    count += 1
                j = c.nxt[j]
        return count
    n1 = _fill_axis(c, x[1], r, b1)
    if c.d == 2:
        for i0 in range(n0):
            for i1 in range(n1):
                cid = b0[i0] * c.m + b1[i1]
                j = c.head[cid]
                while j >= 0:
                    if j != skip and _dist2(c, x, j) <= r2:
                        out[count] = j
                        count += 1
                    j = c.nxt[j]
        return count
    n2 = _fill_axis(c, x[2], r, b2)
    for i0 in range(n0):
        for i1 in range(n1):
            for i2 in range(n2):
                cid = (b0[i0] * c.m + b1[i1]) * c.m + b2[i2]
                j = c.head[cid]
                while j >= 0:
                    if j != skip and _dist2(c, x, j) <= r2:
                        out[count] = j
                        count += 1
                    j = c.nxt[j]
    return count


cdef inline double _interp(Desc* dd, double r) noexcept nogil:
    cdef Py_ssize_t k = dd.table_len - 1
    cdef double u = (r - dd.sigma) * k / (dd.rng_range - dd.sigma)
    cdef Py_ssize_t i = <Py_ssize_t> u
    cdef double frac
    if i >= k:
        return dd.table[k]
    frac = u - i
    return dd.table[i] + frac * (dd.table[i + 1] - dd.table[i])


cdef double _cond_energy(Ctx* c, Desc* dd, const double* x,
                         Py_ssize_t skip) noexcept nogil:
    cdef Py_ssize_t nn, q
    cdef double h, d2, r2, s2
    cdef long cells
    if dd.kind == K_NONE:
        nn = _gather(c, x, 0.0, skip, c.scratch)
        for q in range(nn):
            if _dist2(c, x, c.scratch[q]) == 0.0:
                return INFINITY
        return 0.0
    if dd.kind == K_STRAUSS:
        nn = _gather(c, x, dd.pair_r, skip, c.scratch)
        r2 = dd.pair_r * dd.pair_r
        cells = 0
        for q in range(nn):
            d2 = _dist2(c, x, c.scratch[q])
            if d2 == 0.0:
                return INFINITY
            if d2 <= r2:
                cells += 1
        return dd.beta0 * cells
    if dd.kind == K_TABLE:
        nn = _gather(c, x, dd.rng_range, skip, c.scratch)
        r2 = dd.rng_range * dd.rng_range
        s2 = dd.sigma * dd.sigma
        h = 0.0
        for q in range(nn):
            d2 = _dist2(c, x, c.scratch[q])
            if d2 < s2 or d2 == 0.0:
                return INFINITY
            if d2 <= r2:
                h += _interp(dd, sqrt(d2))
        return h
    nn = _gather(c, x, 2.0 * dd.area_r, skip, c.scratch)
    for q in range(nn):
        if _dist2(c, x, c.scratch[q]) == 0.0:
            return INFINITY
    cells = _delta_count(c, dd, x, c.scratch, nn)
    return dd.gamma * cells * dd.lat_delta * dd.lat_delta


cdef long _delta_count(Ctx* c, Desc* dd, const double* x,
                       const cnp.int64_t* nbr, Py_ssize_t n_nbr) noexcept nogil:
    cdef double R = dd.area_r
    cdef double r2 = R * R
    cdef double delta = dd.lat_delta
    cdef int mlat = dd.lat_m
    cdef double lo = c.grid_lo
    cdef double cx, cy, dx, dy, dx2, ex, ey
    cdef long count = 0
    cdef long i_lo, i_hi, j_lo, j_hi, i, j
    cdef int ii, jj
    cdef Py_ssize_t q, idx
    cdef bint covered
    i_lo = <long> ceil((x[0] - R - lo) / delta - 0.5)
    i_hi = <long> floor((x[0] + R - lo) / delta - 0.5)
    j_lo = <long> ceil((x[1] - R - lo) / delta - 0.5)
    j_hi = <long> floor((x[1] + R - lo) / delta - 0.5)
    if i_hi - i_lo + 1 > mlat:
        i_lo = 0
        i_hi = mlat - 1
    if j_hi - j_lo + 1 > mlat:
        j_lo = 0
        j_hi = mlat - 1
    for i in range(i_lo, i_hi + 1):
        ii = <int> (i % mlat)
        if ii < 0:
            ii += mlat
        cx = lo + (ii + 0.5) * delta
        dx = x[0] - cx
        if c.periodic:
            if dx > c.half:
                dx -= c.period
            elif dx < -c.half:
                dx += c.period
        dx2 = dx * dx
        if dx2 > r2:
            continue
        for j in range(j_lo, j_hi + 1):
            jj = <int> (j % mlat)
            if jj < 0:
                jj += mlat
            cy = lo + (jj + 0.5) * delta
            dy = x[1] - cy
            if c.periodic:
                if dy > c.half:
                    dy -= c.period
                elif dy < -c.half:
                    dy += c.period
            if dx2 + dy * dy > r2:
                continue
            covered = False
            for q in range(n_nbr):
                idx = nbr[q]
                ex = cx - c.pts[idx * c.d]
                if c.periodic:
                    if ex > c.half:
                        ex -= c.period
                    elif ex < -c.half:
                        ex += c.period
                ey = cy - c.pts[idx * c.d + 1]
                if c.periodic:
                    if ey > c.half:
                        ey -= c.period
                    elif ey < -c.half:
                        ey += c.period
                if ex * ex + ey * ey <= r2:
                    covered = True
                    break
            if not covered:
                count += 1
    return count


cdef inline bint _in_box(Ctx* c, Py_ssize_t i, const double* lo,
                         const double* hi) noexcept nogil:
    cdef int a
    cdef double v
    for a in range(c.d):
        v = c.pts[i * c.d + a]
        if v < lo[a] or v > hi[a]:
            return False
    return True


cdef inline long _count_box(Ctx* c, const double* lo, const double* hi) noexcept nogil:
    cdef long count = 0
    cdef Py_ssize_t i
    for i in range(c.n_frozen, c.n):
        if _in_box(c, i, lo, hi):
            count += 1
    return count


# -- module-level API (signatures match gibbslab._pycore) --------------------

def rebuild(state):
    cdef Ctx c
    cdef Py_ssize_t i
    state.head.fill(-1)
    _load(state, &c, None)
    with nogil:
        for i in range(c.n):
            _insert(&c, i)


def neighbors_within(state, x, double r, Py_ssize_t skip=-1):
    cdef Ctx c
    cdef _Scratch sc = _Scratch(max(state.n, 1))
    _load(state, &c, sc)
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=float)
    cdef Py_ssize_t count
    with nogil:
        count = _gather(&c, <double*> cnp.PyArray_DATA(xv), r, skip, c.scratch)
    out = np.empty(count, dtype=np.int64)
    cdef Py_ssize_t i
    for i in range(count):
        out[i] = c.scratch[i]
    return out


def cond_energy(state, desc, x, Py_ssize_t skip=-1):
    cdef Ctx c
    cdef Desc dd
    cdef _Scratch sc = _Scratch(max(state.n, 1))
    _load(state, &c, sc)
    table = np.ascontiguousarray(desc.table, dtype=float)
    _load_desc(desc, &dd, table)
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=float)
    cdef double h
    with nogil:
        h = _cond_energy(&c, &dd, <double*> cnp.PyArray_DATA(xv), skip)
    return h


def delta_area_cells(state, desc, x, Py_ssize_t skip=-1):
    cdef Ctx c
    cdef Desc dd
    cdef _Scratch sc = _Scratch(max(state.n, 1))
    _load(state, &c, sc)
    table = np.ascontiguousarray(desc.table, dtype=float)
    _load_desc(desc, &dd, table)
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=float)
    cdef Py_ssize_t nn
    cdef long cells
    with nogil:
        nn = _gather(&c, <double*> cnp.PyArray_DATA(xv), 2.0 * dd.area_r,
                     skip, c.scratch)
        cells = _delta_count(&c, &dd, <double*> cnp.PyArray_DATA(xv),
                             c.scratch, nn)
    return cells


def area_total_cells(state, desc):
    cdef Ctx c
    cdef Desc dd
    cdef _Scratch sc = _Scratch(max(state.n, 1))
    _load(state, &c, sc)
    table = np.ascontiguousarray(desc.table, dtype=float)
    _load_desc(desc, &dd, table)
    cdef double center[2]
    cdef long count = 0
    cdef int i, j
    cdef Py_ssize_t nn
    with nogil:
        for i in range(dd.lat_m):
            center[0] = c.grid_lo + (i + 0.5) * dd.lat_delta
            for j in range(dd.lat_m):
                center[1] = c.grid_lo + (j + 0.5) * dd.lat_delta
                nn = _gather(&c, center, dd.area_r, -1, c.scratch)
                if nn > 0:
                    count += 1
    return count


def pair_total_energy(state, desc):
    cdef Ctx c
    cdef Desc dd
    cdef _Scratch sc = _Scratch(max(state.n, 1))
    _load(state, &c, sc)
    table = np.ascontiguousarray(desc.table, dtype=float)
    _load_desc(desc, &dd, table)
    if dd.kind == K_NONE:
        return 0.0
    cdef double rng = dd.pair_r if dd.kind == K_STRAUSS else dd.rng_range
    cdef double r2 = rng * rng
    cdef double s2 = dd.sigma * dd.sigma
    cdef double total = 0.0, d2
    cdef Py_ssize_t i, q, nn
    cdef cnp.int64_t j
    cdef bint bad = False
    with nogil:
        for i in range(c.n):
            nn = _gather(&c, c.pts + i * c.d, rng, -1, c.scratch)
            for q in range(nn):
                j = c.scratch[q]
                if j > i:
                    d2 = _dist2(&c, c.pts + i * c.d, j)
                    if d2 <= r2:
                        if d2 == 0.0:
                            bad = True
                            break
                        if dd.kind == K_STRAUSS:
                            total += dd.beta0
                        else:
                            if d2 < s2:
                                bad = True
                                break
                            total += _interp(&dd, sqrt(d2))
            if bad:
                break
    if bad:
        return INFINITY
    return total


cdef bitgen_t* _bitgen(object gen, list keepalive):
    bg_obj = gen.bit_generator
    keepalive.append(bg_obj)
    return <bitgen_t*> PyCapsule_GetPointer(bg_obj.capsule, "BitGenerator")


def mh_run(state, desc, Py_ssize_t n_steps, gen):
    """Birth-death Metropolis chain; see the mirror for the draw protocol."""
    cdef Ctx c
    cdef Desc dd
    cdef _Scratch sc = _Scratch(max(state.points.shape[0], 1))
    _load(state, &c, sc)
    table = np.ascontiguousarray(desc.table, dtype=float)
    _load_desc(desc, &dd, table)
    keep = []
    cdef bitgen_t* bg = _bitgen(gen, keep)
    cdef double lo = state.box_lo
    cdef double side = state.box_hi - state.box_lo
    cdef double vol = state.volume
    cdef double x[3]
    cdef double h, u_acc
    cdef Py_ssize_t step = 0, births = 0, deaths = 0, nlive, j, idx
    cdef int a
    with nogil:
        while step < n_steps:
            if c.n + 1 > c.capacity:
                break
            if bg.next_double(bg.state) < 0.5:
                for a in range(c.d):
                    x[a] = lo + side * bg.next_double(bg.state)
                h = _cond_energy(&c, &dd, x, -1)
                u_acc = bg.next_double(bg.state)
                nlive = c.n - c.n_frozen
                if u_acc * (nlive + 1) < vol * exp(-h):
                    for a in range(c.d):
                        c.pts[c.n * c.d + a] = x[a]
                    c.n += 1
                    _insert(&c, c.n - 1)
                    births += 1
            else:
                nlive = c.n - c.n_frozen
                if nlive == 0:
                    step += 1
                    continue
                j = <Py_ssize_t> (bg.next_double(bg.state) * nlive)
                if j >= nlive:
                    j = nlive - 1
                idx = c.n_frozen + j
                h = _cond_energy(&c, &dd, c.pts + idx * c.d, idx)
                u_acc = bg.next_double(bg.state)
                if u_acc * vol * exp(-h) < nlive:
                    _kill(&c, idx)
                    deaths += 1
            step += 1
    state.n = c.n
    return step, births, deaths


def ctmc_run(state, desc, double t_start, double t_max, gen,
             ev_t, ev_kind, ev_xy, Py_ssize_t n_ev,
             sample_times, sample_counts, Py_ssize_t n_sample,
             count_lo, count_hi, bint record):
    """Thinned continuous-time chain; see the mirror for the protocol."""
    cdef Ctx c
    cdef Desc dd
    cdef _Scratch sc = _Scratch(max(state.points.shape[0], 1))
    _load(state, &c, sc)
    table = np.ascontiguousarray(desc.table, dtype=float)
    _load_desc(desc, &dd, table)
    keep = []
    cdef bitgen_t* bg = _bitgen(gen, keep)
    cdef double lo = state.box_lo
    cdef double side = state.box_hi - state.box_lo
    cdef double vol = state.volume
    cdef double bstar = dd.bstar
    cdef double birth_flow = bstar * vol

    cdef cnp.ndarray evt = ev_t
    cdef cnp.ndarray evk = ev_kind
    cdef cnp.ndarray evx = ev_xy
    cdef cnp.ndarray st_arr = np.ascontiguousarray(sample_times, dtype=float)
    cdef cnp.ndarray sc_arr = sample_counts
    cdef cnp.ndarray lo_arr = np.ascontiguousarray(count_lo, dtype=float)
    cdef cnp.ndarray hi_arr = np.ascontiguousarray(count_hi, dtype=float)
    cdef double* p_evt = <double*> cnp.PyArray_DATA(evt)
    cdef cnp.int8_t* p_evk = <cnp.int8_t*> cnp.PyArray_DATA(evk)
    cdef double* p_evx = <double*> cnp.PyArray_DATA(evx)
    cdef double* p_st = <double*> cnp.PyArray_DATA(st_arr)
    cdef cnp.int64_t* p_sc = <cnp.int64_t*> cnp.PyArray_DATA(sc_arr)
    cdef double* p_lo = <double*> cnp.PyArray_DATA(lo_arr)
    cdef double* p_hi = <double*> cnp.PyArray_DATA(hi_arr)
    cdef Py_ssize_t n_samples_total = st_arr.shape[0]
    cdef Py_ssize_t ev_cap = evt.shape[0]

    cdef double t = t_start, ut, dt, t_next, h, u_acc, q_tot
    cdef double x[3]
    cdef Py_ssize_t nlive, j, idx
    cdef int a, done = 0
    with nogil:
        while True:
            if c.n + 1 > c.capacity:
                break
            if record and n_ev + 1 > ev_cap:
                break
            q_tot = birth_flow + (c.n - c.n_frozen)
            ut = bg.next_double(bg.state)
            if ut <= 0.0:
                dt = INFINITY
            else:
                dt = -log(ut) / q_tot
            t_next = t + dt
            while n_sample < n_samples_total and p_st[n_sample] < t_next:
                p_sc[n_sample] = _count_box(&c, p_lo, p_hi)
                n_sample += 1
            if t_next >= t_max:
                while n_sample < n_samples_total and p_st[n_sample] <= t_max:
                    p_sc[n_sample] = _count_box(&c, p_lo, p_hi)
                    n_sample += 1
                t = t_max
                done = 1
                break
            t = t_next
            if bg.next_double(bg.state) * q_tot < birth_flow:
                for a in range(c.d):
                    x[a] = lo + side * bg.next_double(bg.state)
                h = _cond_energy(&c, &dd, x, -1)
                u_acc = bg.next_double(bg.state)
                if u_acc * bstar < exp(-h):
                    for a in range(c.d):
                        c.pts[c.n * c.d + a] = x[a]
                    c.n += 1
                    _insert(&c, c.n - 1)
                    if record:
                        p_evt[n_ev] = t
                        p_evk[n_ev] = 0
                        for a in range(c.d):
                            p_evx[n_ev * c.d + a] = x[a]
                        n_ev += 1
            else:
                nlive = c.n - c.n_frozen
                j = <Py_ssize_t> (bg.next_double(bg.state) * nlive)
                if j >= nlive:
                    j = nlive - 1
                idx = c.n_frozen + j
                if record:
                    p_evt[n_ev] = t
                    p_evk[n_ev] = 1
                    for a in range(c.d):
                        p_evx[n_ev * c.d + a] = c.pts[idx * c.d + a]
                    n_ev += 1
                _kill(&c, idx)
    state.n = c.n
    return t, n_ev, n_sample, done


def accumulate_tent(points, double amp, double r, double x0, double delta,
                    grid):
    """Add the tent-kernel field of ``points`` onto the quad-node grid."""
    cdef cnp.ndarray pts_arr = np.ascontiguousarray(points, dtype=float)
    cdef cnp.ndarray grid_arr = grid
    cdef double* p = <double*> cnp.PyArray_DATA(pts_arr)
    cdef double* g = <double*> cnp.PyArray_DATA(grid_arr)
    cdef Py_ssize_t n_pts = pts_arr.shape[0]
    cdef Py_ssize_t m = grid_arr.shape[0]
    cdef Py_ssize_t k, i, j
    cdef long i_lo, i_hi, j_lo, j_hi
    cdef double px, py, dx, dx2, dy, rho
    with nogil:
        for k in range(n_pts):
            px = p[2 * k]
            py = p[2 * k + 1]
            i_lo = <long> ceil((px - r - x0) / delta - 0.5)
            i_hi = <long> floor((px + r - x0) / delta - 0.5)
            j_lo = <long> ceil((py - r - x0) / delta - 0.5)
            j_hi = <long> floor((py + r - x0) / delta - 0.5)
            if i_lo < 0:
                i_lo = 0
            if i_hi > m - 1:
                i_hi = m - 1
            if j_lo < 0:
                j_lo = 0
            if j_hi > m - 1:
                j_hi = m - 1
            for i in range(i_lo, i_hi + 1):
                dx = px - (x0 + (i + 0.5) * delta)
                dx2 = dx * dx
                for j in range(j_lo, j_hi + 1):
                    dy = py - (x0 + (j + 0.5) * delta)
                    rho = sqrt(dx2 + dy * dy)
                    if rho < r:
                        g[i * m + j] += amp * (1.0 - rho / r)
