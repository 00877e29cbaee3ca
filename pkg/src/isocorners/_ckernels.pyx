# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a pure-Python twin in ``_pykernels`` with the same
signature and bit-identical results; ``isocorners._backend`` picks one at
import time.

Crack conventions (shared with the fallback): a crack is the unit edge
between a set pixel and a 4-neighbour inside the block that is not set.
Its id is ``(y * w + x) * 4 + side`` with sides top=0, right=1, bottom=2,
left=3; traversal keeps the set pixel on the right, so the side index is
also the travel direction (E, S, W, N).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32

cdef int DY[4]
cdef int DX[4]
DY[:] = [-1, 0, 1, 0]
DX[:] = [0, 1, 0, -1]


cdef inline bint _crack(const unsigned char[:, ::1] m, Py_ssize_t h, Py_ssize_t w,
                        Py_ssize_t y, Py_ssize_t x, int s) noexcept nogil:
    cdef Py_ssize_t ny, nx
    if y < 0 or y >= h or x < 0 or x >= w or m[y, x] == 0:
        return 0
    ny = y + DY[s]
    nx = x + DX[s]
    if ny < 0 or ny >= h or nx < 0 or nx >= w:
        return 0
    return m[ny, nx] == 0


cdef inline i64 _succ(const unsigned char[:, ::1] m, Py_ssize_t h, Py_ssize_t w, i64 c) noexcept nogil:
    cdef i64 p = c // 4
    cdef int d = <int>(c % 4)
    cdef Py_ssize_t y = p // w, x = p % w, vy, vx, py, px
    cdef int k, nd
    # end vertex of the crack
    if d == 0:
        vy = y; vx = x + 1
    elif d == 1:
        vy = y + 1; vx = x + 1
    elif d == 2:
        vy = y + 1; vx = x
    else:
        vy = y; vx = x
    # left turn, straight, right turn
    for k in range(3):
        nd = (d + 3 + k) % 4
        if nd == 0:
            py = vy; px = vx
        elif nd == 1:
            py = vy; px = vx - 1
        elif nd == 2:
            py = vy - 1; px = vx - 1
        else:
            py = vy - 1; px = vx
        if _crack(m, h, w, py, px, nd):
            return (py * w + px) * 4 + nd
    return -1


cdef inline i64 _pred(const unsigned char[:, ::1] m, Py_ssize_t h, Py_ssize_t w, i64 c) noexcept nogil:
    cdef i64 p = c // 4
    cdef int d = <int>(c % 4)
    cdef Py_ssize_t y = p // w, x = p % w, vy, vx, py, px
    cdef int k, pd
    # start vertex of the crack
    if d == 0:
        vy = y; vx = x
    elif d == 1:
        vy = y; vx = x + 1
    elif d == 2:
        vy = y + 1; vx = x + 1
    else:
        vy = y + 1; vx = x
    for k in range(3):
        pd = (d + 1 + 3 * k) % 4
        if pd == 0:
            py = vy; px = vx - 1
        elif pd == 1:
            py = vy - 1; px = vx - 1
        elif pd == 2:
            py = vy - 1; px = vx
        else:
            py = vy; px = vx
        if _crack(m, h, w, py, px, pd):
            return (py * w + px) * 4 + pd
    return -1


cdef Py_ssize_t _trace(const unsigned char[:, ::1] m, Py_ssize_t h, Py_ssize_t w,
                       i64 c0, i64[::1] out, bint *closed) noexcept nogil:
    cdef i64 cur = c0, p, start, best
    cdef Py_ssize_t n = 0
    closed[0] = 0
    while True:
        p = _pred(m, h, w, cur)
        if p < 0:
            start = cur
            break
        if p == c0:
            closed[0] = 1
            break
        cur = p
    if closed[0]:
        best = c0
        cur = _succ(m, h, w, c0)
        while cur != c0:
            if cur < best:
                best = cur
            cur = _succ(m, h, w, cur)
        start = best
    out[0] = start
    n = 1
    cur = start
    while True:
        p = _succ(m, h, w, cur)
        if p < 0 or p == start:
            break
        out[n] = p
        n += 1
        cur = p
    return n


def crack_exists(const unsigned char[:, ::1] mask, i64 crack):
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef i64 p = crack // 4
    return bool(_crack(mask, h, w, p // w, p % w, <int>(crack % 4)))


def trace_chain(const unsigned char[:, ::1] mask, i64 crack):
    """Crack sequence of the contour through ``crack``, from its canonical start."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef i64 p = crack // 4
    if not _crack(mask, h, w, p // w, p % w, <int>(crack % 4)):
        raise ValueError("no crack with id %d" % crack)
    cdef cnp.ndarray[i64, ndim=1] buf = np.empty(4 * h * w + 1, dtype=np.int64)
    cdef i64[::1] bv = buf
    cdef bint closed
    cdef Py_ssize_t n
    with nogil:
        n = _trace(mask, h, w, crack, bv, &closed)
    return buf[:n].copy(), bool(closed)


def crack_pixels(const i64[::1] cracks, bint closed, Py_ssize_t w):
    """Pixel chain of a crack sequence: (xy, pos).

    Consecutive cracks of one pixel give one point; on a closed chain a wrap
    back onto the first point is dropped.  ``pos[i]`` is the point of crack i.
    """
    cdef Py_ssize_t n = cracks.shape[0], i, m = 0
    cdef cnp.ndarray[i64, ndim=1] pos = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=2] xy = np.empty((n, 2), dtype=np.int64)
    cdef i64 pix, last = -1
    for i in range(n):
        pix = cracks[i] // 4
        if pix != last:
            xy[m, 0] = pix % w
            xy[m, 1] = pix // w
            m += 1
            last = pix
        pos[i] = m - 1
    if closed and m > 1 and xy[m - 1, 0] == xy[0, 0] and xy[m - 1, 1] == xy[0, 1]:
        for i in range(n):
            if pos[i] == m - 1:
                pos[i] = 0
        m -= 1
    return xy[:m].copy(), pos


def trace_all(const unsigned char[:, ::1] mask):
    """All contours of the mask, in order of their lowest crack id."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t nc = 4 * h * w, i, n, j
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] seen = np.zeros(nc, dtype=np.uint8)
    cdef cnp.ndarray[i64, ndim=1] buf = np.empty(nc + 1, dtype=np.int64)
    cdef i64[::1] bv = buf
    cdef bint closed
    cdef i64 c, p
    out = []
    for c in range(nc):
        if seen[c]:
            continue
        p = c // 4
        if not _crack(mask, h, w, p // w, p % w, <int>(c % 4)):
            continue
        n = _trace(mask, h, w, c, bv, &closed)
        for j in range(n):
            seen[bv[j]] = 1
        out.append((buf[:n].copy(), bool(closed)))
    return out


def nearest_boundary(const unsigned char[:, ::1] mask, Py_ssize_t px, Py_ssize_t py,
                     const i32[:, ::1] offsets):
    """First boundary pixel along ``offsets`` (rows of dy, dx sorted by distance)."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1], i, y, x
    cdef int s
    cdef bint hit
    for i in range(offsets.shape[0]):
        y = py + offsets[i, 0]
        x = px + offsets[i, 1]
        if y < 0 or y >= h or x < 0 or x >= w or mask[y, x] == 0:
            continue
        hit = 0
        for s in range(4):
            if _crack(mask, h, w, y, x, s):
                hit = 1
                break
        if hit:
            return x, y
    return -1, -1


cdef inline i64 _floordiv(i64 a, i64 b) noexcept nogil:
    cdef i64 q = a // b
    if (a % b != 0) and ((a < 0) != (b < 0)):
        q -= 1
    return q


def polygon_mask(const i64[::1] xs, const i64[::1] ys, Py_ssize_t h, Py_ssize_t w):
    """uint8 mask of the lattice pixels inside the closed polygon.

    Even-odd rule with the pixel centre nudged right and then (much less)
    down, which makes axis-aligned rectangles count exactly their area.
    """
    cdef Py_ssize_t n = xs.shape[0], i, j, k, nt
    cdef i64 ymin, ymax, py, x1, y1, x2, y2, dyv, num, t, a, b, xx
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] ov = out
    if n < 3 or h == 0 or w == 0:
        return out
    cdef cnp.ndarray[i64, ndim=1] th = np.empty(n, dtype=np.int64)
    cdef i64[::1] tv = th
    ymin = ys[0]; ymax = ys[0]
    for i in range(n):
        if ys[i] < ymin: ymin = ys[i]
        if ys[i] > ymax: ymax = ys[i]
    if ymin < 0: ymin = 0
    if ymax > h - 1: ymax = h - 1
    with nogil:
        for py in range(ymin, ymax + 1):
            nt = 0
            for i in range(n):
                j = i + 1
                if j == n:
                    j = 0
                x1 = xs[i]; y1 = ys[i]; x2 = xs[j]; y2 = ys[j]
                if (y1 <= py) != (y2 <= py):
                    dyv = y2 - y1
                    num = x1 * dyv + (py - y1) * (x2 - x1)
                    # ceil(num / dyv)
                    t = -_floordiv(-num, dyv)
                    tv[nt] = t
                    nt += 1
            # insertion sort, nt is small
            for i in range(1, nt):
                t = tv[i]
                k = i - 1
                while k >= 0 and tv[k] > t:
                    tv[k + 1] = tv[k]
                    k -= 1
                tv[k + 1] = t
            i = 0
            while i + 1 < nt:
                a = tv[i]
                b = tv[i + 1]
                if a < 0: a = 0
                if b > w: b = w
                for xx in range(a, b):
                    ov[py, xx] ^= 1
                i += 2
    return out


cdef void _envelope(double *f, Py_ssize_t n, double *d, i32 *src, i32 *v, double *z) noexcept nogil:
    cdef Py_ssize_t q, k = -1
    cdef double s
    for q in range(n):
        if f[q] == INFINITY:
            continue
        if k < 0:
            k = 0
            v[0] = <i32>q
            z[0] = -INFINITY
            z[1] = INFINITY
            continue
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * <double>v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * <double>v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = <i32>q
        z[k] = s
        z[k + 1] = INFINITY
    if k < 0:
        for q in range(n):
            d[q] = INFINITY
            src[q] = -1
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * <double>(q - v[k]) + f[v[k]]
        src[q] = v[k]


def edt_labeled(const i32[:, ::1] seeds):
    """Squared Euclidean distance to, and label of, the nearest seed (label >= 0)."""
    cdef Py_ssize_t h = seeds.shape[0], w = seeds.shape[1], y, x, m
    m = h if h > w else w
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dist = np.empty((h, w), dtype=np.float64)
    cdef cnp.ndarray[i32, ndim=2] lab = np.empty((h, w), dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d1 = np.empty((h, w), dtype=np.float64)
    cdef cnp.ndarray[i32, ndim=2] l1 = np.empty((h, w), dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z = np.empty(m + 1, dtype=np.float64)
    cdef cnp.ndarray[i32, ndim=1] src = np.empty(m, dtype=np.int32)
    cdef cnp.ndarray[i32, ndim=1] v = np.empty(m, dtype=np.int32)
    cdef double[:, ::1] distv = dist, d1v = d1
    cdef i32[:, ::1] labv = lab, l1v = l1
    cdef double *fp = <double *>f.data
    cdef double *dp = <double *>d.data
    cdef double *zp = <double *>z.data
    cdef i32 *sp = <i32 *>src.data
    cdef i32 *vp = <i32 *>v.data
    with nogil:
        for x in range(w):
            for y in range(h):
                fp[y] = 0.0 if seeds[y, x] >= 0 else INFINITY
            _envelope(fp, h, dp, sp, vp, zp)
            for y in range(h):
                d1v[y, x] = dp[y]
                l1v[y, x] = seeds[sp[y], x] if sp[y] >= 0 else -1
        for y in range(h):
            for x in range(w):
                fp[x] = d1v[y, x]
            _envelope(fp, w, dp, sp, vp, zp)
            for x in range(w):
                distv[y, x] = dp[x]
                labv[y, x] = l1v[y, sp[x]] if sp[x] >= 0 else -1
    return dist, lab


def box_filter_1d(const double[::1] values, Py_ssize_t radius, Py_ssize_t passes, int mode):
    """Repeated centred moving average. mode: 0 clamp, 1 zero, 2 wrap."""
    cdef Py_ssize_t n = values.shape[0], i, j, p, idx
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.array(values, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = np.empty(n, dtype=np.float64)
    cdef double[::1] av = a, bv = b, tmp
    cdef double s, inv = 1.0 / (2 * radius + 1)
    if n == 0:
        return a
    with nogil:
        for p in range(passes):
            s = 0.0
            for j in range(-radius, radius + 1):
                idx = j
                if mode == 0:
                    if idx < 0: idx = 0
                    elif idx >= n: idx = n - 1
                    s += av[idx]
                elif mode == 1:
                    if 0 <= idx < n: s += av[idx]
                else:
                    idx = idx % n
                    if idx < 0: idx += n
                    s += av[idx]
            for i in range(n):
                bv[i] = s * inv
                # slide: add i+radius+1, drop i-radius
                idx = i + radius + 1
                if mode == 0:
                    if idx >= n: idx = n - 1
                    s += av[idx]
                elif mode == 1:
                    if idx < n: s += av[idx]
                else:
                    s += av[idx % n]
                idx = i - radius
                if mode == 0:
                    if idx < 0: idx = 0
                    s -= av[idx]
                elif mode == 1:
                    if idx >= 0: s -= av[idx]
                else:
                    idx = idx % n
                    if idx < 0: idx += n
                    s -= av[idx]
            tmp = av
            av = bv
            bv = tmp
    return np.asarray(av).copy()


cdef inline Py_ssize_t _find(i64 *par, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t r = x, t
    while par[r] != r:
        r = par[r]
    while par[x] != r:
        t = par[x]
        par[x] = r
        x = t
    return r


def component_tree(const unsigned char[:, ::1] block):
    """Component tree of the upper level sets (8-connected), by union-find.

    Returns per-node arrays (level, size, perimeter, parent, seed). The
    perimeter counts cracks inside the block.
    """
    cdef Py_ssize_t h = block.shape[0], w = block.shape[1], n = h * w
    cdef Py_ssize_t i, j, k, px, nb, y, x, ny, nx, ra, rb, win, los, L
    cdef cnp.ndarray[i64, ndim=1] counts = np.zeros(257, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] order = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] par = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] usize = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] uper = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] rnode = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] nlev = np.empty(3 * n + 1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] nsize = np.zeros(3 * n + 1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] nper = np.zeros(3 * n + 1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] npar = np.full(3 * n + 1, -1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] nali = np.empty(3 * n + 1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] nseed = np.zeros(3 * n + 1, dtype=np.int64)
    cdef i64 *pp = <i64 *>par.data
    cdef i64 *ap = <i64 *>nali.data
    cdef Py_ssize_t nn = 0, start, stop, nd, cr
    if n == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e, e, e, e
    with nogil:
        for i in range(n):
            counts[255 - block[i // w, i % w]] += 1
        # exclusive prefix: pos[v] = start of value 255 - v
        j = 0
        for i in range(256):
            k = counts[i]
            counts[i] = j
            j += k
        counts[256] = n
        for i in range(n):
            k = 255 - block[i // w, i % w]
            order[counts[k]] = i
            counts[k] += 1
        # counts[v] now = end of group v
        start = 0
        for L in range(255, -1, -1):
            stop = counts[255 - L]
            if stop == start:
                continue
            for i in range(start, stop):
                px = order[i]
                y = px // w
                x = px % w
                pp[px] = px
                usize[px] = 1
                cr = 0
                for k in range(4):
                    ny = y + DY[k]
                    nx = x + DX[k]
                    if ny < 0 or ny >= h or nx < 0 or nx >= w:
                        continue
                    nb = ny * w + nx
                    if pp[nb] != -1:
                        rb = _find(pp, nb)
                        uper[rb] -= 1
                    else:
                        cr += 1
                uper[px] = cr
                nd = nn
                nn += 1
                nlev[nd] = L
                ap[nd] = nd
                rnode[px] = nd
                for ny in range(y - 1, y + 2):
                    for nx in range(x - 1, x + 2):
                        if ny < 0 or ny >= h or nx < 0 or nx >= w:
                            continue
                        if ny == y and nx == x:
                            continue
                        nb = ny * w + nx
                        if pp[nb] == -1:
                            continue
                        ra = _find(pp, px)
                        rb = _find(pp, nb)
                        if ra == rb:
                            continue
                        # open nodes at level L
                        if nlev[rnode[ra]] != L:
                            nd = nn
                            nn += 1
                            nlev[nd] = L
                            ap[nd] = nd
                            npar[rnode[ra]] = nd
                            rnode[ra] = nd
                        if nlev[rnode[rb]] != L:
                            nd = nn
                            nn += 1
                            nlev[nd] = L
                            ap[nd] = nd
                            npar[rnode[rb]] = nd
                            rnode[rb] = nd
                        if usize[ra] > usize[rb] or (usize[ra] == usize[rb] and ra < rb):
                            win = ra
                            los = rb
                        else:
                            win = rb
                            los = ra
                        pp[los] = win
                        usize[win] += usize[los]
                        uper[win] += uper[los]
                        ap[rnode[los]] = rnode[win]
            for i in range(start, stop):
                ra = _find(pp, order[i])
                nd = rnode[ra]
                nsize[nd] = usize[ra]
                nper[nd] = uper[ra]
                nseed[nd] = ra
            start = stop
        # resolve aliases in parent links
        for i in range(nn):
            if npar[i] >= 0:
                npar[i] = _find(ap, npar[i])
    alive = np.flatnonzero(nali[:nn] == np.arange(nn))
    remap = np.full(nn, -1, dtype=np.int64)
    remap[alive] = np.arange(alive.size)
    parent = npar[alive]
    parent = np.where(parent >= 0, remap[np.maximum(parent, 0)], -1)
    return nlev[alive].copy(), nsize[alive].copy(), nper[alive].copy(), parent, nseed[alive].copy()


def tree_stability(const i64[::1] level, const i64[::1] size, const i64[::1] perim,
                   const i64[::1] parent, int delta, int min_level, double cap):
    """Best ratio perimeter / area-change over each node's level range.

    ``min_level`` is the block minimum; thresholds at or below it give the
    full block, which has no curve, so the ratio there is 0.
    Returns (best_rho, best_level, largest_child).
    """
    cdef Py_ssize_t nn = level.shape[0], i, a, d, cnt, I, lo_lv, hi_lv, pl, m
    cdef cnp.ndarray[i64, ndim=1] big = np.full(nn, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best = np.zeros(nn, dtype=np.float64)
    cdef cnp.ndarray[i64, ndim=1] blev = np.zeros(nn, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] ties = np.empty(257, dtype=np.int64)
    cdef i64 p, lo, hi, da
    cdef double r, bmax
    with nogil:
        for i in range(nn):
            p = parent[i]
            if p >= 0:
                if big[p] < 0 or size[i] > size[big[p]] or (size[i] == size[big[p]] and i < big[p]):
                    big[p] = i
        for i in range(nn):
            p = parent[i]
            hi_lv = level[i]
            lo_lv = level[p] + 1 if p >= 0 else 0
            bmax = -1.0
            cnt = 0
            for I in range(lo_lv, hi_lv + 1):
                if perim[i] == 0:
                    r = 0.0
                else:
                    lo = I - delta
                    hi = I + delta
                    if lo <= min_level:
                        r = 0.0
                    else:
                        a = i
                        while parent[a] >= 0 and level[parent[a]] >= lo:
                            a = parent[a]
                        d = i
                        while d >= 0 and level[d] < hi:
                            d = big[d]
                        if d < 0:
                            r = 0.0
                        else:
                            da = size[a] - size[d]
                            r = cap if da == 0 else perim[i] / <double>da
                            if r > cap:
                                r = cap
                if r > bmax:
                    bmax = r
                    cnt = 0
                if r == bmax:
                    ties[cnt] = I
                    cnt += 1
            best[i] = bmax if bmax > 0 else 0.0
            blev[i] = ties[(cnt - 1) // 2]
    return best, blev, big


def component_mask(const unsigned char[:, ::1] block, int level, Py_ssize_t seed):
    """8-connected component of {block >= level} containing pixel ``seed``."""
    cdef Py_ssize_t h = block.shape[0], w = block.shape[1], n = h * w
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.ndarray[i64, ndim=1] stack = np.empty(n + 1, dtype=np.int64)
    cdef unsigned char[:, ::1] ov = out
    cdef Py_ssize_t top = 0, p, y, x, ny, nx
    if block[seed // w, seed % w] < level:
        return out
    with nogil:
        stack[0] = seed
        top = 1
        ov[seed // w, seed % w] = 1
        while top > 0:
            top -= 1
            p = stack[top]
            y = p // w
            x = p % w
            for ny in range(y - 1, y + 2):
                for nx in range(x - 1, x + 2):
                    if ny < 0 or ny >= h or nx < 0 or nx >= w:
                        continue
                    if ov[ny, nx] or block[ny, nx] < level:
                        continue
                    ov[ny, nx] = 1
                    stack[top] = ny * w + nx
                    top += 1
    return out
