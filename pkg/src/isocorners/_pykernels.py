"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Same signatures, same tie-breaking, same floating point operations, so the
two backends produce identical output. See ``_ckernels.pyx`` for the crack
conventions.
"""

from __future__ import annotations

import math

import numpy as np

DY = (-1, 0, 1, 0)
DX = (0, 1, 0, -1)
INF = math.inf


def _crack(m, h, w, y, x, s):
    if y < 0 or y >= h or x < 0 or x >= w or not m[y][x]:
        return False
    ny = y + DY[s]
    nx = x + DX[s]
    if ny < 0 or ny >= h or nx < 0 or nx >= w:
        return False
    return not m[ny][nx]


def _succ(m, h, w, c):
    p, d = divmod(c, 4)
    y, x = divmod(p, w)
    if d == 0:
        vy, vx = y, x + 1
    elif d == 1:
        vy, vx = y + 1, x + 1
    elif d == 2:
        vy, vx = y + 1, x
    else:
        vy, vx = y, x
    for k in range(3):
        nd = (d + 3 + k) % 4
        if nd == 0:
            py, px = vy, vx
        elif nd == 1:
            py, px = vy, vx - 1
        elif nd == 2:
            py, px = vy - 1, vx - 1
        else:
            py, px = vy - 1, vx
        if _crack(m, h, w, py, px, nd):
            return (py * w + px) * 4 + nd
    return -1


def _pred(m, h, w, c):
    p, d = divmod(c, 4)
    y, x = divmod(p, w)
    if d == 0:
        vy, vx = y, x
    elif d == 1:
        vy, vx = y, x + 1
    elif d == 2:
        vy, vx = y + 1, x + 1
    else:
        vy, vx = y + 1, x
    for k in range(3):
        pd = (d + 1 + 3 * k) % 4
        if pd == 0:
            py, px = vy, vx - 1
        elif pd == 1:
            py, px = vy - 1, vx - 1
        elif pd == 2:
            py, px = vy - 1, vx
        else:
            py, px = vy, vx
        if _crack(m, h, w, py, px, pd):
            return (py * w + px) * 4 + pd
    return -1


def _trace(m, h, w, c0):
    cur = c0
    closed = False
    while True:
        p = _pred(m, h, w, cur)
        if p < 0:
            start = cur
            break
        if p == c0:
            closed = True
            break
        cur = p
    if closed:
        best = c0
        cur = _succ(m, h, w, c0)
        while cur != c0:
            best = min(best, cur)
            cur = _succ(m, h, w, cur)
        start = best
    out = [start]
    cur = start
    while True:
        p = _succ(m, h, w, cur)
        if p < 0 or p == start:
            break
        out.append(p)
        cur = p
    return out, closed


def _rows(mask):
    return np.asarray(mask, dtype=np.uint8).tolist()


def crack_exists(mask, crack):
    m = _rows(mask)
    h, w = len(m), len(m[0]) if m else 0
    p, s = divmod(int(crack), 4)
    return _crack(m, h, w, p // w, p % w, s)


def trace_chain(mask, crack):
    m = _rows(mask)
    h, w = len(m), len(m[0])
    crack = int(crack)
    p, s = divmod(crack, 4)
    if not _crack(m, h, w, p // w, p % w, s):
        raise ValueError(f"no crack with id {crack}")
    out, closed = _trace(m, h, w, crack)
    return np.asarray(out, dtype=np.int64), closed


def crack_pixels(cracks, closed, w):
    pix = np.asarray(cracks, dtype=np.int64) // 4
    keep = np.ones(pix.size, dtype=bool)
    keep[1:] = pix[1:] != pix[:-1]
    pos = np.cumsum(keep) - 1
    kept = pix[keep]
    if closed and kept.size > 1 and kept[-1] == kept[0]:
        pos[pos == kept.size - 1] = 0
        kept = kept[:-1]
    xy = np.stack([kept % w, kept // w], axis=1)
    return xy, pos.astype(np.int64)


def trace_all(mask):
    m = _rows(mask)
    h = len(m)
    w = len(m[0]) if h else 0
    seen = set()
    out = []
    for c in range(4 * h * w):
        if c in seen:
            continue
        p, s = divmod(c, 4)
        if not _crack(m, h, w, p // w, p % w, s):
            continue
        cracks, closed = _trace(m, h, w, c)
        seen.update(cracks)
        out.append((np.asarray(cracks, dtype=np.int64), closed))
    return out


def nearest_boundary(mask, px, py, offsets):
    m = _rows(mask)
    h, w = len(m), len(m[0])
    for dy, dx in np.asarray(offsets).tolist():
        y = py + dy
        x = px + dx
        if y < 0 or y >= h or x < 0 or x >= w or not m[y][x]:
            continue
        if any(_crack(m, h, w, y, x, s) for s in range(4)):
            return x, y
    return -1, -1


def polygon_mask(xs, ys, h, w):
    xs = [int(v) for v in xs]
    ys = [int(v) for v in ys]
    n = len(xs)
    out = np.zeros((h, w), dtype=np.uint8)
    if n < 3 or h == 0 or w == 0:
        return out
    ymin = max(min(ys), 0)
    ymax = min(max(ys), h - 1)
    for py in range(ymin, ymax + 1):
        th = []
        for i in range(n):
            j = (i + 1) % n
            x1, y1, x2, y2 = xs[i], ys[i], xs[j], ys[j]
            if (y1 <= py) != (y2 <= py):
                dyv = y2 - y1
                num = x1 * dyv + (py - y1) * (x2 - x1)
                th.append(-((-num) // dyv))
        th.sort()
        for i in range(0, len(th) - 1, 2):
            a = max(th[i], 0)
            b = min(th[i + 1], w)
            if b > a:
                out[py, a:b] ^= 1
    return out


def _envelope(f):
    n = len(f)
    v = [0] * n
    z = [0.0] * (n + 1)
    k = -1
    for q in range(n):
        if f[q] == INF:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INF
            z[1] = INF
            continue
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * float(v[k]))) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * float(v[k]))) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INF
    if k < 0:
        return [INF] * n, [-1] * n
    d = [0.0] * n
    src = [0] * n
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * float(q - v[k]) + f[v[k]]
        src[q] = v[k]
    return d, src


def edt_labeled(seeds):
    s = np.asarray(seeds, dtype=np.int32).tolist()
    h = len(s)
    w = len(s[0])
    d1 = [[0.0] * w for _ in range(h)]
    l1 = [[-1] * w for _ in range(h)]
    for x in range(w):
        f = [0.0 if s[y][x] >= 0 else INF for y in range(h)]
        d, src = _envelope(f)
        for y in range(h):
            d1[y][x] = d[y]
            l1[y][x] = s[src[y]][x] if src[y] >= 0 else -1
    dist = np.empty((h, w), dtype=np.float64)
    lab = np.empty((h, w), dtype=np.int32)
    for y in range(h):
        d, src = _envelope(d1[y])
        dist[y] = d
        lab[y] = [l1[y][q] if q >= 0 else -1 for q in src]
    return dist, lab


def box_filter_1d(values, radius, passes, mode):
    # running window sum, same operation order as the compiled kernel
    av = [float(v) for v in np.asarray(values, dtype=np.float64)]
    n = len(av)
    if n == 0:
        return np.empty(0, dtype=np.float64)
    inv = 1.0 / (2 * radius + 1)

    def at(i):
        if mode == 0:
            return av[min(max(i, 0), n - 1)]
        if mode == 1:
            return av[i] if 0 <= i < n else 0.0
        return av[i % n]

    for _ in range(passes):
        s = 0.0
        for j in range(-radius, radius + 1):
            s += at(j)
        out = [0.0] * n
        for i in range(n):
            out[i] = s * inv
            s += at(i + radius + 1)
            s -= at(i - radius)
        av = out
    return np.asarray(av, dtype=np.float64)


def _find(par, x):
    r = x
    while par[r] != r:
        r = par[r]
    while par[x] != r:
        par[x], x = r, par[x]
    return r


def component_tree(block):
    b = np.asarray(block, dtype=np.uint8)
    h, w = b.shape
    n = h * w
    if n == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e, e, e, e
    flat = b.ravel().tolist()
    order = sorted(range(n), key=lambda i: (255 - flat[i], i))
    par = [-1] * n
    usize = [0] * n
    uper = [0] * n
    rnode = [-1] * n
    nlev, nsize, nper, npar, nali, nseed = [], [], [], [], [], []

    def new_node(L):
        nlev.append(L)
        nsize.append(0)
        nper.append(0)
        npar.append(-1)
        nali.append(len(nali))
        nseed.append(0)
        return len(nlev) - 1

    i = 0
    while i < n:
        L = flat[order[i]]
        j = i
        while j < n and flat[order[j]] == L:
            j += 1
        for px in order[i:j]:
            y, x = divmod(px, w)
            par[px] = px
            usize[px] = 1
            cr = 0
            for k in range(4):
                ny, nx = y + DY[k], x + DX[k]
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                nb = ny * w + nx
                if par[nb] != -1:
                    uper[_find(par, nb)] -= 1
                else:
                    cr += 1
            uper[px] = cr
            rnode[px] = new_node(L)
            for ny in range(y - 1, y + 2):
                for nx in range(x - 1, x + 2):
                    if ny < 0 or ny >= h or nx < 0 or nx >= w or (ny == y and nx == x):
                        continue
                    nb = ny * w + nx
                    if par[nb] == -1:
                        continue
                    ra = _find(par, px)
                    rb = _find(par, nb)
                    if ra == rb:
                        continue
                    for r in (ra, rb):
                        if nlev[rnode[r]] != L:
                            nd = new_node(L)
                            npar[rnode[r]] = nd
                            rnode[r] = nd
                    if usize[ra] > usize[rb] or (usize[ra] == usize[rb] and ra < rb):
                        win, los = ra, rb
                    else:
                        win, los = rb, ra
                    par[los] = win
                    usize[win] += usize[los]
                    uper[win] += uper[los]
                    nali[rnode[los]] = rnode[win]
        for px in order[i:j]:
            ra = _find(par, px)
            nd = rnode[ra]
            nsize[nd] = usize[ra]
            nper[nd] = uper[ra]
            nseed[nd] = ra
        i = j
    nn = len(nlev)
    for k in range(nn):
        if npar[k] >= 0:
            npar[k] = _find(nali, npar[k])
    nali_a = np.asarray(nali, dtype=np.int64)
    alive = np.flatnonzero(nali_a == np.arange(nn))
    remap = np.full(nn, -1, dtype=np.int64)
    remap[alive] = np.arange(alive.size)
    npar_a = np.asarray(npar, dtype=np.int64)[alive]
    parent = np.where(npar_a >= 0, remap[np.maximum(npar_a, 0)], -1)
    pick = lambda arr: np.asarray(arr, dtype=np.int64)[alive]
    return pick(nlev), pick(nsize), pick(nper), parent.astype(np.int64), pick(nseed)


def tree_stability(level, size, perim, parent, delta, min_level, cap):
    level = [int(v) for v in level]
    size = [int(v) for v in size]
    perim = [int(v) for v in perim]
    parent = [int(v) for v in parent]
    nn = len(level)
    big = [-1] * nn
    for i in range(nn):
        p = parent[i]
        if p >= 0:
            if big[p] < 0 or size[i] > size[big[p]] or (size[i] == size[big[p]] and i < big[p]):
                big[p] = i
    best = np.zeros(nn, dtype=np.float64)
    blev = np.zeros(nn, dtype=np.int64)
    for i in range(nn):
        p = parent[i]
        lo_lv = level[p] + 1 if p >= 0 else 0
        bmax = -1.0
        ties = []
        for I in range(lo_lv, level[i] + 1):
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
                        r = cap if da == 0 else perim[i] / float(da)
                        r = min(r, cap)
            if r > bmax:
                bmax = r
                ties = []
            if r == bmax:
                ties.append(I)
        best[i] = bmax if bmax > 0 else 0.0
        blev[i] = ties[(len(ties) - 1) // 2]
    return best, blev, np.asarray(big, dtype=np.int64)


def component_mask(block, level, seed):
    b = np.asarray(block, dtype=np.uint8)
    h, w = b.shape
    out = np.zeros((h, w), dtype=np.uint8)
    sy, sx = divmod(int(seed), w)
    if b[sy, sx] < level:
        return out
    rows = b.tolist()
    seen = [[False] * w for _ in range(h)]
    seen[sy][sx] = True
    stack = [(sy, sx)]
    while stack:
        y, x = stack.pop()
        for ny in range(y - 1, y + 2):
            for nx in range(x - 1, x + 2):
                if 0 <= ny < h and 0 <= nx < w and not seen[ny][nx] and rows[ny][nx] >= level:
                    seen[ny][nx] = True
                    stack.append((ny, nx))
    out[np.asarray(seen)] = 1
    return out
