"""Compiled inner loops for tree-indexed walks.

Every tree is a deterministic function of a 64-bit key: a vertex's key is
derived from its parent's key and its planar child index, and all of its
randomness (offspring count, incoming edge step, special-child choice) is
a hash of that key.  Nothing is drawn for vertices that are never visited,
so pruning one subtree cannot shift the randomness of any other, and a run
with a larger stop radius explores a superset of the vertices of a run with
a smaller one.

Point sets are open-addressing hash tables (``slots`` maps a hash slot to a
row of ``coords`` or -1).  ``flags[i] & 1`` marks row i as part of the
target set K; every row belongs to the recording window.

The hot loops are written out by hand: calling a helper that takes arrays
costs an order of magnitude more than the work it does.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

SALT_COUNT = np.uint64(0x243F6A8885A308D3)
SALT_STEP = np.uint64(0x13198A2E03707344)
SALT_SPECIAL = np.uint64(0xA4093822299F31D0)
SALT_ROOT = np.uint64(0x082EFA98EC4E6C89)
SALT_SPINE = np.uint64(0x452821E638D01377)

# odd multipliers for coordinate hashing, one per axis (d <= 8)
COORD_MULT = np.array([
    0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9,
    0xD6E8FEB86659FD93, 0xFF51AFD7ED558CCD, 0xC4CEB9FE1A85EC53,
    0x27D4EB2F165667C5, 0x94D049BB133111EB], dtype=np.uint64)
_OFF = 0x100000

_INV53 = 1.0 / 9007199254740992.0

FLAG_STOP_ON_PAST_HIT = 1
FLAG_SKIP_FUTURE = 2
FLAG_RECORD = 4
FLAG_STOP_ON_HIT = 8
FLAG_COUNT = 16

# residual accumulator columns
RES_CRIT_BOX = 0     # dist(y, K-box)^(2-d) summed over pruned critical roots
RES_SPINE_BOX = 1    # dist(s, K-box)^(4-d) for the pruned spine tail
RES_CRIT_CTR = 2     # same with |y - anchor_j| in column 2 + 2j
RES_SPINE_CTR = 3    # and column 3 + 2j

# stats columns
ST_NODES = 0
ST_HIT = 1
ST_TRUNC = 2
ST_HIT_DEPTH = 3


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def child_key(parent, index):
    return mix64(parent ^ mix64((np.uint64(index) + np.uint64(1)) * _GOLDEN))


@njit(cache=True)
def spine_key(key, i):
    return mix64(key ^ mix64(np.uint64(i) * _GOLDEN + SALT_SPINE))


@njit(cache=True)
def root_key(key):
    return mix64(key ^ SALT_ROOT)


@njit(cache=True)
def uniform(key, salt):
    return np.float64(mix64(key ^ salt) >> _S11) * _INV53


@njit(cache=True)
def draw(cdf, u):
    k = 0
    n = cdf.shape[0]
    while k < n - 1 and u >= cdf[k]:
        k += 1
    return k


@njit(cache=True)
def step_index(key, d):
    idx = int(uniform(key, SALT_STEP) * 2 * d)
    if idx >= 2 * d:
        idx = 2 * d - 1
    return idx


@njit(cache=True)
def spine_split(key, cdf_sb):
    """(past_count, future_count) at a non-root spine vertex."""
    k = draw(cdf_sb, uniform(key, SALT_COUNT))
    if k < 1:
        k = 1
    j = int(uniform(key, SALT_SPECIAL) * k) + 1
    if j > k:
        j = k
    return j - 1, k - j


@njit(cache=True)
def hash_coords(coords, row, d):
    z = np.uint64(0)
    for a in range(d):
        z += np.uint64(coords[row, a] + _OFF) * COORD_MULT[a]
    return mix64(z)


@njit(cache=True)
def build_table(coords):
    """Open-addressing table over the rows of coords (assumed distinct)."""
    n, d = coords.shape
    size = 4
    while size < 2 * n + 2:
        size *= 2
    slots = np.full(size, -1, dtype=np.int64)
    mask = np.uint64(size - 1)
    for i in range(n):
        s = np.int64(hash_coords(coords, i, d) & mask)
        while slots[s] >= 0:
            s = (s + 1) & (size - 1)
        slots[s] = i
    return slots


@njit(cache=True)
def lookup(pos, coords, slots, lo, hi):
    d = pos.shape[0]
    for a in range(d):
        if pos[a] < lo[a] or pos[a] > hi[a]:
            return -1
    z = np.uint64(0)
    for a in range(d):
        z += np.uint64(pos[a] + _OFF) * COORD_MULT[a]
    size = slots.shape[0]
    s = np.int64(mix64(z) & np.uint64(size - 1))
    while True:
        r = slots[s]
        if r < 0:
            return -1
        same = True
        for a in range(d):
            if coords[r, a] != pos[a]:
                same = False
                break
        if same:
            return r
        s = (s + 1) & (size - 1)


@njit(cache=True)
def _record_mode(run_flags):
    if (run_flags & FLAG_COUNT) != 0:
        return 2
    if (run_flags & FLAG_RECORD) != 0:
        return 1
    return 0


@njit(cache=True)
def _mark(r, side, marks, stamp, out, counts, record):
    if record == 2:
        marks[r] += 1
    elif record == 1:
        v = marks[r]
        if (v >> 2) != stamp:
            v = stamp << 2
        bit = 1 << side
        if (v & bit) == 0:
            v |= bit
            n = counts[side]
            if n < out.shape[1]:
                out[side, n] = r
            counts[side] = n + 1
        marks[r] = v


@njit(cache=True)
def _subtree(key, pos0, root_cdf, cdf_mu, d, center, r2,
             lo, hi, coords, slots, flags, marks, stamp, out, counts,
             side, record, klo, khi, anchors, stop_on_hit, stats, res,
             max_nodes, stack_keys, stack_pos, stack_depth, path):
    """Depth-first exploration of one Galton-Watson subtree.

    The subtree root (already positioned at pos0) gets its offspring from
    root_cdf, every other vertex from cdf_mu.  Vertices farther than
    sqrt(r2) from center are visited but not expanded.
    """
    n_mu = cdf_mu.shape[0]
    n_root = root_cdf.shape[0]
    max_h = path.shape[0]
    max_stack = stack_keys.shape[0]
    size = slots.shape[0]
    smask = np.uint64(size - 1)
    top = 0
    stack_keys[0] = key
    for a in range(d):
        stack_pos[0, a] = pos0[a]
    stack_depth[0] = 0
    nodes = stats[ST_NODES]
    while top >= 0:
        k = stack_keys[top]
        h = stack_depth[top]
        s2 = 0.0
        inbox = True
        z = np.uint64(0)
        for a in range(d):
            c = stack_pos[top, a]
            path[h, a] = c
            t = c - center[a]
            s2 += t * t
            if c < lo[a] or c > hi[a]:
                inbox = False
            z += np.uint64(c + _OFF) * COORD_MULT[a]
        top -= 1
        nodes += 1.0
        if nodes > max_nodes:
            stats[ST_NODES] = nodes
            stats[ST_TRUNC] = 1.0
            return
        if inbox:
            s = np.int64(mix64(z) & smask)
            while True:
                r = slots[s]
                if r < 0:
                    break
                same = True
                for a in range(d):
                    if coords[r, a] != path[h, a]:
                        same = False
                        break
                if same:
                    _mark(r, side, marks, stamp, out, counts, record)
                    if (flags[r] & 1) != 0:
                        if stats[ST_HIT] == 0.0:
                            stats[ST_HIT] = 1.0
                            stats[ST_HIT_DEPTH] = h
                        if stop_on_hit:
                            stats[ST_NODES] = nodes
                            return
                    break
                s = (s + 1) & (size - 1)
        if s2 > r2:
            dist2 = 0.0
            for a in range(d):
                c = path[h, a]
                if c < klo[a]:
                    dist2 += (klo[a] - c) ** 2
                elif c > khi[a]:
                    dist2 += (c - khi[a]) ** 2
            if dist2 < 1.0:
                dist2 = 1.0
            res[side, RES_CRIT_BOX] += dist2 ** (-0.5 * (d - 2))
            for j in range(anchors.shape[0]):
                t2 = 0.0
                for a in range(d):
                    t2 += (path[h, a] - anchors[j, a]) ** 2
                res[side, RES_CRIT_CTR + 2 * j] += max(t2, 1.0) ** (-0.5 * (d - 2))
            continue
        u = uniform(k, SALT_COUNT)
        nc = 0
        if h == 0:
            while nc < n_root - 1 and u >= root_cdf[nc]:
                nc += 1
        else:
            while nc < n_mu - 1 and u >= cdf_mu[nc]:
                nc += 1
        if nc > 0 and h + 1 >= max_h:
            stats[ST_TRUNC] = 1.0
            continue
        # push in reverse planar order so the leftmost child is explored first
        for c in range(nc - 1, -1, -1):
            ck = child_key(k, c)
            top += 1
            if top >= max_stack:
                stats[ST_NODES] = nodes
                stats[ST_TRUNC] = 1.0
                return
            stack_keys[top] = ck
            si = step_index(ck, d)
            for a in range(d):
                stack_pos[top, a] = path[h, a]
            if si % 2 == 0:
                stack_pos[top, si // 2] += 1
            else:
                stack_pos[top, si // 2] -= 1
            stack_depth[top] = h + 1
    stats[ST_NODES] = nodes


@njit(cache=True)
def run_tree(key, start, root_cdf, cdf_mu, center, r2,
             lo, hi, coords, slots, flags, marks, stamp, out, klo, khi,
             anchors, run_flags, max_nodes, stack_keys, stack_pos, stack_depth, path,
             path_out, res):
    """Walk indexed by a finite GW tree (critical when root_cdf is cdf_mu,
    adjoint when root_cdf is the tail law).

    Returns (hit, nodes, truncated, n_recorded, hit_depth).  When hit,
    path_out[:hit_depth + 1] holds the walk along the geodesic from the root
    to the first vertex in depth-first order that lies in K.  res[1] gets
    the residual sums of pruned subtrees.
    """
    d = start.shape[0]
    stats = np.zeros(4)
    stats[ST_HIT_DEPTH] = -1.0
    counts = np.zeros(2, dtype=np.int64)
    record = _record_mode(run_flags)
    stop = (run_flags & FLAG_STOP_ON_HIT) != 0
    _subtree(key, start, root_cdf, cdf_mu, d, center, r2, lo, hi, coords,
             slots, flags, marks, stamp, out, counts, 1, record, klo, khi, anchors,
             True, stats, res, max_nodes, stack_keys, stack_pos, stack_depth,
             path)
    hit = stats[ST_HIT] > 0.0
    hd = int(stats[ST_HIT_DEPTH])
    if hit:
        # path still holds the ancestors of the first hitter
        for i in range(hd + 1):
            for a in range(d):
                path_out[i, a] = path[i, a]
        if not stop and stats[ST_TRUNC] == 0.0:
            stats[ST_NODES] = 0.0
            for j in range(res.shape[1]):
                res[1, j] = 0.0
            _subtree(key, start, root_cdf, cdf_mu, d, center, r2, lo, hi,
                     coords, slots, flags, marks, stamp, out, counts, 1,
                     record, klo, khi, anchors, False, stats, res, max_nodes,
                     stack_keys, stack_pos, stack_depth, path)
    return hit, stats[ST_NODES], stats[ST_TRUNC] > 0.0, counts[1], hd


@njit(cache=True)
def _shift(pos, key, d):
    si = step_index(key, d)
    if si % 2 == 0:
        pos[si // 2] += 1
    else:
        pos[si // 2] -= 1


@njit(cache=True)
def run_invariant(key, start, cdf_mu, cdf_sb, center, r2,
                  lo, hi, coords, slots, flags, marks, stamp, out, klo, khi,
                  anchors, run_flags, max_nodes, stack_keys, stack_pos, stack_depth,
                  path, spine_out, spine_keys, spine_fut, res):
    """Walk indexed by the infinite invariant tree, truncated at radius
    sqrt(r2) around center.

    Past side: spine vertices 1, 2, ... and the subtrees left of the spine.
    Future side: the root, the root's non-special children and the subtrees
    right of the spine.  The spine is followed until its first vertex
    outside the ball; that vertex is visited, its attachments are not.

    Returns (past_hit, future_hit, nodes, truncated, spine_len,
    n_past_recorded, n_future_recorded).  spine_out[:spine_len + 1] holds
    the spine positions (index 0 = root); res[0] and res[1] get the
    residual sums of the past and future sides.
    """
    d = start.shape[0]
    record = _record_mode(run_flags)
    stop_past = (run_flags & FLAG_STOP_ON_PAST_HIT) != 0
    skip_future = (run_flags & FLAG_SKIP_FUTURE) != 0
    counts = np.zeros(2, dtype=np.int64)
    pstats = np.zeros(4)
    fstats = np.zeros(4)
    truncated = False
    max_spine = spine_out.shape[0] - 1
    pos = start.copy()
    cpos = start.copy()
    for a in range(d):
        spine_out[0, a] = pos[a]
    n_sp = 0
    past_hit = False
    i = 1
    while True:
        if i > max_spine:
            truncated = True
            break
        sk = spine_key(key, i)
        spine_keys[i] = sk
        _shift(pos, sk, d)
        for a in range(d):
            spine_out[i, a] = pos[a]
        n_sp = i
        pstats[ST_NODES] += 1.0
        r = lookup(pos, coords, slots, lo, hi)
        if r >= 0:
            _mark(r, 0, marks, stamp, out, counts, record)
            if (flags[r] & 1) != 0:
                past_hit = True
                if stop_past:
                    break
        npast, nf = spine_split(sk, cdf_sb)
        spine_fut[i] = nf
        s2 = 0.0
        for a in range(d):
            s2 += (pos[a] - center[a]) ** 2
        if s2 > r2:
            dist2 = 0.0
            for a in range(d):
                if pos[a] < klo[a]:
                    dist2 += (klo[a] - pos[a]) ** 2
                elif pos[a] > khi[a]:
                    dist2 += (pos[a] - khi[a]) ** 2
            if dist2 < 1.0:
                dist2 = 1.0
            # the pruned tail carries past and future attachments alike,
            # so both sides get the same spine term
            for side in range(2):
                res[side, RES_SPINE_BOX] += dist2 ** (-0.5 * (d - 4))
                for j in range(anchors.shape[0]):
                    t2 = 0.0
                    for a in range(d):
                        t2 += (pos[a] - anchors[j, a]) ** 2
                    res[side, RES_SPINE_CTR + 2 * j] += max(t2, 1.0) ** (-0.5 * (d - 4))
            break
        for c in range(npast):
            ck = child_key(sk, c)
            for a in range(d):
                cpos[a] = pos[a]
            _shift(cpos, ck, d)
            _subtree(ck, cpos, cdf_mu, cdf_mu, d, center, r2, lo, hi, coords,
                     slots, flags, marks, stamp, out, counts, 0, record,
                     klo, khi, anchors, stop_past, pstats, res, max_nodes,
                     stack_keys, stack_pos, stack_depth, path)
            if pstats[ST_HIT] > 0.0:
                past_hit = True
            if pstats[ST_TRUNC] > 0.0:
                truncated = True
            if (past_hit and stop_past) or truncated:
                break
        if (past_hit and stop_past) or truncated:
            break
        i += 1

    future_hit = False
    if not skip_future and not (past_hit and stop_past) and not truncated:
        rk = root_key(key)
        fstats[ST_NODES] += 1.0
        r = lookup(start, coords, slots, lo, hi)
        if r >= 0:
            _mark(r, 1, marks, stamp, out, counts, record)
            if (flags[r] & 1) != 0:
                future_hit = True
        for j in range(0, n_sp + 1):
            s2 = 0.0
            for a in range(d):
                s2 += (spine_out[j, a] - center[a]) ** 2
            if s2 > r2:
                # attachments of the exit vertex were never expanded
                continue
            if j == 0:
                nf = draw(cdf_mu, uniform(rk, SALT_COUNT))
                base = rk
                first = 1
            else:
                base = spine_keys[j]
                nf = spine_fut[j]
                npast, _ = spine_split(base, cdf_sb)
                first = npast + 1
            for c in range(nf):
                ck = child_key(base, first + c)
                for a in range(d):
                    cpos[a] = spine_out[j, a]
                _shift(cpos, ck, d)
                _subtree(ck, cpos, cdf_mu, cdf_mu, d, center, r2, lo, hi,
                         coords, slots, flags, marks, stamp, out, counts, 1,
                         record, klo, khi, anchors, False, fstats, res, max_nodes,
                         stack_keys, stack_pos, stack_depth, path)
                if fstats[ST_HIT] > 0.0:
                    future_hit = True
                if fstats[ST_TRUNC] > 0.0:
                    truncated = True
                    break
            if truncated:
                break
    return (past_hit, future_hit, pstats[ST_NODES] + fstats[ST_NODES],
            truncated, n_sp, counts[0], counts[1])


@njit(cache=True)
def escape_batch(keys, start, cdf_mu, cdf_sb, center, r2, lo, hi, coords,
                 slots, flags, klo, khi, anchors, max_nodes, stack_keys, stack_pos,
                 stack_depth, path, spine_out, spine_keys, spine_fut,
                 out_avoid, out_res, out_nodes, out_seen):
    """Past-avoidance indicator for many independent trees from one start.

    out_avoid is 1 (avoided), 0 (hit) or -1 (truncated by a budget).  When
    out_seen has one column per table row, out_seen[i, r] tells whether the
    past of tree i visited row r before stopping.
    """
    rec = out_seen.shape[1] > 0
    nrow = coords.shape[0] if rec else 0
    marks = np.zeros(nrow, dtype=np.int64)
    out = np.zeros((2, nrow), dtype=np.int64)
    res = np.zeros((2, 2 + 2 * anchors.shape[0]))
    run_flags = FLAG_STOP_ON_PAST_HIT | FLAG_SKIP_FUTURE
    if rec:
        run_flags |= FLAG_RECORD
    for i in range(keys.shape[0]):
        res[:, :] = 0.0
        ph, fh, nodes, trunc, nsp, n0, n1 = run_invariant(
            keys[i], start, cdf_mu, cdf_sb, center, r2, lo, hi, coords, slots,
            flags, marks, i + 1, out, klo, khi, anchors, run_flags, max_nodes,
            stack_keys, stack_pos, stack_depth, path, spine_out, spine_keys,
            spine_fut, res)
        for j in range(n0):
            out_seen[i, out[0, j]] = True
        if trunc:
            out_avoid[i] = -1
        elif ph:
            out_avoid[i] = 0
        else:
            out_avoid[i] = 1
        for b in range(res.shape[1]):
            out_res[i, b] = res[0, b]
        out_nodes[i] = nodes


@njit(cache=True)
def hit_batch(keys, start, root_cdf, cdf_mu, center, r2, lo, hi, coords,
              slots, flags, klo, khi, anchors, max_nodes, stop_on_hit, stack_keys,
              stack_pos, stack_depth, path, out_hit, out_depth, out_res,
              out_nodes, out_trunc, out_paths):
    """Hit indicators of K for many finite trees started at one point.

    out_paths[i, :min(depth + 1, P)] receives the walk along the geodesic to
    the first hitter in depth-first order.
    """
    marks = np.zeros(0, dtype=np.int64)
    out = np.zeros((2, 0), dtype=np.int64)
    res = np.zeros((2, 2 + 2 * anchors.shape[0]))
    d = start.shape[0]
    P = out_paths.shape[1]
    path_out = np.zeros((path.shape[0], d), dtype=np.int64)
    run_flags = FLAG_STOP_ON_HIT if stop_on_hit else 0
    for i in range(keys.shape[0]):
        res[:, :] = 0.0
        hit, nodes, trunc, nrec, hd = run_tree(
            keys[i], start, root_cdf, cdf_mu, center, r2, lo, hi, coords,
            slots, flags, marks, 0, out, klo, khi, anchors, run_flags, max_nodes,
            stack_keys, stack_pos, stack_depth, path, path_out, res)
        out_hit[i] = hit
        out_depth[i] = hd
        out_nodes[i] = nodes
        out_trunc[i] = trunc
        for b in range(res.shape[1]):
            out_res[i, b] = res[1, b]
        if hit:
            for j in range(min(hd + 1, P)):
                for a in range(d):
                    out_paths[i, j, a] = path_out[j, a]


@njit(cache=True)
def count_batch(keys, start, cdf_mu, cdf_sb, center, r2, lo, hi, coords,
                slots, flags, klo, khi, anchors, max_nodes, skip_future, stack_keys,
                stack_pos, stack_depth, path, spine_out, spine_keys,
                spine_fut, out_counts, out_res, out_trunc):
    """Visits of the invariant-tree walk to each table row, per tree.

    out_counts[i, r] counts visits of tree i to row r (past side only when
    skip_future); out_res[i] holds the past residual sums.
    """
    nrow = coords.shape[0]
    marks = np.zeros(nrow, dtype=np.int64)
    out = np.zeros((2, 0), dtype=np.int64)
    res = np.zeros((2, 2 + 2 * anchors.shape[0]))
    run_flags = FLAG_COUNT
    if skip_future:
        run_flags |= FLAG_SKIP_FUTURE
    for i in range(keys.shape[0]):
        for r in range(nrow):
            marks[r] = 0
        res[:, :] = 0.0
        ph, fh, nodes, trunc, nsp, n0, n1 = run_invariant(
            keys[i], start, cdf_mu, cdf_sb, center, r2, lo, hi, coords, slots,
            flags, marks, 0, out, klo, khi, anchors, run_flags, max_nodes, stack_keys,
            stack_pos, stack_depth, path, spine_out, spine_keys, spine_fut,
            res)
        for r in range(nrow):
            out_counts[i, r] = marks[r]
        for b in range(res.shape[1]):
            out_res[i, b] = res[0, b]
        out_trunc[i] = trunc
