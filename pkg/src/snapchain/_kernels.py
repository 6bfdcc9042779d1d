"""Numba kernels for the hot interval-union path of the simulators."""

import numpy as np
from numba import njit


@njit(cache=True)
def union_sorted_intervals(sa, la, sb, lb):
    """Union of two sorted interval lists, merging overlap and abutment.

    Inputs are int64 (start, length) pairs sorted by start within each
    list.  Returns the merged maximal runs as (starts, lengths).
    """
    na, nb = sa.size, sb.size
    out_s = np.empty(na + nb, np.int64)
    out_l = np.empty(na + nb, np.int64)
    m = 0
    i = 0
    j = 0
    cur_s = np.int64(-3)
    cur_e = np.int64(-3)
    while i < na or j < nb:
        if j >= nb or (i < na and sa[i] <= sb[j]):
            s = sa[i]
            e = s + la[i] - 1
            i += 1
        else:
            s = sb[j]
            e = s + lb[j] - 1
            j += 1
        if s > cur_e + 1:
            if cur_e >= 0:
                out_s[m] = cur_s
                out_l[m] = cur_e - cur_s + 1
                m += 1
            cur_s = s
            cur_e = e
        elif e > cur_e:
            cur_e = e
    if cur_e >= 0:
        out_s[m] = cur_s
        out_l[m] = cur_e - cur_s + 1
        m += 1
    return out_s[:m], out_l[:m]


@njit(cache=True)
def union_intervals_points(sa, la, pts):
    """Union of sorted intervals with sorted single-block points."""
    ones = np.ones(pts.size, np.int64)
    return union_sorted_intervals(sa, la, pts, ones)


@njit(cache=True)
def merged_chain_counts(sa, la, pts, cap):
    """Run-length histogram of the union of sorted intervals and points.

    counts[c] = number of maximal runs of length c for c < cap;
    counts[cap] pools every longer run.  counts.sum() is the total
    number of runs.  Avoids materializing the merged interval list.
    """
    counts = np.zeros(cap + 1, np.int64)
    na, npts = sa.size, pts.size
    i = 0
    j = 0
    cur_s = np.int64(-3)
    cur_e = np.int64(-3)
    while i < na or j < npts:
        if j >= npts or (i < na and sa[i] <= pts[j]):
            s = sa[i]
            e = s + la[i] - 1
            i += 1
        else:
            s = pts[j]
            e = s
            j += 1
        if s > cur_e + 1:
            if cur_e >= 0:
                ln = cur_e - cur_s + 1
                counts[ln if ln < cap else cap] += 1
            cur_s = s
            cur_e = e
        elif e > cur_e:
            cur_e = e
    if cur_e >= 0:
        ln = cur_e - cur_s + 1
        counts[ln if ln < cap else cap] += 1
    return counts


@njit(cache=True)
def accept_placements(s, l, acc_s, acc_e):
    """One round of non-touching chain placement.

    Proposals (s, l) are sorted by start; (acc_s, acc_e) are the sorted,
    mutually non-touching intervals accepted so far.  A proposal is
    rejected when it overlaps or abuts anything already emitted (an
    accepted interval or an earlier accepted proposal).  Returns the new
    accepted (starts, ends) and the rejected lengths.
    """
    n, m = s.size, acc_s.size
    out_s = np.empty(n + m, np.int64)
    out_e = np.empty(n + m, np.int64)
    rej = np.empty(n, np.int64)
    nr = 0
    k = 0
    j = 0
    last_e = np.int64(-3)
    for i in range(n):
        si = s[i]
        ei = si + l[i] - 1
        while j < m and acc_s[j] <= si:
            out_s[k] = acc_s[j]
            out_e[k] = acc_e[j]
            last_e = acc_e[j]
            k += 1
            j += 1
        if si <= last_e + 1 or (j < m and acc_s[j] <= ei + 1):
            rej[nr] = l[i]
            nr += 1
        else:
            out_s[k] = si
            out_e[k] = ei
            last_e = ei
            k += 1
    while j < m:
        out_s[k] = acc_s[j]
        out_e[k] = acc_e[j]
        k += 1
        j += 1
    return out_s[:k], out_e[:k], rej[:nr]
