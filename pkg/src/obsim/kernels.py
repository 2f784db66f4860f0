"""Hot numeric kernels.

Each kernel has a numba implementation and a vectorised numpy twin with the
same contract. The public names dispatch to numba unless it is unavailable or
disabled through ``OBSIM_DISABLE_NUMBA``.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit

__all__ = [
    "HAVE_NUMBA",
    "GROW",
    "CONTENTION",
    "route_success_batch",
    "route_success_batch_numpy",
    "first_fit",
    "first_fit_numpy",
]

CONTENTION = -1
GROW = -2


# ---------------------------------------------------------------------------
# route success probability: product of (1 - DP) over each route's links
# ---------------------------------------------------------------------------

def route_success_batch_numpy(dp, links, lengths):
    # links is padded with len(dp), which maps to a zero dropping probability
    dp_ext = np.append(np.asarray(dp, dtype=np.float64), 0.0)
    return np.prod(1.0 - dp_ext[links], axis=1)


@njit(cache=True)
def _route_success_batch_nb(dp, links, lengths):
    n = lengths.shape[0]
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        p = 1.0
        for j in range(lengths[r]):
            p *= 1.0 - dp[links[r, j]]
        out[r] = p
    return out


# ---------------------------------------------------------------------------
# first-fit channel reservation over per-channel interval tables
# ---------------------------------------------------------------------------
#
# starts/ends: (channels, capacity) float64; counts: (channels,) int64.
# Slots [0, counts[c]) of row c hold the live intervals of channel c.
# Intervals with end <= now are pruned before the scan (requests never start
# before now). Returns the reserved channel, CONTENTION, or GROW when the
# chosen row is full (caller enlarges the table and retries).

def first_fit_numpy(starts, ends, counts, start, end, now, horizon=False):
    cap = starts.shape[1]
    live = np.arange(cap)[None, :] < counts[:, None]
    keep = live & (ends > now)
    stale = np.flatnonzero((live & ~keep).any(axis=1))
    for c in stale:
        row = keep[c]
        k = int(row.sum())
        starts[c, :k] = starts[c, row]
        ends[c, :k] = ends[c, row]
        counts[c] = k
    if stale.size:
        keep = np.arange(cap)[None, :] < counts[:, None]
    if horizon:
        blocking = keep & (ends > start)
    else:
        blocking = keep & (starts < end) & (ends > start)
    free = np.flatnonzero(~blocking.any(axis=1))
    if free.size == 0:
        return CONTENTION
    c = int(free[0])
    k = int(counts[c])
    if k == cap:
        return GROW
    starts[c, k] = start
    ends[c, k] = end
    counts[c] = k + 1
    return c


@njit(cache=True)
def _first_fit_nb(starts, ends, counts, start, end, now, horizon=False):
    nch = counts.shape[0]
    cap = starts.shape[1]
    for c in range(nch):
        k = 0
        for i in range(counts[c]):
            if ends[c, i] > now:
                starts[c, k] = starts[c, i]
                ends[c, k] = ends[c, i]
                k += 1
        counts[c] = k
        free = True
        for i in range(k):
            if horizon:
                if ends[c, i] > start:
                    free = False
                    break
            elif starts[c, i] < end and ends[c, i] > start:
                free = False
                break
        if free:
            if k == cap:
                return GROW
            starts[c, k] = start
            ends[c, k] = end
            counts[c] = k + 1
            return c
    return CONTENTION


if HAVE_NUMBA:
    route_success_batch = _route_success_batch_nb
    first_fit = _first_fit_nb
else:
    route_success_batch = route_success_batch_numpy
    first_fit = first_fit_numpy
