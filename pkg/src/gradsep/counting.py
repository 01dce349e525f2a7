"""Small integer feasibility search behind every graded witness check.

A problem has *profiles* (bitmasks over a list of bodies chi_0..chi_{b-1}),
a capacity per profile, and for every body a lower bound and an optional
upper bound on the total count of chosen successors whose profile contains
it.  We look for counts n_p in 0..cap_p meeting every bound.
"""
from __future__ import annotations

from functools import lru_cache

__all__ = ["solve_counts", "requirements"]


def solve_counts(profiles, caps, lower, upper):
    """Return a list of counts (aligned with ``profiles``) or None.

    ``upper[j]`` is None for "no upper bound".  Bounds are small (at most
    the largest grade), so a memoised depth-first search is plenty.
    """
    nb = len(lower)
    # profiles hitting a body with upper bound 0 can never be used
    zero = 0
    for j in range(nb):
        if upper[j] is not None and upper[j] <= 0:
            zero |= 1 << j
    items = [(p, c, i) for i, (p, c) in enumerate(zip(profiles, caps)) if c > 0 and not p & zero]
    need = [lower[j] for j in range(nb)]
    if not any(need):
        return [0] * len(profiles)
    # a body with positive lower bound must be reachable at all
    reach = [0] * nb
    for p, c, _ in items:
        for j in range(nb):
            if (p >> j) & 1:
                reach[j] += c
    if any(reach[j] < need[j] for j in range(nb)):
        return None
    # most useful profiles first
    items.sort(key=lambda it: -bin(it[0]).count("1"))
    clip = [max(lower[j], (upper[j] + 1) if upper[j] is not None else 0) for j in range(nb)]
    # suffix capacity per body for the optimistic bound
    suffix = [[0] * nb for _ in range(len(items) + 1)]
    for i in range(len(items) - 1, -1, -1):
        p, c, _ = items[i]
        for j in range(nb):
            suffix[i][j] = suffix[i + 1][j] + (c if (p >> j) & 1 else 0)

    @lru_cache(maxsize=None)
    def go(i, sums):
        for j in range(nb):
            if sums[j] + suffix[i][j] < lower[j]:
                return None
        if all(sums[j] >= lower[j] for j in range(nb)):
            return ()
        if i == len(items):
            return None
        p, c, _ = items[i]
        room = c
        for j in range(nb):
            if (p >> j) & 1 and upper[j] is not None:
                room = min(room, upper[j] - sums[j])
        for n in range(room, -1, -1):
            if n:
                nxt = tuple(min(clip[j], sums[j] + n) if (p >> j) & 1 else sums[j] for j in range(nb))
            else:
                nxt = sums
            rest = go(i + 1, nxt)
            if rest is not None:
                return (n,) + rest
        return None

    got = go(0, tuple([0] * nb))
    if got is None:
        return None
    out = [0] * len(profiles)
    for (p, c, idx), n in zip(items, got):
        out[idx] = n
    return out


def requirements(grades):
    """Turn diamond membership into per-body bounds.

    ``grades[j]`` lists (k, present) for the diamonds ``dia>=k body_j``.
    Returns (lower, upper) lists aligned with ``grades``.
    """
    lower, upper = [], []
    for pairs in grades:
        lo, hi = 0, None
        for k, present in pairs:
            if present:
                lo = max(lo, k)
            else:
                hi = k - 1 if hi is None else min(hi, k - 1)
        lower.append(lo)
        upper.append(hi)
    return lower, upper
