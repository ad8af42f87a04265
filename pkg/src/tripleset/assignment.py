"""Exact linear assignment for square cost matrices.

Three solvers share one result type:

* :func:`hungarian` - O(m^3) shortest-augmenting-path Hungarian method with
  row/column potentials. This is the one used in training.
* :func:`munkres_reference` - the textbook four-step procedure (row minima,
  column minima, cover zeros with the fewest lines, create more zeros), kept as
  readable reference semantics and used to print the worked example.
* :func:`brute_force_assignment` - enumeration of all m! permutations, the test
  oracle.

All three break ties the same way: among the optimal permutations they return
the lexicographically smallest one (row 0 gets the lowest column it can take in
some optimal assignment, then row 1, and so on).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

BRUTE_FORCE_MAX = 9


@dataclass(frozen=True)
class Assignment:
    permutation: tuple[int, ...]  # permutation[i] = column given to row i
    total_cost: float

    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.permutation))


def validate_costs(costs) -> np.ndarray:
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {c.shape}")
    if c.shape[0] == 0:
        raise ValueError("cost matrix must be at least 1x1")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains non-finite entries")
    return c


def _tolerance(c: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.abs(c).max()))


def _total(c: np.ndarray, perm) -> float:
    return float(c[np.arange(len(perm)), list(perm)].sum())


def hungarian(costs) -> Assignment:
    """Minimum-cost perfect assignment of rows to columns.

    Negative entries are fine; only differences matter to the potentials.

    >>> hungarian([[4, 1, 3], [2, 0, 5], [3, 2, 2]]).permutation
    (1, 0, 2)
    """
    c = validate_costs(costs)
    m = c.shape[0]
    inf = np.inf
    # 1-based over columns; column 0 is the virtual source of each augmentation
    u = np.zeros(m + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.intp)  # owner[j] = row (1-based) holding column j
    way = np.zeros(m + 1, dtype=np.intp)
    for i in range(1, m + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            cur = c[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    perm = [0] * m
    for j in range(1, m + 1):
        perm[owner[j] - 1] = j - 1
    reduced = c - u[1:, None] - v[None, 1:]
    tight = reduced <= _tolerance(c) * m
    perm = _lexmin_matching(tight, perm)
    return Assignment(tuple(perm), _total(c, perm))


def _lexmin_matching(tight: np.ndarray, perm: list[int]) -> list[int]:
    """Lexicographically smallest perfect matching inside ``tight``.

    ``perm`` is a perfect matching using only tight edges. With optimal duals,
    the optimal assignments are exactly the perfect matchings on tight edges,
    so this picks the lexicographically smallest optimal permutation. Row i is
    moved to a smaller column j by finding an alternating path that re-homes
    j's current row among the still-free rows and ends on i's old column.
    """
    m = len(perm)
    perm = list(perm)
    row_of = [0] * m
    for r, col in enumerate(perm):
        row_of[col] = r
    adj = [np.flatnonzero(tight[r]).tolist() for r in range(m)]

    for i in range(m):
        target = perm[i]
        for j in adj[i]:
            if j >= target:
                break
            r = row_of[j]
            if r < i:
                continue
            path = _alternating_path(r, target, i, adj, perm, row_of)
            if path is None:
                continue
            # path: list of (row, new_col) reassignments
            for row, col in path:
                perm[row] = col
                row_of[col] = row
            perm[i] = j
            row_of[j] = i
            break
    return perm


def _alternating_path(start_row, goal_col, fixed_upto, adj, perm, row_of):
    # DFS over rows > fixed_upto; each step moves a row onto another tight column.
    seen = set()
    stack = [(start_row, iter(adj[start_row]), [])]
    seen.add(start_row)
    while stack:
        row, it, path = stack[-1]
        for col in it:
            if col == perm[row]:
                continue
            if col == goal_col:
                return path + [(row, col)]
            nxt = row_of[col]
            if nxt <= fixed_upto or nxt in seen:
                continue
            seen.add(nxt)
            stack.append((nxt, iter(adj[nxt]), path + [(row, col)]))
            break
        else:
            stack.pop()
    return None


# ---------------------------------------------------------------- reference

def _max_zero_matching(zero: np.ndarray) -> list[int]:
    """Kuhn's augmenting-path matching on the zero pattern; returns row->col or -1."""
    m = zero.shape[0]
    col_owner = [-1] * m

    def try_row(r, seen):
        for col in np.flatnonzero(zero[r]):
            if seen[col]:
                continue
            seen[col] = True
            if col_owner[col] < 0 or try_row(col_owner[col], seen):
                col_owner[col] = r
                return True
        return False

    for r in range(m):
        try_row(r, [False] * m)
    match = [-1] * m
    for col, r in enumerate(col_owner):
        if r >= 0:
            match[r] = col
    return match


def cover_zeros(zero: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fewest lines covering every zero (Konig's construction).

    Returns boolean masks ``(covered_rows, covered_cols)``; the number of
    lines equals the size of a maximum matching on the zeros.
    """
    m = zero.shape[0]
    match = _max_zero_matching(zero)
    col_owner = {c: r for r, c in enumerate(match) if c >= 0}
    reach_rows = np.zeros(m, dtype=bool)
    reach_cols = np.zeros(m, dtype=bool)
    frontier = [r for r in range(m) if match[r] < 0]
    reach_rows[frontier] = True
    while frontier:
        nxt = []
        for r in frontier:
            for col in np.flatnonzero(zero[r]):
                if reach_cols[col]:
                    continue
                reach_cols[col] = True
                owner = col_owner.get(col)
                if owner is not None and not reach_rows[owner]:
                    reach_rows[owner] = True
                    nxt.append(owner)
        frontier = nxt
    return ~reach_rows, reach_cols


def munkres_reference(costs, trace: list | None = None) -> Assignment:
    """Textbook four-step Hungarian method.

    If ``trace`` is a list, ``(step_name, matrix_copy, n_lines)`` tuples are
    appended to it as the algorithm runs.
    """
    c = validate_costs(costs)
    m = c.shape[0]
    tol = _tolerance(c) * m
    work = c - c.min(axis=1, keepdims=True)
    if trace is not None:
        trace.append(("subtract row minima", work.copy(), None))
    work = work - work.min(axis=0, keepdims=True)
    if trace is not None:
        trace.append(("subtract column minima", work.copy(), None))
    while True:
        zero = np.abs(work) <= tol
        rows, cols = cover_zeros(zero)
        n_lines = int(rows.sum() + cols.sum())
        if trace is not None:
            trace.append(("cover zeros", work.copy(), n_lines))
        if n_lines >= m:
            break
        uncovered = ~rows[:, None] & ~cols[None, :]
        k = work[uncovered].min()
        work = work - k * uncovered + k * (rows[:, None] & cols[None, :])
        if trace is not None:
            trace.append((f"create zeros (k={k:g})", work.copy(), None))
    zero = np.abs(work) <= tol
    perm = _max_zero_matching(zero)
    perm = _lexmin_matching(zero, perm)
    return Assignment(tuple(perm), _total(c, perm))


# ---------------------------------------------------------------- oracle

@lru_cache(maxsize=None)
def _all_permutations(m: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(m))), dtype=np.intp).reshape(-1, m)


def brute_force_assignment(costs) -> Assignment:
    """Enumerate every permutation (m <= 9); first minimum in lexicographic order."""
    c = validate_costs(costs)
    m = c.shape[0]
    if m > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to m <= {BRUTE_FORCE_MAX}, got {m}")
    perms = _all_permutations(m)
    totals = c[np.arange(m), perms].sum(axis=1)
    best = totals.min()
    idx = int(np.flatnonzero(totals <= best + _tolerance(c) * m)[0])
    perm = tuple(int(x) for x in perms[idx])
    return Assignment(perm, _total(c, perm))
