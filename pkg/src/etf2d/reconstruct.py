"""Re-indexing delayed measurements to state time.

At the current index ``(i, j)`` the receiver holds, for every receipt index
``(a, b)``, the channels ``c`` with ``a >= di_c`` and ``b >= dj_c``.  Grouping
them by receipt index gives the original (delayed) sequence over the
T-regions.  Grouping them by the state they describe, ``(a - di_c, b - dj_c)``,
gives the delay-free sequence over the S-regions: a cell in ``S_s`` stacks
channels ``0 .. N - s``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from .errors import DataError, OutOfScopeError
from .system2d import validate_delays


def _box(l0, l1, k0, k1):
    """Cells with l0 <= l <= l1 and k0 <= k <= k1 (empty when inverted)."""
    return frozenset((l, k) for l in range(l0, l1 + 1) for k in range(k0, k1 + 1))


@dataclass(frozen=True)
class RegionPartition:
    delays: tuple
    i: int
    j: int
    S_regions: tuple          # S_0 .. S_N; S_s stacks channels 0 .. N - s
    T_regions: tuple          # T_0 .. T_N; T_s holds receipt cells with channels 0 .. s

    @property
    def N(self):
        return len(self.delays) - 1

    def depth(self, l, k):
        for s, region in enumerate(self.S_regions):
            if (l, k) in region:
                return self.N - s
        raise DataError(f"cell {(l, k)} is outside the partition")

    def cells(self):
        return [(l, k) for l in range(self.i + 1) for k in range(self.j + 1)]


def partition_regions(delays, i, j):
    """Build the state-time S-regions and receipt-time T-regions at current index (i, j)."""
    delays = validate_delays(delays)
    N = len(delays) - 1
    if i < delays[N][0] or j < delays[N][1]:
        raise OutOfScopeError(f"current index {(i, j)} precedes the largest delay {delays[N]}")
    ii = [i - delays[N - s][0] for s in range(N + 1)]
    jj = [j - delays[N - s][1] for s in range(N + 1)]
    S = [_box(0, ii[0], 0, jj[0])]
    for s in range(1, N + 1):
        minus = _box(0, ii[s - 1], jj[s - 1] + 1, jj[s])
        circ = _box(ii[s - 1] + 1, ii[s], jj[s - 1] + 1, jj[s])
        plus = _box(ii[s - 1] + 1, ii[s], 0, jj[s - 1])
        S.append(minus | circ | plus)

    T = []
    for s in range(N):
        (di, dj), (di1, dj1) = delays[s], delays[s + 1]
        plus = _box(di, di1 - 1, dj1, j)
        circ = _box(di, di1 - 1, dj, dj1 - 1)
        minus = _box(di1, i, dj, dj1 - 1)
        T.append(plus | circ | minus)
    T.append(_box(delays[N][0], i, delays[N][1], j))
    return RegionPartition(delays, i, j, tuple(S), tuple(T))


def depth_map(delays, i, j):
    """Stack depth of every state cell in ``[0, i] x [0, j]``.

    ``depth[l, k]`` is the largest channel whose measurement of ``x(l, k)`` has
    arrived by ``(i, j)``.  Before the largest delay has elapsed this degrades
    cell by cell, which is how the startup corner is handled.
    """
    delays = validate_delays(delays)
    l = np.arange(i + 1)[:, None]
    k = np.arange(j + 1)[None, :]
    depth = np.full((i + 1, j + 1), -1)
    for c, (di, dj) in enumerate(delays):
        depth[(l + di <= i) & (k + dj <= j)] = c
    return depth


def check_partition(partition):
    """Return a list of problems; empty when both partitions are disjoint and covering."""
    problems = []
    universe = set(partition.cells())
    for name, regions in (("S", partition.S_regions), ("T", partition.T_regions)):
        seen = set()
        for s, region in enumerate(regions):
            overlap = seen & region
            if overlap:
                problems.append(f"{name}_{s} overlaps earlier regions at {sorted(overlap)[:3]}")
            seen |= region
        if seen != universe:
            missing = sorted(universe - seen)[:3]
            extra = sorted(seen - universe)[:3]
            problems.append(f"{name}-regions miss {missing} / exceed grid at {extra}")
    depth = depth_map(partition.delays, partition.i, partition.j)
    for s, region in enumerate(partition.S_regions):
        for l, k in region:
            if 0 <= l <= partition.i and 0 <= k <= partition.j and depth[l, k] != partition.N - s:
                problems.append(f"S_{s} cell {(l, k)} has availability depth {depth[l, k]}")
                break
    return problems


def original_components(partition):
    """Multiset of (channel, receipt index) carried by the delayed sequence."""
    out = []
    for s, region in enumerate(partition.T_regions):
        for a, b in region:
            out.extend((c, a, b) for c in range(s + 1))
    return sorted(out)


def reconstructed_components(partition, delays=None):
    """Multiset of (channel, receipt index) consumed by the delay-free sequence."""
    delays = partition.delays if delays is None else delays
    N = partition.N
    out = []
    for s, region in enumerate(partition.S_regions):
        for l, k in region:
            out.extend((c, l + delays[c][0], k + delays[c][1]) for c in range(N - s + 1))
    return sorted(out)


def bijection_holds(partition, delays=None):
    return original_components(partition) == reconstructed_components(partition, delays)


@dataclass
class StackedMeasurement:
    values: np.ndarray
    depth: int
    sources: list = field(default_factory=list)     # (channel, (a, b)) per block
    stacked_C: Optional[np.ndarray] = None
    stacked_R: Optional[np.ndarray] = None


def stacked_model(model, depth, idx, grid=None):
    """Block-column C and block-diagonal R of the channels ``0 .. depth`` describing ``x(idx)``."""
    l, k = idx
    Cs, Rs = [], []
    for c in range(depth + 1):
        di, dj = model.delays[c]
        a, b = l + di, k + dj
        if l < 0 or k < 0 or (grid is not None and (a > grid or b > grid)):
            raise DataError(f"channel {c} receipt index {(a, b)} is outside the grid")
        Cs.append(np.asarray(model.C(c, (a, b)), dtype=float))
        Rs.append(np.asarray(model.R(c, (a, b)), dtype=float))
    return np.vstack(Cs), block_diag(*Rs)


def reconstruct_sequence(decoded, partition, delays=None, model=None):
    """Stack decoded receipt-time values into delay-free vectors keyed by state cell.

    ``decoded[c]`` is an array indexed ``[a, b]`` (trailing measurement axis);
    NaN marks a value that never arrived.
    """
    delays = partition.delays if delays is None else delays
    N = partition.N
    out = {}
    for s, region in enumerate(partition.S_regions):
        depth = N - s
        for l, k in sorted(region):
            blocks, sources = [], []
            for c in range(depth + 1):
                a, b = l + delays[c][0], k + delays[c][1]
                field_c = decoded[c]
                if not (0 <= a < field_c.shape[0] and 0 <= b < field_c.shape[1]):
                    raise DataError(f"no decoded value for channel {c} at {(a, b)}")
                value = np.asarray(field_c[a, b], dtype=float)
                if np.any(np.isnan(value)):
                    raise DataError(f"no decoded value for channel {c} at {(a, b)}")
                blocks.append(np.atleast_1d(value))
                sources.append((c, (a, b)))
            item = StackedMeasurement(np.concatenate(blocks), depth, sources)
            if model is not None:
                item.stacked_C, item.stacked_R = stacked_model(model, depth, (l, k))
            out[(l, k)] = item
    return out


def gather_stack(fields, delays, depth, l, k):
    """Batched stack ``(T, (depth+1) m)`` from per-channel fields ``(T, P+1, P+1, m)``."""
    return np.concatenate(
        [fields[c][:, l + delays[c][0], k + delays[c][1]] for c in range(depth + 1)], axis=-1)


def region_rows(partition):
    """CSV-ready rows (l, k, region_id, stack_depth) in row-major order."""
    rows = []
    for l, k in partition.cells():
        depth = partition.depth(l, k)
        rows.append((l, k, partition.N - depth, depth))
    return rows
