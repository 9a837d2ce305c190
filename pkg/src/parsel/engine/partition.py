"""Splitting systems into worker groups."""

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GroupAssignment:
    groups: tuple
    weights: tuple = None

    def loads(self):
        if self.weights is None:
            return tuple(len(g) for g in self.groups)
        w = dict(self.weights)
        return tuple(sum(w[i] for i in g) for g in self.groups)

    def group_of(self):
        return {i: g for g, members in enumerate(self.groups) for i in members}


def partition(systems, c, weights=None, seed=0):
    """Split ``systems`` into ``c`` disjoint groups.

    Without weights the systems are shuffled with ``seed`` and dealt round
    robin, so group sizes differ by at most one.  With weights, the
    longest-processing-time rule puts each system (heaviest first, ties by id)
    on the currently lightest group (ties by group index).  Groups are
    returned as sorted tuples.
    """
    systems = [int(s) for s in systems]
    if c < 1:
        raise ValueError(f"worker count must be positive, got {c}")
    groups = [[] for _ in range(c)]
    if weights is None:
        order = np.random.default_rng(seed).permutation(len(systems))
        for pos, idx in enumerate(order):
            groups[pos % c].append(systems[idx])
        return GroupAssignment(tuple(tuple(sorted(g)) for g in groups))
    weights = [float(w) for w in weights]
    if len(weights) != len(systems):
        raise ValueError("weights must align with systems")
    heap = [(0.0, g) for g in range(c)]
    for w, s in sorted(zip(weights, systems), key=lambda t: (-t[0], t[1])):
        load, g = heapq.heappop(heap)
        groups[g].append(s)
        heapq.heappush(heap, (load + w, g))
    return GroupAssignment(
        tuple(tuple(sorted(g)) for g in groups), tuple(zip(systems, weights))
    )
