"""Batch accounting for the iterative screening stage."""

from collections import deque


def count_batch(prefixes, r_w):
    """Largest ``r >= r_w`` such that every prefix in the group reaches ``r``."""
    prefixes = list(prefixes)
    if not prefixes:
        return r_w
    return max(r_w, min(prefixes))


def next_dispatch(survivors, counts, q_global):
    """Pure form of the dispatch rule.

    Returns ``(system_id, batch_index, q_global)``: the lowest-id survivor
    whose dispatched-batch count equals ``q_global``, raising ``q_global``
    first when every survivor has passed it.  ``counts`` maps id to count.
    """
    survivors = sorted(survivors)
    if not survivors:
        raise ValueError("no survivors to dispatch")
    while all(counts[i] > q_global for i in survivors):
        q_global += 1
    for i in survivors:
        if counts[i] == q_global:
            return i, counts[i] + 1, q_global
    # counts below q_global cannot arise under this rule; serve the laggard
    i = min(survivors, key=lambda s: (counts[s], s))
    return i, counts[i] + 1, q_global


class DispatchQueue:
    """Incremental version of :func:`next_dispatch` with a per-system cap.

    Survivors at level ``q_global`` are kept in an id-ordered deque, so each
    dispatch is amortised O(1).  Systems removed from the survivor set are
    skipped lazily.
    """

    def __init__(self, survivors, cap):
        self.alive = set(int(i) for i in survivors)
        self.counts = {i: 0 for i in self.alive}
        self.cap = cap
        self.q_global = 0
        self._level = deque(sorted(self.alive))

    def remove(self, system_id):
        self.alive.discard(system_id)

    def next(self):
        """``(system_id, batch_index)`` or ``None`` once every survivor hit the cap."""
        if self.cap <= 0:
            return None
        while True:
            while self._level:
                i = self._level.popleft()
                if i in self.alive and self.counts[i] == self.q_global:
                    self.counts[i] += 1
                    return i, self.counts[i]
            if not self.alive or self.q_global + 1 >= self.cap:
                return None
            self.q_global += 1
            self._level = deque(sorted(i for i in self.alive if self.counts[i] == self.q_global))
