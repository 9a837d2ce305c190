"""Ordered assembly of batches that finish in arbitrary order."""

from dataclasses import dataclass

from ..errors import ProtocolViolation


@dataclass(frozen=True)
class BatchStat:
    system_id: int
    batch_index: int
    count: int
    mean: float


class Assembler:
    """Per-system store that only exposes the contiguous prefix of batches.

    Batch ``0`` is an optional base block (the first-stage sample).  Batches
    ``1, 2, ...`` may arrive in any order; cumulative statistics always use
    batches ``0..ready_prefix`` in index order, so they do not depend on the
    arrival order.
    """

    __slots__ = ("system_id", "_pending", "ready_prefix", "cum_counts", "cum_means", "_sum")

    def __init__(self, system_id, base_count=0, base_mean=0.0):
        self.system_id = system_id
        self._pending = {}
        self.ready_prefix = 0
        self._sum = base_count * base_mean
        self.cum_counts = [base_count]
        self.cum_means = [float(base_mean) if base_count else 0.0]

    def insert(self, stat):
        """Store a batch and return the new ready prefix."""
        r = stat.batch_index
        if r < 1:
            raise ProtocolViolation(f"batch index must be >= 1, got {r}")
        if r <= self.ready_prefix or r in self._pending:
            raise ProtocolViolation(f"duplicate batch {r} for system {self.system_id}")
        if stat.count <= 0:
            raise ProtocolViolation(f"batch {r} of system {self.system_id} is empty")
        self._pending[r] = stat
        while self.ready_prefix + 1 in self._pending:
            self.ready_prefix += 1
            nxt = self._pending.pop(self.ready_prefix)
            self._sum += nxt.count * nxt.mean
            count = self.cum_counts[-1] + nxt.count
            self.cum_counts.append(count)
            self.cum_means.append(self._sum / count)
        return self.ready_prefix

    @property
    def count(self):
        return self.cum_counts[-1]

    @property
    def mean(self):
        return self.cum_means[-1]

    def stats_through(self, r):
        """``(count, mean)`` after batches ``0..r``; requires ``r <= ready_prefix``."""
        if r > self.ready_prefix:
            raise ProtocolViolation(f"round {r} of system {self.system_id} is not assembled yet")
        return self.cum_counts[r], self.cum_means[r]

    @property
    def pending(self):
        return sorted(self._pending)


def assembler_insert(assembler, stat):
    return assembler.insert(stat)


def cumulative_mean(stats):
    """Replication-weighted mean of ``BatchStat`` objects (helper for tests)."""
    total = sum(s.count for s in stats)
    return sum(s.count * s.mean for s in stats) / total
