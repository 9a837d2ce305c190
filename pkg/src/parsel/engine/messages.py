"""Value-type messages exchanged between the master and workers.

Workers send :class:`Hello`, :class:`BatchOutput`, :class:`ScreenResult` or
:class:`WorkerFailed`; the master answers with :class:`AssignSimulate`,
:class:`AssignScreen`, :class:`Wait` or :class:`Terminate`.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Hello:
    """First contact of a worker in a phase (carries no result)."""


@dataclass(frozen=True)
class AssignSimulate:
    """Simulate ``count`` replications of one system.

    ``batch_index`` is the position of the batch in the system's assembly
    order (0 for a first-stage block); ``stream_batch`` selects the random
    stream ``(seed, system_id, stream_batch)``.
    """

    system_id: int
    batch_index: int
    count: int
    stream_batch: int
    stage: int = 2

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError(f"batch count must be positive, got {self.count}")


@dataclass(frozen=True)
class BatchOutput:
    """Summary of one simulated batch; ``m2`` is the sum of squared deviations."""

    system_id: int
    batch_index: int
    count: int
    mean: float
    cost: float
    stream_batch: int
    stage: int = 2
    m2: float = 0.0


@dataclass(frozen=True, eq=False)
class BestStats:
    """Cumulative statistics of a shared good system, rounds ``0..len(means)-1``."""

    origin_group: int
    system_id: int
    counts: np.ndarray
    means: np.ndarray
    variance: float
    terminal: int


@dataclass(frozen=True, eq=False)
class AssignScreen:
    """Screen a group over rounds ``first_round..last_round`` inclusive.

    Row ``r - first_round`` of ``means``/``counts`` holds the cumulative
    statistics of every system in ``ids`` after round ``r``.
    """

    group_id: int
    first_round: int
    last_round: int
    ids: np.ndarray
    variances: np.ndarray
    terminal: np.ndarray
    means: np.ndarray
    counts: np.ndarray
    shared: tuple = ()
    share_count: int = 1
    within: bool = True
    stage: int = 2

    @property
    def rounds(self):
        return self.last_round - self.first_round + 1


@dataclass(frozen=True)
class ScreenResult:
    """Outcome of a screen task: eliminated ids and the group's current leaders."""

    group_id: int
    eliminated: frozenset
    rounds_done: int
    best: tuple = ()
    pairs: int = 0
    cost: float = 0.0
    stage: int = 2


@dataclass(frozen=True)
class Wait:
    """Nothing to do until another worker reports."""


@dataclass(frozen=True)
class Terminate:
    """End of the current phase for this worker."""


@dataclass(frozen=True)
class WorkerFailed:
    worker: int
    error: str = field(default="")
