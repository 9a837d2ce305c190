"""Master/worker execution engine."""

from .assembler import Assembler, BatchStat, assembler_insert, cumulative_mean
from .dispatch import DispatchQueue, count_batch, next_dispatch
from .executors import (
    EXECUTORS,
    Executor,
    RoundsExecutor,
    SerialExecutor,
    ThreadedExecutor,
    make_executor,
)
from .messages import (
    AssignScreen,
    AssignSimulate,
    BatchOutput,
    BestStats,
    Hello,
    ScreenResult,
    Terminate,
    Wait,
    WorkerFailed,
)
from .metrics import Metrics, Trace, compute_metrics, utilization
from .partition import GroupAssignment, partition
from .stages import SharedQueuePhase, Stage2Master, Stage2State, TaskListPhase
from .worker import Worker

__all__ = [
    "Assembler", "AssignScreen", "AssignSimulate", "BatchOutput", "BatchStat", "BestStats",
    "DispatchQueue", "EXECUTORS", "Executor", "GroupAssignment", "Hello", "Metrics",
    "RoundsExecutor", "ScreenResult", "SerialExecutor", "SharedQueuePhase", "Stage2Master",
    "Stage2State", "TaskListPhase", "Terminate", "ThreadedExecutor", "Trace", "Wait", "Worker",
    "WorkerFailed", "assembler_insert", "compute_metrics", "count_batch", "cumulative_mean",
    "make_executor", "next_dispatch", "partition", "utilization",
]
