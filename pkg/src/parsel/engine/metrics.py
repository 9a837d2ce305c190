"""Run accounting: timing, utilization and the optional event trace."""

import json
from dataclasses import asdict, dataclass, field

from .messages import AssignScreen, AssignSimulate, BatchOutput, ScreenResult, Terminate, Wait


@dataclass(frozen=True)
class Metrics:
    """Summary of one procedure run.

    ``utilization`` is ``sim_time_total / (wall_clock * cores)``.
    """

    wall_clock: float
    sim_time_total: float
    screen_time_total: float
    replications_total: int
    utilization: float
    cores: int = 1
    replications_by_stage: dict = field(default_factory=dict)
    contacts: int = 0
    clock: str = "virtual"

    def to_dict(self):
        d = asdict(self)
        d["replications_by_stage"] = {str(k): v for k, v in sorted(self.replications_by_stage.items())}
        return d


def utilization(sim_time, wall_clock, cores):
    """Fraction of core time spent simulating, clipped to ``[0, 1]``."""
    if wall_clock <= 0 or cores <= 0:
        return 0.0
    return min(1.0, max(0.0, sim_time / (wall_clock * cores)))


class Trace:
    """Accumulates costs and, when ``record`` is set, a list of events."""

    def __init__(self, cores, record=False):
        self.cores = cores
        self.record = record
        self.events = []
        self.sim_time = 0.0
        self.screen_time = 0.0
        self.reps = {}
        self.contacts = 0
        self.wall_clock = 0.0
        self.clock = "virtual"

    def account(self, msg):
        if isinstance(msg, BatchOutput):
            self.sim_time += msg.cost
            self.reps[msg.stage] = self.reps.get(msg.stage, 0) + msg.count
        elif isinstance(msg, ScreenResult):
            self.screen_time += msg.cost

    def master_work(self, t, cost, label):
        self.screen_time += cost
        self.log(t, "master_work", -1, label=label, cost=cost)

    def log(self, t, event, worker, **payload):
        if self.record:
            self.events.append({"t": t, "event": event, "worker": worker, **payload})

    def log_message(self, t, worker, msg):
        if not self.record:
            return
        if isinstance(msg, AssignSimulate):
            self.log(t, "assign_simulate", worker, system=msg.system_id, batch=msg.batch_index,
                     count=msg.count, stream_batch=msg.stream_batch, stage=msg.stage)
        elif isinstance(msg, BatchOutput):
            self.log(t, "batch_output", worker, system=msg.system_id, batch=msg.batch_index,
                     count=msg.count, mean=msg.mean, stream_batch=msg.stream_batch,
                     stage=msg.stage, cost=msg.cost)
        elif isinstance(msg, AssignScreen):
            self.log(t, "assign_screen", worker, group=msg.group_id, window=[msg.first_round, msg.last_round],
                     systems=len(msg.ids), shared=[b.system_id for b in msg.shared], stage=msg.stage)
        elif isinstance(msg, ScreenResult):
            self.log(t, "screen_result", worker, group=msg.group_id, eliminated=sorted(msg.eliminated),
                     rounds_done=msg.rounds_done, best=list(msg.best), stage=msg.stage)
        elif isinstance(msg, Wait):
            self.log(t, "wait", worker)
        elif isinstance(msg, Terminate):
            self.log(t, "terminate", worker)

    def write_ndjson(self, path):
        from ..io import atomic_write

        atomic_write(path, "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events))


def compute_metrics(trace):
    """:class:`Metrics` from a finished :class:`Trace`."""
    reps = dict(trace.reps)
    return Metrics(
        wall_clock=trace.wall_clock,
        sim_time_total=trace.sim_time,
        screen_time_total=trace.screen_time,
        replications_total=int(sum(reps.values())),
        utilization=utilization(trace.sim_time, trace.wall_clock, trace.cores),
        cores=trace.cores,
        replications_by_stage=reps,
        contacts=trace.contacts,
        clock=trace.clock,
    )
