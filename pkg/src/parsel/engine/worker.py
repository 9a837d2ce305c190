"""Worker-side task execution."""

import time

import numpy as np

from ..core_stats import screen_rounds
from ..rng import stream_key
from .messages import AssignScreen, AssignSimulate, BatchOutput, ScreenResult


class Worker:
    """Executes simulate and screen tasks for one worker id.

    Args:
        wid: Worker id.
        model: Simulation model.
        seed: Root seed of the run.
        eta: Screening constant.
        n1: First-stage sample size.
        screen_cost: Modelled seconds per screened pair.
        measure: Report thread CPU time instead of modelled costs.
    """

    def __init__(self, wid, model, seed, eta=None, n1=None, screen_cost=1e-7, measure=False):
        self.wid = wid
        self.model = model
        self.seed = seed
        self.eta = eta
        self.n1 = n1
        self.screen_cost = screen_cost
        self.measure = measure

    def handle(self, msg):
        """Run one task and return ``(result message, cost in seconds)``."""
        if isinstance(msg, AssignSimulate):
            return self.simulate(msg)
        if isinstance(msg, AssignScreen):
            return self.screen(msg)
        raise TypeError(f"worker cannot handle {type(msg).__name__}")

    def simulate(self, task):
        t0 = time.thread_time()
        key = stream_key(self.seed, task.system_id, task.stream_batch)
        values, costs = self.model.replicate_batch(task.system_id, key, 0, task.count)
        mean = float(values.mean())
        m2 = float(np.square(values - mean).sum())
        cost = time.thread_time() - t0 if self.measure else float(costs.sum())
        out = BatchOutput(
            task.system_id,
            task.batch_index,
            task.count,
            mean,
            cost,
            task.stream_batch,
            task.stage,
            m2,
        )
        return out, cost

    def screen(self, task):
        t0 = time.thread_time()
        ids = task.ids
        rounds = [(task.means[r], task.counts[r]) for r in range(task.rounds)]
        others = []
        for r in range(task.first_round, task.last_round + 1):
            refs = [b for b in task.shared if len(b.means) > r]
            others.append(
                (
                    [b.system_id for b in refs],
                    [b.means[r] for b in refs],
                    [b.counts[r] for b in refs],
                    [b.terminal for b in refs],
                    [b.variance for b in refs],
                )
                if refs
                else None
            )
        eliminated = screen_rounds(
            ids,
            rounds,
            self.eta,
            self.n1,
            task.terminal,
            task.variances,
            others=others,
            within=task.within,
        )
        alive = ~eliminated
        pairs = _pair_count(alive, eliminated, task, others)
        last = task.means[-1]
        keep = np.flatnonzero(alive)
        # leaders: highest current mean, ties to the lowest id
        order = sorted(keep, key=lambda j: (-last[j], ids[j]))[: task.share_count]
        best = tuple(int(ids[j]) for j in order)
        cost = time.thread_time() - t0 if self.measure else pairs * self.screen_cost
        result = ScreenResult(
            task.group_id,
            frozenset(int(i) for i in ids[eliminated]),
            task.last_round,
            best,
            pairs,
            cost,
            task.stage,
        )
        return result, cost


def _pair_count(alive, eliminated, task, others):
    # upper bound on comparisons: every system alive at the start of the window
    m = len(task.ids)
    refs = sum(len(o[0]) for o in others if o is not None)
    within = m * (m - 1) * task.rounds if task.within else 0
    return int(within + m * refs)
