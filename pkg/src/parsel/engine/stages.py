"""Master-side phase drivers.

A phase answers worker contacts: ``on_contact(w, msg)`` receives the worker's
latest report (``Hello`` on first contact) and returns the next instruction.
Executors differ only in how contacts are ordered and timed.
"""

import numpy as np

from ..errors import ProtocolViolation
from .assembler import BatchStat
from .dispatch import DispatchQueue, count_batch
from .messages import (
    AssignScreen,
    AssignSimulate,
    BatchOutput,
    BestStats,
    Hello,
    ScreenResult,
    Terminate,
    Wait,
)


class TaskListPhase:
    """Each worker works through its own fixed task list.

    Args:
        tasks: One list of task messages per worker.
    """

    def __init__(self, tasks):
        self.tasks = [list(t) for t in tasks]
        self._next = [0] * len(tasks)
        self.results = []
        self.outstanding = 0

    def on_contact(self, w, msg):
        self._record(msg)
        j = self._next[w]
        if j < len(self.tasks[w]):
            self._next[w] = j + 1
            self.outstanding += 1
            return self.tasks[w][j]
        return Terminate()

    def _record(self, msg):
        if isinstance(msg, Hello):
            return
        self.outstanding -= 1
        self.results.append(msg)

    def sorted_results(self):
        """Results in a scheduling-independent order."""
        def key(m):
            if isinstance(m, BatchOutput):
                return (0, m.system_id, m.batch_index)
            return (1, m.group_id, m.rounds_done)

        return sorted(self.results, key=key)


class SharedQueuePhase(TaskListPhase):
    """Any idle worker takes the next task from one shared queue."""

    def __init__(self, tasks):
        super().__init__([list(tasks)])

    def on_contact(self, w, msg):
        return super().on_contact(0, msg)


class Stage2State:
    """Shared state of the iterative screening stage.

    Holds per-system assemblers, per-group screening progress and the best
    systems each group shares.  Both the contact-driven master and the
    round-synchronous executor drive it.

    Args:
        groups: Survivor groups, one per worker (may be empty).
        assemblers: Map id -> :class:`Assembler` holding the first-stage block.
        variances: Map id -> first-stage variance.
        terminal: Map id -> scheduled terminal sample size.
        increments: Map id -> batch size.
        eta: Screening constant.
        n1: First-stage sample size.
        r_bar: Maximum number of rounds.
        share_count: Number of leaders each group shares.
        weights: Map id -> relative cost of one batch (load balancing).
    """

    def __init__(
        self,
        groups,
        assemblers,
        variances,
        terminal,
        increments,
        eta,
        n1,
        r_bar,
        share_count=1,
        weights=None,
    ):
        self.groups = [sorted(int(i) for i in g) for g in groups]
        self.assemblers = assemblers
        self.variances = variances
        self.terminal = terminal
        self.increments = increments
        self.eta = eta
        self.n1 = n1
        self.r_bar = r_bar
        self.share_count = share_count
        self.weights = weights or {}
        self.alive = set(i for g in self.groups for i in g)
        self.group_of = {i: w for w, g in enumerate(self.groups) for i in g}
        c = len(self.groups)
        self.r_sent = [0] * c
        self.r_screened = [0] * c
        self.best = [self._leaders(g, 0) for g in self.groups]
        self.eliminations = []  # (group, rounds_done, sorted ids)

    @property
    def workers(self):
        return len(self.groups)

    def _leaders(self, members, r):
        order = sorted(members, key=lambda i: (-self.assemblers[i].cum_means[r], i))
        return tuple(order[: self.share_count])

    def record(self, out):
        """Store a simulated batch; outputs of eliminated systems are kept."""
        if out.system_id not in self.assemblers:
            raise ProtocolViolation(f"output for unknown system {out.system_id}")
        self.assemblers[out.system_id].insert(
            BatchStat(out.system_id, out.batch_index, out.count, out.mean)
        )

    def ready_round(self, w):
        prefixes = (self.assemblers[i].ready_prefix for i in self.groups[w])
        return min(count_batch(prefixes, self.r_sent[w]), self.r_bar)

    def group_done(self, w):
        return not self.groups[w] or self.r_screened[w] >= self.r_bar

    def done(self):
        return len(self.alive) <= 1 or all(self.group_done(w) for w in range(self.workers))

    def shared_for(self, w, last_round):
        """Best statistics of other groups, rounds up to their screened window."""
        out = []
        for v, ids in enumerate(self.best):
            if v == w or not self.groups[v]:
                continue
            upto = min(self.r_screened[v], last_round)
            for i in ids:
                a = self.assemblers[i]
                out.append(
                    BestStats(
                        v,
                        i,
                        np.array(a.cum_counts[: upto + 1], dtype=float),
                        np.array(a.cum_means[: upto + 1]),
                        self.variances[i],
                        self.terminal[i],
                    )
                )
        return tuple(out)

    def make_screen(self, w, first, last, within=True, shared=True):
        ids = self.groups[w]
        rows = range(first, last + 1)
        asm = [self.assemblers[i] for i in ids]
        means = np.array([[a.cum_means[r] for a in asm] for r in rows])
        counts = np.array([[a.cum_counts[r] for a in asm] for r in rows], dtype=float)
        self.r_sent[w] = max(self.r_sent[w], last)
        return AssignScreen(
            group_id=w,
            first_round=first,
            last_round=last,
            ids=np.array(ids, dtype=np.int64),
            variances=np.array([self.variances[i] for i in ids]),
            terminal=np.array([self.terminal[i] for i in ids], dtype=float),
            means=means,
            counts=counts,
            shared=self.shared_for(w, last) if shared else (),
            share_count=self.share_count,
            within=within,
            stage=2,
        )

    def apply(self, res):
        """Apply a screen result; returns the newly eliminated ids."""
        w = res.group_id
        gone = sorted(i for i in res.eliminated if i in self.alive)
        if gone:
            drop = set(gone)
            self.groups[w] = [i for i in self.groups[w] if i not in drop]
            self.alive -= drop
            self.eliminations.append((w, res.rounds_done, tuple(gone)))
        self.r_screened[w] = max(self.r_screened[w], res.rounds_done)
        self.best[w] = tuple(i for i in res.best if i in self.alive)
        return gone

    def simulate_task(self, i, q):
        return AssignSimulate(i, q, self.increments[i], q + 1, 2)


class Stage2Master:
    """Contact-driven master loop of the iterative screening stage.

    On each contact the master records the report, then prefers a screen
    task for the caller's group whenever its complete-batch round advanced;
    otherwise it dispatches the next simulation batch, keeping batch counts
    level across survivors.  Workers with nothing to do are told to wait.
    Once every group has screened ``r_bar`` rounds (or one survivor is left)
    every contacting worker is terminated.
    """

    def __init__(self, state):
        self.state = state
        self.queue = DispatchQueue(state.alive, cap=state.r_bar)
        self.outstanding = 0

    def on_contact(self, w, msg):
        st = self.state
        if isinstance(msg, BatchOutput):
            self.outstanding -= 1
            st.record(msg)
        elif isinstance(msg, ScreenResult):
            for i in st.apply(msg):
                self.queue.remove(i)
        if st.done():
            return Terminate()
        if st.groups[w]:
            r_cur = st.ready_round(w)
            if r_cur > st.r_sent[w]:
                return st.make_screen(w, st.r_sent[w] + 1, r_cur)
        nxt = self.queue.next()
        if nxt is not None:
            self.outstanding += 1
            return st.simulate_task(*nxt)
        return Wait()
