"""Executors: serial, threaded and round-synchronous drivers of the phases.

All executors keep a modelled ("virtual") clock per worker: a task advances
its worker's clock by the task cost, and every master contact costs
``comm_cost`` seconds of master time.  With ``clock="measured"`` task costs
are thread CPU seconds and the wall clock is real elapsed time.
"""

import heapq
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor

from ..errors import EngineError, InvalidParameter
from .messages import Hello, Terminate, Wait, WorkerFailed
from .metrics import Trace, compute_metrics
from .partition import partition
from .stages import Stage2Master
from .worker import Worker

COMM_COST = 1e-5
SCREEN_COST = 1e-8

EXECUTORS = ("serial", "threaded", "rounds")


class Executor:
    """Common bookkeeping for the three executors.

    Args:
        model: Simulation model.
        workers: Number of worker cores ``c``.
        seed: Root seed of the random streams.
        clock: ``"virtual"`` (modelled costs) or ``"measured"``.
        comm_cost: Master seconds per contact.
        screen_cost: Worker seconds per screened pair.
        record_trace: Keep the full event list.
    """

    name = "base"

    def __init__(self, model, workers=1, seed=0, clock="virtual", comm_cost=COMM_COST,
                 screen_cost=SCREEN_COST, record_trace=False):
        if int(workers) != workers or workers < 1:
            raise InvalidParameter(f"workers must be a positive integer, got {workers}")
        if clock not in ("virtual", "measured"):
            raise InvalidParameter(f"clock must be 'virtual' or 'measured', got {clock!r}")
        self.model = model
        self.c = int(workers)
        self.seed = seed
        self.clock = clock
        self.comm_cost = comm_cost
        measure = clock == "measured"
        self.workers = [Worker(w, model, seed, screen_cost=screen_cost, measure=measure)
                        for w in range(self.c)]
        self.clocks = [0.0] * self.c
        self.master_clock = 0.0
        self.trace = Trace(self.c, record_trace)
        self.trace.clock = clock
        self._t0 = time.perf_counter()

    def configure(self, eta=None, n1=None):
        """Broadcast screening constants to every worker."""
        for wk in self.workers:
            wk.eta = eta
            wk.n1 = n1

    def _barrier(self):
        t = max(max(self.clocks), self.master_clock)
        self.clocks = [t] * self.c
        self.master_clock = t
        return t

    def _handle(self, w, task):
        try:
            return self.workers[w].handle(task)
        except Exception as exc:  # surfaced to the master as a failure report
            return WorkerFailed(w, f"{type(exc).__name__}: {exc}"), 0.0

    def master_work(self, cost, label):
        """Charge master-only computation (all workers idle)."""
        t = self._barrier() + cost
        self.trace.master_work(t, cost, label)
        self.clocks = [t] * self.c
        self.master_clock = t

    def run_stage2(self, state):
        self.run_phase(Stage2Master(state))

    def finish(self):
        """Close accounting and return :class:`Metrics`."""
        if self.clock == "measured":
            self.trace.wall_clock = time.perf_counter() - self._t0
        else:
            self.trace.wall_clock = self._barrier()
        return compute_metrics(self.trace)


def _fail(msg):
    raise EngineError(f"worker {msg.worker} failed: {msg.error}")


class SerialExecutor(Executor):
    """Single-threaded discrete-event interleaving.

    Contacts are served in order of the contacting worker's virtual clock,
    ties broken by worker id; parked workers are retried in id order after
    every report.
    """

    name = "serial"

    def run_phase(self, phase):
        t0 = self._barrier()
        heap = [(t0, w) for w in range(self.c)]
        inbox = {w: Hello() for w in range(self.c)}
        parked = []
        tr = self.trace

        def deliver(w, reply):
            tr.log_message(self.master_clock, w, reply)
            if isinstance(reply, Wait):
                parked.append(w)
            elif isinstance(reply, Terminate):
                self.clocks[w] = self.master_clock
            else:
                res, cost = self._handle(w, reply)
                if isinstance(res, WorkerFailed):
                    _fail(res)
                self.clocks[w] = self.master_clock + cost
                inbox[w] = res
                heapq.heappush(heap, (self.clocks[w], w))

        while heap:
            t, w = heapq.heappop(heap)
            msg = inbox.pop(w)
            tr.account(msg)
            tr.log_message(t, w, msg)
            tr.contacts += 1
            self.master_clock = max(self.master_clock, t) + self.comm_cost
            deliver(w, phase.on_contact(w, msg))
            if parked and not isinstance(msg, Hello):
                for pw in list(parked):
                    reply = phase.on_contact(pw, Hello())
                    if not isinstance(reply, Wait):
                        parked.remove(pw)
                        self.master_clock += self.comm_cost
                        deliver(pw, reply)
        if parked:
            raise EngineError(f"deadlock: workers {parked} waiting with no work in flight")


class ThreadedExecutor(Executor):
    """One master loop plus ``c`` worker threads with FIFO channels.

    The master serves reports in arrival order.  Virtual time travels with
    the messages: a reply is stamped with the report's time plus
    ``comm_cost``.  Arrival order follows thread scheduling rather than
    virtual time, so master queueing is not modelled here; the serial
    executor models it.
    """

    name = "threaded"

    def run_phase(self, phase):
        t0 = self._barrier()
        inbox = queue.Queue()
        boxes = [queue.Queue() for _ in range(self.c)]

        def work(w):
            msg, t = Hello(), t0
            while True:
                inbox.put((w, msg, t))
                reply, t = boxes[w].get()
                if isinstance(reply, Terminate):
                    return
                msg, cost = self._handle(w, reply)
                t += cost
                if isinstance(msg, WorkerFailed):
                    inbox.put((w, msg, t))
                    return

        threads = [threading.Thread(target=work, args=(w,), daemon=True) for w in range(self.c)]
        for th in threads:
            th.start()
        tr = self.trace
        active, busy = self.c, self.c
        parked = []
        failure = None
        contact_time = {}

        def send(w, reply):
            nonlocal active, busy
            tr.log_message(self.master_clock, w, reply)
            if isinstance(reply, Wait):
                parked.append(w)
                return
            t_reply = contact_time.get(w, self.master_clock) + self.comm_cost
            if isinstance(reply, Terminate):
                active -= 1
                self.clocks[w] = t_reply
            else:
                busy += 1
            boxes[w].put((reply, t_reply))

        try:
            while active:
                if busy == 0:
                    failure = failure or WorkerFailed(-1, f"deadlock: workers {parked} waiting")
                    for pw in parked:
                        send(pw, Terminate())
                    parked.clear()
                    continue
                w, msg, t = inbox.get()
                busy -= 1
                if isinstance(msg, WorkerFailed):
                    failure = failure or msg
                    active -= 1
                    for pw in parked:
                        send(pw, Terminate())
                    parked.clear()
                    continue
                tr.account(msg)
                tr.log_message(t, w, msg)
                tr.contacts += 1
                contact_time[w] = t
                self.master_clock = max(self.master_clock, t + self.comm_cost)
                if failure is not None:
                    send(w, Terminate())
                    continue
                send(w, phase.on_contact(w, msg))
                if parked and not isinstance(msg, Hello):
                    for pw in list(parked):
                        reply = phase.on_contact(pw, Hello())
                        if not isinstance(reply, Wait):
                            parked.remove(pw)
                            # a parked worker resumes once the unblocking report arrived
                            contact_time[pw] = max(contact_time.get(pw, t0), t)
                            send(pw, reply)
        finally:
            for th in threads:
                th.join(timeout=60)
        if failure is not None:
            _fail(failure)


class RoundsExecutor(Executor):
    """Barrier-synchronous execution in the style of MapReduce.

    Every phase proceeds in rounds: each worker reports and receives at most
    one task, the tasks run (optionally on a thread pool) and a barrier
    closes the round.  The screening stage runs as simulate / within-group
    screen / shared-best screen rounds.

    Args:
        parallel: Run each round's tasks on a pool of ``c`` threads.
    """

    name = "rounds"

    def __init__(self, *args, parallel=False, **kwargs):
        super().__init__(*args, **kwargs)
        self.parallel = parallel
        self._pool = ThreadPoolExecutor(self.c) if parallel and self.c > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _map(self, work):
        """Run ``{w: [tasks]}``; returns ``{w: [results]}`` after one barrier."""
        t0 = self._barrier()

        def run(w):
            out, load = [], 0.0
            for task in work[w]:
                res, cost = self._handle(w, task)
                if isinstance(res, WorkerFailed):
                    return res, load
                out.append(res)
                load += cost + self.comm_cost
            return out, load

        ws = sorted(work)
        if self._pool is not None:
            done = list(self._pool.map(run, ws))
        else:
            done = [run(w) for w in ws]
        results = {}
        for w, (out, load) in zip(ws, done):
            if isinstance(out, WorkerFailed):
                _fail(out)
            for task in work[w]:
                self.trace.log_message(t0, w, task)
            for res in out:
                self.trace.account(res)
                self.trace.log_message(t0 + load, w, res)
                self.trace.contacts += 1
            self.clocks[w] = t0 + load
            results[w] = out
        self._barrier()
        return results

    def run_phase(self, phase):
        msgs = {w: Hello() for w in range(self.c)}
        active = set(range(self.c))
        while active:
            work = {}
            for w in sorted(active):
                reply = phase.on_contact(w, msgs[w])
                msgs[w] = Hello()
                if isinstance(reply, Terminate):
                    active.discard(w)
                elif not isinstance(reply, Wait):
                    work[w] = [reply]
            if not work:
                if active:
                    raise EngineError(f"deadlock: workers {sorted(active)} waiting")
                break
            for w, out in self._map(work).items():
                msgs[w] = out[0]

    def run_stage2(self, state):
        for r in range(1, state.r_bar + 1):
            if state.done():
                break
            ids = sorted(state.alive)
            weights = [state.weights.get(i, 1.0) * state.increments[i] for i in ids]
            plan = partition(ids, self.c, weights=weights)
            work = {w: [state.simulate_task(i, r) for i in g] for w, g in enumerate(plan.groups) if g}
            outs = sorted((o for res in self._map(work).values() for o in res),
                          key=lambda o: (o.system_id, o.batch_index))
            for out in outs:
                state.record(out)
            for within, shared in ((True, False), (False, True)):
                live = [w for w in range(state.workers) if state.groups[w]]
                if not live or (shared and len(live) < 2):
                    continue
                tasks = {w: [state.make_screen(w, r, r, within=within, shared=shared)] for w in live}
                for w, res in sorted(self._map(tasks).items()):
                    state.apply(res[0])
            for w in range(state.workers):
                state.r_screened[w] = max(state.r_screened[w], r)


def make_executor(kind, model, workers=1, seed=0, **kwargs):
    """Executor by name: ``serial``, ``threaded`` or ``rounds``."""
    classes = {"serial": SerialExecutor, "threaded": ThreadedExecutor, "rounds": RoundsExecutor}
    if kind not in classes:
        raise InvalidParameter(f"executor must be one of {EXECUTORS}, got {kind!r}")
    return classes[kind](model, workers, seed, **kwargs)
