"""The parallel selection procedure and its no-iterative-screening baseline.

Both procedures are written as stage logic over an executor, so the same code
runs under the serial, threaded and round-synchronous executors.

Stream layout per system: batch 0 is the cost-estimation stage, batch 1 the
first-stage sample, batch ``q + 1`` the ``q``-th screening batch and later
indices the final Rinott batches.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .core_stats import (
    EtaParams,
    RinottParams,
    batch_increments,
    rinott_constant,
    rinott_sample_size,
    screen_rounds,
    solve_eta,
    solve_eta_conservative,
)
from .engine import (
    Assembler,
    AssignScreen,
    AssignSimulate,
    BatchOutput,
    BatchStat,
    SharedQueuePhase,
    Stage2State,
    TaskListPhase,
    make_executor,
    partition,
)
from .errors import InvalidParameter

SCHEMA_VERSION = 1
PROCEDURES = ("gsp", "nsgs")

# partition seeds are derived per stage so they never collide with stream keys
_STAGE_SALT = {0: 0x5EED0, 1: 0x5EED1, 2: 0x5EED2}


@dataclass(frozen=True)
class ProcedureConfig:
    """Procedure parameters.

    Attributes:
        alpha1: Error budget of screening.
        alpha2: Error budget of the final Rinott stage.
        delta: Indifference-zone parameter.
        n0: Replications per system for run-time estimation (0 disables).
        n1: First-stage sample size.
        beta: Average batch size.
        r_bar: Maximum number of screening rounds.
        workers: Number of worker cores.
        share_count: Leaders each group shares with the others.
        seed: Root seed.
        eta_mode: ``exact`` or ``conservative`` screening constant.
    """

    alpha1: float = 0.025
    alpha2: float = 0.025
    delta: float = 0.1
    n0: int = 20
    n1: int = 50
    beta: int = 100
    r_bar: int = 10
    workers: int = 1
    share_count: int = 1
    seed: int = 0
    eta_mode: str = "exact"

    def __post_init__(self):
        for name in ("n0", "n1", "beta", "r_bar", "workers", "share_count", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise InvalidParameter(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        for name in ("alpha1", "alpha2", "delta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0 < self.alpha1 < 1:
            raise InvalidParameter(f"alpha1 must be in (0, 1), got {self.alpha1}")
        if not 0 < self.alpha2 < 1:
            raise InvalidParameter(f"alpha2 must be in (0, 1), got {self.alpha2}")
        if not self.alpha1 + self.alpha2 < 1:
            raise InvalidParameter("alpha1 + alpha2 must be below 1")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InvalidParameter(f"delta must be positive, got {self.delta}")
        if self.n0 != 0 and self.n0 < 2:
            raise InvalidParameter(f"n0 must be 0 or at least 2, got {self.n0}")
        if self.n1 < 4:
            raise InvalidParameter(f"n1 must be at least 4, got {self.n1}")
        if self.beta < 1:
            raise InvalidParameter(f"beta must be positive, got {self.beta}")
        if self.r_bar < 1:
            raise InvalidParameter(f"r_bar must be positive, got {self.r_bar}")
        if self.workers < 1:
            raise InvalidParameter(f"workers must be positive, got {self.workers}")
        if self.share_count < 1:
            raise InvalidParameter(f"share_count must be positive, got {self.share_count}")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameter(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.eta_mode not in ("exact", "conservative"):
            raise InvalidParameter(f"eta_mode must be 'exact' or 'conservative', got {self.eta_mode!r}")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class SelectionReport:
    """Outcome of one procedure run (JSON and CSV serialisable)."""

    procedure: str
    executor: str
    model: dict
    selected_system: int
    selected_mean: float
    replications: dict
    survivors: dict
    eta: float
    rinott_h: float
    metrics: dict
    config: dict
    eliminations: int = 0
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    CSV_FIELDS = (
        "schema_version", "procedure", "executor", "model", "seed", "delta", "workers",
        "selected_system", "selected_mean", "reps_stage0", "reps_stage1", "reps_stage2",
        "reps_stage3", "reps_total", "survivors_stage1", "survivors_stage2", "wall_clock",
        "sim_time_total", "utilization",
    )

    def csv_row(self):
        r = self.replications
        m = self.metrics
        return {
            "schema_version": self.schema_version,
            "procedure": self.procedure,
            "executor": self.executor,
            "model": self.model.get("model", ""),
            "seed": self.config["seed"],
            "delta": self.config["delta"],
            "workers": self.config["workers"],
            "selected_system": self.selected_system,
            "selected_mean": repr(self.selected_mean),
            "reps_stage0": r["stage0"],
            "reps_stage1": r["stage1"],
            "reps_stage2": r["stage2"],
            "reps_stage3": r["stage3"],
            "reps_total": r["total"],
            "survivors_stage1": self.survivors["stage1"],
            "survivors_stage2": self.survivors["stage2"],
            "wall_clock": repr(m["wall_clock"]),
            "sim_time_total": repr(m["sim_time_total"]),
            "utilization": repr(m["utilization"]),
        }

    def to_csv(self, header=True):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerow(self.csv_row())
        return buf.getvalue()


@dataclass
class Stage1Result:
    """First-stage statistics (arrays indexed by system id)."""

    means: np.ndarray
    variances: np.ndarray
    run_times: np.ndarray
    increments: np.ndarray
    terminal: np.ndarray
    eta: float
    survivors: list


def _seed(cfg, stage):
    return [cfg.seed, _STAGE_SALT[stage]]


def _eta(cfg, k):
    if k < 2:
        return math.inf
    params = EtaParams(cfg.alpha1, k, cfg.n1)
    return solve_eta_conservative(params) if cfg.eta_mode == "conservative" else solve_eta(params)


def gsp_stage0(executor, model, cfg):
    """Average cost per replication of every system (ones when ``n0 == 0``)."""
    k = model.system_count
    if cfg.n0 == 0:
        return np.ones(k)
    plan = partition(range(k), executor.c, seed=_seed(cfg, 0))
    phase = TaskListPhase([[AssignSimulate(i, 0, cfg.n0, 0, stage=0) for i in g] for g in plan.groups])
    executor.run_phase(phase)
    t_bar = np.empty(k)
    for out in phase.results:
        t_bar[out.system_id] = out.cost / out.count
    # guard against zero measured cost on very fast systems
    floor = t_bar[t_bar > 0].min() if np.any(t_bar > 0) else 1.0
    return np.where(t_bar > 0, t_bar, floor)


def _stage1_sample(executor, model, cfg, t_bar):
    k = model.system_count
    if cfg.n0:
        plan = partition(range(k), executor.c, weights=cfg.n1 * t_bar)
    else:
        plan = partition(range(k), executor.c, seed=_seed(cfg, 1))
    phase = TaskListPhase([[AssignSimulate(i, 0, cfg.n1, 1, stage=1) for i in g] for g in plan.groups])
    executor.run_phase(phase)
    means = np.empty(k)
    variances = np.empty(k)
    for out in phase.results:
        means[out.system_id] = out.mean
        variances[out.system_id] = out.m2 / (out.count - 1)
    return plan, means, variances


def gsp_stage1(executor, model, cfg, t_bar, r_bar=None):
    """First-stage sampling, batch sizes, then within-group screening.

    Args:
        executor: Engine executor.
        model: Simulation model.
        cfg: Procedure configuration.
        t_bar: Per-system average replication cost.
        r_bar: Rounds used for the terminal sample sizes (``cfg.r_bar`` by
            default).

    Returns:
        :class:`Stage1Result`.
    """
    r_bar = cfg.r_bar if r_bar is None else r_bar
    k = model.system_count
    plan, means, variances = _stage1_sample(executor, model, cfg, t_bar)
    b = batch_increments(np.sqrt(variances), t_bar, cfg.beta)
    terminal = cfg.n1 + r_bar * b
    eta = _eta(cfg, k)
    survivors = list(range(k))
    if k > 1:
        executor.configure(eta=eta, n1=cfg.n1)
        tasks = []
        for w, g in enumerate(plan.groups):
            ids = np.array(g, dtype=np.int64)
            tasks.append([] if len(ids) < 2 else [AssignScreen(
                group_id=w, first_round=0, last_round=0, ids=ids,
                variances=variances[ids], terminal=terminal[ids].astype(float),
                means=means[ids][None, :], counts=np.full((1, len(ids)), float(cfg.n1)),
                share_count=cfg.share_count, stage=1)])
        phase = TaskListPhase(tasks)
        executor.run_phase(phase)
        gone = set().union(*(r.eliminated for r in phase.results)) if phase.results else set()
        survivors = [i for i in survivors if i not in gone]
    return Stage1Result(means, variances, t_bar, b, terminal, eta, survivors)


def _assemblers(st1, ids, n1):
    return {i: Assembler(i, n1, st1.means[i]) for i in ids}


def gsp_stage2(executor, st1, cfg, assemblers):
    """Iterative screening; returns the surviving ids (sorted)."""
    survivors = st1.survivors
    if len(survivors) <= 1 or cfg.r_bar <= 0:
        return list(survivors), 0
    plan = partition(survivors, executor.c, seed=_seed(cfg, 2))
    state = Stage2State(
        plan.groups,
        assemblers,
        {i: float(st1.variances[i]) for i in survivors},
        {i: float(st1.terminal[i]) for i in survivors},
        {i: int(st1.increments[i]) for i in survivors},
        st1.eta,
        cfg.n1,
        cfg.r_bar,
        cfg.share_count,
        weights={i: float(st1.run_times[i]) for i in survivors},
    )
    executor.configure(eta=st1.eta, n1=cfg.n1)
    executor.run_stage2(state)
    return sorted(state.alive), len(state.eliminations)


def gsp_stage3(executor, st1, cfg, survivors, assemblers):
    """Rinott stage over the survivors; returns ``(selected id, h)``."""
    survivors = sorted(survivors)
    if len(survivors) == 1:
        return survivors[0], 0.0
    h = rinott_constant(RinottParams(1 - cfg.alpha2, cfg.n1, len(survivors)))
    per_system = []
    for i in survivors:
        a = assemblers[i]
        target = rinott_sample_size(h, math.sqrt(st1.variances[i]), cfg.delta, a.count)
        remaining, b, batches = target - a.count, int(st1.increments[i]), []
        while remaining > 0:
            batches.append(min(b, remaining))
            remaining -= batches[-1]
        per_system.append((i, a.ready_prefix, batches))
    depth = max((len(bs) for _, _, bs in per_system), default=0)
    tasks = [
        AssignSimulate(i, s + 1 + j, bs[j], s + 2 + j, stage=3)
        for j in range(depth)
        for i, s, bs in per_system
        if j < len(bs)
    ]
    if tasks:
        phase = SharedQueuePhase(tasks)
        executor.run_phase(phase)
        for out in phase.sorted_results():
            assemblers[out.system_id].insert(BatchStat(out.system_id, out.batch_index, out.count, out.mean))
    best = min(survivors, key=lambda i: (-assemblers[i].mean, i))
    return best, h


def _report(name, executor, model, cfg, st1, survivors2, selected, h, assemblers, eliminations):
    metrics = executor.finish()
    reps = metrics.replications_by_stage
    counts = {f"stage{s}": int(reps.get(s, 0)) for s in range(4)}
    counts["total"] = int(sum(counts.values()))
    return SelectionReport(
        procedure=name,
        executor=executor.name,
        model=model.describe(),
        selected_system=int(selected),
        selected_mean=float(assemblers[selected].mean) if selected in assemblers else float(st1.means[selected]),
        replications=counts,
        survivors={"stage1": len(st1.survivors), "stage2": len(survivors2)},
        eta=float(st1.eta) if math.isfinite(st1.eta) else None,
        rinott_h=float(h),
        metrics=metrics.to_dict(),
        config=asdict(cfg),
        eliminations=eliminations,
    )


def _executor(executor, model, cfg):
    if executor is None or isinstance(executor, str):
        return make_executor(executor or "serial", model, cfg.workers, cfg.seed)
    return executor


def gsp_run(model, cfg, executor=None):
    """Run the full procedure.

    Args:
        model: Simulation model.
        cfg: :class:`ProcedureConfig`.
        executor: Executor instance or name (``serial`` by default).

    Returns:
        :class:`SelectionReport`.
    """
    ex = _executor(executor, model, cfg)
    t_bar = gsp_stage0(ex, model, cfg)
    st1 = gsp_stage1(ex, model, cfg, t_bar)
    assemblers = _assemblers(st1, st1.survivors, cfg.n1)
    survivors2, elim = gsp_stage2(ex, st1, cfg, assemblers)
    selected, h = gsp_stage3(ex, st1, cfg, survivors2, assemblers)
    return _report("gsp", ex, model, cfg, st1, survivors2, selected, h, assemblers, elim)


def nsgs_run(model, cfg, executor=None):
    """Baseline without iterative screening: one all-pairs screen, then Rinott."""
    ex = _executor(executor, model, cfg)
    k = model.system_count
    t_bar = gsp_stage0(ex, model, cfg)
    plan, means, variances = _stage1_sample(ex, model, cfg, t_bar)
    b = batch_increments(np.sqrt(variances), t_bar, cfg.beta)
    terminal = np.full(k, float(cfg.n1))
    eta = _eta(cfg, k)
    survivors = list(range(k))
    if k > 1:
        ids = np.arange(k)
        gone = screen_rounds(ids, [(means, np.full(k, float(cfg.n1)))], eta, cfg.n1, terminal, variances)
        ex.master_work(k * (k - 1) * ex.workers[0].screen_cost, "all_pairs_screen")
        survivors = [int(i) for i in ids[~gone]]
    st1 = Stage1Result(means, variances, t_bar, b, terminal, eta, survivors)
    assemblers = _assemblers(st1, survivors, cfg.n1)
    selected, h = gsp_stage3(ex, st1, cfg, survivors, assemblers)
    return _report("nsgs", ex, model, cfg, st1, survivors, selected, h, assemblers, k - len(survivors))


def run_procedure(name, model, cfg, executor=None):
    if name == "gsp":
        return gsp_run(model, cfg, executor)
    if name == "nsgs":
        return nsgs_run(model, cfg, executor)
    raise InvalidParameter(f"procedure must be one of {PROCEDURES}, got {name!r}")
