"""Three-station flow line with finite buffers and blocking after service.

A system is ``(r1, r2, r3, b2, b3)``: exponential service rates at the three
stations and the capacities of stations 2 and 3 (jobs waiting plus the one in
service).  Station 1 always has a job to start.  A job that finishes at a
station whose successor is full stays on its server, blocking it.  The
objective is throughput: jobs per unit time leaving station 3.
"""

import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import ndtri

from ..errors import InvalidParameter, NumericalFailure
from ..kernels import flowline_batch
from ..rng import uniform_matrix
from .base import Model, Observation

# seconds charged per simulated job when costs are synthetic
JOB_COST = 2e-7
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class FlowLineConfig:
    """Flow-line family and replication settings.

    Attributes:
        R: Total service rate shared by the three stations.
        B: Total capacity shared by stations 2 and 3.
        warmup_jobs: Jobs released before the observation window (fixed mode).
        observe_jobs: Jobs whose departures define the throughput estimate.
        warmup_mode: ``"fixed"`` or ``"lognormal"``.
        warmup_mu, warmup_sigma2, warmup_cap: Lognormal warm-up parameters;
            the count is ``min(ceil(exp(N(mu, sigma2))), cap)``.
        cost_mode: ``"synthetic"`` charges ``JOB_COST`` per simulated job so
            runs are reproducible; ``"measured"`` uses wall time.
    """

    R: int = 20
    B: int = 20
    warmup_jobs: int = 2000
    observe_jobs: int = 50
    warmup_mode: str = "fixed"
    warmup_mu: float = math.log(2000.0)
    warmup_sigma2: float = 0.0
    warmup_cap: int = 20000
    cost_mode: str = "synthetic"

    def __post_init__(self):
        if self.warmup_jobs < 1 or self.observe_jobs < 1:
            raise InvalidParameter("warmup_jobs and observe_jobs must be positive")
        if self.warmup_mode not in ("fixed", "lognormal"):
            raise InvalidParameter(f"unknown warmup_mode {self.warmup_mode!r}")
        if self.warmup_sigma2 < 0:
            raise InvalidParameter("warmup_sigma2 must be non-negative")
        if self.warmup_cap < 1:
            raise InvalidParameter("warmup_cap must be positive")
        if self.cost_mode not in ("synthetic", "measured"):
            raise InvalidParameter(f"unknown cost_mode {self.cost_mode!r}")


def flowline_count(R, B):
    if R < 3 or B < 2:
        return 0
    return (R - 1) * (R - 2) // 2 * (B - 1)


def enumerate_flowline_array(R, B):
    """Feasible systems as a ``(k, 5)`` int64 array in lexicographic order."""
    if R < 3 or B < 2:
        return np.empty((0, 5), dtype=np.int64)
    r1, r2 = np.triu_indices(R - 1, k=1)  # pairs i < j of cut points
    # compositions of R into three positive parts <-> cut points 1 <= i < j <= R-1
    r1 = r1 + 1
    r2 = r2 + 1 - r1
    r3 = R - r1 - r2
    rates = np.stack([r1, r2, r3], axis=1)
    b2 = np.arange(1, B)
    n_rates, n_buf = len(rates), len(b2)
    out = np.empty((n_rates * n_buf, 5), dtype=np.int64)
    out[:, :3] = np.repeat(rates, n_buf, axis=0)
    out[:, 3] = np.tile(b2, n_rates)
    out[:, 4] = B - out[:, 3]
    return out


def enumerate_flowline(R, B):
    """Feasible ``(r1, r2, r3, b2, b3)`` tuples, lexicographically ordered."""
    return [tuple(row) for row in enumerate_flowline_array(R, B).tolist()]


def _validate_system(x):
    if len(x) != 5:
        raise InvalidParameter(f"a flow-line system has 5 components, got {len(x)}")
    if any(int(v) != v or v < 1 for v in x):
        raise InvalidParameter(f"flow-line components must be positive integers, got {x}")
    return tuple(int(v) for v in x)


def _ctmc(r1, r2, r3, b2, b3):
    """Generator of the line as a sparse matrix and the station-3-busy mask.

    State ``(u1, n2, u2, n3)``: ``n2``/``n3`` count jobs at stations 2/3
    including one in service or blocked; ``u1``/``u2`` flag that station 1/2
    holds a finished job blocked by a full successor.
    """
    states = []
    for u1 in (0, 1):
        for n2 in range(b2 + 1):
            for u2 in (0, 1):
                for n3 in range(b3 + 1):
                    if u1 and n2 != b2:
                        continue
                    if u2 and (n2 < 1 or n3 != b3):
                        continue
                    states.append((u1, n2, u2, n3))
    index = {s: i for i, s in enumerate(states)}
    rows, cols, rates = [], [], []

    def move(src, dst, rate):
        rows.append(index[src])
        cols.append(index[dst])
        rates.append(rate)

    for s in states:
        u1, n2, u2, n3 = s
        if not u1:
            move(s, (0, n2 + 1, u2, n3) if n2 < b2 else (1, n2, u2, n3), r1)
        if n2 >= 1 and not u2:
            if n3 < b3:
                # a blocked station-1 job moves into the slot this departure frees
                move(s, (0, n2 - 1 + u1, 0, n3 + 1), r2)
            else:
                move(s, (u1, n2, 1, n3), r2)
        if n3 >= 1:
            if u2:
                move(s, (0, n2 - 1 + u1, 0, n3), r3)
            else:
                move(s, (u1, n2, u2, n3 - 1), r3)
    n = len(states)
    q = sp.csr_matrix((rates, (rows, cols)), shape=(n, n))
    q = q - sp.diags(np.asarray(q.sum(axis=1)).ravel())
    busy3 = np.array([s[3] >= 1 for s in states])
    return q.tocsr(), busy3


def stationary_distribution(q):
    """Solve ``pi Q = 0``, ``sum(pi) = 1``; returns ``(pi, residual)``."""
    n = q.shape[0]
    a = q.T.tolil()
    a[0, :] = 1.0
    rhs = np.zeros(n)
    rhs[0] = 1.0
    pi = spla.spsolve(a.tocsc(), rhs)
    residual = float(np.abs(q.T @ pi).max())
    return pi, residual


@lru_cache(maxsize=None)
def _exact_mean(x):
    r1, r2, r3, b2, b3 = x
    q, busy3 = _ctmc(float(r1), float(r2), float(r3), b2, b3)
    pi, residual = stationary_distribution(q)
    if not (residual <= RESIDUAL_TOL and pi.min() > -1e-12 and abs(pi.sum() - 1) < 1e-12):
        raise NumericalFailure(
            "stationary solve did not converge",
            system=x,
            residual=residual,
            min_pi=float(pi.min()),
            mass=float(pi.sum()),
        )
    return float(r3 * pi[busy3].sum())


def flowline_exact_mean(x):
    """Steady-state throughput of system ``x`` from its CTMC."""
    return _exact_mean(_validate_system(x))


def warmup_counts(cfg, key, first_sub, count):
    """Warm-up job count of each replication in a batch.

    Lognormal counts use the first draw of auxiliary lane 1 of each substream,
    so they never disturb the service-time draws.
    """
    if cfg.warmup_mode == "fixed":
        return np.full(count, cfg.warmup_jobs, dtype=np.int64)
    if cfg.warmup_sigma2 == 0:
        z = np.zeros(count)
    else:
        subs = np.arange(first_sub, first_sub + count, dtype=np.uint64)
        z = ndtri(uniform_matrix(key, subs, 1, lane=1)[:, 0])
    raw = np.exp(cfg.warmup_mu + math.sqrt(cfg.warmup_sigma2) * z)
    # exp(log(n)) may land one ulp above the integer n
    w = np.ceil(raw * (1 - 1e-12))
    return np.clip(w, 1, cfg.warmup_cap).astype(np.int64)


def flowline_replicate(x, cfg, stream):
    """One replication of system ``x`` on ``stream``'s substream."""
    x = _validate_system(x)
    if x[0] + x[1] + x[2] != cfg.R or x[3] + x[4] != cfg.B:
        raise InvalidParameter(f"system {x} is infeasible for R={cfg.R}, B={cfg.B}")
    values, costs = _simulate(x, cfg, stream.key, stream.substream, 1)
    return Observation(float(values[0]), float(costs[0]))


def _simulate(x, cfg, key, first_sub, count):
    warm = warmup_counts(cfg, key, first_sub, count)
    start = time.perf_counter()
    values = flowline_batch(key, first_sub, count, x[:3], x[3:], warm, cfg.observe_jobs)
    if cfg.cost_mode == "measured":
        costs = np.full(count, (time.perf_counter() - start) / count)
    else:
        costs = (warm + cfg.observe_jobs) * JOB_COST
    return values, costs.astype(np.float64)


class FlowLineModel(Model):
    """All feasible allocations of a flow-line family, in enumeration order."""

    name = "flowline"

    def __init__(self, cfg=None):
        self.cfg = cfg or FlowLineConfig()
        self.systems = enumerate_flowline_array(self.cfg.R, self.cfg.B)
        self._means = None

    @property
    def system_count(self):
        return len(self.systems)

    def system(self, system_id):
        self.check_id(system_id)
        return tuple(int(v) for v in self.systems[system_id])

    def replicate(self, system_id, stream):
        return flowline_replicate(self.system(system_id), self.cfg, stream)

    def replicate_batch(self, system_id, key, first_sub, count):
        return _simulate(self.system(system_id), self.cfg, key, first_sub, count)

    def true_mean(self, system_id):
        return flowline_exact_mean(self.system(system_id))

    def true_means(self):
        if self._means is None:
            self._means = np.array([_exact_mean(tuple(int(v) for v in s)) for s in self.systems])
        return self._means

    def describe(self):
        return {"model": "flowline", "systems": self.system_count, "R": self.cfg.R, "B": self.cfg.B}
