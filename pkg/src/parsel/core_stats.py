"""Closed-form and root-finding mathematics of the selection procedure.

Everything here is a pure function of its arguments.  The two integral
equations (the screening constant ``eta`` and Rinott's constant ``h``) are
evaluated by composite Gauss-Legendre quadrature whose panel count doubles
until consecutive refinements agree, and solved by bisection.
"""

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, ndtr
from scipy.stats import chi2

from .errors import DegenerateInput, InvalidParameter, NumericalFailure

__all__ = [
    "EtaParams",
    "PairwiseInput",
    "RinottParams",
    "SamplingSchedule",
    "Screening",
    "allocation_ratio",
    "batch_increment",
    "batch_increments",
    "eta_bound_value",
    "eta_crude_bound",
    "eta_crude_constant",
    "eta_lhs",
    "eta_target",
    "min_chi2_cdf",
    "min_chi2_density",
    "pairwise_tau",
    "rinott_constant",
    "rinott_lhs",
    "rinott_sample_size",
    "screen_rounds",
    "screening_decision",
    "screening_threshold",
    "solve_eta",
    "solve_eta_conservative",
]

QUAD_TOL = 1e-12
ETA_TOL = 1e-10
RINOTT_TOL = 1e-8
MAX_DOUBLINGS = 200
_GL_ORDER = 20
_MAX_PANELS = 1 << 14
_TAIL = 1e-14
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


def _ceil(x):
    """Ceiling that ignores float noise of a few ulps above an integer."""
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def _check_n1(n1, minimum=3):
    if int(n1) != n1 or n1 < minimum:
        raise InvalidParameter(f"n1 must be an integer >= {minimum}, got {n1}")
    return int(n1)


def _nodes(lo, hi, panels):
    """Composite Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def _adaptive(integral, lo, hi, tol, what, panels=8, rtol=1e-9):
    """Double the panel count until two successive estimates agree.

    Agreement means a change of at most ``min(tol, rtol * |estimate|)``, so
    small integrals (tail probabilities of order 1e-8) keep relative accuracy.
    """
    prev = integral(*_nodes(lo, hi, panels))
    while panels < _MAX_PANELS:
        panels *= 2
        cur = integral(*_nodes(lo, hi, panels))
        if abs(cur - prev) <= min(tol, rtol * abs(cur)):
            return cur
        prev = cur
    raise NumericalFailure(
        f"{what}: quadrature did not converge", panels=panels, last_change=abs(cur - prev)
    )


# ---------------------------------------------------------------------------
# eta


@dataclass(frozen=True)
class EtaParams:
    """Inputs of the screening-constant equation.

    Attributes:
        alpha1: Screening error budget, in (0, 1).
        k: Number of systems (at least 2).
        n1: First-stage sample size (at least 3).
    """

    alpha1: float
    k: int
    n1: int

    def __post_init__(self):
        if not 0 < self.alpha1 < 1:
            raise InvalidParameter(f"alpha1 must be in (0, 1), got {self.alpha1}")
        if int(self.k) != self.k or self.k < 2:
            raise InvalidParameter(f"k must be an integer >= 2, got {self.k}")
        _check_n1(self.n1)

    @property
    def target(self):
        return eta_target(self.alpha1, self.k)


def eta_target(alpha1, k):
    """``1 - (1 - alpha1)**(1/(k-1))`` computed without cancellation."""
    return -math.expm1(math.log1p(-alpha1) / (k - 1))


def min_chi2_density(x, n1):
    """Density of the minimum of two iid chi-square(n1-1) variables."""
    df = _check_n1(n1) - 1
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise InvalidParameter("x must be non-negative")
    out = 2.0 * chi2.sf(x, df) * chi2.pdf(x, df)
    return float(out) if out.ndim == 0 else out


def min_chi2_cdf(x, n1):
    df = _check_n1(n1) - 1
    out = -np.expm1(2.0 * chi2.logsf(np.asarray(x, dtype=np.float64), df))
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def _chi2_upper(df):
    return float(chi2.isf(_TAIL, df))


def eta_lhs(eta, n1):
    """``E[2 * Phibar(eta * sqrt(R))]`` with ``R`` the minimum of two chi-squares."""
    df = _check_n1(n1) - 1
    if not eta >= 0 or not math.isfinite(eta):
        raise InvalidParameter(f"eta must be finite and non-negative, got {eta}")
    if eta == 0:
        return 1.0

    def integral(x, w):
        dens = 2.0 * chi2.sf(x, df) * chi2.pdf(x, df)
        return float(np.dot(w, 2.0 * ndtr(-eta * np.sqrt(x)) * dens))

    return _adaptive(integral, 0.0, _chi2_upper(df), QUAD_TOL, "eta_lhs")


def eta_crude_constant(n1):
    """``C`` in the crude bound ``C * eta**(1 - n1)``."""
    n1 = _check_n1(n1, 4)
    return math.exp(
        math.log(2.0) + gammaln((n1 - 2) / 2) - 0.5 * math.log(math.pi) - gammaln((n1 - 1) / 2)
    )


def eta_bound_value(eta, n1):
    """Closed-form upper bound on :func:`eta_lhs` (requires ``n1 >= 4``)."""
    n1 = _check_n1(n1, 4)
    if not eta > 0:
        raise InvalidParameter(f"eta must be positive, got {eta}")
    log_c = math.log(eta_crude_constant(n1))
    return math.exp(log_c - math.log(eta) - 0.5 * (n1 - 2) * math.log1p(eta * eta))


def eta_crude_bound(eta, n1):
    if not eta > 0:
        raise InvalidParameter(f"eta must be positive, got {eta}")
    return eta_crude_constant(n1) * eta ** (1 - n1)


def _bisect_decreasing(fn, target, tol, what):
    """Root of ``fn(x) = target`` for ``fn`` decreasing on ``(0, inf)``.

    The stopping tolerance is ``tol`` capped at ``1e-7 * target``.
    """
    tol = min(tol, 1e-7 * target)
    lo, hi = 0.0, 1.0
    doublings = 0
    while fn(hi) > target:
        lo = hi
        hi *= 2.0
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise NumericalFailure(f"{what}: no bracket", doublings=doublings, target=target)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        val = fn(mid)
        if abs(val - target) <= tol:
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return mid
    raise NumericalFailure(f"{what}: bisection stalled", lo=lo, hi=hi, target=target)


@lru_cache(maxsize=256)
def _solve_eta(alpha1, k, n1):
    return _bisect_decreasing(
        lambda e: eta_lhs(e, n1), eta_target(alpha1, k), ETA_TOL, "solve_eta"
    )


def solve_eta(params):
    """Screening constant from the exact integral equation."""
    return _solve_eta(float(params.alpha1), int(params.k), int(params.n1))


@lru_cache(maxsize=256)
def _solve_eta_conservative(alpha1, k, n1):
    _check_n1(n1, 4)
    return _bisect_decreasing(
        lambda e: eta_bound_value(e, n1) if e > 0 else math.inf,
        eta_target(alpha1, k),
        ETA_TOL,
        "solve_eta_conservative",
    )


def solve_eta_conservative(params):
    """Screening constant from the closed-form bound; never below :func:`solve_eta`."""
    return _solve_eta_conservative(float(params.alpha1), int(params.k), int(params.n1))


# ---------------------------------------------------------------------------
# pairwise screening


class Screening(enum.Enum):
    ELIMINATE_I = "eliminate_i"
    ELIMINATE_J = "eliminate_j"
    NEITHER = "neither"


@dataclass(frozen=True)
class PairwiseInput:
    """Summary statistics of two systems at their current sample sizes."""

    mean_i: float
    mean_j: float
    var_i: float
    var_j: float
    n_i: int
    n_j: int

    def __post_init__(self):
        if not (math.isfinite(self.mean_i) and math.isfinite(self.mean_j)):
            raise InvalidParameter("sample means must be finite")
        for name in ("var_i", "var_j"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParameter(f"{name} must be finite and non-negative, got {v}")
        for name in ("n_i", "n_j"):
            n = getattr(self, name)
            if int(n) != n or n < 1:
                raise InvalidParameter(f"{name} must be a positive integer, got {n}")

    def swapped(self):
        return PairwiseInput(self.mean_j, self.mean_i, self.var_j, self.var_i, self.n_j, self.n_i)


def _tau(var_i, n_i, var_j, n_j):
    denom = var_i / n_i + var_j / n_j
    if denom <= 0:
        raise DegenerateInput("both sample variances are zero; tau is undefined")
    return 1.0 / denom


def pairwise_tau(p):
    """``[S_i^2/n_i + S_j^2/n_j]^-1``."""
    return _tau(p.var_i, p.n_i, p.var_j, p.n_j)


def screening_threshold(eta, n1, var_i, var_j, n_i_terminal, n_j_terminal):
    """``a = eta * sqrt((n1 - 1) * tau)`` at the scheduled terminal sample sizes."""
    return eta * math.sqrt((n1 - 1) * _tau(var_i, n_i_terminal, var_j, n_j_terminal))


def screening_decision(p, a_threshold):
    """Compare ``Y = tau * (mean_i - mean_j)`` with ``+-a_threshold``."""
    if not (a_threshold >= 0 and math.isfinite(a_threshold)):
        raise InvalidParameter(f"threshold must be finite and non-negative, got {a_threshold}")
    y = pairwise_tau(p) * (p.mean_i - p.mean_j)
    if y < -a_threshold:
        return Screening.ELIMINATE_I
    if y > a_threshold:
        return Screening.ELIMINATE_J
    return Screening.NEITHER


# rows per block when building pairwise matrices; caps memory near 32 MB
_BLOCK_ELEMS = 1 << 22


def _eliminated_by(mean_a, var_a, n_a, term_a, id_a, mean_b, var_b, n_b, term_b, id_b, eta, n1):
    """Mask over set A: eliminated by at least one member of set B.

    Pairs of systems with identical ids are skipped.  Two systems with zero
    variance are compared by their means alone (threshold zero).
    """
    out = np.zeros(len(mean_a), dtype=bool)
    if len(mean_a) == 0 or len(mean_b) == 0:
        return out
    step = max(1, _BLOCK_ELEMS // len(mean_b))
    c = eta * math.sqrt(n1 - 1)
    for lo in range(0, len(mean_a), step):
        sl = slice(lo, lo + step)
        denom = var_a[sl, None] / n_a[sl, None] + var_b[None, :] / n_b[None, :]
        denom_t = var_a[sl, None] / term_a[sl, None] + var_b[None, :] / term_b[None, :]
        diff = mean_a[sl, None] - mean_b[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            # tau * diff < -c * sqrt(tau_t)  <=>  diff < -c * denom / sqrt(denom_t)
            cut = -c * denom / np.sqrt(denom_t)
        elim = np.where(denom_t > 0, diff < cut, diff < 0)
        elim &= id_a[sl, None] != id_b[None, :]
        out[sl] = elim.any(axis=1)
    return out


def screen_rounds(ids, rounds, eta, n1, terminal, variances, others=None, within=True):
    """Sequential screening over a window of rounds.

    Args:
        ids: System ids being screened, shape ``(m,)``.
        rounds: Iterable of ``(means, counts)`` pairs, one per round in
            increasing order; each array is aligned with ``ids``.
        eta: Screening constant.
        n1: First-stage sample size.
        terminal: Scheduled terminal sample sizes aligned with ``ids``.
        variances: First-stage variances aligned with ``ids``.
        others: Optional list aligned with ``rounds``; entry ``r`` is
            ``(ids, means, counts, terminal, variances)`` of reference systems
            that may eliminate but are not themselves screened, or ``None``.
        within: Whether members of ``ids`` screen each other.

    Returns:
        Boolean mask over ``ids`` of systems eliminated in the window.  A
        system eliminated in one round no longer screens later rounds.
    """
    ids = np.asarray(ids, dtype=np.int64)
    terminal = np.asarray(terminal, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    alive = np.ones(len(ids), dtype=bool)
    for r, (means, counts) in enumerate(rounds):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        means = np.asarray(means, dtype=np.float64)[idx]
        counts = np.asarray(counts, dtype=np.float64)[idx]
        group = (means, variances[idx], counts, terminal[idx], ids[idx])
        if within:
            elim = _eliminated_by(*group, *group, eta, n1)
        else:
            elim = np.zeros(len(idx), dtype=bool)
        ref = None if others is None else others[r]
        if ref is not None and len(ref[0]):
            o_ids, o_means, o_counts, o_term, o_var = (np.asarray(v) for v in ref)
            elim |= _eliminated_by(
                *group,
                o_means.astype(float),
                o_var.astype(float),
                o_counts.astype(float),
                o_term.astype(float),
                o_ids.astype(np.int64),
                eta,
                n1,
            )
        alive[idx[elim]] = False
    return ~alive


# ---------------------------------------------------------------------------
# sampling schedule


def batch_increment(S_i, T_i, normalizer, beta):
    """``ceil(beta * (S_i / sqrt(T_i)) / normalizer)``."""
    if not (S_i > 0 and T_i > 0 and normalizer > 0):
        raise InvalidParameter("S_i, T_i and normalizer must be positive")
    if int(beta) != beta or beta < 1:
        raise InvalidParameter(f"beta must be a positive integer, got {beta}")
    return max(1, _ceil(beta * (S_i / math.sqrt(T_i)) / normalizer))


def batch_increments(S, T, beta):
    """Batch sizes for all systems; the normalizer averages over every entry.

    Systems with zero standard deviation get one replication per batch; if
    every system has zero deviation all batches have size ``beta``.
    """
    S = np.asarray(S, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if np.any(T <= 0) or np.any(S < 0):
        raise InvalidParameter("run times must be positive and deviations non-negative")
    ratio = S / np.sqrt(T)
    norm = ratio.mean()
    if norm == 0:
        return np.full(len(S), int(beta), dtype=np.int64)
    return np.array(
        [batch_increment(s, t, norm, beta) if s > 0 else 1 for s, t in zip(S, T)], dtype=np.int64
    )


@dataclass(frozen=True)
class SamplingSchedule:
    """``n_i(r) = n1 + r * b_i`` for each system ``i``."""

    n1: int
    increments: tuple
    r_bar: int

    def __post_init__(self):
        object.__setattr__(self, "increments", tuple(int(b) for b in self.increments))
        if self.n1 < 1 or any(b < 1 for b in self.increments) or self.r_bar < 0:
            raise InvalidParameter("n1 and increments must be positive, r_bar non-negative")

    def n(self, i, r):
        if r < 0:
            raise InvalidParameter(f"round must be non-negative, got {r}")
        return self.n1 + r * self.increments[i]

    def terminal(self, i):
        return self.n(i, self.r_bar)

    def terminal_array(self):
        return self.n1 + self.r_bar * np.asarray(self.increments, dtype=np.int64)


def allocation_ratio(sigma_i, T_i, sigma_j, T_j):
    """Optimal ratio of time budgets ``n_i T_i : n_j T_j`` for two systems."""
    if min(sigma_i, T_i, sigma_j, T_j) <= 0:
        raise InvalidParameter("all inputs must be positive")
    return (sigma_i * math.sqrt(T_i)) / (sigma_j * math.sqrt(T_j))


# ---------------------------------------------------------------------------
# Rinott


@dataclass(frozen=True)
class RinottParams:
    """Inputs of Rinott's constant: coverage ``p_star``, ``n1``, survivor count."""

    p_star: float
    n1: int
    k_prime: int

    def __post_init__(self):
        if not 0 < self.p_star < 1:
            raise InvalidParameter(f"p_star must be in (0, 1), got {self.p_star}")
        _check_n1(self.n1)
        if int(self.k_prime) != self.k_prime or self.k_prime < 2:
            raise InvalidParameter(f"k_prime must be an integer >= 2, got {self.k_prime}")


def rinott_lhs(h, n1, k_prime, panels=None):
    """``E_Y[(E_X[Phi(h / sqrt((n1-1)(1/X + 1/Y)))])**(k'-1)]``, X, Y iid chi2(n1-1)."""
    df = _check_n1(n1) - 1
    lo = float(chi2.ppf(_TAIL, df))
    hi = _chi2_upper(df)

    def integral(x, w):
        pdf_w = w * chi2.pdf(x, df)
        inv = 1.0 / x
        z = h / np.sqrt(df * (inv[:, None] + inv[None, :]))  # rows Y, columns X
        inner = ndtr(z) @ pdf_w
        return float(np.dot(pdf_w, inner ** (k_prime - 1)))

    if panels is not None:
        return integral(*_nodes(lo, hi, panels))
    return _adaptive(integral, lo, hi, 1e-10, "rinott_lhs", panels=4, rtol=1.0)


@lru_cache(maxsize=256)
def _rinott(p_star, n1, k_prime):
    if rinott_lhs(0.0, n1, k_prime) >= p_star - RINOTT_TOL:
        return 0.0
    lo, hi = 0.0, 1.0
    doublings = 0
    while rinott_lhs(hi, n1, k_prime) < p_star:
        lo, hi = hi, 2 * hi
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise NumericalFailure("rinott_constant: no bracket", p_star=p_star)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = rinott_lhs(mid, n1, k_prime)
        if abs(val - p_star) <= RINOTT_TOL:
            return mid
        if val < p_star:
            lo = mid
        else:
            hi = mid
    raise NumericalFailure("rinott_constant: bisection stalled", lo=lo, hi=hi)


def rinott_constant(params):
    """Rinott's constant ``h``; zero when even ``h = 0`` meets the coverage."""
    return _rinott(float(params.p_star), int(params.n1), int(params.k_prime))


def rinott_sample_size(h, S_i, delta, n_terminal):
    """``max(n_terminal, ceil((h * S_i / delta)**2))``."""
    if not delta > 0:
        raise InvalidParameter(f"delta must be positive, got {delta}")
    if not (math.isfinite(h) and math.isfinite(S_i)) or S_i < 0:
        raise InvalidParameter("h and S_i must be finite, S_i non-negative")
    return max(int(n_terminal), _ceil((h * S_i / delta) ** 2))
