"""Independent normal systems with known means."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from ..errors import InvalidParameter
from ..kernels import uniforms
from ..rng import draw_normal
from .base import Model, Observation


@dataclass(frozen=True)
class SyntheticConfig:
    """Normal systems; ``costs`` is one constant or one constant per system."""

    means: tuple
    variances: tuple
    costs: object = 1e-3
    name: str = field(default="synthetic", compare=False)

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        variances = tuple(float(v) for v in self.variances)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        if len(means) != len(variances):
            raise InvalidParameter(
                f"means and variances differ in length ({len(means)} vs {len(variances)})"
            )
        if not means:
            raise InvalidParameter("at least one system is required")
        if any(not np.isfinite(m) for m in means):
            raise InvalidParameter("means must be finite")
        if any(not (v >= 0 and np.isfinite(v)) for v in variances):
            raise InvalidParameter("variances must be finite and non-negative")
        costs = self.costs
        if np.ndim(costs) == 0:
            costs = float(costs)
            bad = costs < 0
        else:
            costs = tuple(float(c) for c in costs)
            if len(costs) != len(means):
                raise InvalidParameter("per-system costs must match the number of systems")
            bad = any(c < 0 for c in costs)
        if bad:
            raise InvalidParameter("costs must be non-negative")
        object.__setattr__(self, "costs", costs)

    def cost_of(self, i):
        return self.costs if isinstance(self.costs, float) else self.costs[i]


def slippage_config(k, delta, sigma=1.0, cost=1e-3):
    """``k`` systems with mean 0 except the last, which has mean ``delta``."""
    if k < 1:
        raise InvalidParameter(f"k must be positive, got {k}")
    means = [0.0] * (k - 1) + [float(delta)]
    return SyntheticConfig(means, [float(sigma) ** 2] * k, cost, name="slippage")


def synthetic_replicate(i, cfg, stream):
    """One normal draw for system ``i``; consumes one uniform."""
    if not 0 <= i < len(cfg.means):
        raise InvalidParameter(f"system index {i} out of range for {len(cfg.means)} systems")
    value = draw_normal(stream, cfg.means[i], float(np.sqrt(cfg.variances[i])))
    return Observation(value, cfg.cost_of(i))


class SyntheticModel(Model):
    name = "synthetic"

    def __init__(self, cfg):
        self.cfg = cfg
        self._sd = np.sqrt(np.asarray(cfg.variances))

    @property
    def system_count(self):
        return len(self.cfg.means)

    def replicate(self, system_id, stream):
        return synthetic_replicate(system_id, self.cfg, stream)

    def replicate_batch(self, system_id, key, first_sub, count):
        self.check_id(system_id)
        u = uniforms(key, first_sub, np.ones(count, dtype=np.int64))[:, 0]
        sd = self._sd[system_id]
        mean = self.cfg.means[system_id]
        values = mean + sd * ndtri(u) if sd > 0 else np.full(count, mean)
        return values, np.full(count, self.cfg.cost_of(system_id))

    def true_mean(self, system_id):
        self.check_id(system_id)
        return self.cfg.means[system_id]

    def true_means(self):
        return np.asarray(self.cfg.means)

    def describe(self):
        return {"model": self.cfg.name, "systems": self.system_count}
