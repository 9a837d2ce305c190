"""Model interface shared by every simulation model."""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..rng import Stream


@dataclass(frozen=True)
class Observation:
    """One replication: objective sample and its cost in seconds."""

    value: float
    cost: float


class Model(ABC):
    """A finite set of stochastic systems indexed ``0..system_count-1``.

    Subclasses implement :meth:`replicate`; :meth:`replicate_batch` may be
    overridden with a vectorised version but must return exactly what a loop
    over ``replicate`` on substreams ``first_sub..first_sub+count-1`` would.
    """

    name = "model"

    @property
    @abstractmethod
    def system_count(self):
        ...

    @abstractmethod
    def replicate(self, system_id, stream):
        """Return an :class:`Observation` for ``system_id`` using ``stream``."""

    def replicate_batch(self, system_id, key, first_sub, count):
        """Values and costs of ``count`` replications as two float arrays."""
        obs = [self.replicate(system_id, Stream(key, first_sub + j)) for j in range(count)]
        values = np.array([o.value for o in obs], dtype=np.float64)
        costs = np.array([o.cost for o in obs], dtype=np.float64)
        return values, costs

    def true_mean(self, system_id):
        raise NotImplementedError(f"{type(self).__name__} has no known means")

    def true_means(self):
        return np.array([self.true_mean(i) for i in range(self.system_count)])

    def describe(self):
        """Short JSON-friendly description used in reports."""
        return {"model": self.name, "systems": self.system_count}

    def check_id(self, system_id):
        from ..errors import InvalidParameter

        if not 0 <= system_id < self.system_count:
            raise InvalidParameter(
                f"system_id {system_id} out of range for {self.system_count} systems"
            )
