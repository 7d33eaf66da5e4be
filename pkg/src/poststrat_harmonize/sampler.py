"""Survey samples with over- or under-represented non-binary respondents."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .domain import Gender
from .popgen import Population


class Representation(str, enum.Enum):
    UNDER = "under"
    OVER = "over"

    @property
    def default_multiplier(self) -> float:
        return 0.5 if self is Representation.UNDER else 2.0


@dataclass(frozen=True)
class SamplingDesign:
    """Sample size and the relative inclusion propensity of non-binary units.

    ``nb_rate_multiplier`` defaults to the representation's value (0.5 for
    under-, 2.0 for over-representation).
    """

    n: int = 500
    representation: Representation = Representation.UNDER
    nb_rate_multiplier: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "representation", Representation(self.representation))
        if self.nb_rate_multiplier is None:
            object.__setattr__(self, "nb_rate_multiplier", self.representation.default_multiplier)
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"sample size must be a positive integer, got {self.n!r}")
        if not self.nb_rate_multiplier > 0:
            raise ValueError("nb_rate_multiplier must be positive")


@dataclass(frozen=True)
class Sample:
    """Units drawn from a population; ``index`` points into the population arrays."""

    population: Population
    index: np.ndarray
    design: SamplingDesign

    @property
    def gender(self):
        return self.population.gender[self.index]

    @property
    def sex(self):
        """Latent binary-sex responses (unknown to the analyst)."""
        return self.population.sex[self.index]

    @property
    def age(self):
        return self.population.age[self.index]

    @property
    def edu(self):
        return self.population.edu[self.index]

    @property
    def y(self):
        return self.population.y[self.index]

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def n_nonbinary(self) -> int:
        return int(np.count_nonzero(self.gender == Gender.NONBINARY))

    @property
    def flagged(self) -> bool:
        """True when the sample holds no non-binary respondents."""
        return self.n_nonbinary == 0


def draw_sample(pop: Population, design: SamplingDesign, rng=None) -> Sample:
    """Unequal-probability sampling without replacement.

    Non-binary units get inclusion propensity ``nb_rate_multiplier`` and all
    others propensity 1.  Units are drawn successively with probability
    proportional to propensity (Efraimidis-Spirakis exponential keys), so a
    multiplier of 1 is simple random sampling without replacement.
    """
    if design.n > pop.size:
        raise ValueError(f"sample size {design.n} exceeds population size {pop.size}")
    if rng is None:
        rng = np.random.default_rng(design.seed)
    propensity = np.where(pop.gender == Gender.NONBINARY, design.nb_rate_multiplier, 1.0)
    keys = rng.standard_exponential(pop.size) / propensity
    if design.n == pop.size:
        index = np.arange(pop.size)
    else:
        index = np.sort(np.argpartition(keys, design.n - 1)[: design.n])
    index.setflags(write=False)
    return Sample(pop, index, design)
