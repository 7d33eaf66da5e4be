"""Synthetic finite populations and their sex- and gender-axis control tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    Axis, Condition, DemographicMargins, Gender, N_AGE, N_EDU, PoststratTable,
    ResponsePattern, Sex, TargetKind, _check_simplex, condition_from_label,
)

DEFAULT_POPULATION_SIZE = 100_000


@dataclass(frozen=True)
class PopulationSpec:
    """Everything needed to generate one synthetic population.

    ``gender_probs`` is taken from ``pattern``; ``age_effects`` and
    ``edu_effects`` are additive outcome shifts per level and default to
    zero (demographics unrelated to the outcome).
    """

    pattern: ResponsePattern = field(default_factory=lambda: ResponsePattern.from_rates(0.5))
    condition: Condition = field(default_factory=lambda: condition_from_label("all_different"))
    margins: DemographicMargins = field(default_factory=DemographicMargins)
    size: int = DEFAULT_POPULATION_SIZE
    seed: int = 0
    age_effects: tuple[float, float, float] = (0.0, 0.0, 0.0)
    edu_effects: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"population size must be a positive integer, got {self.size!r}")

    @property
    def gender_probs(self):
        return self.pattern.gender_probs


@dataclass(frozen=True)
class Population:
    """A realized population, stored column-wise.

    ``gender`` and ``sex`` hold :class:`Gender` / :class:`Sex` codes, ``sex``
    being each unit's answer to a binary sex question.  Truth values are
    finite-population means; a subgroup with no units has truth ``nan``.
    """

    gender: np.ndarray
    sex: np.ndarray
    age: np.ndarray
    edu: np.ndarray
    y: np.ndarray
    truth_population_mean: float = math.nan
    truth_sex_means: dict = field(default_factory=dict)
    truth_gender_means: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, gender, sex, age, edu, y):
        """Build a population from unit-level columns, computing the truths."""
        gender, sex, age, edu = (np.asarray(a, dtype=np.int64) for a in (gender, sex, age, edu))
        y = np.asarray(y, dtype=float)
        n = len(y)
        if n == 0:
            raise ValueError("population must contain at least one unit")
        if not all(len(a) == n for a in (gender, sex, age, edu)):
            raise ValueError("unit columns must have equal length")
        for name, arr, k in (("gender", gender, 3), ("sex", sex, 2),
                             ("age", age, N_AGE), ("edu", edu, N_EDU)):
            if arr.min() < 0 or arr.max() >= k:
                raise ValueError(f"{name} codes must lie in 0..{k - 1}")
        for arr in (gender, sex, age, edu, y):
            arr.setflags(write=False)
        return cls(
            gender, sex, age, edu, y,
            truth_population_mean=float(y.mean()),
            truth_sex_means={s: _group_mean(y, sex == s) for s in Sex},
            truth_gender_means={g: _group_mean(y, gender == g) for g in Gender},
        )

    @property
    def size(self) -> int:
        return len(self.y)

    def truth(self, target) -> float:
        if target.kind is TargetKind.POPULATION:
            return self.truth_population_mean
        if target.kind is TargetKind.SEX:
            return self.truth_sex_means[target.level]
        return self.truth_gender_means[target.level]

    def to_csv(self, path):
        """Write the units as ``gender,sex,age,edu,y`` (category names, 1-based levels)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gender", "sex", "age", "edu", "y"])
            for g, s, a, e, y in zip(self.gender, self.sex, self.age, self.edu, self.y):
                writer.writerow([Gender(g).name.lower(), Sex(s).name.lower(),
                                 int(a) + 1, int(e) + 1, repr(float(y))])


def _group_mean(y, mask):
    if not mask.any():
        return math.nan
    return float(y[mask].mean())


def build_population(spec: PopulationSpec, rng=None) -> Population:
    """Draw a finite population.

    Each unit's (gender, sex response) pair comes from ``spec.pattern.joint``,
    age and education independently from ``spec.margins``, and
    ``y = mu[gender] + age_effect + edu_effect + sigma * z``.

    Parameters
    ----------
    spec : PopulationSpec
    rng : numpy.random.Generator, optional
        Overrides the generator seeded from ``spec.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n = int(spec.size)
    joint = spec.pattern.joint.ravel()
    cell = rng.choice(joint.size, size=n, p=joint / joint.sum())
    gender, sex = np.divmod(cell, 2)
    age = rng.choice(N_AGE, size=n, p=_check_simplex("age_probs", spec.margins.age_probs, N_AGE))
    edu = rng.choice(N_EDU, size=n, p=_check_simplex("edu_probs", spec.margins.edu_probs, N_EDU))
    cond = spec.condition
    mu = cond.means[gender] + np.asarray(spec.age_effects)[age] + np.asarray(spec.edu_effects)[edu]
    y = mu + cond.sigma * rng.standard_normal(n)
    return Population.from_arrays(gender, sex, age, edu, y)


def _tally(codes, n_levels, age, edu):
    flat = (codes * N_AGE + age) * N_EDU + edu
    counts = np.bincount(flat, minlength=n_levels * N_AGE * N_EDU)
    return counts.reshape(n_levels, N_AGE, N_EDU).astype(float)


def sex_table(pop: Population) -> PoststratTable:
    """Exact population counts by (sex response, age, edu)."""
    return PoststratTable(Axis.SEX, _tally(pop.sex, 2, pop.age, pop.edu))


def gender_table(pop: Population) -> PoststratTable:
    """Exact population counts by (gender, age, edu)."""
    return PoststratTable(Axis.GENDER, _tally(pop.gender, 3, pop.age, pop.edu))


def joint_table(pop: Population) -> np.ndarray:
    """Counts by (sex, gender, age, edu), shape ``(2, 3, 3, 3)``."""
    flat = ((pop.sex * 3 + pop.gender) * N_AGE + pop.age) * N_EDU + pop.edu
    return np.bincount(flat, minlength=2 * 3 * N_AGE * N_EDU).reshape(2, 3, N_AGE, N_EDU).astype(float)
