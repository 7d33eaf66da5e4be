"""Shared vocabulary for the simulation: categories, response patterns,
outcome conditions, poststratification tables and estimate records.

Respondent-level data is held column-wise in numpy arrays (see
:class:`poststrat_harmonize.popgen.Population`), so the "respondent" here is
a set of aligned integer codes rather than a Python object per unit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

PROB_TOL = 1e-12


class Gender(enum.IntEnum):
    MALE = 0
    FEMALE = 1
    NONBINARY = 2


class Sex(enum.IntEnum):
    MALE = 0
    FEMALE = 1


class Axis(str, enum.Enum):
    """Which sex/gender variable a poststratification table is indexed by."""

    SEX = "sex"
    GENDER = "gender"

    @property
    def levels(self):
        return tuple(Sex) if self is Axis.SEX else tuple(Gender)


N_AGE = 3
N_EDU = 3


def _check_prob(name, value):
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


def _check_simplex(name, probs, size):
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (size,):
        raise ValueError(f"{name} must have exactly {size} entries")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} must be nonnegative and sum to 1, got {probs.tolist()}")
    return probs


@dataclass(frozen=True)
class ResponsePattern:
    """Joint distribution of gender response and binary-sex response.

    ``joint[g, s]`` is the population share answering gender ``g`` and sex
    ``s``.  Build it with :meth:`from_rates`; the default arguments
    reproduce the 48/1/1/48 table with the non-binary row split by
    ``p_nb_male``.
    """

    gender_probs: tuple[float, float, float]
    p_nb_male: float
    cross_rate_male_gender: float
    cross_rate_female_gender: float

    def __post_init__(self):
        _check_simplex("gender_probs", self.gender_probs, 3)
        _check_prob("p_nb_male", self.p_nb_male)
        _check_prob("cross_rate_male_gender", self.cross_rate_male_gender)
        _check_prob("cross_rate_female_gender", self.cross_rate_female_gender)

    @classmethod
    def from_rates(cls, p_nb_male, gender_probs=(0.49, 0.49, 0.02),
                   cross_rate_male_gender=1 / 49, cross_rate_female_gender=1 / 49):
        return cls(tuple(float(p) for p in gender_probs), float(p_nb_male),
                   float(cross_rate_male_gender), float(cross_rate_female_gender))

    @property
    def joint(self) -> np.ndarray:
        pm, pf, po = self.gender_probs
        cm, cf = self.cross_rate_male_gender, self.cross_rate_female_gender
        q = self.p_nb_male
        return np.array([
            [pm * (1 - cm), pm * cm],
            [pf * cf, pf * (1 - cf)],
            [po * q, po * (1 - q)],
        ])

    @property
    def sex_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def sex_given_gender(self) -> np.ndarray:
        """P(sex | gender) as a (3, 2) array; empty gender rows map to (0.5, 0.5)."""
        joint = self.joint
        rows = joint.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(rows > 0, joint / rows, 0.5)
        return cond

    def gender_given_sex(self) -> np.ndarray:
        """P(gender | sex) as a (3, 2) array (columns sum to one)."""
        joint = self.joint
        cols = joint.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(cols > 0, joint / cols, 1.0 / 3.0)
        return cond

    def mirrored(self) -> np.ndarray:
        """Joint table with the sex columns swapped in every gender row.

        This is the "opposite proportions" assignment: q -> 1 - q for the
        conditional P(male sex | gender) of each row.
        """
        return self.joint[:, ::-1].copy()


@dataclass(frozen=True)
class DemographicMargins:
    age_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    edu_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        _check_simplex("age_probs", self.age_probs, N_AGE)
        _check_simplex("edu_probs", self.edu_probs, N_EDU)


class ConditionLabel(str, enum.Enum):
    ALL_SAME = "all_same"
    MALE_FEMALE_SAME = "male_female_same"
    FEMALE_NB_SAME = "female_nb_same"
    ALL_DIFFERENT = "all_different"


# (male, female, non-binary) outcome means at scale 10
_CONDITION_TABLE = {
    ConditionLabel.ALL_SAME: (0.0, 0.0, 0.0),
    ConditionLabel.MALE_FEMALE_SAME: (10.0, 10.0, 0.0),
    ConditionLabel.FEMALE_NB_SAME: (10.0, 0.0, 0.0),
    ConditionLabel.ALL_DIFFERENT: (10.0, -10.0, 0.0),
}


def _label_for_means(mu_m, mu_f, mu_nb):
    if mu_m == mu_f == mu_nb:
        return ConditionLabel.ALL_SAME
    if mu_m == mu_f:
        return ConditionLabel.MALE_FEMALE_SAME
    if mu_f == mu_nb:
        return ConditionLabel.FEMALE_NB_SAME
    if mu_m != mu_nb:
        return ConditionLabel.ALL_DIFFERENT
    return None  # male == nb != female has no label


@dataclass(frozen=True)
class Condition:
    mu_male: float
    mu_female: float
    mu_nonbinary: float
    sigma: float = 4.0
    label: ConditionLabel = ConditionLabel.ALL_DIFFERENT

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "label", ConditionLabel(self.label))
        implied = _label_for_means(self.mu_male, self.mu_female, self.mu_nonbinary)
        if implied is not self.label:
            raise ValueError(
                f"means ({self.mu_male}, {self.mu_female}, {self.mu_nonbinary}) "
                f"do not match label {self.label.value!r}")

    @property
    def means(self) -> np.ndarray:
        """Outcome means indexed by :class:`Gender` code."""
        return np.array([self.mu_male, self.mu_female, self.mu_nonbinary])


def condition_from_label(label, scale: float = 10.0, sigma: float = 4.0) -> Condition:
    """Outcome condition for one row of the effect-size table.

    The tabulated means are multiplied by ``scale / 10``, so the default
    scale reproduces the table exactly.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    try:
        label = ConditionLabel(label)
    except ValueError:
        raise ValueError(f"unknown condition label {label!r}") from None
    mu = [m * scale / 10.0 for m in _CONDITION_TABLE[label]]
    return Condition(mu[0] + 0.0, mu[1] + 0.0, mu[2] + 0.0, sigma, label)


class PoststratCell(NamedTuple):
    axis_value: enum.IntEnum
    age: int
    edu: int
    count: float


@dataclass(frozen=True)
class PoststratTable:
    """Population counts indexed by (sex or gender, age, education).

    ``counts`` has shape ``(len(axis.levels), 3, 3)``; counts may be
    fractional when the table comes from splitting another table.
    """

    axis: Axis
    counts: np.ndarray

    def __post_init__(self):
        axis = Axis(self.axis)
        counts = np.array(self.counts, dtype=float)
        expected = (len(axis.levels), N_AGE, N_EDU)
        if counts.shape != expected:
            raise ValueError(f"{axis.value} table must have shape {expected}, got {counts.shape}")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValueError("cell counts must be finite and nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def cells(self) -> Iterator[PoststratCell]:
        levels = self.axis.levels
        for idx in np.ndindex(self.counts.shape):
            yield PoststratCell(levels[idx[0]], idx[1], idx[2], float(self.counts[idx]))

    def axis_margin(self) -> np.ndarray:
        return self.counts.sum(axis=(1, 2))

    def age_margin(self) -> np.ndarray:
        return self.counts.sum(axis=(0, 2))

    def edu_margin(self) -> np.ndarray:
        return self.counts.sum(axis=(0, 1))


class TargetKind(str, enum.Enum):
    POPULATION = "population"
    SEX = "sex"
    GENDER = "gender"


@dataclass(frozen=True)
class Target:
    kind: TargetKind
    level: int | None = None

    def __post_init__(self):
        kind = TargetKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is TargetKind.POPULATION:
            if self.level is not None:
                raise ValueError("population target takes no level")
        elif kind is TargetKind.SEX:
            object.__setattr__(self, "level", Sex(self.level))
        else:
            object.__setattr__(self, "level", Gender(self.level))

    @property
    def name(self) -> str:
        if self.kind is TargetKind.POPULATION:
            return "population_mean"
        return f"{self.kind.value}_mean_{self.level.name.lower()}"

    @classmethod
    def parse(cls, name: str) -> "Target":
        for target in ALL_TARGETS:
            if target.name == name:
                return target
        raise ValueError(f"unknown target {name!r}")

    def __str__(self):
        return self.name


POPULATION_MEAN = Target(TargetKind.POPULATION)
ALL_TARGETS = (
    POPULATION_MEAN,
    Target(TargetKind.SEX, Sex.MALE),
    Target(TargetKind.SEX, Sex.FEMALE),
    Target(TargetKind.GENDER, Gender.MALE),
    Target(TargetKind.GENDER, Gender.FEMALE),
    Target(TargetKind.GENDER, Gender.NONBINARY),
)


@dataclass(frozen=True)
class EstimateRecord:
    target: Target
    estimate: float | None = None
    lower: float | None = None
    upper: float | None = None
    truth: float | None = None
    available: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.available:
            if None in (self.estimate, self.lower, self.upper):
                raise ValueError("available estimates need estimate, lower and upper")
            if not self.lower <= self.estimate <= self.upper:
                raise ValueError(
                    f"interval [{self.lower}, {self.upper}] does not contain {self.estimate}")

    @classmethod
    def unavailable(cls, target, truth=None):
        return cls(target, None, None, None, truth, available=False)

    @property
    def width(self):
        return None if not self.available else self.upper - self.lower

    def with_truth(self, truth):
        return EstimateRecord(self.target, self.estimate, self.lower, self.upper,
                              truth, self.available, self.extra)


class Side(str, enum.Enum):
    SAMPLE = "sample"
    POPULATION = "population"


class HarmonizationMethod(str, enum.Enum):
    """The eight sex/gender harmonization strategies.

    Values are the names used in result files.
    """

    FIFTY_FIFTY = "fifty_fifty"
    IMPUTE_FEMALE = "impute_female"
    SEX_MODEL_BEST = "sex_model_best"
    SEX_MODEL_WORST = "sex_model_worst"
    GENDER_MODEL_BEST = "gender_model_best"
    GENDER_MODEL_WORST = "gender_model_worst"
    REMOVE_NB = "remove_nb"
    KNOWN_PROPORTIONS = "known_proportions"

    @property
    def side(self) -> Side:
        if self in (HarmonizationMethod.GENDER_MODEL_BEST,
                    HarmonizationMethod.GENDER_MODEL_WORST,
                    HarmonizationMethod.KNOWN_PROPORTIONS):
            return Side.POPULATION
        return Side.SAMPLE

    @property
    def axis(self) -> Axis:
        """Variable the sample is poststratified on after harmonization."""
        return Axis.SEX if self.side is Side.SAMPLE else Axis.GENDER
