"""Strategies for matching a three-category gender sample to a two-category
sex control table.

Sample-side strategies give every retained respondent an imputed sex and
leave the sex table alone.  Population-side strategies keep the observed
gender and split each sex cell of the control table into gender cells.
Population-side splits are returned both as a gender table and as the full
``(sex, gender, age, edu)`` joint array, which is what lets sex-mean targets
be estimated on a gender-axis analysis (and gender-mean targets on a
sex-axis one).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import (
    Axis, Gender, HarmonizationMethod, PoststratTable, ResponsePattern, Sex, Side,
    _check_simplex,
)
from .sampler import Sample

SMALL_CELL = 5.0


class ModelMode(str, enum.Enum):
    BEST = "best"
    WORST = "worst"
    FITTED = "fitted"


@dataclass(frozen=True)
class ImputationModelSpec:
    """How a simulated "model" assigns sex given gender (or gender given sex).

    ``BEST`` uses the true response pattern, ``WORST`` its mirror image
    (each row's P(male sex) replaced by its complement).  ``FITTED`` is a
    logistic model estimated on ``auxiliary`` data and only applies to the
    sample side.
    """

    mode: ModelMode
    true_pattern: ResponsePattern
    auxiliary: object = None

    def __post_init__(self):
        object.__setattr__(self, "mode", ModelMode(self.mode))
        if self.mode is ModelMode.FITTED and self.auxiliary is None:
            raise ValueError("a fitted model needs auxiliary data")

    def joint(self) -> np.ndarray:
        if self.mode is ModelMode.BEST:
            return self.true_pattern.joint
        if self.mode is ModelMode.WORST:
            return self.true_pattern.mirrored()
        raise ValueError("fitted models have no closed-form joint table")

    def sex_given_gender(self) -> np.ndarray:
        """(3, 2) array of P(sex | gender) used for imputation."""
        cond = self.true_pattern.sex_given_gender()
        if self.mode is ModelMode.WORST:
            cond = cond[:, ::-1]
        return cond

    def gender_given_sex(self) -> np.ndarray:
        """(3, 2) array of P(gender | sex), columns summing to one."""
        joint = self.joint()
        cols = joint.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(cols > 0, joint / cols, 1.0 / 3.0)


@dataclass(frozen=True)
class HarmonizedSample:
    """A sample after harmonization.

    ``imputed_sex`` is ``None`` for population-side methods (the analysis
    runs on observed gender).  Removed units have ``retained == False``;
    all accessors below return retained units only.
    """

    sample: Sample
    method: HarmonizationMethod | None
    axis: Axis
    retained: np.ndarray
    imputed_sex: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.retained.sum())

    @property
    def y(self):
        return self.sample.y[self.retained]

    @property
    def gender(self):
        return self.sample.gender[self.retained]

    @property
    def age(self):
        return self.sample.age[self.retained]

    @property
    def edu(self):
        return self.sample.edu[self.retained]

    @property
    def sex(self):
        """Imputed sex of retained units, or ``None``."""
        if self.imputed_sex is None:
            return None
        return self.imputed_sex[self.retained]

    @property
    def axis_codes(self):
        return self.sex if self.axis is Axis.SEX else self.gender

    def variables(self) -> dict:
        """Per-unit level codes keyed by control-table variable name."""
        return {self.axis.value: self.axis_codes, "age": self.age, "edu": self.edu}

    def cell_index(self):
        """Flat index of each retained unit into an axis table's counts."""
        return np.ravel_multi_index((self.axis_codes, self.age, self.edu),
                                    (len(self.axis.levels), 3, 3))


def _identity_sex(gender):
    """Male gender -> male sex, female -> female; non-binary -> -1 (unassigned)."""
    out = np.full(len(gender), -1, dtype=np.int64)
    out[gender == Gender.MALE] = Sex.MALE
    out[gender == Gender.FEMALE] = Sex.FEMALE
    return out


def _sample_side(s, method, imputed, retained=None):
    if retained is None:
        retained = np.ones(s.n, dtype=bool)
    imputed.setflags(write=False)
    retained.setflags(write=False)
    return HarmonizedSample(s, method, Axis.SEX, retained, imputed)


def fifty_fifty_split(s: Sample, rng) -> HarmonizedSample:
    """Assign each non-binary respondent male or female sex with probability 1/2."""
    sex = _identity_sex(s.gender)
    nb = sex < 0
    sex[nb] = np.where(rng.random(int(nb.sum())) < 0.5, Sex.MALE, Sex.FEMALE)
    return _sample_side(s, HarmonizationMethod.FIFTY_FIFTY, sex)


def impute_all_female(s: Sample) -> HarmonizedSample:
    sex = _identity_sex(s.gender)
    sex[sex < 0] = Sex.FEMALE
    return _sample_side(s, HarmonizationMethod.IMPUTE_FEMALE, sex)


def remove_nonbinary(s: Sample) -> HarmonizedSample:
    sex = _identity_sex(s.gender)
    retained = sex >= 0
    if not retained.any():
        warnings.warn("every sampled unit is non-binary; nothing retained", RuntimeWarning)
    return _sample_side(s, HarmonizationMethod.REMOVE_NB, sex, retained)


def sex_model_impute(s: Sample, model: ImputationModelSpec, rng) -> HarmonizedSample:
    """Draw each respondent's sex from a model of P(sex | gender).

    Rows with a degenerate conditional (probability 0 or 1) assign
    deterministically.  One draw per call; no multiple imputation.
    """
    if model.mode is ModelMode.FITTED:
        p_male = model.auxiliary.predict_male(s.gender, s.age, s.edu)
        method = HarmonizationMethod.SEX_MODEL_BEST
    else:
        p_male = model.sex_given_gender()[s.gender, Sex.MALE]
        method = (HarmonizationMethod.SEX_MODEL_BEST if model.mode is ModelMode.BEST
                  else HarmonizationMethod.SEX_MODEL_WORST)
    u = rng.random(s.n)
    sex = np.where(u < p_male, Sex.MALE, Sex.FEMALE).astype(np.int64)
    return _sample_side(s, method, sex)


def gender_as_observed(s: Sample, method=None) -> HarmonizedSample:
    """The untouched sample, analysed on its gender variable."""
    retained = np.ones(s.n, dtype=bool)
    retained.setflags(write=False)
    return HarmonizedSample(s, method, Axis.GENDER, retained, None)


def _require_sex_table(table):
    if table.axis is not Axis.SEX:
        raise ValueError("expected a sex-axis table")


def _warn_small(joint):
    gender_counts = joint.sum(axis=0)
    if np.any((gender_counts > 0) & (gender_counts < SMALL_CELL)):
        warnings.warn(f"split produced gender cells with fewer than {SMALL_CELL:g} people",
                      RuntimeWarning, stacklevel=3)


def gender_model_joint(sex_tab: PoststratTable, model: ImputationModelSpec) -> np.ndarray:
    """Split every sex cell by P(gender | sex); returns the (2, 3, 3, 3) joint."""
    _require_sex_table(sex_tab)
    cond = model.gender_given_sex()  # (gender, sex)
    joint = cond.T[:, :, None, None] * sex_tab.counts[:, None, :, :]
    _warn_small(joint)
    return joint


def gender_model_split(sex_tab: PoststratTable, model: ImputationModelSpec) -> PoststratTable:
    """Gender table from splitting a sex table with a (best- or worst-case) model."""
    return PoststratTable(Axis.GENDER, gender_model_joint(sex_tab, model).sum(axis=0))


def known_proportions_joint(sex_tab: PoststratTable, assumed=(0.49, 0.49, 0.02),
                            p_nb_male_assumed: float = 0.5) -> np.ndarray:
    """Split sex cells using an assumed gender distribution.

    In each (age, edu) cell with total ``N``, ``assumed[2] * N`` people are
    moved to non-binary gender: a share ``p_nb_male_assumed`` of them taken
    from the male-sex cell and the rest from the female-sex cell.  The
    remainder of each sex cell keeps the matching gender; nobody is moved
    between male and female.
    """
    _require_sex_table(sex_tab)
    assumed = _check_simplex("assumed", assumed, 3)
    if not 0.0 <= p_nb_male_assumed <= 1.0:
        raise ValueError("p_nb_male_assumed must lie in [0, 1]")
    counts = sex_tab.counts
    total = counts.sum(axis=0)
    share_from = np.array([p_nb_male_assumed, 1.0 - p_nb_male_assumed])
    take = assumed[2] * share_from[:, None, None] * total[None]
    if np.any((take > 0) & (take >= counts)):
        raise ValueError("assumed non-binary share is at least as large as a sex cell; "
                         "cannot split")
    joint = np.zeros((2, 3) + counts.shape[1:])
    joint[Sex.MALE, Gender.MALE] = counts[Sex.MALE] - take[Sex.MALE]
    joint[Sex.FEMALE, Gender.FEMALE] = counts[Sex.FEMALE] - take[Sex.FEMALE]
    joint[:, Gender.NONBINARY] = take
    _warn_small(joint)
    return joint


def assume_known_proportions(sex_tab: PoststratTable, assumed=(0.49, 0.49, 0.02),
                             p_nb_male_assumed: float = 0.5) -> PoststratTable:
    return PoststratTable(
        Axis.GENDER, known_proportions_joint(sex_tab, assumed, p_nb_male_assumed).sum(axis=0))


def sample_side_joint(h: HarmonizedSample, sex_tab: PoststratTable) -> np.ndarray:
    """Joint (sex, gender, age, edu) counts implied by a sex-imputed sample.

    Each sex cell of the table is shared out over genders in proportion to
    the gender mix among retained respondents with that imputed sex.  A
    gender absent from the harmonized sample (e.g. after removal) gets zero.
    """
    _require_sex_table(sex_tab)
    mix = np.zeros((2, 3))
    np.add.at(mix, (h.sex, h.gender), 1.0)
    rows = mix.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        mix = np.where(rows > 0, mix / rows, 0.0)
    return mix[:, :, None, None] * sex_tab.counts[:, None, :, :]


@dataclass(frozen=True)
class Harmonized:
    """Output of :func:`apply_method`: the analysis sample, control table and joint."""

    sample: HarmonizedSample
    table: PoststratTable
    joint: np.ndarray


def apply_method(method, s: Sample, sex_tab: PoststratTable, pattern: ResponsePattern,
                 rng, assumed=(0.49, 0.49, 0.02), p_nb_male_assumed=0.5) -> Harmonized:
    """Run one harmonization strategy end to end.

    ``pattern`` is the true response pattern, used by the best/worst-case
    model strategies.
    """
    method = HarmonizationMethod(method)
    M = HarmonizationMethod
    if method.side is Side.SAMPLE:
        if method is M.FIFTY_FIFTY:
            h = fifty_fifty_split(s, rng)
        elif method is M.IMPUTE_FEMALE:
            h = impute_all_female(s)
        elif method is M.REMOVE_NB:
            h = remove_nonbinary(s)
        else:
            mode = ModelMode.BEST if method is M.SEX_MODEL_BEST else ModelMode.WORST
            h = sex_model_impute(s, ImputationModelSpec(mode, pattern), rng)
        return Harmonized(h, sex_tab, sample_side_joint(h, sex_tab))

    if method is M.KNOWN_PROPORTIONS:
        joint = known_proportions_joint(sex_tab, assumed, p_nb_male_assumed)
    else:
        mode = ModelMode.BEST if method is M.GENDER_MODEL_BEST else ModelMode.WORST
        joint = gender_model_joint(sex_tab, ImputationModelSpec(mode, pattern))
    table = PoststratTable(Axis.GENDER, joint.sum(axis=0))
    return Harmonized(gender_as_observed(s, method), table, joint)


class LogisticSexModel:
    """Main-effects logistic model of P(male sex | gender, age, edu).

    Fitted by Newton-Raphson on auxiliary data that records both gender and
    sex.  A small ridge penalty keeps separated categories finite.
    """

    def __init__(self, ridge=1e-3, max_iter=50, tol=1e-10):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol
        self.coef_ = None

    @staticmethod
    def _design(gender, age, edu):
        gender, age, edu = (np.asarray(a) for a in (gender, age, edu))
        cols = [np.ones(len(gender))]
        cols += [(gender == g).astype(float) for g in (1, 2)]
        cols += [(age == a).astype(float) for a in (1, 2)]
        cols += [(edu == e).astype(float) for e in (1, 2)]
        return np.column_stack(cols)

    def fit(self, gender, age, edu, sex):
        X = self._design(gender, age, edu)
        t = (np.asarray(sex) == Sex.MALE).astype(float)
        beta = np.zeros(X.shape[1])
        penalty = self.ridge * np.eye(X.shape[1])
        penalty[0, 0] = 0.0
        for _ in range(self.max_iter):
            p = 1.0 / (1.0 + np.exp(-X @ beta))
            grad = X.T @ (t - p) - penalty @ beta
            hess = (X * (p * (1 - p))[:, None]).T @ X + penalty
            step = np.linalg.solve(hess, grad)
            beta += step
            if np.max(np.abs(step)) < self.tol:
                break
        self.coef_ = beta
        return self

    def predict_male(self, gender, age, edu):
        if self.coef_ is None:
            raise RuntimeError("model is not fitted")
        return 1.0 / (1.0 + np.exp(-self._design(gender, age, edu) @ self.coef_))
