import warnings

import numpy as np
import pytest

from poststrat_harmonize.domain import (
    Axis, Gender, HarmonizationMethod, PoststratTable, ResponsePattern, Sex, condition_from_label,
)
from poststrat_harmonize.harmonize import (
    ImputationModelSpec, LogisticSexModel, ModelMode, apply_method, assume_known_proportions,
    fifty_fifty_split, gender_model_joint, gender_model_split, impute_all_female,
    known_proportions_joint, remove_nonbinary, sample_side_joint, sex_model_impute,
)
from poststrat_harmonize.popgen import Population, PopulationSpec, build_population, sex_table
from poststrat_harmonize.sampler import Sample, SamplingDesign, draw_sample


def _sample_from(gender, seed=0):
    gender = np.asarray(gender)
    n = len(gender)
    rng = np.random.default_rng(seed)
    pop = Population.from_arrays(gender, np.zeros(n, int), rng.integers(0, 3, n),
                                 rng.integers(0, 3, n), rng.normal(size=n))
    return Sample(pop, np.arange(n), SamplingDesign(n=n))


def _sex_table_with_male_cell(male=5000.0, female=5000.0):
    counts = np.full((2, 3, 3), 1000.0)
    counts[Sex.MALE, 0, 0] = male
    counts[Sex.FEMALE, 0, 0] = female
    return PoststratTable(Axis.SEX, counts)


MF_ONLY = np.array([0, 1] * 50)


class TestSampleSide:
    def test_fifty_fifty_no_nb_is_identity(self, rng):
        h = fifty_fifty_split(_sample_from(MF_ONLY), rng)
        np.testing.assert_array_equal(h.sex, MF_ONLY)

    def test_fifty_fifty_share(self, rng):
        h = fifty_fifty_split(_sample_from(np.full(10_000, 2)), rng)
        assert np.mean(h.sex == Sex.MALE) == pytest.approx(0.5, abs=0.015)

    def test_fifty_fifty_deterministic(self):
        s = _sample_from([2] * 50 + [0] * 5)
        a = fifty_fifty_split(s, np.random.default_rng(3)).sex
        b = fifty_fifty_split(s, np.random.default_rng(3)).sex
        np.testing.assert_array_equal(a, b)

    def test_impute_female_rule(self):
        h = impute_all_female(_sample_from([2, 2, 0]))
        np.testing.assert_array_equal(h.sex, [Sex.FEMALE, Sex.FEMALE, Sex.MALE])
        h = impute_all_female(_sample_from(np.array([0, 2, 1, 2])))
        assert not np.any((h.sex == Sex.MALE) & (h.gender == Gender.NONBINARY))

    def test_remove_counts(self):
        gender = np.array([0] * 240 + [1] * 250 + [2] * 10)
        h = remove_nonbinary(_sample_from(gender))
        assert h.n == 490
        assert not np.any(h.gender == Gender.NONBINARY)
        assert remove_nonbinary(_sample_from(MF_ONLY)).n == 100

    @pytest.mark.parametrize("method", ["fifty_fifty", "impute_female", "remove_nb"])
    def test_gender_preserving(self, method):
        gender = np.array([0, 1, 2] * 100)
        pop = _sample_from(gender)
        h = apply_method(method, pop, _sex_table_with_male_cell(), ResponsePattern.from_rates(0.5),
                         np.random.default_rng(0)).sample
        mf = h.gender != Gender.NONBINARY
        np.testing.assert_array_equal(h.sex[mf], h.gender[mf])

    def test_sex_model_extremes(self, rng):
        s = _sample_from(np.full(200, 2))
        best = sex_model_impute(s, ImputationModelSpec("best", ResponsePattern.from_rates(1.0)), rng)
        worst = sex_model_impute(s, ImputationModelSpec("worst", ResponsePattern.from_rates(1.0)), rng)
        assert np.all(best.sex == Sex.MALE)
        assert np.all(worst.sex == Sex.FEMALE)

    def test_sex_model_cross_rate(self, rng):
        s = _sample_from(np.zeros(100_000, int))
        h = sex_model_impute(s, ImputationModelSpec("best", ResponsePattern.from_rates(0.5)), rng)
        assert np.mean(h.sex == Sex.FEMALE) == pytest.approx(1 / 49, abs=0.002)

    @pytest.mark.parametrize("p", [0.0, 0.5, 1.0])
    def test_sex_model_recovers_marginal(self, p):
        pat = ResponsePattern.from_rates(p)
        pop = build_population(PopulationSpec(pat, condition_from_label("all_same"),
                                              size=100_000, seed=2))
        s = Sample(pop, np.arange(pop.size), SamplingDesign(n=pop.size))
        h = sex_model_impute(s, ImputationModelSpec("best", pat), np.random.default_rng(9))
        share = np.mean(h.sex == Sex.MALE)
        # realized gender mix of the population plus sampling noise of the imputation
        assert share == pytest.approx(0.49 + 0.02 * p, abs=3 * np.sqrt(0.25 / pop.size) + 0.005)

    @pytest.mark.parametrize("p", [0.0, 0.2, 0.5, 1.0])
    def test_worst_is_complement(self, p):
        pat = ResponsePattern.from_rates(p)
        best = ImputationModelSpec(ModelMode.BEST, pat).sex_given_gender()
        worst = ImputationModelSpec(ModelMode.WORST, pat).sex_given_gender()
        assert worst[Gender.NONBINARY, Sex.MALE] == pytest.approx(1 - best[Gender.NONBINARY, Sex.MALE])

    def test_fitted_needs_auxiliary(self):
        with pytest.raises(ValueError):
            ImputationModelSpec("fitted", ResponsePattern.from_rates(0.5))


class TestPopulationSide:
    def test_known_proportions_example(self):
        tab = _sex_table_with_male_cell()
        g = assume_known_proportions(tab, (0.49, 0.49, 0.02), 0.5)
        assert g.axis is Axis.GENDER
        np.testing.assert_allclose(g.counts[:, 0, 0], [4900, 4900, 200])

    def test_known_proportions_zero_share(self):
        tab = _sex_table_with_male_cell()
        g = assume_known_proportions(tab, (0.5, 0.5, 0.0))
        np.testing.assert_array_equal(g.counts[:2], tab.counts)
        assert g.counts[2].sum() == 0

    def test_known_proportions_too_large(self):
        counts = np.full((2, 3, 3), 10.0)
        counts[Sex.MALE, 1, 1] = 0.5
        with pytest.raises(ValueError):
            known_proportions_joint(PoststratTable(Axis.SEX, counts), (0.45, 0.45, 0.1))

    def test_model_split_examples(self):
        tab = _sex_table_with_male_cell()
        pat = ResponsePattern.from_rates(0.5)
        best = gender_model_joint(tab, ImputationModelSpec("best", pat))
        worst = gender_model_joint(tab, ImputationModelSpec("worst", pat))
        # the male-sex cell's share of each gender cell
        np.testing.assert_allclose(best[Sex.MALE, :, 0, 0], [4800, 100, 100])
        np.testing.assert_allclose(worst[Sex.MALE, :, 0, 0], [100, 4800, 100])
        split = gender_model_split(tab, ImputationModelSpec("best", pat))
        np.testing.assert_allclose(split.counts, best.sum(axis=0))

    @pytest.mark.parametrize("method", ["gender_model_best", "gender_model_worst",
                                        "known_proportions"])
    @pytest.mark.parametrize("p", [0.0, 0.5, 1.0])
    def test_conservation(self, method, p):
        pop = build_population(PopulationSpec(ResponsePattern.from_rates(p),
                                              condition_from_label("all_same"), size=20_000, seed=4))
        tab = sex_table(pop)
        s = draw_sample(pop, SamplingDesign(n=200), np.random.default_rng(0))
        out = apply_method(method, s, tab, ResponsePattern.from_rates(p), np.random.default_rng(1))
        assert out.table.axis is Axis.GENDER and out.sample.axis is Axis.GENDER
        total = tab.counts.sum(axis=0)
        np.testing.assert_allclose(out.table.counts.sum(axis=0), total, rtol=1e-9)
        np.testing.assert_allclose(out.joint.sum(axis=1), tab.counts, rtol=1e-9)

    def test_small_cell_warning(self):
        counts = np.full((2, 3, 3), 100.0)
        with pytest.warns(RuntimeWarning, match="fewer than"):
            known_proportions_joint(PoststratTable(Axis.SEX, counts))

    def test_requires_sex_table(self):
        with pytest.raises(ValueError):
            gender_model_joint(PoststratTable(Axis.GENDER, np.ones((3, 3, 3))),
                               ImputationModelSpec("best", ResponsePattern.from_rates(0.5)))


class TestJoints:
    def test_sample_side_joint_conserves_sex_table(self, rng):
        s = _sample_from(np.array([0, 1, 2] * 30 + [0, 1] * 20))
        h = fifty_fifty_split(s, rng)
        tab = _sex_table_with_male_cell()
        joint = sample_side_joint(h, tab)
        np.testing.assert_allclose(joint.sum(axis=1), tab.counts)

    def test_removed_gender_gets_zero(self):
        h = remove_nonbinary(_sample_from(np.array([0, 1, 2] * 30)))
        joint = sample_side_joint(h, _sex_table_with_male_cell())
        assert joint[:, Gender.NONBINARY].sum() == 0


class TestLogisticModel:
    def test_recovers_probabilities(self):
        rng = np.random.default_rng(0)
        n = 20_000
        gender = rng.choice(3, n, p=[0.45, 0.45, 0.1])
        age = rng.integers(0, 3, n)
        edu = rng.integers(0, 3, n)
        p_true = np.array([0.98, 0.02, 0.7])[gender]
        sex = np.where(rng.random(n) < p_true, Sex.MALE, Sex.FEMALE)
        model = LogisticSexModel().fit(gender, age, edu, sex)
        pred = model.predict_male(np.array([0, 1, 2]), np.zeros(3, int), np.zeros(3, int))
        np.testing.assert_allclose(pred, [0.98, 0.02, 0.7], atol=0.05)

    def test_fitted_imputer(self, rng):
        gender = np.array([0, 1, 2] * 1000)
        s = _sample_from(gender)
        model = LogisticSexModel().fit(gender, s.age, s.edu,
                                       np.where(gender == 0, Sex.MALE, Sex.FEMALE))
        h = sex_model_impute(s, ImputationModelSpec("fitted", ResponsePattern.from_rates(0.5),
                                                    auxiliary=model), rng)
        assert np.mean(h.sex[gender == 0] == Sex.MALE) > 0.95
