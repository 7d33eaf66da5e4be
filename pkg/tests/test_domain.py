import numpy as np
import pytest
from hypothesis import given, strategies as st

from poststrat_harmonize.domain import (
    ALL_TARGETS, Axis, Condition, ConditionLabel, EstimateRecord, Gender, HarmonizationMethod,
    PoststratTable, ResponsePattern, Sex, Side, Target, TargetKind, condition_from_label,
)


class TestResponsePattern:
    def test_default_joint_table(self):
        joint = ResponsePattern.from_rates(0.5).joint
        np.testing.assert_allclose(joint, [[0.48, 0.01], [0.01, 0.48], [0.01, 0.01]], atol=1e-12)

    @given(st.floats(0.0, 1.0))
    def test_sex_marginal(self, p):
        marg = ResponsePattern.from_rates(p).sex_marginal
        assert marg[Sex.MALE] == pytest.approx(0.49 + 0.02 * p, abs=1e-12)
        assert marg.sum() == pytest.approx(1.0, abs=1e-12)

    def test_half_gives_even_split(self):
        assert ResponsePattern.from_rates(0.5).sex_marginal[Sex.MALE] == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
    def test_conditionals_normalize(self, p):
        pat = ResponsePattern.from_rates(p)
        np.testing.assert_allclose(pat.sex_given_gender().sum(axis=1), 1.0)
        np.testing.assert_allclose(pat.gender_given_sex().sum(axis=0), 1.0)

    def test_mirror_swaps_columns(self):
        pat = ResponsePattern.from_rates(1.0)
        np.testing.assert_array_equal(pat.mirrored(), pat.joint[:, ::-1])

    @pytest.mark.parametrize("bad", [-0.1, 1.5])
    def test_rejects_bad_probability(self, bad):
        with pytest.raises(ValueError):
            ResponsePattern.from_rates(bad)

    def test_rejects_non_simplex(self):
        with pytest.raises(ValueError):
            ResponsePattern.from_rates(0.5, gender_probs=(0.5, 0.5, 0.5))


class TestCondition:
    @pytest.mark.parametrize("label,means", [
        ("all_different", (10, -10, 0)),
        ("all_same", (0, 0, 0)),
        ("male_female_same", (10, 10, 0)),
        ("female_nb_same", (10, 0, 0)),
    ])
    def test_table_rows(self, label, means):
        cond = condition_from_label(label, 10, 4)
        np.testing.assert_array_equal(cond.means, means)
        assert cond.sigma == 4

    def test_label_consistency_enforced(self):
        with pytest.raises(ValueError):
            Condition(10, -10, 0, 4, ConditionLabel.ALL_SAME)

    def test_female_nb_same_relation(self):
        cond = condition_from_label("female_nb_same")
        assert cond.mu_female == cond.mu_nonbinary != cond.mu_male

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            condition_from_label("nope")


class TestPoststratTable:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            PoststratTable(Axis.SEX, np.ones((3, 3, 3)))

    def test_negative_rejected(self):
        counts = np.ones((2, 3, 3))
        counts[0, 0, 0] = -1
        with pytest.raises(ValueError):
            PoststratTable(Axis.SEX, counts)

    def test_margins_and_cells(self):
        counts = np.arange(27, dtype=float).reshape(3, 3, 3)
        tab = PoststratTable("gender", counts)
        assert tab.axis is Axis.GENDER
        assert tab.total == counts.sum()
        np.testing.assert_array_equal(tab.axis_margin(), counts.sum(axis=(1, 2)))
        cells = list(tab.cells())
        assert len(cells) == 27
        assert cells[-1].axis_value is Gender.NONBINARY and cells[-1].count == 26.0

    def test_read_only(self):
        tab = PoststratTable(Axis.SEX, np.ones((2, 3, 3)))
        with pytest.raises(ValueError):
            tab.counts[0, 0, 0] = 5


class TestTargets:
    def test_names_roundtrip(self):
        names = [t.name for t in ALL_TARGETS]
        assert names == ["population_mean", "sex_mean_male", "sex_mean_female",
                         "gender_mean_male", "gender_mean_female", "gender_mean_nonbinary"]
        for t in ALL_TARGETS:
            assert Target.parse(t.name) == t

    def test_population_target_takes_no_level(self):
        with pytest.raises(ValueError):
            Target(TargetKind.POPULATION, 1)

    def test_estimate_record_interval_checked(self):
        with pytest.raises(ValueError):
            EstimateRecord(ALL_TARGETS[0], 5.0, 6.0, 7.0)
        rec = EstimateRecord.unavailable(ALL_TARGETS[0])
        assert not rec.available and rec.width is None


class TestMethods:
    def test_csv_names(self):
        assert [m.value for m in HarmonizationMethod] == [
            "fifty_fifty", "impute_female", "sex_model_best", "sex_model_worst",
            "gender_model_best", "gender_model_worst", "remove_nb", "known_proportions"]

    @pytest.mark.parametrize("method", list(HarmonizationMethod))
    def test_side_and_axis_agree(self, method):
        assert (method.axis is Axis.SEX) == (method.side is Side.SAMPLE)
