"""Simulation and estimation tools for harmonizing three-category gender
survey data with two-category sex population tables."""

from .domain import (
    ALL_TARGETS, Axis, Condition, ConditionLabel, DemographicMargins, EstimateRecord, Gender,
    HarmonizationMethod, PoststratTable, ResponsePattern, Sex, Side, Target, TargetKind,
    condition_from_label,
)
from .harmonize import Harmonized, HarmonizedSample, ImputationModelSpec, ModelMode, apply_method
from .mrp import MrpFit, MrpModelSpec, fit_mrp, poststratify
from .popgen import Population, PopulationSpec, build_population, gender_table, sex_table
from .sampler import Representation, Sample, SamplingDesign, draw_sample
from .simstudy import Estimator, SimGrid, SimRecord, SummaryRecord, run_grid, summarize
from .weighting import MarginSpec, NonConvergence, WeightVector, cell_weights, rake, weighted_estimate

__version__ = "0.1.0"
