"""Factorial simulation over outcome conditions, non-binary sex responses,
representation levels, harmonization methods and estimators.

Every replicate derives its random streams from ``(base_seed, replicate,
p_nb_male, ...)`` through :class:`numpy.random.SeedSequence`, so a
replicate's output does not depend on which other replicates run, and the
same population and sample are reused across outcome conditions (only the
outcome means change).
"""

from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .domain import (
    ALL_TARGETS, ConditionLabel, DemographicMargins, HarmonizationMethod, ResponsePattern, Side,
    condition_from_label,
)
from .harmonize import apply_method
from .mrp import MrpModelSpec, fit_mrp, poststratify
from .popgen import PopulationSpec, build_population, sex_table
from .sampler import Representation, SamplingDesign, draw_sample
from .weighting import (
    MarginSpec, NonConvergence, WeightVector, cell_weights, rake, trim_weights,
    weighted_estimate,
)

log = logging.getLogger(__name__)


class Estimator(str, enum.Enum):
    WEIGHTED = "weighted"
    MRP = "mrp"


# stream identifiers for seed derivation
_POP, _SAMPLE, _IMPUTE, _MRP = range(4)

ZERO_NB = "zero_nb_sample"


@dataclass(frozen=True)
class PopulationSettings:
    size: int = 100_000
    gender_probs: tuple = (0.49, 0.49, 0.02)
    cross_rate_male_gender: float = 1 / 49
    cross_rate_female_gender: float = 1 / 49
    age_probs: tuple = (1 / 3, 1 / 3, 1 / 3)
    edu_probs: tuple = (1 / 3, 1 / 3, 1 / 3)
    effect_scale: float = 10.0
    sigma: float = 4.0
    age_effects: tuple = (0.0, 0.0, 0.0)
    edu_effects: tuple = (0.0, 0.0, 0.0)

    def pattern(self, p_nb_male) -> ResponsePattern:
        return ResponsePattern.from_rates(p_nb_male, self.gender_probs,
                                          self.cross_rate_male_gender,
                                          self.cross_rate_female_gender)


@dataclass(frozen=True)
class SamplingSettings:
    n: int = 500
    under_multiplier: float = 0.5
    over_multiplier: float = 2.0

    def multiplier(self, representation) -> float:
        if Representation(representation) is Representation.UNDER:
            return self.under_multiplier
        return self.over_multiplier


@dataclass(frozen=True)
class WeightingSettings:
    """``mode`` is ``"rake"`` (one-way margins) or ``"cells"`` (full-cell poststratification)."""

    mode: str = "rake"
    tol: float = 1e-8
    max_iter: int = 1000
    trim_ratio: float | None = None

    def __post_init__(self):
        if self.mode not in ("rake", "cells"):
            raise ValueError(f"weighting mode must be 'rake' or 'cells', got {self.mode!r}")


@dataclass(frozen=True)
class KnownProportionsSettings:
    assumed: tuple = (0.49, 0.49, 0.02)
    p_nb_male_assumed: float = 0.5


@dataclass(frozen=True)
class SimGrid:
    conditions: tuple = tuple(ConditionLabel)
    p_nb_male_values: tuple = (0.0, 0.5, 1.0)
    representations: tuple = tuple(Representation)
    methods: tuple = tuple(HarmonizationMethod)
    estimators: tuple = tuple(Estimator)
    replicates: int = 500
    base_seed: int = 20240601
    population: PopulationSettings = field(default_factory=PopulationSettings)
    sampling: SamplingSettings = field(default_factory=SamplingSettings)
    weighting: WeightingSettings = field(default_factory=WeightingSettings)
    mrp: MrpModelSpec = field(default_factory=MrpModelSpec)
    known_proportions: KnownProportionsSettings = field(default_factory=KnownProportionsSettings)

    def __post_init__(self):
        conv = {
            "conditions": ConditionLabel, "representations": Representation,
            "methods": HarmonizationMethod, "estimators": Estimator,
        }
        for name, kind in conv.items():
            values = tuple(kind(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"grid axis {name!r} is empty")
            object.__setattr__(self, name, values)
        ps = tuple(float(p) for p in self.p_nb_male_values)
        if not ps or any(not 0.0 <= p <= 1.0 for p in ps):
            raise ValueError("p_nb_male_values must be a nonempty list of probabilities")
        object.__setattr__(self, "p_nb_male_values", ps)
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ValueError("replicates must be a positive integer")


class SimRecord(NamedTuple):
    replicate: int
    condition: str
    p_nb_male: float
    representation: str
    method: str
    estimator: str
    target: str
    estimate: float | None
    lower: float | None
    upper: float | None
    truth: float | None
    available: bool
    flagged: bool
    flag_reason: str


RECORD_FIELDS = SimRecord._fields


class SummaryRecord(NamedTuple):
    condition: str
    p_nb_male: float
    representation: str
    method: str
    estimator: str
    target: str
    mean_bias: float
    bias_q025: float
    bias_q975: float
    mean_width: float
    width_q025: float
    width_q975: float
    n_effective: int


SUMMARY_FIELDS = SummaryRecord._fields


def _p_code(p):
    return int(round(p * 1_000_000))


def _rng(base_seed, *key):
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=tuple(key)))


def _seed(base_seed, *key) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=tuple(key)).generate_state(1)[0])


def _code(member):
    return list(type(member)).index(member)


def _marker(rep, cond, p, representation, method, estimator, reason):
    return SimRecord(rep, cond.value, p, representation.value, method.value, estimator.value,
                     "", None, None, None, None, False, True, reason)


def _weights(grid, h, table):
    ws = grid.weighting
    if ws.mode == "cells":
        wv = cell_weights(h, table)
    else:
        wv = rake(h.variables(), MarginSpec.from_table(table), ws.tol, ws.max_iter)
    if ws.trim_ratio is not None:
        wv = trim_weights(wv, ws.trim_ratio)
    return wv


def replicate_population(grid: SimGrid, condition, p_nb_male: float, replicate: int):
    """The population a replicate uses, rebuilt from the grid's seed."""
    ps = grid.population
    condition = condition_from_label(condition, ps.effect_scale, ps.sigma)
    margins = DemographicMargins(tuple(ps.age_probs), tuple(ps.edu_probs))
    spec = PopulationSpec(ps.pattern(p_nb_male), condition, margins, ps.size, 0,
                          tuple(ps.age_effects), tuple(ps.edu_effects))
    return build_population(spec, _rng(grid.base_seed, _POP, replicate, _p_code(p_nb_male)))


def replicate_sample(grid: SimGrid, pop, p_nb_male: float, representation, replicate: int):
    """The sample a replicate draws from ``pop`` for one representation level."""
    representation = Representation(representation)
    design = SamplingDesign(grid.sampling.n, representation,
                            grid.sampling.multiplier(representation))
    return draw_sample(pop, design, _rng(grid.base_seed, _SAMPLE, replicate,
                                         _p_code(p_nb_male), _code(representation)))


def run_replicate(grid: SimGrid, p_nb_male: float, replicate: int) -> list:
    """All records for one (p_nb_male, replicate) pair, across conditions.

    Populations and samples are shared between outcome conditions; each
    condition re-derives ``y`` from the same standard-normal draws.
    """
    pattern = grid.population.pattern(p_nb_male)
    pc = _p_code(p_nb_male)
    records = []
    for cond_label in grid.conditions:
        pop = replicate_population(grid, cond_label, p_nb_male, replicate)
        sex_tab = sex_table(pop)
        truths = {t: pop.truth(t) for t in ALL_TARGETS}
        for representation in grid.representations:
            rc = _code(representation)
            sample = replicate_sample(grid, pop, p_nb_male, representation, replicate)
            if sample.flagged:
                for method in grid.methods:
                    for est in grid.estimators:
                        records.append(_marker(replicate, cond_label, p_nb_male, representation,
                                               method, est, ZERO_NB))
                continue
            fits = {}
            for method in grid.methods:
                mc = _code(method)
                harm = apply_method(
                    method, sample, sex_tab, pattern,
                    _rng(grid.base_seed, _IMPUTE, replicate, pc, rc, mc),
                    grid.known_proportions.assumed, grid.known_proportions.p_nb_male_assumed)
                for est in grid.estimators:
                    try:
                        if est is Estimator.WEIGHTED:
                            wv = _weights(grid, harm.sample, harm.table)
                            results = [weighted_estimate(harm.sample, wv, t, harm.joint)
                                       for t in ALL_TARGETS]
                        else:
                            # population-side methods share one fit of the observed-gender sample
                            key = "gender" if method.side is Side.POPULATION else method
                            if key not in fits:
                                seed = _seed(grid.base_seed, _MRP, replicate, pc, rc,
                                             0 if key == "gender" else mc + 1)
                                fits[key] = fit_mrp(harm.sample, replace(grid.mrp, seed=seed))
                            fit = fits[key]
                            if fit.flagged:
                                records.append(_marker(replicate, cond_label, p_nb_male,
                                                       representation, method, est,
                                                       fit.flag_reason))
                                continue
                            results = [poststratify(fit, harm.table, t, harm.joint)
                                       for t in ALL_TARGETS]
                    except (NonConvergence, ValueError) as err:
                        records.append(_marker(replicate, cond_label, p_nb_male, representation,
                                               method, est, f"error:{err}"))
                        continue
                    for r in results:
                        truth = truths[r.target]
                        ok = r.available and not math.isnan(truth)
                        records.append(SimRecord(
                            replicate, cond_label.value, p_nb_male, representation.value,
                            method.value, est.value, r.target.name,
                            r.estimate if ok else None, r.lower if ok else None,
                            r.upper if ok else None, None if math.isnan(truth) else truth,
                            ok, False, ""))
    return records


def _run_item(args):
    grid, p, rep = args
    return run_replicate(grid, p, rep)


def run_grid(grid: SimGrid, workers: int | None = None, progress=None) -> list:
    """Run every replicate of the grid and return the records in grid order.

    ``workers`` > 1 uses a process pool; results are ordered by
    (p_nb_male, replicate) regardless of completion order.
    """
    if workers is None:
        workers = os.cpu_count() or 1
    items = [(grid, p, rep) for p in grid.p_nb_male_values for rep in range(grid.replicates)]
    out = []
    if workers <= 1:
        results = map(_run_item, items)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_run_item, items, chunksize=max(1, len(items) // (8 * workers)))
    try:
        for i, recs in enumerate(results):
            out.extend(recs)
            if progress is not None:
                progress(i + 1, len(items))
    finally:
        if pool is not None:
            pool.shutdown()
    order = {name: {v.value if hasattr(v, "value") else v: i for i, v in enumerate(vals)}
             for name, vals in (("condition", grid.conditions),
                                ("representation", grid.representations),
                                ("method", grid.methods), ("estimator", grid.estimators))}
    target_order = {t.name: i for i, t in enumerate(ALL_TARGETS)}
    target_order[""] = -1
    out.sort(key=lambda r: (order["condition"][r.condition], r.p_nb_male,
                            order["representation"][r.representation], r.replicate,
                            order["method"][r.method], order["estimator"][r.estimator],
                            target_order[r.target]))
    return out


def _cell_key(r):
    return (r.condition, r.p_nb_male, r.representation, r.method, r.estimator)


def summarize(records) -> list:
    """Bias and interval-width summaries per grid cell and target.

    Uses unflagged, available records.  Quantiles are linear interpolation
    between order statistics (numpy's default rule).
    """
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    groups = {}
    for r in records:
        if r.flagged or not r.available:
            continue
        groups.setdefault(_cell_key(r) + (r.target,), []).append(r)
    out = []
    for key, recs in groups.items():
        bias = np.array([r.estimate - r.truth for r in recs])
        width = np.array([r.upper - r.lower for r in recs])
        bq = np.quantile(bias, [0.025, 0.975])
        wq = np.quantile(width, [0.025, 0.975])
        out.append(SummaryRecord(*key, float(bias.mean()), float(bq[0]), float(bq[1]),
                                 float(width.mean()), float(wq[0]), float(wq[1]), len(recs)))
    for gap in summary_gaps(records):
        log.warning("no usable replicates for %s", "/".join(str(g) for g in gap))
    return out


def summary_gaps(records) -> list:
    """Cells and targets left with no usable replicate because of flagged replicates.

    Targets a method never estimates (all replicates unflagged but
    unavailable) are not gaps.
    """
    cells = {}
    for r in records:
        seen = cells.setdefault(_cell_key(r), set())
        if not r.flagged:
            seen.add(r.target)
    gaps = []
    for key in cells:
        for t in ALL_TARGETS:
            if t.name not in cells[key]:
                gaps.append(key + (t.name,))
    return gaps
