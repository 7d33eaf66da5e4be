"""Rake a harmonized sample to one-way margins and estimate subgroup means
with linearized standard errors.  Over-representation keeps enough
non-binary respondents in the sample for the gender margin to be matched.
"""

import numpy as np

from poststrat_harmonize import (
    ALL_TARGETS, MarginSpec, PopulationSpec, SamplingDesign, apply_method, build_population,
    draw_sample, rake, sex_table, weighted_estimate,
)

pop = build_population(PopulationSpec(seed=11))
sample = draw_sample(pop, SamplingDesign(n=500, representation="over", seed=12))
h = apply_method("gender_model_best", sample, sex_table(pop), PopulationSpec().pattern,
                 np.random.default_rng(13))

margins = MarginSpec.from_table(h.table)
wv = rake(h.sample, margins)
print(f"raking converged in {wv.iterations} cycles, discrepancy {wv.discrepancy:.2e}")
print(f"weights sum to {wv.total:.1f} (population {pop.size})\n")

for target in ALL_TARGETS:
    est = weighted_estimate(h.sample, wv, target, h.joint)
    if not est.available:
        print(f"{target.name:<26} unavailable")
        continue
    print(f"{target.name:<26} {est.estimate:7.3f} [{est.lower:7.3f}, {est.upper:7.3f}]"
          f"  truth {pop.truth(target):7.3f}")
