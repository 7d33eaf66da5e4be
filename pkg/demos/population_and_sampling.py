"""Build a synthetic population and draw samples that under- and
over-represent non-binary respondents.

Run with ``python3 demos/population_and_sampling.py``.
"""

import numpy as np

from poststrat_harmonize import (
    Gender, PopulationSpec, ResponsePattern, SamplingDesign, build_population,
    condition_from_label, draw_sample, sex_table,
)

pattern = ResponsePattern.from_rates(p_nb_male=0.5)
print("joint[gender, sex] response shares:")
print(np.round(pattern.joint, 4))

spec = PopulationSpec(pattern=pattern, condition=condition_from_label("all_different"),
                      size=100_000, seed=1)
pop = build_population(spec)
print(f"\npopulation mean {pop.truth_population_mean:.3f}")
for g in Gender:
    print(f"  gender {g.name.lower():<10} mean {pop.truth_gender_means[g]:.3f}")

table = sex_table(pop)
print(f"\nsex control table: {table.counts.shape} cells, total {table.counts.sum():.0f}")

for rep in ("under", "over"):
    s = draw_sample(pop, SamplingDesign(n=500, representation=rep, seed=2))
    nb = int(np.sum(s.gender == Gender.NONBINARY))
    print(f"{rep:>5}-representation sample: {nb} non-binary of 500 "
          f"(population share {np.mean(pop.gender == Gender.NONBINARY):.3f})")
