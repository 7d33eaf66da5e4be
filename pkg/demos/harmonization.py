"""Apply every harmonization strategy to one sample and compare the
resulting control tables.

Sample-side strategies assign a sex to each respondent and keep the sex
table.  Population-side strategies keep observed gender and split the sex
table into gender cells.
"""

import numpy as np

from poststrat_harmonize import (
    HarmonizationMethod, PopulationSpec, ResponsePattern, SamplingDesign, apply_method,
    build_population, draw_sample, sex_table,
)

pattern = ResponsePattern.from_rates(p_nb_male=1.0)
pop = build_population(PopulationSpec(pattern=pattern, seed=3))
sample = draw_sample(pop, SamplingDesign(n=500, seed=4))
tab = sex_table(pop)
rng = np.random.default_rng(5)

for method in HarmonizationMethod:
    h = apply_method(method, sample, tab, pattern, rng)
    margin = np.round(h.table.axis_margin()).astype(int)
    print(f"{method.value:<20} {method.side.value:<10} axis={h.sample.axis.value:<7} "
          f"retained={h.sample.n:<4} control margin={margin.tolist()}")
