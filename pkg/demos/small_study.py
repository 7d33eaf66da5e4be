"""Run a small simulation grid, summarize bias and interval width, and draw
the report figures into ``demo_report/``.
"""

from poststrat_harmonize import SimGrid, run_grid, summarize
from poststrat_harmonize.report import write_report

grid = SimGrid(conditions=("all_different",), p_nb_male_values=(0.0, 1.0),
               representations=("under",), methods=("remove_nb", "sex_model_best",
                                                   "known_proportions"),
               estimators=("weighted",), replicates=40, base_seed=5)
records = run_grid(grid, workers=1)
summary = summarize(records)

for row in summary:
    if row.target == "population_mean":
        print(f"p={row.p_nb_male:<4} {row.method:<18} bias {row.mean_bias:+.3f} "
              f"width {row.mean_width:.3f} (n={row.n_effective})")

paths = write_report(summary, "demo_report")
print("\nfigures:", ", ".join(paths))
