"""Poststratification and raking weights, and weighted estimates of means."""

from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .domain import EstimateRecord, PoststratTable, Target, TargetKind

log = logging.getLogger(__name__)

Z95 = 1.959963984540054


class NonConvergence(RuntimeError):
    """Raking could not reproduce the margins.

    ``variable``/``level`` name an unrepresented margin level when that is
    the cause; ``discrepancy`` is the final max relative margin error.
    """

    def __init__(self, message, variable=None, level=None, discrepancy=None):
        super().__init__(message)
        self.variable = variable
        self.level = level
        self.discrepancy = discrepancy


@dataclass
class WeightVector:
    weights: np.ndarray
    iterations: int = 0
    discrepancy: float = 0.0
    history: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def to_csv(self, path, unit_ids=None):
        import csv
        if unit_ids is None:
            unit_ids = range(1, len(self.weights) + 1)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["unit_id", "weight"])
            for uid, w in zip(unit_ids, self.weights):
                writer.writerow([uid, repr(float(w))])


@dataclass(frozen=True)
class MarginSpec:
    """Target totals as ``(variable, level, target)`` triples."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((str(v), lvl, float(t)) for v, lvl, t in self.entries)
        if not entries:
            raise ValueError("at least one margin is required")
        for _, _, t in entries:
            if t < 0 or not np.isfinite(t):
                raise ValueError("margin targets must be finite and nonnegative")
        object.__setattr__(self, "entries", entries)
        totals = {v: sum(d.values()) for v, d in self.by_variable().items()}
        grand = next(iter(totals.values()))
        for v, t in totals.items():
            if abs(t - grand) > 1e-9 * max(abs(grand), 1.0):
                raise ValueError(f"margin {v!r} sums to {t}, other margins to {grand}")

    def by_variable(self) -> dict:
        out = defaultdict(dict)
        for v, lvl, t in self.entries:
            if lvl in out[v]:
                raise ValueError(f"duplicate margin entry {v}={lvl!r}")
            out[v][lvl] = t
        return dict(out)

    @property
    def total(self) -> float:
        return sum(next(iter(self.by_variable().values())).values())

    @classmethod
    def from_table(cls, table: PoststratTable) -> "MarginSpec":
        """One-way margins of a control table (axis variable, age, edu)."""
        entries = []
        for name, margin in ((table.axis.value, table.axis_margin()),
                             ("age", table.age_margin()), ("edu", table.edu_margin())):
            entries += [(name, lvl, t) for lvl, t in enumerate(margin)]
        return cls(tuple(entries))

    def scaled(self, c: float) -> "MarginSpec":
        return MarginSpec(tuple((v, lvl, t * c) for v, lvl, t in self.entries))


def cell_weights(h, table: PoststratTable) -> WeightVector:
    """Full-cell poststratification weights ``N_j / n_j``."""
    if h.axis is not table.axis:
        raise ValueError(f"sample is harmonized on {h.axis.value}, table is by {table.axis.value}")
    cell = h.cell_index()
    pop = table.counts.ravel()
    n_j = np.bincount(cell, minlength=pop.size).astype(float)
    bad = (n_j > 0) & (pop == 0)
    if bad.any():
        raise ValueError(f"sample units fall in {int(bad.sum())} cells with zero population count")
    empty = (n_j == 0) & (pop > 0)
    if empty.any():
        warnings.warn(f"{int(empty.sum())} populated cells have no sample units", RuntimeWarning)
    return WeightVector(pop[cell] / n_j[cell], iterations=1)


def _margin_arrays(data, margins):
    """Map each margin variable to (unit level codes, target vector)."""
    spec = margins.by_variable()
    out = []
    for var, targets in spec.items():
        if var not in data:
            raise ValueError(f"margin variable {var!r} is missing from the sample")
        values = np.asarray(data[var])
        levels = list(targets)
        lookup = {lvl: i for i, lvl in enumerate(levels)}
        try:
            codes = np.array([lookup[v] for v in values.tolist()], dtype=np.int64)
        except KeyError as err:
            raise ValueError(f"sample has {var}={err.args[0]!r}, which has no margin") from None
        tvec = np.array([targets[lvl] for lvl in levels])
        present = np.bincount(codes, minlength=len(levels)) > 0
        if np.any(present & (tvec == 0)):
            lvl = levels[int(np.argmax(present & (tvec == 0)))]
            raise ValueError(f"sample units at {var}={lvl!r}, whose target is zero")
        missing = ~present & (tvec > 0)
        if missing.any():
            lvl = levels[int(np.argmax(missing))]
            raise NonConvergence(
                f"margin level {var}={lvl!r} has target {targets[lvl]:g} but no sample units",
                variable=var, level=lvl)
        out.append((var, codes, tvec))
    return out


def _discrepancy(weights, arrays):
    worst = 0.0
    for _, codes, tvec in arrays:
        current = np.bincount(codes, weights=weights, minlength=len(tvec))
        pos = tvec > 0
        worst = max(worst, float(np.max(np.abs(current[pos] - tvec[pos]) / tvec[pos])))
    return worst


def rake(data, margins: MarginSpec, tol: float = 1e-8, max_iter: int = 1000) -> WeightVector:
    """Iterative proportional fitting to one-way margins.

    Parameters
    ----------
    data : mapping or HarmonizedSample
        Per-unit level codes for every margin variable.
    margins : MarginSpec
    tol : float
        Stop once the max relative margin error after a full cycle is below this.
    max_iter : int
        Maximum number of full cycles.

    Raises
    ------
    NonConvergence
        A positive-target level has no sample units, or ``max_iter`` cycles
        were not enough.
    """
    if hasattr(data, "variables"):
        data = data.variables()
    arrays = _margin_arrays(data, margins)
    n = len(arrays[0][1])
    w = np.full(n, margins.total / n)
    history = []
    disc = np.inf
    for it in range(1, max_iter + 1):
        for _, codes, tvec in arrays:
            current = np.bincount(codes, weights=w, minlength=len(tvec))
            with np.errstate(invalid="ignore", divide="ignore"):
                factor = np.where(current > 0, tvec / current, 0.0)
            w = w * factor[codes]
        disc = _discrepancy(w, arrays)
        history.append(disc)
        if disc < tol:
            log.info("rake converged: %d iterations, discrepancy %.3g", it, disc)
            return WeightVector(w, it, disc, history)
    log.info("rake failed: %d iterations, discrepancy %.3g", max_iter, disc)
    raise NonConvergence(f"raking did not converge in {max_iter} cycles "
                         f"(discrepancy {disc:.3g})", discrepancy=disc)


def trim_weights(wv: WeightVector, upper_ratio: float = 5.0) -> WeightVector:
    """Cap weights at ``upper_ratio`` times their mean, preserving the total."""
    w = wv.weights.copy()
    total = w.sum()
    for _ in range(100):
        cap = upper_ratio * total / len(w)
        over = w > cap
        if not over.any():
            break
        w[over] = cap
        free = ~over
        w[free] *= (total - w[over].sum()) / w[free].sum()
    return WeightVector(w, wv.iterations, wv.discrepancy, list(wv.history))


def linearized_mean(y, w, d=None):
    """Weighted ratio mean and its with-replacement linearization SE.

    ``d`` is a (possibly fractional) domain membership per unit; units
    outside the domain still count toward the variance's sample size.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    wd = w if d is None else w * np.asarray(d, dtype=float)
    total = wd.sum()
    if total <= 0:
        return None, None
    mean = float(wd @ y / total)
    n = len(y)
    z = wd * (y - mean) / total
    var = n / (n - 1) * float(np.sum((z - z.mean()) ** 2)) if n > 1 else 0.0
    return mean, float(np.sqrt(var))


def membership(h, target: Target, joint=None):
    """Domain membership per retained unit, or ``None`` when undefined.

    Gender targets use observed gender.  Sex targets use the imputed sex;
    without one (gender-axis analyses), units get the share of their
    (gender, age, edu) cell that belongs to the target sex in ``joint``.
    """
    if target.kind is TargetKind.POPULATION:
        return np.ones(h.n)
    if target.kind is TargetKind.GENDER:
        return (h.gender == target.level).astype(float)
    if h.sex is not None:
        return (h.sex == target.level).astype(float)
    if joint is None:
        return None
    cells = joint[:, h.gender, h.age, h.edu]
    tot = cells.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, cells[int(target.level)] / tot, 0.0)


def weighted_estimate(h, w: WeightVector, target: Target, joint=None) -> EstimateRecord:
    """Weighted mean of ``y`` over the target subgroup with a 95% normal interval."""
    if len(w.weights) != h.n:
        raise ValueError("weights do not match the retained units")
    d = membership(h, target, joint)
    if d is None or h.n == 0 or not np.any(d > 0):
        return EstimateRecord.unavailable(target)
    mean, se = linearized_mean(h.y, w.weights, d)
    if mean is None:
        return EstimateRecord.unavailable(target)
    half = Z95 * se
    return EstimateRecord(target, mean, mean - half, mean + half,
                          extra={"se": se, "n_domain": float(np.sum(d > 0))})


def rake_to_table(h, table: PoststratTable, tol=1e-8, max_iter=1000) -> WeightVector:
    """Rake a harmonized sample to the one-way margins of its control table."""
    if h.axis is not table.axis:
        raise ValueError(f"sample is harmonized on {h.axis.value}, table is by {table.axis.value}")
    return rake(h.variables(), MarginSpec.from_table(table), tol, max_iter)
