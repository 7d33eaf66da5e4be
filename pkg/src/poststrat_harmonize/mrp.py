"""Multilevel regression and poststratification.

The model is an additive hierarchical normal regression::

    y_i ~ normal(alpha + sum_f a[f, level(i, f)], sigma_y)
    a[f, l] ~ normal(0, tau_f)
    tau_f, sigma_y ~ half-normal(prior_scale)
    alpha ~ normal(0, 10 * sd(y))

It is sampled with a blocked Gibbs sampler that works on cell sufficient
statistics (count, sum, sum of squares per observed level combination):

1. ``(alpha, a)`` jointly from their multivariate normal conditional;
2. for each factor, ``tau_f`` from its conditional with that factor's
   effects integrated out (slice sampling on ``log tau_f``), then the
   factor's effects given ``tau_f``;
3. ``sigma_y`` by slice sampling on ``log sigma_y``.

Drawing ``tau_f`` with the effects integrated out avoids the slow mixing
of the centred parameterization when a factor has no real effect.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .domain import Axis, EstimateRecord, PoststratTable, Target, TargetKind

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MrpModelSpec:
    """Priors and MCMC settings.

    ``prior_scale`` and ``alpha_prior_sd`` default to ``5 * sd(y)`` and
    ``10 * sd(y)``.  ``sigma_y`` fixes the residual scale instead of
    sampling it.  Fits whose split-R-hat on ``alpha`` or any ``tau_f``
    reaches ``rhat_threshold`` are flagged.
    """

    chains: int = 4
    warmup: int = 500
    keep: int = 500
    seed: int = 0
    prior_scale: float | None = None
    alpha_prior_sd: float | None = None
    sigma_y: float | None = None
    rhat_threshold: float = 1.05

    def __post_init__(self):
        if self.keep < 200:
            raise ValueError("keep must be at least 200 draws per chain")
        if self.chains < 1 or self.warmup < 0:
            raise ValueError("need at least one chain and nonnegative warmup")
        for name in ("prior_scale", "alpha_prior_sd", "sigma_y"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# compiled sampler
# ---------------------------------------------------------------------------

# residual scale never drops below this fraction of the outcome scale, which
# keeps the (alpha, effects) precision matrix well conditioned
SIGMA_FLOOR = 1e-4

_TAU = 0
_SIGMA = 1


@numba.njit(cache=True)
def _log_scale_post(kind, u, d, v, nl, scale, n_total, ssr):
    """Log conditional density of log-scale ``u`` (Jacobian included)."""
    if kind == _TAU:
        t2 = math.exp(2.0 * u)
        out = u - t2 / (2.0 * scale * scale)
        for l in range(d.shape[0]):
            if nl[l] > 0:
                var = t2 + v[l]
                out -= 0.5 * math.log(var) + 0.5 * d[l] * d[l] / var
        return out
    s2 = math.exp(2.0 * u)
    return u - n_total * u - ssr / (2.0 * s2) - s2 / (2.0 * scale * scale)


@numba.njit(cache=True)
def _slice(kind, u0, w, lower, d, v, nl, scale, n_total, ssr):
    """One univariate slice-sampling update with stepping out and shrinkage."""
    logy = _log_scale_post(kind, u0, d, v, nl, scale, n_total, ssr) - np.random.exponential()
    left = u0 - w * np.random.random()
    right = left + w
    steps = 64
    j = int(steps * np.random.random())
    k = steps - 1 - j
    while j > 0 and left > lower and _log_scale_post(kind, left, d, v, nl, scale, n_total, ssr) > logy:
        left -= w
        j -= 1
    while k > 0 and _log_scale_post(kind, right, d, v, nl, scale, n_total, ssr) > logy:
        right += w
        k -= 1
    if left < lower:
        left = lower
    for _ in range(200):
        u1 = left + (right - left) * np.random.random()
        if _log_scale_post(kind, u1, d, v, nl, scale, n_total, ssr) > logy:
            return u1
        if u1 < u0:
            left = u1
        else:
            right = u1
    return u0


@numba.njit(cache=True)
def _cholesky(a):
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    return L


@numba.njit(cache=True)
def _gibbs_chain(levels, offsets, n_levels, n_k, sum_k, ybar_k, wss, xtx, xty,
                 alpha_sd, scale, sigma_fixed, sigma_floor,
                 theta0, log_tau0, log_sigma0, n_warmup, n_keep, seed):
    np.random.seed(seed)
    K, F = levels.shape
    P = xtx.shape[0]
    n_total = 0.0
    for k in range(K):
        n_total += n_k[k]
    theta = theta0.copy()
    log_tau = log_tau0.copy()
    log_sigma = log_sigma0
    if sigma_fixed > 0:
        log_sigma = math.log(sigma_fixed)
    lower_tau = math.log(scale * 1e-10)
    lower_sigma = math.log(sigma_floor)
    max_l = 0
    for f in range(F):
        max_l = max(max_l, n_levels[f])
    nl = np.zeros(max_l)
    sl = np.zeros(max_l)
    d = np.zeros(max_l)
    v = np.zeros(max_l)
    q = np.zeros((P, P))
    b = np.zeros(P)
    u = np.zeros(P)
    mu = np.zeros(P)
    x = np.zeros(P)
    out = np.empty((n_keep, P + F + 1))

    for it in range(n_warmup + n_keep):
        s2 = math.exp(2.0 * log_sigma)
        # 1. (alpha, effects) | tau, sigma
        for i in range(P):
            b[i] = xty[i] / s2
            for j in range(P):
                q[i, j] = xtx[i, j] / s2
        q[0, 0] += 1.0 / (alpha_sd * alpha_sd)
        for f in range(F):
            t2 = math.exp(2.0 * log_tau[f])
            for l in range(n_levels[f]):
                q[offsets[f] + l, offsets[f] + l] += 1.0 / t2
        L = _cholesky(q)
        for i in range(P):
            s = b[i]
            for j in range(i):
                s -= L[i, j] * u[j]
            u[i] = s / L[i, i]
        for i in range(P - 1, -1, -1):
            s = u[i]
            t = np.random.standard_normal()
            for j in range(i + 1, P):
                s -= L[j, i] * mu[j]
                t -= L[j, i] * x[j]
            mu[i] = s / L[i, i]
            x[i] = t / L[i, i]
        for i in range(P):
            theta[i] = mu[i] + x[i]

        # 2. (tau_f, a_f) | rest, one factor at a time
        for f in range(F):
            for l in range(n_levels[f]):
                nl[l] = 0.0
                sl[l] = 0.0
            for k in range(K):
                m = theta[0]
                for g in range(F):
                    if g != f:
                        m += theta[offsets[g] + levels[k, g]]
                lk = levels[k, f]
                nl[lk] += n_k[k]
                sl[lk] += sum_k[k] - n_k[k] * m
            for l in range(n_levels[f]):
                if nl[l] > 0:
                    d[l] = sl[l] / nl[l]
                    v[l] = s2 / nl[l]
                else:
                    d[l] = 0.0
                    v[l] = 0.0
            log_tau[f] = _slice(_TAU, log_tau[f], 1.0, lower_tau, d[:n_levels[f]],
                                v[:n_levels[f]], nl[:n_levels[f]], scale, 0.0, 0.0)
            t2 = math.exp(2.0 * log_tau[f])
            for l in range(n_levels[f]):
                prec = nl[l] / s2 + 1.0 / t2
                theta[offsets[f] + l] = (sl[l] / s2) / prec + np.random.standard_normal() / math.sqrt(prec)

        # 3. sigma | rest
        if sigma_fixed <= 0:
            # within-cell part is fixed; adding deviations avoids cancellation
            ssr = wss
            for k in range(K):
                m = theta[0]
                for g in range(F):
                    m += theta[offsets[g] + levels[k, g]]
                ssr += n_k[k] * (ybar_k[k] - m) ** 2
            log_sigma = _slice(_SIGMA, log_sigma, 0.5, lower_sigma, d[:0], v[:0], nl[:0],
                               scale, n_total, ssr)

        if it >= n_warmup:
            row = it - n_warmup
            for i in range(P):
                out[row, i] = theta[i]
            for f in range(F):
                out[row, P + f] = math.exp(log_tau[f])
            out[row, P + F] = math.exp(log_sigma)
    return out


# ---------------------------------------------------------------------------
# fit objects
# ---------------------------------------------------------------------------


def split_rhat(draws) -> float:
    """Split potential scale reduction factor for a ``(chains, draws)`` array."""
    draws = np.asarray(draws, dtype=float)
    n = draws.shape[1] // 2
    if n < 2:
        return math.nan
    halves = np.concatenate([draws[:, :n], draws[:, n:2 * n]], axis=0)
    chain_means = halves.mean(axis=1)
    chain_vars = halves.var(axis=1, ddof=1)
    w = chain_vars.mean()
    b = n * chain_means.var(ddof=1)
    if w <= 0:
        return 1.0 if b <= 0 else math.inf
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


@dataclass
class MrpFit:
    """Posterior draws from :func:`fit_hierarchical`.

    Draw arrays are stacked over chains (chain-major).  ``effects[f]`` has
    one column per level of factor ``f``; factors fixed at zero have all-zero
    columns and a ``nan`` scale.
    """

    factor_names: tuple
    n_levels: tuple
    alpha: np.ndarray
    effects: list
    tau: np.ndarray
    sigma: np.ndarray
    chains: int
    rhat: dict = field(default_factory=dict)
    flagged: bool = False
    flag_reason: str = ""
    _cells: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_draws(self) -> int:
        return len(self.alpha)

    def cell_predictions(self) -> np.ndarray:
        """Cell mean draws, shape ``(draws, *n_levels)``."""
        if self._cells is None:
            F = len(self.n_levels)
            pred = self.alpha.reshape((-1,) + (1,) * F).copy()
            for f, eff in enumerate(self.effects):
                shape = [eff.shape[0]] + [1] * F
                shape[f + 1] = eff.shape[1]
                pred = pred + eff.reshape(shape)
            self._cells = pred
        return self._cells

    def to_csv(self, path):
        """Dump draws in long form: ``draw,parameter,value``."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["draw", "parameter", "value"])
            for i in range(self.n_draws):
                writer.writerow([i, "alpha", repr(float(self.alpha[i]))])
                for f, name in enumerate(self.factor_names):
                    for l in range(self.n_levels[f]):
                        writer.writerow([i, f"a[{name},{l}]", repr(float(self.effects[f][i, l]))])
                    writer.writerow([i, f"tau[{name}]", repr(float(self.tau[i, f]))])
                writer.writerow([i, "sigma_y", repr(float(self.sigma[i]))])


def _scale_of(y):
    sd = float(np.std(y, ddof=1)) if len(y) > 1 else 0.0
    if sd > 0:
        return sd
    return max(abs(float(np.mean(y))), 1.0)


def fit_hierarchical(levels, n_levels, y, spec: MrpModelSpec = MrpModelSpec(),
                     names=None) -> MrpFit:
    """Sample the additive hierarchical model.

    Parameters
    ----------
    levels : (n, F) int array
        Level code of every unit for every grouping factor.
    n_levels : sequence of int
        Number of levels per factor (levels need not all be observed).
    y : (n,) array
    spec : MrpModelSpec
    names : sequence of str, optional
    """
    levels = np.asarray(levels, dtype=np.int64)
    if levels.ndim == 1:
        levels = levels[:, None]
    y = np.asarray(y, dtype=float)
    n, F = levels.shape
    n_levels = tuple(int(k) for k in n_levels)
    names = tuple(names) if names is not None else tuple(f"f{f}" for f in range(F))
    if n == 0:
        raise ValueError("cannot fit an empty sample")
    if len(y) != n or len(n_levels) != F or len(names) != F:
        raise ValueError("levels, n_levels, y and names disagree in size")
    if not np.all(np.isfinite(y)):
        raise ValueError("outcome contains non-finite values")
    for f in range(F):
        if levels[:, f].min() < 0 or levels[:, f].max() >= n_levels[f]:
            raise ValueError(f"factor {names[f]!r} has codes outside 0..{n_levels[f] - 1}")

    active = []
    for f in range(F):
        if len(np.unique(levels[:, f])) < 2:
            warnings.warn(f"factor {names[f]!r} has a single observed level; "
                          "its effect is fixed at 0", RuntimeWarning)
        else:
            active.append(f)

    # cell sufficient statistics
    flat = np.ravel_multi_index(levels.T, n_levels) if F else np.zeros(n, dtype=np.int64)
    uniq, inv = np.unique(flat, return_inverse=True)
    n_k = np.bincount(inv).astype(float)
    sum_k = np.bincount(inv, weights=y)
    ybar_k = sum_k / n_k
    wss = float(np.sum((y - ybar_k[inv]) ** 2))
    cell_levels = np.column_stack(np.unravel_index(uniq, n_levels)) if F else np.zeros((len(uniq), 0))
    act_levels = np.ascontiguousarray(cell_levels[:, active], dtype=np.int64)
    act_n = np.array([n_levels[f] for f in active], dtype=np.int64)
    offsets = np.concatenate([[1], 1 + np.cumsum(act_n)[:-1]]).astype(np.int64) if active else \
        np.zeros(0, dtype=np.int64)
    P = 1 + int(act_n.sum())

    X = np.zeros((len(uniq), P))
    X[:, 0] = 1.0
    for j, f in enumerate(active):
        X[np.arange(len(uniq)), offsets[j] + act_levels[:, j]] = 1.0
    xtx = X.T @ (X * n_k[:, None])
    xty = X.T @ sum_k

    scale_y = _scale_of(y)
    prior_scale = spec.prior_scale or 5.0 * scale_y
    alpha_sd = spec.alpha_prior_sd or 10.0 * scale_y
    sigma_fixed = spec.sigma_y or -1.0
    sigma_floor = SIGMA_FLOOR * scale_y

    seq = np.random.SeedSequence(spec.seed)
    chain_seeds = seq.generate_state(spec.chains)
    init_rng = np.random.default_rng(seq.spawn(1)[0])
    runs = []
    for c in range(spec.chains):
        theta0 = np.zeros(P)
        theta0[0] = y.mean() + init_rng.normal(0.0, scale_y / math.sqrt(n))
        log_tau0 = np.log(scale_y * np.exp(init_rng.uniform(-2.0, 0.5, len(active))))
        log_sigma0 = math.log(scale_y) + init_rng.uniform(-0.5, 0.5)
        runs.append(_gibbs_chain(
            act_levels, offsets, act_n, n_k, sum_k, ybar_k, wss, xtx, xty,
            alpha_sd, prior_scale, sigma_fixed, sigma_floor,
            theta0, log_tau0, log_sigma0, spec.warmup, spec.keep, int(chain_seeds[c])))
    draws = np.concatenate(runs, axis=0)

    alpha = draws[:, 0]
    effects = []
    tau = np.full((len(draws), F), np.nan)
    for f in range(F):
        if f in active:
            j = active.index(f)
            effects.append(draws[:, offsets[j]:offsets[j] + act_n[j]].copy())
            tau[:, f] = draws[:, P + j]
        else:
            effects.append(np.zeros((len(draws), n_levels[f])))
    sigma = draws[:, P + len(active)]

    by_chain = lambda x: x.reshape(spec.chains, spec.keep)
    rhat = {"alpha": split_rhat(by_chain(alpha))}
    for f in active:
        rhat[f"tau[{names[f]}]"] = split_rhat(by_chain(tau[:, f]))
    bad = [k for k, r in rhat.items() if not r < spec.rhat_threshold]
    fit = MrpFit(names, n_levels, alpha, effects, tau, sigma, spec.chains, rhat)
    if bad:
        fit.flagged = True
        fit.flag_reason = "rhat:" + ",".join(bad)
        log.warning("MRP fit failed the R-hat check on %s", ", ".join(bad))
    return fit


def fit_mrp(h, spec: MrpModelSpec = MrpModelSpec()) -> MrpFit:
    """Fit the model on a harmonized sample with factors (sex or gender, age, edu)."""
    if h.n == 0:
        raise ValueError("harmonized sample has no retained units")
    levels = np.column_stack([h.axis_codes, h.age, h.edu])
    n_levels = (len(h.axis.levels), 3, 3)
    return fit_hierarchical(levels, n_levels, h.y, spec, names=(h.axis.value, "age", "edu"))


def target_cell_weights(table: PoststratTable, target: Target, joint=None) -> np.ndarray | None:
    """Population weights over ``table``'s cells for one target.

    Targets on the table's own axis select cells directly.  Targets on the
    other axis need ``joint``, the (sex, gender, age, edu) counts: a sex
    target on a gender table weights each gender cell by its count of the
    target sex, and vice versa.
    """
    counts = table.counts
    if target.kind is TargetKind.POPULATION:
        return counts
    own = (target.kind is TargetKind.SEX) == (table.axis is Axis.SEX)
    if own:
        w = np.zeros_like(counts)
        w[int(target.level)] = counts[int(target.level)]
        return w
    if joint is None:
        return None
    if target.kind is TargetKind.SEX:
        return joint[int(target.level)]  # (gender, age, edu)
    return joint[:, int(target.level)]  # (sex, age, edu)


def poststratify(fit: MrpFit, table: PoststratTable, target: Target, joint=None) -> EstimateRecord:
    """Aggregate cell prediction draws over a control table.

    The point estimate is the posterior mean of ``sum_j N_j theta_j / sum_j N_j``
    over the target's cells; the interval is its 2.5%/97.5% posterior quantiles.
    """
    if fit.n_levels[0] != len(table.axis.levels) or (
            fit.factor_names[0] in ("sex", "gender") and fit.factor_names[0] != table.axis.value):
        raise ValueError("table axis does not match the model's first factor")
    w = target_cell_weights(table, target, joint)
    if w is None or not w.sum() > 0:
        return EstimateRecord.unavailable(target)
    cells = fit.cell_predictions().reshape(fit.n_draws, -1)
    est = cells @ (w.ravel() / w.sum())
    point = float(est.mean())
    lo, hi = np.quantile(est, [0.025, 0.975])
    return EstimateRecord(target, point, min(float(lo), point), max(float(hi), point),
                          extra={"sd": float(est.std(ddof=1))})
