"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np


def ipf_oracle(table, row_targets, col_targets, cycles=10_000):
    """Plain two-way IPF on a contingency table, iterated to a fixed point."""
    t = np.asarray(table, dtype=float).copy()
    for _ in range(cycles):
        t *= (np.asarray(row_targets) / t.sum(axis=1))[:, None]
        t *= (np.asarray(col_targets) / t.sum(axis=0))[None, :]
    return t


def conjugate_quadrature(level_means, n_per_level, sigma, alpha_sd, tau_scale, grid=200_000):
    """Posterior mean and sd of (alpha, a_1..a_L) by integrating over tau on a grid.

    Given tau the model is linear-Gaussian in (alpha, a), and the level
    means are sufficient for it when sigma is known.
    """
    d = np.asarray(level_means, dtype=float)
    L = len(d)
    X = np.hstack([np.ones((L, 1)), np.eye(L)])
    R = np.eye(L) * sigma ** 2 / n_per_level
    taus = np.linspace(1e-6, 12 * tau_scale, grid)
    logw = np.empty(grid)
    means = np.empty((grid, L + 1))
    second = np.empty((grid, L + 1))
    for i, tau in enumerate(taus):
        P = np.diag([alpha_sd ** 2] + [tau ** 2] * L)
        S = X @ P @ X.T + R
        Sinv = np.linalg.inv(S)
        _, logdet = np.linalg.slogdet(S)
        logw[i] = -0.5 * (logdet + d @ Sinv @ d) - 0.5 * (tau / tau_scale) ** 2
        K = P @ X.T @ Sinv
        m = K @ d
        V = P - K @ X @ P
        means[i] = m
        second[i] = np.diag(V) + m ** 2
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = w @ means
    sd = np.sqrt(w @ second - mean ** 2)
    return mean, sd
