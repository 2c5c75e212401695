"""Independent numerical oracles used by the tests; deliberately written
with none of the package's solver machinery."""

import numpy as np


def rk4_sir(beta, g_mean, s0, i0, r0, horizon, dt):
    """Classical Markovian SIR by fixed-step RK4; returns (K+1, 3) states."""
    n = int(round(horizon / dt))
    out = np.empty((n + 1, 3))
    y = np.array([s0, i0, r0], dtype=float)
    out[0] = y

    def f(y):
        s, i, _ = y
        return np.array([-beta * s * i, beta * s * i - i / g_mean, i / g_mean])

    for k in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return out


def piecewise_constant_first_arrival_cdf(breaks, rates):
    """CDF of the first point of an inhomogeneous Poisson process whose rate
    is rates[j] on [breaks[j], breaks[j+1]) (last piece extends to inf)."""
    breaks = np.asarray(breaks, dtype=float)
    rates = np.asarray(rates, dtype=float)
    cum_at = np.concatenate([[0.0], np.cumsum(rates[:-1] * np.diff(breaks))])

    def cdf(t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(breaks, t, side="right") - 1, 0, len(rates) - 1)
        integral = cum_at[idx] + rates[idx] * (t - breaks[idx])
        return np.where(t <= 0, 0.0, 1.0 - np.exp(-integral))

    return cdf
