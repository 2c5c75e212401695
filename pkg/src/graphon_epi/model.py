"""Type space, infectivity model, kernel suite, and scenario presets.

Characteristics are stored as float rows of length ``space.dim``: the box
coordinates first, then (for label or product spaces) one column holding
the label's embedding value.  All rate/kernel evaluations are vectorized
over rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.stats

from .errors import ConfigError, UnsupportedFamilyError

SCHEMA_VERSION = 1

_TINY = 1e-300


def _resolve(param, x):
    """Evaluate a scalar-or-callable parameter at characteristics ``x``."""
    if callable(param):
        return np.asarray(param(x), dtype=float)
    return float(param)


def _scaled(value, per_n, n):
    if not per_n:
        return value
    if n is None:
        raise ConfigError("kernel declared per_n=True but evaluated without N")
    return value / float(n)


# ---------------------------------------------------------------------------
# Type space

@dataclass(frozen=True)
class TypeSpace:
    """Box [0,1]^d, a finite label set, or their product.

    ``label_values`` is the embedding of each label used by kernels and the
    metric's equality test; it defaults to 0..K-1.
    """

    box_dim: int = 0
    n_labels: int = 0
    label_values: tuple = ()

    def __post_init__(self):
        if self.box_dim < 0 or self.n_labels < 0:
            raise ConfigError("box_dim and n_labels must be non-negative")
        if self.box_dim == 0 and self.n_labels == 0:
            raise ConfigError("empty type space")
        if self.n_labels and not self.label_values:
            object.__setattr__(self, "label_values",
                               tuple(float(k) for k in range(self.n_labels)))
        if self.n_labels and len(self.label_values) != self.n_labels:
            raise ConfigError("label_values length must equal n_labels")
        if self.n_labels and any(b <= a for a, b in zip(self.label_values,
                                                        self.label_values[1:])):
            raise ConfigError("label_values must be strictly increasing")

    @property
    def dim(self) -> int:
        return self.box_dim + (1 if self.n_labels else 0)

    def contains(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ok = np.ones(len(xs), dtype=bool)
        for d in range(self.box_dim):
            ok &= (xs[:, d] >= 0.0) & (xs[:, d] <= 1.0)
        if self.n_labels:
            vals = np.asarray(self.label_values)
            ok &= np.isin(xs[:, self.box_dim], vals)
        return ok

    def distance(self, xa, xb) -> np.ndarray:
        """Max-norm over coordinates; unequal labels are at distance 1."""
        xa = np.atleast_2d(np.asarray(xa, dtype=float))
        xb = np.atleast_2d(np.asarray(xb, dtype=float))
        d = np.zeros(np.broadcast(xa[:, 0], xb[:, 0]).shape)
        for k in range(self.box_dim):
            d = np.maximum(d, np.abs(xa[:, k] - xb[:, k]))
        if self.n_labels:
            d = np.maximum(d, (xa[:, self.box_dim] != xb[:, self.box_dim]) * 1.0)
        return d


# ---------------------------------------------------------------------------
# Base infectivity shapes  (rate as a function of type and infection age)

class ConstantRate:
    kind = "constant"

    def __init__(self, level):
        self.level = float(level)

    def rate(self, x, a):
        a = np.asarray(a, dtype=float)
        return np.where(a >= 0, self.level, 0.0)

    def sup(self):
        return self.level

    def remaining_sup(self, x, a):
        return np.full_like(np.asarray(a, dtype=float), self.level)


class ExponentialDecayRate:
    """peak * exp(-a / scale(x))."""

    kind = "exp_decay"

    def __init__(self, peak, scale):
        self.peak = float(peak)
        self.scale = scale

    def rate(self, x, a):
        a = np.asarray(a, dtype=float)
        s = _resolve(self.scale, x)
        return self.peak * np.exp(-np.maximum(a, 0.0) / s)

    def sup(self):
        return self.peak

    def remaining_sup(self, x, a):
        return self.rate(x, a)  # decreasing in age


class TriangularRate:
    """Linear ramp 0 -> peak over [0, rise], back to 0 at rise + fall."""

    kind = "triangular"

    def __init__(self, peak, rise, fall):
        if rise <= 0 or fall <= 0:
            raise ConfigError("triangular rate needs rise > 0 and fall > 0")
        self.peak = float(peak)
        self.rise = float(rise)
        self.fall = float(fall)

    def rate(self, x, a):
        a = np.asarray(a, dtype=float)
        up = self.peak * a / self.rise
        down = self.peak * (self.rise + self.fall - a) / self.fall
        return np.clip(np.minimum(up, down), 0.0, None)

    def sup(self):
        return self.peak

    def remaining_sup(self, x, a):
        a = np.asarray(a, dtype=float)
        return np.where(a <= self.rise, self.peak, self.rate(x, a))


class StepRate:
    """Right-continuous piecewise-constant rate: level j holds on
    [breaks[j], breaks[j+1]), the last level persists (append an explicit 0
    level for a rate that switches off)."""

    kind = "step"

    def __init__(self, breaks, levels):
        breaks = np.asarray(breaks, dtype=float)
        levels = np.asarray(levels, dtype=float)
        if breaks.ndim != 1 or len(breaks) != len(levels):
            raise ConfigError("step rate needs matching breaks and levels")
        if breaks[0] != 0.0 or np.any(np.diff(breaks) <= 0):
            raise ConfigError("step breaks must start at 0 and increase")
        if np.any(levels < 0):
            raise ConfigError("step levels must be non-negative")
        self.breaks = breaks
        self.levels = levels

    def rate(self, x, a):
        a = np.asarray(a, dtype=float)
        idx = np.searchsorted(self.breaks, a, side="right") - 1
        out = self.levels[np.clip(idx, 0, len(self.levels) - 1)]
        return np.where(idx < 0, 0.0, out)

    def sup(self):
        return float(self.levels.max())

    def remaining_sup(self, x, a):
        a = np.asarray(a, dtype=float)
        suffix = np.maximum.accumulate(self.levels[::-1])[::-1]
        idx = np.clip(np.searchsorted(self.breaks, a, side="right") - 1,
                      0, len(suffix) - 1)
        return suffix[idx]


class TableRate:
    """Piecewise-linear interpolation of (age, value) samples; constant
    extrapolation at the right end."""

    kind = "table"

    def __init__(self, ages, values):
        ages = np.asarray(ages, dtype=float)
        values = np.asarray(values, dtype=float)
        if ages.ndim != 1 or len(ages) != len(values) or len(ages) < 2:
            raise ConfigError("table rate needs >= 2 matching (age, value) samples")
        if np.any(np.diff(ages) <= 0) or np.any(values < 0):
            raise ConfigError("table ages must increase and values be >= 0")
        self.ages = ages
        self.values = values

    def rate(self, x, a):
        a = np.asarray(a, dtype=float)
        return np.interp(a, self.ages, self.values)

    def sup(self):
        return float(self.values.max())

    def remaining_sup(self, x, a):
        a = np.asarray(a, dtype=float)
        suffix = np.maximum.accumulate(self.values[::-1])[::-1]
        cur = np.interp(a, self.ages, self.values)
        idx = np.clip(np.searchsorted(self.ages, a, side="left"), 0, len(suffix) - 1)
        return np.maximum(cur, suffix[idx])


# ---------------------------------------------------------------------------
# Infection duration families

class DurationFamily:
    """Common interface: CDF/survival in the age variable, exact sampling,
    and sampling of the residual duration given survival to age a0."""

    has_density = True

    def cdf(self, x, a):
        raise NotImplementedError

    def sf(self, x, a):
        return 1.0 - self.cdf(x, a)

    def pdf(self, x, a):
        raise UnsupportedFamilyError(f"{type(self).__name__} has no density")

    def hazard(self, x, a):
        sf = np.asarray(self.sf(x, a), dtype=float)
        return np.asarray(self.pdf(x, a), dtype=float) / np.maximum(sf, _TINY)

    def hazard_bounded(self, x) -> bool:
        """Whether the hazard is continuous and bounded near age 0 and inf."""
        return False

    def isf(self, x, q):
        """Inverse survival; generic bisection fallback (rel. tol 1e-10)."""
        q = np.asarray(q, dtype=float)
        out = np.empty(q.shape)
        it = np.nditer(q, flags=["multi_index"])
        for qv in it:
            out[it.multi_index] = self._isf_bisect(x, float(qv))
        return out

    def _isf_bisect(self, x, q):
        lo, hi = 0.0, 1.0
        while float(self.sf(x, hi)) > q:
            hi *= 2.0
            if hi > 1e12:
                raise ConfigError("survival inversion failed to bracket")
        while hi - lo > 1e-10 * max(hi, 1.0):
            mid = 0.5 * (lo + hi)
            if float(self.sf(x, mid)) > q:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def sample(self, x, rng, size=None):
        u = rng.random(size)
        return self.isf(x, u)

    def sample_residual(self, x, a0, rng):
        """Residual duration given survival past a0, by inverse CDF on the
        conditional survival sf(a0 + t)/sf(a0)."""
        a0 = np.asarray(a0, dtype=float)
        sf0 = np.asarray(self.sf(x, a0), dtype=float)
        if np.any(sf0 <= 0.0):
            raise ConfigError("invalid initial age: survival is zero at a0")
        u = rng.random(a0.shape)
        return np.maximum(self.isf(x, u * sf0) - a0, 0.0)


class ExponentialDuration(DurationFamily):
    family = "exponential"

    def __init__(self, mean):
        self.mean = mean

    def cdf(self, x, a):
        a = np.asarray(a, dtype=float)
        m = _resolve(self.mean, x)
        return np.where(a < 0, 0.0, 1.0 - np.exp(-np.maximum(a, 0.0) / m))

    def sf(self, x, a):
        a = np.asarray(a, dtype=float)
        m = _resolve(self.mean, x)
        return np.where(a < 0, 1.0, np.exp(-np.maximum(a, 0.0) / m))

    def pdf(self, x, a):
        a = np.asarray(a, dtype=float)
        m = _resolve(self.mean, x)
        return np.where(a < 0, 0.0, np.exp(-np.maximum(a, 0.0) / m) / m)

    def hazard_bounded(self, x):
        return True

    def isf(self, x, q):
        m = _resolve(self.mean, x)
        return -m * np.log(np.asarray(q, dtype=float))

    def sample(self, x, rng, size=None):
        m = _resolve(self.mean, x)
        if size is None and np.ndim(m) > 0:
            size = np.shape(m)
        return rng.exponential(1.0, size=size) * m

    def sample_residual(self, x, a0, rng):
        # memoryless
        a0 = np.asarray(a0, dtype=float)
        m = _resolve(self.mean, x)
        return rng.exponential(1.0, size=a0.shape) * m


class GammaDuration(DurationFamily):
    family = "gamma"

    def __init__(self, shape, scale):
        self.shape = shape
        self.scale = scale

    def _dist(self, x):
        return scipy.stats.gamma(_resolve(self.shape, x), scale=_resolve(self.scale, x))

    def cdf(self, x, a):
        return self._dist(x).cdf(np.asarray(a, dtype=float))

    def sf(self, x, a):
        return self._dist(x).sf(np.asarray(a, dtype=float))

    def pdf(self, x, a):
        return self._dist(x).pdf(np.asarray(a, dtype=float))

    def hazard_bounded(self, x):
        k = _resolve(self.shape, x)
        return bool(np.all(np.asarray(k) >= 1.0))

    def isf(self, x, q):
        return self._dist(x).isf(np.asarray(q, dtype=float))

    def sample(self, x, rng, size=None):
        k = _resolve(self.shape, x)
        s = _resolve(self.scale, x)
        if size is None and (np.ndim(k) > 0 or np.ndim(s) > 0):
            size = np.broadcast(np.asarray(k), np.asarray(s)).shape
        return rng.gamma(k, 1.0, size=size) * s


class DeterministicDuration(DurationFamily):
    family = "deterministic"
    has_density = False

    def __init__(self, value):
        self.value = value

    def cdf(self, x, a):
        a = np.asarray(a, dtype=float)
        d = _resolve(self.value, x)
        return (a >= d) * 1.0

    def sf(self, x, a):
        a = np.asarray(a, dtype=float)
        d = _resolve(self.value, x)
        return (a < d) * 1.0

    def pdf(self, x, a):
        raise UnsupportedFamilyError("deterministic durations have no density")

    def isf(self, x, q):
        q = np.asarray(q, dtype=float)
        d = _resolve(self.value, x)
        return np.where(q < 1.0, d, 0.0) * np.ones_like(q)

    def sample(self, x, rng, size=None):
        d = _resolve(self.value, x)
        if size is None:
            return d if np.ndim(d) else np.asarray(d, dtype=float)
        return np.broadcast_to(np.asarray(d, dtype=float), size).copy()

    def sample_residual(self, x, a0, rng):
        a0 = np.asarray(a0, dtype=float)
        d = _resolve(self.value, x)
        if np.any(a0 >= d):
            raise ConfigError("invalid initial age: at or past the deterministic duration")
        return d - a0


class LogNormalDuration(DurationFamily):
    family = "lognormal"

    def __init__(self, mu, sigma):
        self.mu = mu
        self.sigma = sigma

    def _dist(self, x):
        return scipy.stats.lognorm(_resolve(self.sigma, x),
                                   scale=np.exp(_resolve(self.mu, x)))

    def cdf(self, x, a):
        return self._dist(x).cdf(np.asarray(a, dtype=float))

    def sf(self, x, a):
        return self._dist(x).sf(np.asarray(a, dtype=float))

    def pdf(self, x, a):
        return self._dist(x).pdf(np.asarray(a, dtype=float))

    def hazard_bounded(self, x):
        return True

    def isf(self, x, q):
        return self._dist(x).isf(np.asarray(q, dtype=float))

    def sample(self, x, rng, size=None):
        mu = _resolve(self.mu, x)
        sg = _resolve(self.sigma, x)
        if size is None and (np.ndim(mu) > 0 or np.ndim(sg) > 0):
            size = np.broadcast(np.asarray(mu), np.asarray(sg)).shape
        return np.exp(mu + sg * rng.standard_normal(size=size))


# ---------------------------------------------------------------------------
# Infectivity model

@dataclass
class InfectivityModel:
    """Separable infectivity: a deterministic age profile cut off at a random
    duration, so the mean infectivity is profile(x, a) * sf_x(a)."""

    shape: object
    duration: DurationFamily
    lambda_star: float

    def base_rate(self, x, a):
        return self.shape.rate(x, a)

    def mean_infectivity(self, x, a):
        return self.shape.rate(x, a) * self.duration.sf(x, a)

    def chi(self, x, a):
        """Mean infectivity divided by survival (0 where survival is 0)."""
        sf = np.asarray(self.duration.sf(x, a), dtype=float)
        return np.where(sf > 0.0, self.shape.rate(x, a), 0.0)

    def survival_ratio(self, x, a0, t):
        """sf(a0 + t) / sf(a0), with the 0/0 convention -> 0."""
        sf0 = np.asarray(self.duration.sf(x, a0), dtype=float)
        sft = np.asarray(self.duration.sf(x, np.asarray(a0) + np.asarray(t)), dtype=float)
        return np.where(sf0 > 0.0, sft / np.maximum(sf0, _TINY), 0.0)


def sample_duration(infectivity: InfectivityModel, x, rng, size=None):
    return infectivity.duration.sample(x, rng, size=size)


def sample_residual_duration(infectivity: InfectivityModel, x, a0, rng):
    return infectivity.duration.sample_residual(x, a0, rng)


def mean_infectivity(infectivity: InfectivityModel, x, a):
    return infectivity.mean_infectivity(x, a)


# ---------------------------------------------------------------------------
# Pair kernels

class ConstPair:
    kind = "constant"

    def __init__(self, value, per_n=False):
        self.value = float(value)
        self.per_n = bool(per_n)

    def eval(self, n, xa, xb):
        v = _scaled(self.value, self.per_n, n)
        shape = np.broadcast(np.atleast_2d(xa)[:, 0], np.atleast_2d(xb)[:, 0]).shape
        return np.full(shape, v)

    def upper_bound(self, n):
        return _scaled(self.value, self.per_n, n)

    def constant_value(self, n):
        return _scaled(self.value, self.per_n, n)


class ProductPair:
    """scale * x[coord] * x'[coord]  (the product-graphon form)."""

    kind = "product"

    def __init__(self, scale, coord=0, per_n=False, feature_bound=1.0):
        self.scale = float(scale)
        self.coord = int(coord)
        self.per_n = bool(per_n)
        self.feature_bound = float(feature_bound)

    def eval(self, n, xa, xb):
        s = _scaled(self.scale, self.per_n, n)
        ua = np.atleast_2d(xa)[:, self.coord]
        ub = np.atleast_2d(xb)[:, self.coord]
        return s * ua * ub

    def upper_bound(self, n):
        return _scaled(self.scale, self.per_n, n) * self.feature_bound ** 2

    def constant_value(self, n):
        return None


class TwoScalePair:
    """Local value within circle distance <= radius of coordinate ``coord``
    (torus metric on [0,1]), global value otherwise."""

    kind = "two_scale"

    def __init__(self, radius, local_value, global_value, coord=0, per_n=False):
        self.radius = float(radius)
        self.local_value = float(local_value)
        self.global_value = float(global_value)
        self.coord = int(coord)
        self.per_n = bool(per_n)

    def eval(self, n, xa, xb):
        ua = np.atleast_2d(xa)[:, self.coord]
        ub = np.atleast_2d(xb)[:, self.coord]
        d = np.abs(ua - ub)
        d = np.minimum(d, 1.0 - d)
        lv = _scaled(self.local_value, self.per_n, n)
        gv = _scaled(self.global_value, self.per_n, n)
        return np.where(d <= self.radius, lv, gv)

    def upper_bound(self, n):
        return max(_scaled(self.local_value, self.per_n, n),
                   _scaled(self.global_value, self.per_n, n))

    def constant_value(self, n):
        return None


class CallablePair:
    kind = "callable"

    def __init__(self, fn, bound=1.0):
        self.fn = fn
        self.bound = float(bound)

    def eval(self, n, xa, xb):
        return np.asarray(self.fn(n, np.atleast_2d(xa), np.atleast_2d(xb)), dtype=float)

    def upper_bound(self, n):
        return self.bound

    def constant_value(self, n):
        return None


def kernel_matrix(kernel, n, xs_rows, ys_rows):
    """Dense (len(xs), len(ys)) evaluation of a pair kernel."""
    xs_rows = np.atleast_2d(xs_rows)
    ys_rows = np.atleast_2d(ys_rows)
    out = np.empty((len(xs_rows), len(ys_rows)))
    for i in range(len(xs_rows)):
        out[i] = kernel.eval(n, xs_rows[i:i + 1], ys_rows)
    return out


# ---------------------------------------------------------------------------
# Weight families and the kernel suite

@dataclass
class WeightSpread:
    """Variability of edge weights around the conditional mean.

    family: "deterministic" | "uniform" (halfwidth sigma) | "gamma"
    (variance sigma * mean).  ``per_n`` scales sigma by 1/N.
    """

    family: str = "deterministic"
    sigma: float = 0.0
    per_n: bool = False

    def sigma_at(self, n):
        return _scaled(self.sigma, self.per_n, n)

    def sample(self, n, means, rng):
        means = np.asarray(means, dtype=float)
        if np.any(means < 0):
            raise ConfigError("negative mean weight from the gamma^N kernel")
        if self.family == "deterministic":
            return means.copy()
        s = self.sigma_at(n)
        if self.family == "uniform":
            if np.any(means < s):
                raise ConfigError(
                    "uniform weight family requires halfwidth <= mean weight "
                    f"(halfwidth {s}, min mean {means.min()})")
            return means + s * (2.0 * rng.random(means.shape) - 1.0)
        if self.family == "gamma":
            if s <= 0:
                return means.copy()
            shape = means / s
            out = np.zeros_like(means)
            pos = means > 0
            out[pos] = rng.gamma(shape[pos], 1.0) * s
            return out
        raise ConfigError(f"unknown weight family {self.family!r}")

    def conditional_variance(self, n, means):
        means = np.asarray(means, dtype=float)
        if self.family == "deterministic":
            return np.zeros_like(means)
        s = self.sigma_at(n)
        if self.family == "uniform":
            return np.full_like(means, s * s / 3.0)
        if self.family == "gamma":
            return s * means
        raise ConfigError(f"unknown weight family {self.family!r}")


@dataclass
class KernelSuite:
    connection: object          # kappa^N(x, x'), symmetric, in [0,1]
    mean_weight: object         # gamma^N(x, x'), >= 0, need not be symmetric
    spread: WeightSpread
    limit_kernel: object        # omega_bar(x, x'), bounded by omega_star
    omega_star: float

    def kappa(self, n, xa, xb):
        return self.connection.eval(n, xa, xb)

    def gamma(self, n, xa, xb):
        return self.mean_weight.eval(n, xa, xb)

    def omega_bar(self, xa, xb):
        return self.limit_kernel.eval(None, xa, xb)

    def omega_bar_n(self, n, xa, xb):
        return n * self.kappa(n, xa, xb) * self.gamma(n, xa, xb)


# ---------------------------------------------------------------------------
# Initial age distributions

class AgeAtZero:
    kind = "zero"
    atom_at_zero = True

    def sample(self, n, rng):
        return np.zeros(n)

    def quad(self, nq=12):
        return np.array([0.0]), np.array([1.0])


class AgeDeterministic:
    kind = "deterministic"

    def __init__(self, value):
        self.value = float(value)

    @property
    def atom_at_zero(self):
        return self.value == 0.0

    def sample(self, n, rng):
        return np.full(n, self.value)

    def quad(self, nq=12):
        return np.array([self.value]), np.array([1.0])


class AgeUniform:
    kind = "uniform"
    atom_at_zero = False

    def __init__(self, lo, hi):
        if not 0.0 <= lo < hi:
            raise ConfigError("uniform age distribution needs 0 <= lo < hi")
        self.lo = float(lo)
        self.hi = float(hi)

    def sample(self, n, rng):
        return self.lo + (self.hi - self.lo) * rng.random(n)

    def quad(self, nq=12):
        t, w = np.polynomial.legendre.leggauss(nq)
        mid, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        return mid + half * t, w / 2.0


class AgeExponential:
    kind = "exponential"
    atom_at_zero = False

    def __init__(self, mean):
        if mean <= 0:
            raise ConfigError("exponential age distribution needs mean > 0")
        self.mean = float(mean)

    def sample(self, n, rng):
        return rng.exponential(self.mean, n)

    def quad(self, nq=12):
        # Gauss-Legendre in the CDF variable, mapped through the inverse CDF
        t, w = np.polynomial.legendre.leggauss(nq)
        u = 0.5 * (t + 1.0)
        return -self.mean * np.log1p(-u), w / 2.0


# ---------------------------------------------------------------------------
# Scenario

@dataclass
class InitialCondition:
    susceptible: float
    infected: float
    recovered: float
    age: object = field(default_factory=AgeAtZero)


@dataclass
class Scenario:
    name: str
    space: TypeSpace
    infectivity: InfectivityModel
    kernels: KernelSuite
    initial: InitialCondition
    sampler: str = "iid"            # "iid" | "grid" | "custom"
    label_probs: tuple = ()         # sampling law of the label coordinate
    custom_density: object = None   # density on the box, for sampler="custom"
    custom_density_bound: float = 1.0
    schema_version: int = SCHEMA_VERSION

    def with_updates(self, **kw):
        return replace(self, **kw)


def sample_characteristics(scenario: Scenario, n: int, rng) -> np.ndarray:
    """Draw the N characteristics; deterministic given the generator state."""
    if n < 1:
        raise ConfigError("population size must be >= 1")
    sp = scenario.space
    cols = []
    if scenario.sampler == "iid":
        if sp.box_dim:
            cols.append(rng.random((n, sp.box_dim)))
    elif scenario.sampler == "grid":
        if sp.box_dim != 1 or sp.n_labels:
            raise ConfigError("grid sampler is defined for the 1-d box only")
        cols.append(((np.arange(n, dtype=float) + 1.0) / n)[:, None])
    elif scenario.sampler == "custom":
        if not sp.box_dim or scenario.custom_density is None:
            raise ConfigError("custom sampler needs a box space and a density")
        cols.append(_rejection_sample(scenario, n, rng))
    else:
        raise ConfigError(f"unsupported characteristic sampler {scenario.sampler!r}")
    if sp.n_labels:
        probs = np.asarray(scenario.label_probs or
                           [1.0 / sp.n_labels] * sp.n_labels, dtype=float)
        if len(probs) != sp.n_labels or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigError("label_probs must be a distribution over the labels")
        idx = rng.choice(sp.n_labels, size=n, p=probs)
        cols.append(np.asarray(sp.label_values)[idx][:, None])
    return np.ascontiguousarray(np.hstack(cols))


def _rejection_sample(scenario, n, rng):
    sp = scenario.space
    dens, bound = scenario.custom_density, scenario.custom_density_bound
    out = np.empty((n, sp.box_dim))
    got = 0
    while got < n:
        batch = max(256, 2 * (n - got))
        pts = rng.random((batch, sp.box_dim))
        acc = rng.random(batch) * bound <= np.asarray(dens(pts), dtype=float)
        take = pts[acc][: n - got]
        out[got:got + len(take)] = take
        got += len(take)
    return out


# ---------------------------------------------------------------------------
# Scenario validation

@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "scenario valid"
        return "\n".join(f"- {v}" for v in self.violations)


def validate_scenario(scenario: Scenario, n_probe=512, n_values=(100, 10_000),
                      seed=0) -> ValidationReport:
    """Check every model-level invariant; returns the list of violations."""
    v = []
    rng = np.random.default_rng(seed)
    init = scenario.initial
    tot = init.susceptible + init.infected + init.recovered
    if min(init.susceptible, init.infected, init.recovered) < 0 or abs(tot - 1.0) > 1e-12:
        v.append(f"initial fractions must be >= 0 and sum to 1 (sum {tot})")

    try:
        xs = sample_characteristics(scenario.with_updates(sampler="iid"), n_probe, rng)
    except ConfigError as e:
        return ValidationReport(v + [f"cannot sample probe characteristics: {e}"])
    if not scenario.space.contains(xs).all():
        v.append("sampled characteristics escape the declared type space")

    ker = scenario.kernels
    xa, xb = xs[rng.integers(0, n_probe, 256)], xs[rng.integers(0, n_probe, 256)]
    for n in n_values:
        kab = ker.kappa(n, xa, xb)
        kba = ker.kappa(n, xb, xa)
        bad = np.abs(kab - kba) > 1e-12
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            v.append(f"kappa^N not symmetric at N={n}, pair ({xa[i]}, {xb[i]})")
        if (kab < -1e-15).any() or (kab > 1.0 + 1e-12).any():
            v.append(f"kappa^N escapes [0,1] at N={n}")
        gab = ker.gamma(n, xa, xb)
        if (gab < 0).any():
            v.append(f"gamma^N negative at N={n}")
        wbn = n * kab * gab
        if (wbn > ker.omega_star * (1 + 1e-9)).any():
            i = int(np.argmax(wbn))
            v.append(f"N*kappa*gamma = {wbn.max():.6g} exceeds omega_star="
                     f"{ker.omega_star} at N={n}, pair ({xa[i]}, {xb[i]})")
        if ker.spread.family == "uniform":
            s = ker.spread.sigma_at(n)
            if (gab < s - 1e-15).any():
                v.append(f"uniform weight halfwidth {s} exceeds some gamma^N at N={n}")
    wb = ker.omega_bar(xa, xb)
    if (wb < 0).any() or (wb > ker.omega_star * (1 + 1e-9)).any():
        v.append("limit kernel omega_bar escapes [0, omega_star]")

    inf = scenario.infectivity
    ages = np.linspace(0.0, 50.0, 101)
    for i in range(0, n_probe, max(1, n_probe // 16)):
        r = inf.base_rate(xs[i:i + 1], ages)
        if np.max(r) > inf.lambda_star * (1 + 1e-12):
            v.append(f"base infectivity {np.max(r):.6g} exceeds lambda_star="
                     f"{inf.lambda_star} at x={xs[i]}")
            break
    sf_probe = inf.duration.sf(xs[:1], ages)
    if np.any(np.diff(np.asarray(sf_probe).ravel()) > 1e-12):
        v.append("duration survival is not non-increasing")

    # compatibility inequality between initial recovered and infected-with-age
    if init.infected > 0 and not isinstance(init.age, AgeAtZero):
        aq, wq = init.age.quad(16)
        worst, worst_x = -np.inf, None
        for i in range(0, n_probe, max(1, n_probe // 16)):
            sf0 = np.asarray(inf.duration.sf(xs[i:i + 1], aq), dtype=float).ravel()
            if np.any(sf0 <= 0):
                v.append(f"initial age beyond duration support at x={xs[i]}")
                break
            need = init.infected * float(np.sum(wq * (1.0 - sf0) / sf0))
            if need - init.recovered > worst:
                worst, worst_x = need - init.recovered, xs[i]
        else:
            if worst > 1e-12:
                v.append("initial recovered mass too small for the aged infected: "
                         f"needs >= {init.recovered + worst:.6g} at x={worst_x}")
    return ValidationReport(v)


# ---------------------------------------------------------------------------
# Presets

def _markov_homog(**kw):
    p = dict(lam=1.0, g_mean=2.0, omega=1.5, i0=0.01, r0=0.0)
    p.update(kw)
    return Scenario(
        name="markov_homog",
        space=TypeSpace(box_dim=1),
        infectivity=InfectivityModel(ConstantRate(p["lam"]),
                                     ExponentialDuration(p["g_mean"]),
                                     lambda_star=p["lam"]),
        kernels=KernelSuite(
            connection=ConstPair(1.0),
            mean_weight=ConstPair(p["omega"], per_n=True),
            spread=WeightSpread("deterministic"),
            limit_kernel=ConstPair(p["omega"]),
            omega_star=p["omega"]),
        initial=InitialCondition(1.0 - p["i0"] - p["r0"], p["i0"], p["r0"]),
    )


def _product_graphon(**kw):
    p = dict(lam=1.5, g_mean=2.0, gamma=1.5, i0=0.05, r0=0.0, aged=False)
    p.update(kw)
    age = AgeUniform(0.5, 1.5) if p["aged"] else AgeAtZero()
    return Scenario(
        name="product_graphon_aged" if p["aged"] else "product_graphon",
        space=TypeSpace(box_dim=1),
        infectivity=InfectivityModel(ConstantRate(p["lam"]),
                                     ExponentialDuration(p["g_mean"]),
                                     lambda_star=p["lam"]),
        kernels=KernelSuite(
            connection=ProductPair(1.0),
            mean_weight=ConstPair(p["gamma"], per_n=True),
            spread=WeightSpread("deterministic"),
            limit_kernel=ProductPair(p["gamma"]),
            omega_star=p["gamma"]),
        initial=InitialCondition(1.0 - p["i0"] - p["r0"], p["i0"], p["r0"], age),
    )


def _product_graphon_aged(**kw):
    kw.setdefault("aged", True)
    kw.setdefault("i0", 0.05)
    kw.setdefault("r0", 0.04)
    return _product_graphon(**kw)


def _product_graphon_sweep(**kw):
    # calibrated for N-sweeps: a relaxation wave (reproduction number ~ 0.35,
    # large initial cohort) keeps the replica-to-replica spread of the
    # dictionary distance small, so sweep medians separate cleanly across N
    kw.setdefault("lam", 0.5)
    kw.setdefault("g_mean", 1.5)
    kw.setdefault("gamma", 1.4)
    kw.setdefault("i0", 0.1)
    sc = _product_graphon(**kw)
    return sc.with_updates(name="product_graphon_sweep")


def _product_two_cell(**kw):
    p = dict(lam=2.0, g_mean=2.0, i0=0.05)
    p.update(kw)
    return Scenario(
        name="product_two_cell",
        space=TypeSpace(n_labels=2, label_values=(1.0 / 3.0, 2.0 / 3.0)),
        infectivity=InfectivityModel(ConstantRate(p["lam"]),
                                     ExponentialDuration(p["g_mean"]),
                                     lambda_star=p["lam"]),
        kernels=KernelSuite(
            connection=ProductPair(1.0),
            mean_weight=ConstPair(1.0, per_n=True),
            spread=WeightSpread("deterministic"),
            limit_kernel=ProductPair(1.0),
            omega_star=0.5),
        initial=InitialCondition(1.0 - p["i0"], p["i0"], 0.0),
    )


def _er_weighted(family, **kw):
    p = dict(lam=1.0, g_mean=2.0, kappa=0.02, omega=1.5, sigma=0.1, i0=0.02)
    p.update(kw)
    gamma_scale = p["omega"] / p["kappa"]   # gamma^N = omega / (N kappa)
    if family == "uniform":
        spread = WeightSpread("uniform", sigma=0.5 * gamma_scale, per_n=True)
    else:
        spread = WeightSpread("gamma", sigma=p["sigma"])
    return Scenario(
        name=f"er_{family}",
        space=TypeSpace(box_dim=1),
        infectivity=InfectivityModel(ConstantRate(p["lam"]),
                                     ExponentialDuration(p["g_mean"]),
                                     lambda_star=p["lam"]),
        kernels=KernelSuite(
            connection=ConstPair(p["kappa"]),
            mean_weight=ConstPair(gamma_scale, per_n=True),
            spread=spread,
            limit_kernel=ConstPair(p["omega"]),
            omega_star=p["omega"]),
        initial=InitialCondition(1.0 - p["i0"], p["i0"], 0.0),
    )


def _two_scale(**kw):
    p = dict(lam=1.5, decay=2.0, radius=0.1,
             kappa_loc=0.3, kappa_glob=0.01, wloc=0.6, wglob=1.0,
             i0=0.02, r0=0.01)
    p.update(kw)
    return Scenario(
        name="two_scale",
        space=TypeSpace(box_dim=1),
        infectivity=InfectivityModel(
            ExponentialDecayRate(p["lam"], p["decay"]),
            GammaDuration(2.0, 1.0),
            lambda_star=p["lam"]),
        kernels=KernelSuite(
            connection=TwoScalePair(p["radius"], p["kappa_loc"], p["kappa_glob"]),
            mean_weight=TwoScalePair(p["radius"], p["wloc"] / p["kappa_loc"],
                                     p["wglob"] / p["kappa_glob"], per_n=True),
            spread=WeightSpread("deterministic"),
            limit_kernel=TwoScalePair(p["radius"], p["wloc"], p["wglob"]),
            omega_star=max(p["wloc"], p["wglob"])),
        initial=InitialCondition(1.0 - p["i0"] - p["r0"], p["i0"], p["r0"],
                                 AgeUniform(0.0, 1.0)),
    )


PRESETS = {
    "markov_homog": _markov_homog,
    "product_graphon": _product_graphon,
    "product_graphon_aged": _product_graphon_aged,
    "product_graphon_sweep": _product_graphon_sweep,
    "product_two_cell": _product_two_cell,
    "er_gamma": lambda **kw: _er_weighted("gamma", **kw),
    "er_uniform": lambda **kw: _er_weighted("uniform", **kw),
    "two_scale": _two_scale,
}


def make_scenario(name, **overrides) -> Scenario:
    if name not in PRESETS:
        raise ConfigError(f"unknown scenario preset {name!r}; "
                          f"known: {', '.join(sorted(PRESETS))}")
    return PRESETS[name](**overrides)


# ---------------------------------------------------------------------------
# Scenario JSON files

_SHAPES = {
    "constant": lambda d: ConstantRate(d["level"]),
    "exp_decay": lambda d: ExponentialDecayRate(d["peak"], d["scale"]),
    "triangular": lambda d: TriangularRate(d["peak"], d["rise"], d["fall"]),
    "step": lambda d: StepRate(d["breaks"], d["levels"]),
    "table": lambda d: TableRate(d["ages"], d["values"]),
}

_DURATIONS = {
    "exponential": lambda d: ExponentialDuration(d["mean"]),
    "gamma": lambda d: GammaDuration(d["shape"], d["scale"]),
    "deterministic": lambda d: DeterministicDuration(d["value"]),
    "lognormal": lambda d: LogNormalDuration(d["mu"], d["sigma"]),
}

_AGES = {
    "zero": lambda d: AgeAtZero(),
    "deterministic": lambda d: AgeDeterministic(d["value"]),
    "uniform": lambda d: AgeUniform(d["lo"], d["hi"]),
    "exponential": lambda d: AgeExponential(d["mean"]),
}


def _pair_from_dict(d):
    kind = d.get("kind")
    if kind == "constant":
        return ConstPair(d["value"], d.get("per_n", False))
    if kind == "product":
        return ProductPair(d["scale"], d.get("coord", 0), d.get("per_n", False),
                           d.get("feature_bound", 1.0))
    if kind == "two_scale":
        return TwoScalePair(d["radius"], d["local"], d["global"],
                            d.get("coord", 0), d.get("per_n", False))
    raise ConfigError(f"unknown pair kernel kind {kind!r} in scenario file")


def _build(table, d, what):
    kind = d.get("kind") or d.get("family")
    if kind not in table:
        raise ConfigError(f"unknown {what} kind {kind!r} in scenario file")
    return table[kind](d)


def scenario_from_dict(d) -> Scenario:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"scenario schema_version must be {SCHEMA_VERSION}, "
                          f"got {d.get('schema_version')!r}")
    try:
        sp = d["space"]
        space = TypeSpace(box_dim=int(sp.get("box_dim", 0)),
                          n_labels=int(sp.get("n_labels", 0)),
                          label_values=tuple(sp.get("label_values", ())))
        inf = d["infectivity"]
        infectivity = InfectivityModel(
            shape=_build(_SHAPES, inf["shape"], "infectivity shape"),
            duration=_build(_DURATIONS, inf["duration"], "duration family"),
            lambda_star=float(inf["lambda_star"]))
        kd = d["kernels"]
        sd = kd.get("spread", {"family": "deterministic"})
        kernels = KernelSuite(
            connection=_pair_from_dict(kd["connection"]),
            mean_weight=_pair_from_dict(kd["mean_weight"]),
            spread=WeightSpread(sd.get("family", "deterministic"),
                                float(sd.get("sigma", 0.0)),
                                bool(sd.get("per_n", False))),
            limit_kernel=_pair_from_dict(kd["limit"]),
            omega_star=float(kd["omega_star"]))
        idd = d["initial"]
        initial = InitialCondition(float(idd["susceptible"]), float(idd["infected"]),
                                   float(idd["recovered"]),
                                   _build(_AGES, idd.get("age", {"kind": "zero"}),
                                          "age distribution"))
    except KeyError as e:
        raise ConfigError(f"scenario file missing field {e.args[0]!r}") from None
    return Scenario(name=d.get("name", "unnamed"), space=space,
                    infectivity=infectivity, kernels=kernels, initial=initial,
                    sampler=d.get("sampler", "iid"),
                    label_probs=tuple(d.get("label_probs", ())))


def load_scenario(name_or_path: str) -> Scenario:
    """Resolve a preset name, or read a scenario JSON file."""
    if name_or_path in PRESETS:
        return make_scenario(name_or_path)
    try:
        with open(name_or_path, "r", encoding="utf8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such scenario preset or file: {name_or_path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid scenario JSON in {name_or_path}: {e}") from None
    return scenario_from_dict(data)
