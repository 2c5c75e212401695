"""Atomic measures, the fixed test-function dictionary, and the dictionary
distance used by the convergence harness.

The dictionary is a seed-fixed family of [0,1]-valued, 1-Lipschitz functions
(w.r.t. the max metric on the type space, extended by |da| on the age axis).
The max of |<a - b, f>| over it is a computable surrogate for the weak
topology: it is a pseudometric, and vanishes along weakly convergent
sequences on compacts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import TypeSpace

DICTIONARY_VERSION = 1


@dataclass
class AtomicMeasure:
    """Finite non-negative measure as weighted atoms, optionally with ages."""

    points: np.ndarray            # (n, dim)
    weights: np.ndarray           # (n,)
    ages: np.ndarray = None       # (n,) when the measure lives on X x R+

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.ages is not None:
            self.ages = np.asarray(self.ages, dtype=float)
        if len(self.weights) != len(self.points):
            raise ConfigError("weights and points must have matching length")
        if np.any(self.weights < 0):
            raise ConfigError("atom weights must be non-negative")

    @property
    def has_ages(self) -> bool:
        return self.ages is not None

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def integrate(self, fn) -> float:
        """<measure, fn>; fn takes (points) or (points, ages)."""
        if len(self.weights) == 0:
            return 0.0
        vals = fn(self.points, self.ages) if self.has_ages else fn(self.points)
        return float(np.dot(self.weights, np.asarray(vals, dtype=float)))

    def scaled(self, factor) -> "AtomicMeasure":
        return AtomicMeasure(self.points, self.weights * factor, self.ages)


def empty_measure(dim, with_ages=False) -> AtomicMeasure:
    return AtomicMeasure(np.zeros((0, dim)), np.zeros(0),
                         np.zeros(0) if with_ages else None)


# ---------------------------------------------------------------------------
# Test dictionary

class _Ramp:
    """clip(slope * (x[d] - center) + 0.5, 0, 1); |slope| <= budget."""

    def __init__(self, d, slope, center, floor=0.0):
        self.d, self.slope, self.center, self.floor = d, slope, center, floor

    def __call__(self, pts):
        z = self.slope * (pts[:, self.d] - self.center) + 0.5
        return np.clip(z, self.floor, 1.0)


class _Coordinate:
    def __init__(self, d):
        self.d = d

    def __call__(self, pts):
        return np.clip(pts[:, self.d], 0.0, 1.0)


class _Bump:
    """exp(-sum_i ((x_i - c_i)/s_i)^2), widths chosen 1-Lipschitz overall."""

    def __init__(self, dims, centers, widths):
        self.dims, self.centers, self.widths = dims, centers, widths

    def __call__(self, pts):
        z = np.zeros(len(pts))
        for d, c, s in zip(self.dims, self.centers, self.widths):
            z += ((pts[:, d] - c) / s) ** 2
        return np.exp(-z)


class _LabelSet:
    def __init__(self, col, values):
        self.col = col
        self.values = np.asarray(values, dtype=float)

    def __call__(self, pts):
        return np.isin(pts[:, self.col], self.values).astype(float)


class _One:
    def __call__(self, pts):
        return np.ones(len(pts))


class _AgeProduct:
    """phi(x) * sigmoid((a - threshold)/tau); Lipschitz budget split so the
    product stays 1-Lipschitz for the max metric on X x R+."""

    def __init__(self, base, threshold, tau, direction=1.0):
        self.base, self.threshold, self.tau = base, threshold, tau
        self.direction = direction

    def __call__(self, pts, ages):
        z = self.direction * (ages - self.threshold) / self.tau
        sig = 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))
        return self.base(pts) * sig


class _AgeBlind:
    def __init__(self, base):
        self.base = base

    def __call__(self, pts, ages):
        return self.base(pts)


@dataclass
class TestDictionary:
    """Named 1-Lipschitz test functions: phi on X, psi on X x R+."""

    space: TypeSpace
    phi: list                    # (name, fn(points))
    psi: list                    # (name, fn(points, ages))
    version: int = DICTIONARY_VERSION
    seed: int = 0


def build_dictionary(space: TypeSpace, size=32, seed=2024_01) -> TestDictionary:
    """Seed-fixed dictionary; `size` functions per family including the
    constant 1 and the raw box coordinates."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, DICTIONARY_VERSION)))
    phi = [("one", _One())]
    for d in range(space.box_dim):
        phi.append((f"coord{d}", _Coordinate(d)))
    if space.n_labels:
        col = space.box_dim
        vals = np.asarray(space.label_values)
        for k in range(min(space.n_labels, 4)):
            phi.append((f"label{k}", _LabelSet(col, vals[k:k + 1])))
    k = 0
    while len(phi) < size:
        kind = rng.integers(0, 2)
        if kind == 0 and space.box_dim:
            d = int(rng.integers(0, space.box_dim))
            slope = float(rng.uniform(0.4, 1.0)) * (1 if rng.random() < 0.5 else -1)
            center = float(rng.uniform(0.0, 1.0))
            phi.append((f"ramp{k}", _Ramp(d, slope, center)))
        elif space.box_dim:
            nd = int(rng.integers(1, space.box_dim + 1))
            dims = rng.choice(space.box_dim, size=nd, replace=False)
            centers = rng.uniform(0.0, 1.0, nd)
            # sum of per-axis Lipschitz constants (sqrt(2)/s_i)e^{-1/2} <= 1
            widths = np.full(nd, nd * math.sqrt(2.0) * math.exp(-0.5) * 1.05)
            widths *= rng.uniform(1.0, 2.0, nd)
            phi.append((f"bump{k}", _Bump(dims, centers, widths)))
        else:
            vals = np.asarray(space.label_values)
            m = int(rng.integers(1, space.n_labels + 1))
            sel = rng.choice(space.n_labels, size=m, replace=False)
            phi.append((f"labels{k}", _LabelSet(space.box_dim, vals[sel])))
        k += 1
    phi = phi[:size]

    psi = [("one", _AgeBlind(_One()))]
    for name, f in phi[1:max(2, size // 4)]:
        psi.append((f"x_{name}", _AgeBlind(f)))
    k = 0
    while len(psi) < size:
        thr = float(rng.uniform(0.0, 8.0))
        tau = float(rng.uniform(0.5, 2.0))
        direction = 1.0 if rng.random() < 0.5 else -1.0
        if rng.random() < 0.5 or not space.box_dim:
            base = _One()
        else:
            d = int(rng.integers(0, space.box_dim))
            base = _Ramp(d, float(rng.uniform(0.2, 0.5)), float(rng.uniform(0, 1)))
        psi.append((f"age{k}", _AgeProduct(base, thr, max(tau, 0.5), direction)))
        k += 1
    return TestDictionary(space=space, phi=phi, psi=psi[:size], seed=seed)


# ---------------------------------------------------------------------------
# Dictionary distance

@dataclass
class PairTestResult:
    distance: float
    table: list                  # (name, |<a-b, f>|)


def pair_test(a: AtomicMeasure, b: AtomicMeasure,
              dictionary: TestDictionary) -> PairTestResult:
    """max_f |<a, f> - <b, f>| over the matching dictionary family."""
    if a.has_ages != b.has_ages:
        raise ConfigError("pair_test: measures live on different supports")
    fam = dictionary.psi if a.has_ages else dictionary.phi
    table = []
    for name, fn in fam:
        table.append((name, abs(a.integrate(fn) - b.integrate(fn))))
    return PairTestResult(distance=max(v for _, v in table), table=table)


def write_distance_table(result: PairTestResult, path):
    """Export a pair-test table as CSV (function_name, value)."""
    with open(path, "w", encoding="utf8") as fh:
        fh.write("function_name,value\n")
        for name, value in result.table:
            fh.write(f"{name},{value:.12g}\n")


def project_to_grid(atomic: AtomicMeasure, grid) -> np.ndarray:
    """Mass-preserving cell weights of an atomic measure on a TypeGrid."""
    out = np.zeros(grid.n_cells)
    if len(atomic.weights) == 0:
        return out
    idx = grid.cell_index(atomic.points)
    np.add.at(out, idx, atomic.weights)
    return out
