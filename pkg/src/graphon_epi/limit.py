"""Deterministic limiting system: the coupled (susceptible measure, force)
equations, the derived infected/recovered measures, a whole-interval Picard
solver, and a method-of-characteristics cross-check of the transport PDE.

Discretization: the type space is partitioned into M cells with
representative points; the force is marched on a uniform time grid, where
the Volterra structure lets F(t_k) depend only on earlier values plus one
predictor-corrector sweep for the k' = k self-term.  The susceptible cell
masses obey the exact exponential identity
    Smu[k] = Smu[0] * exp(-dt * sum_{k'<k} F[k'])
so that identity holds to machine precision by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import (ConfigError, ConvergenceFailure, NumericalError,
                     UnsupportedFamilyError)
from .grids import TypeGrid, build_grid
from .measures import AtomicMeasure, TestDictionary, build_dictionary
from .model import AgeAtZero, AgeDeterministic, Scenario

__all__ = [
    "TypeGrid", "build_grid", "SolverConfig", "LimitSolution",
    "solve_timestep", "solve_picard", "eval_muI", "eval_muR",
    "pde_characteristics_check", "force_regularity_probe", "ForceField",
]


@dataclass
class SolverConfig:
    dt: float = 1e-2
    da: float = None              # age bin width; must equal dt (default)
    quad_rule: str = "gauss"      # "gauss" | "midpoint" for initial ages
    quad_nodes: int = 12
    picard_tol: float = 1e-8
    picard_max_iters: int = 80
    cells_per_dim: int = 32
    mass_check: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.da is None:
            self.da = self.dt
        if abs(self.da - self.dt) > 1e-15:
            raise ConfigError("age and time steps are synchronized; da must equal dt")
        if self.picard_tol <= 0 or self.picard_max_iters < 1:
            raise ConfigError("picard_tol and picard_max_iters must be positive")


def _age_quad(age_dist, config: SolverConfig):
    if config.quad_rule == "gauss":
        return age_dist.quad(config.quad_nodes)
    if config.quad_rule == "midpoint":
        n = config.quad_nodes
        u = (np.arange(n) + 0.5) / n
        if isinstance(age_dist, (AgeAtZero, AgeDeterministic)):
            return age_dist.quad(1)
        if age_dist.kind == "uniform":
            return age_dist.lo + (age_dist.hi - age_dist.lo) * u, np.full(n, 1.0 / n)
        if age_dist.kind == "exponential":
            return -age_dist.mean * np.log1p(-u), np.full(n, 1.0 / n)
        raise ConfigError(f"midpoint quadrature unsupported for {age_dist.kind}")
    raise ConfigError(f"unknown quadrature rule {config.quad_rule!r}")


@dataclass
class LimitSolution:
    scenario: Scenario
    grid: TypeGrid
    config: SolverConfig
    times: np.ndarray            # (K+1,)
    force: np.ndarray            # (K+1, M)
    s_mass: np.ndarray           # (K+1, M) susceptible cell masses
    i0_cells: np.ndarray         # (M,)
    r0_cells: np.ndarray         # (M,)
    age_nodes: np.ndarray        # (Q,)
    age_weights: np.ndarray      # (Q,)
    lam_bar: np.ndarray          # (K+1, M) mean infectivity table on the grid
    _totals: tuple = field(default=None, repr=False)

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def dt(self):
        return self.config.dt

    def time_index(self, t) -> int:
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(self.times[k] - t) > 1e-9 * max(1.0, t):
            raise ConfigError(f"time {t} is not on the solver grid")
        return k

    # -- initial-cohort helpers -------------------------------------------

    def _ratio_tables(self, t):
        """chi ratio lam(x_m, a_q + t) * sf(a_q + t)/sf(a_q): (M, Q)."""
        inf = self.scenario.infectivity
        reps = self.grid.reps
        out_rate = np.empty((self.grid.n_cells, len(self.age_nodes)))
        out_surv = np.empty_like(out_rate)
        for m in range(self.grid.n_cells):
            ages = self.age_nodes + t
            out_rate[m] = np.asarray(inf.shape.rate(reps[m:m + 1], ages)).ravel()
            out_surv[m] = np.asarray(inf.survival_ratio(
                reps[m:m + 1], self.age_nodes, t)).ravel()
        return out_rate, out_surv

    # -- aggregate S/I/R curves -------------------------------------------

    def totals(self):
        """(S_bar, I_bar, R_bar) time series of total masses."""
        if self._totals is not None:
            return self._totals
        K = self.n_steps
        M = self.grid.n_cells
        inf = self.scenario.infectivity
        reps = self.grid.reps
        dt = self.dt
        H = self.force * self.s_mass
        sft = np.empty((K + 1, M))
        for m in range(M):
            sft[:, m] = np.asarray(inf.duration.sf(reps[m:m + 1], self.times)).ravel()
        sfrev = sft[::-1].copy()
        surv0 = np.zeros(K + 1)          # initial cohort survivors
        for q in range(len(self.age_nodes)):
            for m in range(M):
                r = np.asarray(inf.survival_ratio(
                    reps[m:m + 1], self.age_nodes[q], self.times)).ravel()
                surv0 += self.i0_cells[m] * self.age_weights[q] * r
        i_new = np.zeros(K + 1)
        flux = np.zeros(K + 1)           # plain trapezoid of total H
        hsum = H.sum(axis=1)
        for k in range(1, K + 1):
            conv = float(np.einsum("im,im->", sfrev[K - k:K + 1], H[:k + 1]))
            conv -= 0.5 * (float(np.dot(sft[k], H[0])) + float(np.dot(sft[0], H[k])))
            i_new[k] = dt * conv
            flux[k] = flux[k - 1] + 0.5 * dt * (hsum[k - 1] + hsum[k])
        s_bar = self.s_mass.sum(axis=1)
        i_bar = surv0 + i_new
        i0_total = float(self.i0_cells.sum())
        r_bar = self.r0_cells.sum() + (i0_total - surv0) + (flux - i_new)
        if self.config.mass_check:
            drift = np.max(np.abs(s_bar + i_bar + r_bar - (s_bar[0] + i0_total
                                                           + self.r0_cells.sum())))
            lam_om = self.scenario.infectivity.lambda_star * self.scenario.kernels.omega_star
            tol = 20.0 * dt * max(lam_om, 1.0) * max(self.times[-1], 1.0)
            if drift > 10.0 * tol:
                raise NumericalError(
                    f"mass drift {drift:.3e} beyond 10x tolerance {tol:.3e}",
                    location="limit solver totals")
        self._totals = (s_bar, i_bar, r_bar)
        return self._totals

    # -- measures for pair tests ------------------------------------------

    def s_measure(self, t, refine_per_dim=3) -> AtomicMeasure:
        k = self.time_index(t)
        pts, frac = self.grid.refined_points(refine_per_dim)
        per = len(pts) // self.grid.n_cells
        w = np.repeat(self.s_mass[k], per) * frac
        return AtomicMeasure(pts, w)

    def r_measure(self, t, refine_per_dim=3) -> AtomicMeasure:
        k = self.time_index(t)
        rc = self._r_cells(k)
        pts, frac = self.grid.refined_points(refine_per_dim)
        per = len(pts) // self.grid.n_cells
        return AtomicMeasure(pts, np.repeat(rc, per) * frac)

    def i_measure(self, t) -> AtomicMeasure:
        """Infected measure as (type, age) atoms: aged initial-cohort nodes
        plus one cohort atom per elapsed time step."""
        k = self.time_index(t)
        M = self.grid.n_cells
        reps = self.grid.reps
        rate_t, surv_t = self._ratio_tables(t)
        pts = [np.repeat(reps, len(self.age_nodes), axis=0)]
        ages = [np.tile(self.age_nodes + t, M)]
        wts = [(self.i0_cells[:, None] * self.age_weights[None, :] * surv_t).ravel()]
        if k > 0:
            inf = self.scenario.infectivity
            H = self.force[:k + 1] * self.s_mass[:k + 1]
            cw = np.ones(k + 1)
            cw[0] = cw[-1] = 0.5
            coh_ages = t - self.times[:k + 1]
            for m in range(M):
                sf = np.asarray(inf.duration.sf(reps[m:m + 1], coh_ages)).ravel()
                w = self.dt * cw * sf * H[:, m]
                pts.append(np.repeat(reps[m:m + 1], k + 1, axis=0))
                ages.append(coh_ages)
                wts.append(w)
        return AtomicMeasure(np.vstack(pts), np.concatenate(wts),
                             ages=np.concatenate(ages))

    def _r_cells(self, k) -> np.ndarray:
        inf = self.scenario.infectivity
        reps = self.grid.reps
        M = self.grid.n_cells
        t = self.times[k]
        _, surv_t = self._ratio_tables(t)
        rc = self.r0_cells + self.i0_cells * ((self.age_weights[None, :]
                                               * (1.0 - surv_t)).sum(axis=1))
        if k > 0:
            H = self.force[:k + 1] * self.s_mass[:k + 1]
            cw = np.ones(k + 1)
            cw[0] = cw[-1] = 0.5
            coh_ages = t - self.times[:k + 1]
            for m in range(M):
                cdf = np.asarray(inf.duration.cdf(reps[m:m + 1], coh_ages)).ravel()
                rc[m] += self.dt * float(np.dot(cw * cdf, H[:, m]))
        return rc

    # -- force as a function for the coupled simulator ---------------------

    def force_field(self) -> "ForceField":
        return ForceField(self)

    # -- exports ------------------------------------------------------------

    def export_force_csv(self, path):
        with open(path, "w", encoding="utf8") as fh:
            fh.write("t,cell,x,force\n")
            for k, t in enumerate(self.times):
                for m in range(self.grid.n_cells):
                    x = " ".join(f"{v:.10g}" for v in self.grid.reps[m])
                    fh.write(f"{t:.10g},{m},{x},{self.force[k, m]:.12g}\n")

    def export_sir_csv(self, path, stride=1):
        s_bar, i_bar, r_bar = self.totals()
        with open(path, "w", encoding="utf8") as fh:
            fh.write("t,S,I,R\n")
            for k in range(0, self.n_steps + 1, stride):
                fh.write(f"{self.times[k]:.10g},{s_bar[k]:.12g},"
                         f"{i_bar[k]:.12g},{r_bar[k]:.12g}\n")


class ForceField:
    """Limit force as a callable (t, x) -> rate: linear in time, linear
    across the 1-d box cells (piecewise-constant per cell otherwise)."""

    def __init__(self, solution: LimitSolution):
        self.times = solution.times
        self.F = solution.force
        self.grid = solution.grid
        self.bound = float(self.F.max(initial=0.0))
        self.t_max = float(self.times[-1])
        sp = self.grid.space
        self._interp_1d = sp.box_dim == 1 and sp.n_labels == 0
        if self._interp_1d:
            self._xcol = self.grid.reps[:, 0]

    def _row(self, t):
        times = self.times
        if t <= times[0]:
            return self.F[0]
        if t >= times[-1]:
            return self.F[-1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(k, len(times) - 2)
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - w) * self.F[k] + w * self.F[k + 1]

    def value(self, t, x_row) -> float:
        row = self._row(t)
        if self._interp_1d:
            return float(np.interp(x_row[0], self._xcol, row))
        m = int(self.grid.cell_index(np.atleast_2d(x_row))[0])
        return float(row[m])


# ---------------------------------------------------------------------------
# Shared discretization

def _discretize(scenario: Scenario, grid: TypeGrid, config: SolverConfig, horizon):
    if horizon <= 0:
        raise ConfigError("horizon must be > 0")
    K = int(round(horizon / config.dt))
    if abs(K * config.dt - horizon) > 1e-9:
        K = int(math.ceil(horizon / config.dt))
    times = np.arange(K + 1) * config.dt
    M = grid.n_cells
    reps = grid.reps
    init = scenario.initial
    s0 = init.susceptible * grid.weights
    i0 = init.infected * grid.weights
    r0 = init.recovered * grid.weights
    aq, wq = _age_quad(init.age, config)

    inf = scenario.infectivity
    ker = scenario.kernels
    omega = np.empty((M, M))
    for m in range(M):
        omega[m] = np.asarray(ker.omega_bar(reps[m:m + 1], reps), dtype=float)
    if not np.isfinite(omega).all():
        bad = np.argwhere(~np.isfinite(omega))[0]
        raise NumericalError("non-finite limit kernel value",
                             location=f"omega_bar at cell pair {tuple(bad)}")

    lam_bar = np.empty((K + 1, M))
    for m in range(M):
        lam_bar[:, m] = np.asarray(inf.mean_infectivity(reps[m:m + 1], times)).ravel()
    if not np.isfinite(lam_bar).all():
        raise NumericalError("non-finite mean infectivity", location="lam_bar table")

    # force exerted by the initial cohort: (K+1, M) before kernel mixing
    g0 = np.zeros((K + 1, M))
    if init.infected > 0:
        for q in range(len(aq)):
            for m in range(M):
                rate = np.asarray(inf.shape.rate(reps[m:m + 1], aq[q] + times)).ravel()
                ratio = np.asarray(inf.survival_ratio(
                    reps[m:m + 1], aq[q], times)).ravel()
                g0[:, m] += i0[m] * wq[q] * rate * ratio
    phi0 = g0 @ omega.T
    return times, omega, lam_bar, phi0, s0, i0, r0, aq, wq


# ---------------------------------------------------------------------------
# Time-marching solver

def solve_timestep(scenario: Scenario, grid: TypeGrid, config: SolverConfig,
                   horizon) -> LimitSolution:
    """March the Volterra force equation with a predictor(left rectangle) /
    corrector(trapezoid) sweep per step."""
    times, omega, lam_bar, phi0, s0, i0, r0, aq, wq = _discretize(
        scenario, grid, config, horizon)
    K = len(times) - 1
    M = grid.n_cells
    dt = config.dt
    F = np.zeros((K + 1, M))
    S = np.zeros((K + 1, M))
    H = np.zeros((K + 1, M))
    lam_rev = lam_bar[::-1].copy()      # contiguous reversed table for the dots
    F[0] = phi0[0]
    S[0] = s0
    H[0] = F[0] * S[0]
    csum = np.zeros(M)
    for k in range(1, K + 1):
        csum += F[k - 1]
        S[k] = s0 * np.exp(-dt * csum)
        base = np.einsum("im,im->m", lam_rev[K + 1 - k:K + 1], H[:k])
        pred = phi0[k] + dt * (base @ omega.T)
        h_pred = pred * S[k]
        trapz = base - 0.5 * lam_bar[k] * H[0] + 0.5 * lam_bar[0] * h_pred
        F[k] = phi0[k] + dt * (trapz @ omega.T)
        if not np.isfinite(F[k]).all():
            raise NumericalError("non-finite force", location=f"t={times[k]:.6g}")
        H[k] = F[k] * S[k]
    sol = LimitSolution(scenario=scenario, grid=grid, config=config, times=times,
                        force=F, s_mass=S, i0_cells=i0, r0_cells=r0,
                        age_nodes=aq, age_weights=wq, lam_bar=lam_bar)
    if config.mass_check:
        sol.totals()
    return sol


# ---------------------------------------------------------------------------
# Whole-interval Picard iteration

def solve_picard(scenario: Scenario, grid: TypeGrid, config: SolverConfig,
                 horizon):
    """Functional iteration started from the initial-cohort force; returns
    (solution, residual sup-norms per iteration)."""
    times, omega, lam_bar, phi0, s0, i0, r0, aq, wq = _discretize(
        scenario, grid, config, horizon)
    K = len(times) - 1
    dt = config.dt
    F = phi0.copy()
    residuals = []
    for it in range(config.picard_max_iters):
        cum = np.vstack([np.zeros(grid.n_cells), np.cumsum(F[:-1], axis=0)])
        S = s0 * np.exp(-dt * cum)
        H = F * S
        conv = scipy.signal.fftconvolve(lam_bar, H, mode="full", axes=0)[:K + 1]
        trapz = conv - 0.5 * lam_bar * H[0][None, :] - 0.5 * lam_bar[0][None, :] * H
        F_next = phi0 + dt * (trapz @ omega.T)
        res = float(np.max(np.abs(F_next - F)))
        residuals.append(res)
        F = F_next
        if res < config.picard_tol:
            break
    else:
        raise ConvergenceFailure(
            f"Picard iteration did not reach {config.picard_tol} in "
            f"{config.picard_max_iters} iterations", residuals=residuals)
    cum = np.vstack([np.zeros(grid.n_cells), np.cumsum(F[:-1], axis=0)])
    S = s0 * np.exp(-dt * cum)
    sol = LimitSolution(scenario=scenario, grid=grid, config=config, times=times,
                        force=F, s_mass=S, i0_cells=i0, r0_cells=r0,
                        age_nodes=aq, age_weights=wq, lam_bar=lam_bar)
    return sol, residuals


# ---------------------------------------------------------------------------
# Functional evaluation of the infected / recovered measures

def eval_muI(solution: LimitSolution, t, psi) -> float:
    """<mu_I_t, psi> by quadrature of the two-term representation."""
    k = solution.time_index(t)
    grid, inf = solution.grid, solution.scenario.infectivity
    reps = grid.reps
    M = grid.n_cells
    rate_t, surv_t = solution._ratio_tables(t)
    aq, wq = solution.age_nodes, solution.age_weights
    pts = np.repeat(reps, len(aq), axis=0)
    ages = np.tile(aq + t, M)
    vals = np.asarray(psi(pts, ages), dtype=float).reshape(M, len(aq))
    term1 = float(np.sum(solution.i0_cells[:, None] * wq[None, :] * surv_t * vals))
    term2 = 0.0
    if k > 0:
        H = solution.force[:k + 1] * solution.s_mass[:k + 1]
        cw = np.ones(k + 1)
        cw[0] = cw[-1] = 0.5
        coh_ages = t - solution.times[:k + 1]
        acc = 0.0
        for m in range(M):
            sf = np.asarray(inf.duration.sf(reps[m:m + 1], coh_ages)).ravel()
            pv = np.asarray(psi(np.repeat(reps[m:m + 1], k + 1, axis=0), coh_ages),
                            dtype=float)
            acc += float(np.dot(cw * sf * pv, H[:, m]))
        term2 = solution.dt * acc
    return term1 + term2


def eval_muR(solution: LimitSolution, t, phi) -> float:
    """<mu_R_t, phi>, same quadrature conventions as eval_muI."""
    k = solution.time_index(t)
    grid, inf = solution.grid, solution.scenario.infectivity
    reps = grid.reps
    M = grid.n_cells
    _, surv_t = solution._ratio_tables(t)
    pv = np.asarray(phi(reps), dtype=float)
    term0 = float(np.dot(solution.r0_cells, pv))
    wq = solution.age_weights
    term1 = float(np.sum(solution.i0_cells[:, None] * wq[None, :]
                         * (1.0 - surv_t) * pv[:, None]))
    term2 = 0.0
    if k > 0:
        H = solution.force[:k + 1] * solution.s_mass[:k + 1]
        cw = np.ones(k + 1)
        cw[0] = cw[-1] = 0.5
        coh_ages = t - solution.times[:k + 1]
        acc = 0.0
        for m in range(M):
            cdf = np.asarray(inf.duration.cdf(reps[m:m + 1], coh_ages)).ravel()
            acc += pv[m] * float(np.dot(cw * cdf, H[:, m]))
        term2 = solution.dt * acc
    return term0 + term1 + term2


# ---------------------------------------------------------------------------
# PDE (transport with hazard killing) cross-check

@dataclass
class PDECheckReport:
    max_error: float
    table: list                    # (psi name, max |difference| over times)
    check_times: np.ndarray


def pde_characteristics_check(solution: LimitSolution, dictionary=None,
                              check_times=None) -> PDECheckReport:
    """Integrate the age-transport PDE along characteristics (first order:
    left-endpoint hazard, rectangle boundary injection) and compare against
    the integral representation on a set of test functions."""
    scen = solution.scenario
    inf = scen.infectivity
    grid = solution.grid
    reps = grid.reps
    M = grid.n_cells
    if not inf.duration.has_density or not inf.duration.hazard_bounded(reps):
        raise UnsupportedFamilyError(
            "characteristics check needs a bounded continuous hazard "
            "(exponential, gamma with shape >= 1, lognormal)")
    if scen.initial.infected > 0 and scen.initial.age.atom_at_zero:
        raise ConfigError("characteristics check requires no initial mass at age 0")
    if dictionary is None:
        dictionary = build_dictionary(grid.space, size=8)
    K = solution.n_steps
    dt = solution.dt
    times = solution.times
    if check_times is None:
        check_times = times[np.unique(np.linspace(1, K, 5).astype(int))]
    aq, wq = solution.age_nodes, solution.age_weights

    # cumulative left-endpoint hazard along both characteristic families
    haz_grid = np.empty((K + 1, M))
    for m in range(M):
        haz_grid[:, m] = np.asarray(inf.duration.hazard(reps[m:m + 1], times)).ravel()
    hazcum_grid = np.vstack([np.zeros(M), np.cumsum(haz_grid[:-1], axis=0)]) * dt
    hazcum_init = np.zeros((K + 1, M, len(aq)))
    for q in range(len(aq)):
        for m in range(M):
            h = np.asarray(inf.duration.hazard(reps[m:m + 1], aq[q] + times)).ravel()
            hazcum_init[1:, m, q] = np.cumsum(h[:-1]) * dt

    H = solution.force * solution.s_mass
    table = []
    for name, psi in dictionary.psi:
        errs = []
        for t in check_times:
            k = solution.time_index(t)
            # initial cohorts at ages aq + t
            mass0 = (solution.i0_cells[:, None] * wq[None, :]
                     * np.exp(-hazcum_init[k]))
            pv = np.asarray(psi(np.repeat(reps, len(aq), axis=0),
                                np.tile(aq + t, M)), dtype=float).reshape(M, len(aq))
            val = float(np.sum(mass0 * pv))
            # boundary cohorts born at t_{k'}, k' < k, now at age (k-k')dt
            if k > 0:
                born = H[:k] * dt                      # (k, M)
                decay = np.exp(-hazcum_grid[k - np.arange(k)])
                ages = t - times[:k]
                for m in range(M):
                    pb = np.asarray(psi(np.repeat(reps[m:m + 1], k, axis=0), ages),
                                    dtype=float)
                    val += float(np.dot(born[:, m] * decay[:, m], pb))
            ref = eval_muI(solution, t, psi)
            errs.append(abs(val - ref))
        table.append((name, max(errs)))
    return PDECheckReport(max_error=max(v for _, v in table), table=table,
                          check_times=np.asarray(check_times, dtype=float))


# ---------------------------------------------------------------------------
# Regularity probe (the kernel-difference bound on the force)

@dataclass
class RegularityReport:
    max_violation: float
    pairs: list                     # (m1, m2, lhs, rhs)


def force_regularity_probe(solution: LimitSolution, n_pairs=128,
                           seed=0) -> RegularityReport:
    """Check sup_t |F(t,x1) - F(t,x2)| <= lambda_star * integral of
    |omega(x1,.) - omega(x2,.)| d mu_X over sampled cell pairs."""
    grid = solution.grid
    M = grid.n_cells
    lam_star = solution.scenario.infectivity.lambda_star
    ker = solution.scenario.kernels
    reps = grid.reps
    omega = np.empty((M, M))
    for m in range(M):
        omega[m] = np.asarray(ker.omega_bar(reps[m:m + 1], reps), dtype=float)
    if M * (M - 1) // 2 <= n_pairs:
        pairs = [(a, b) for a in range(M) for b in range(a + 1, M)]
    else:
        rng = np.random.default_rng(seed)
        pairs = set()
        while len(pairs) < n_pairs:
            a, b = rng.integers(0, M, 2)
            if a != b:
                pairs.add((min(a, b), max(a, b)))
        pairs = sorted(pairs)
    rows = []
    worst = 0.0
    for a, b in pairs:
        lhs = float(np.max(np.abs(solution.force[:, a] - solution.force[:, b])))
        rhs = lam_star * float(np.dot(np.abs(omega[a] - omega[b]), grid.weights))
        rows.append((a, b, lhs, rhs))
        worst = max(worst, lhs - rhs)
    return RegularityReport(max_violation=max(0.0, worst), pairs=rows)
