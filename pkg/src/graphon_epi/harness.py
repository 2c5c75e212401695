"""Experiment orchestration: N-sweeps with replicas, dictionary distances to
the limit solution, coupling discrepancies, slope fits, and CSV/JSON reports.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graphgen import graph_stats, sample_graph
from .grids import build_grid
from .limit import SolverConfig, solve_picard, solve_timestep
from .measures import build_dictionary, pair_test
from .model import Scenario, load_scenario, validate_scenario
from .rng import replica_seed
from .simulate import draw_population, run, run_coupled

_BYTES_PER_EDGE = 2 * (4 + 8 + 8)      # CSR entry both directions
_BYTES_PER_NODE = 120


def default_workers():
    env = os.environ.get("GRAPHON_EPI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"GRAPHON_EPI_THREADS must be an integer, got {env!r}")
    return min(8, os.cpu_count() or 1)


@dataclass
class ExperimentPlan:
    scenario: object                  # Scenario or preset name / file path
    n_list: list
    replicas: int
    horizon: float
    snapshot_times: list = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    master_seed: int = 0
    workers: int = None
    coupled: bool = False
    memory_budget_mb: float = 4096.0
    refine_per_dim: int = 3
    dictionary_size: int = 32

    def __post_init__(self):
        self.n_list = [int(n) for n in self.n_list]
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError("N list must contain positive sizes")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError("N list must be strictly increasing")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.horizon <= 0:
            raise ConfigError("horizon must be > 0")
        if self.snapshot_times is None:
            self.snapshot_times = [self.horizon]
        if self.workers is None:
            self.workers = default_workers()

    def resolve_scenario(self) -> Scenario:
        if isinstance(self.scenario, Scenario):
            return self.scenario
        return load_scenario(self.scenario)


def estimate_cell_bytes(scenario: Scenario, n, seed=0) -> float:
    """Fail-fast memory estimate for one (N, replica) cell."""
    ker = scenario.kernels
    const = ker.connection.constant_value(n)
    if const is not None:
        p_avg = min(1.0, const)
    else:
        rng = np.random.default_rng(seed)
        from .model import sample_characteristics
        xs = sample_characteristics(scenario.with_updates(sampler="iid"),
                                    min(n, 2048), rng)
        ia = rng.integers(0, len(xs), 4096)
        ib = rng.integers(0, len(xs), 4096)
        p_avg = float(np.mean(np.clip(ker.kappa(n, xs[ia], xs[ib]), 0.0, 1.0)))
    edges = p_avg * n * (n - 1) / 2.0
    return edges * _BYTES_PER_EDGE + n * _BYTES_PER_NODE


def check_memory_budget(plan: ExperimentPlan, scenario: Scenario):
    n = plan.n_list[-1]
    est = estimate_cell_bytes(scenario, n, seed=plan.master_seed)
    budget = plan.memory_budget_mb * 1024 * 1024
    if est > budget:
        raise ConfigError(
            f"largest sweep cell (N={n}) is estimated at {est / 1e6:.0f} MB, "
            f"over the {plan.memory_budget_mb:.0f} MB budget; raise "
            "memory_budget_mb or shrink the plan")


# one (N, replica) sweep cell; module-level so process pools can pickle it
def _run_cell(args):
    (scenario, n, rep, seed, horizon, snapshot_times, force_pack, limit_atoms,
     dictionary, coupled, want_stats) = args
    pop = draw_population(scenario, n, seed)
    graph = sample_graph(pop.xs, scenario.kernels, n, seed)
    rows = []
    if coupled:
        res = run_coupled(graph, scenario, pop, force_pack, horizon,
                          snapshot_grid=np.asarray(snapshot_times), master_seed=seed)
        traj = res.trajectory
        dbar = [(n, rep, float(t), float(d))
                for t, d in zip(res.report.times, res.report.dbar)]
    else:
        res = run(graph, scenario, pop, horizon,
                  snapshot_grid=np.asarray(snapshot_times), master_seed=seed)
        traj = res.trajectory
        dbar = []
    for t in snapshot_times:
        for comp in ("S", "I", "R"):
            emp = traj.measure_at(t, comp)
            d = pair_test(emp, limit_atoms[(t, comp)], dictionary).distance
            rows.append((n, rep, float(t), comp, float(d)))
    stats = None
    if want_stats:
        gs = graph_stats(graph, pop.xs, scenario.kernels)
        stats = (n, gs.gamma_bar, gs.upsilon, gs.kernel_gap, gs.edge_count,
                 gs.mean_degree)
    return rows, dbar, stats


@dataclass
class ConvergenceReport:
    plan_echo: dict
    distances: list               # (N, replica, t, compartment, distance)
    summary: list                 # (N, t, compartment, median, iqr)
    slopes: dict                  # compartment -> slope or None
    dbar_rows: list               # (N, replica, t, dbar)
    dbar_summary: list            # (N, t, median, iqr)
    graph_stats: list             # (N, gamma_bar, upsilon, kernel_gap, edges, mean_deg)
    runtime_seconds: float

    def median_at(self, n, t, comp):
        for row in self.summary:
            if row[0] == n and abs(row[1] - t) < 1e-9 and row[2] == comp:
                return row[3]
        raise KeyError((n, t, comp))

    def dbar_median_at(self, n, t):
        for row in self.dbar_summary:
            if row[0] == n and abs(row[1] - t) < 1e-9:
                return row[2]
        raise KeyError((n, t))


def _median_iqr(values):
    v = np.sort(np.asarray(values, dtype=float))
    med = float(np.median(v))
    iqr = float(np.percentile(v, 75) - np.percentile(v, 25))
    return med, iqr


def run_convergence(plan: ExperimentPlan) -> ConvergenceReport:
    t_start = time.monotonic()
    scenario = plan.resolve_scenario()
    report = validate_scenario(scenario)
    if not report.ok:
        raise ConfigError(f"scenario invalid:\n{report}")
    check_memory_budget(plan, scenario)

    grid = build_grid(scenario, plan.solver.cells_per_dim)
    sol = solve_timestep(scenario, grid, plan.solver, plan.horizon)
    dictionary = build_dictionary(scenario.space, size=plan.dictionary_size)
    snapshot_times = [float(t) for t in plan.snapshot_times]
    limit_atoms = {}
    for t in snapshot_times:
        limit_atoms[(t, "S")] = sol.s_measure(t, plan.refine_per_dim)
        limit_atoms[(t, "I")] = sol.i_measure(t)
        limit_atoms[(t, "R")] = sol.r_measure(t, plan.refine_per_dim)
    force_pack = sol.force_field() if plan.coupled else None

    jobs = []
    for n in plan.n_list:
        for rep in range(plan.replicas):
            seed = replica_seed(plan.master_seed, n, rep)
            jobs.append((scenario, n, rep, seed, plan.horizon, snapshot_times,
                         force_pack, limit_atoms, dictionary, plan.coupled,
                         rep == 0))
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_run_cell, jobs, chunksize=1))
    else:
        results = [_run_cell(j) for j in jobs]

    distances, dbar_rows, stats_rows = [], [], []
    for rows, dbar, stats in results:
        distances.extend(rows)
        dbar_rows.extend(dbar)
        if stats is not None:
            stats_rows.append(stats)

    summary = []
    for n in plan.n_list:
        for t in snapshot_times:
            for comp in ("S", "I", "R"):
                vals = [d for (nn, _, tt, cc, d) in distances
                        if nn == n and cc == comp and abs(tt - t) < 1e-9]
                med, iqr = _median_iqr(vals)
                summary.append((n, t, comp, med, iqr))
    dbar_summary = []
    if plan.coupled:
        for n in plan.n_list:
            for t in snapshot_times:
                vals = [d for (nn, _, tt, d) in dbar_rows
                        if nn == n and abs(tt - t) < 1e-9]
                med, iqr = _median_iqr(vals)
                dbar_summary.append((n, t, med, iqr))

    slopes = {}
    t_final = snapshot_times[-1]
    for comp in ("S", "I", "R"):
        if len(plan.n_list) >= 3:
            med = [m for (n, t, c, m, _) in summary
                   if c == comp and abs(t - t_final) < 1e-9]
            loggable = [(math.log(n), math.log(max(m, 1e-300)))
                        for n, m in zip(plan.n_list, med)]
            xs_ = np.array([p[0] for p in loggable])
            ys_ = np.array([p[1] for p in loggable])
            slopes[comp] = float(np.polyfit(xs_, ys_, 1)[0])
        else:
            slopes[comp] = None

    plan_echo = dict(scenario=scenario.name, n_list=plan.n_list,
                     replicas=plan.replicas, horizon=plan.horizon,
                     snapshot_times=snapshot_times, master_seed=plan.master_seed,
                     coupled=plan.coupled, dt=plan.solver.dt,
                     cells_per_dim=plan.solver.cells_per_dim,
                     workers=plan.workers)
    return ConvergenceReport(plan_echo=plan_echo, distances=distances,
                             summary=summary, slopes=slopes,
                             dbar_rows=dbar_rows, dbar_summary=dbar_summary,
                             graph_stats=stats_rows,
                             runtime_seconds=time.monotonic() - t_start)


def write_report(report: ConvergenceReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "distances.csv"), "w", encoding="utf8") as fh:
        fh.write("N,replica,t,compartment,distance\n")
        for n, rep, t, comp, d in report.distances:
            fh.write(f"{n},{rep},{t:.10g},{comp},{d:.12g}\n")
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf8") as fh:
        fh.write("N,t,compartment,median,iqr\n")
        for n, t, comp, med, iqr in report.summary:
            fh.write(f"{n},{t:.10g},{comp},{med:.12g},{iqr:.12g}\n")
    if report.dbar_rows:
        with open(os.path.join(out_dir, "dbar.csv"), "w", encoding="utf8") as fh:
            fh.write("N,replica,t,dbar\n")
            for n, rep, t, d in report.dbar_rows:
                fh.write(f"{n},{rep},{t:.10g},{d:.12g}\n")
    with open(os.path.join(out_dir, "graph_stats.csv"), "w", encoding="utf8") as fh:
        fh.write("N,gamma_bar,upsilon,kernel_gap,edge_count,mean_degree\n")
        for n, gb, up, gap, ec, md in report.graph_stats:
            fh.write(f"{n},{gb:.12g},{up:.12g},{gap:.12g},{ec},{md:.10g}\n")
    payload = dict(plan=report.plan_echo, slopes=report.slopes,
                   summary=[list(r) for r in report.summary],
                   dbar_summary=[list(r) for r in report.dbar_summary],
                   graph_stats=[list(r) for r in report.graph_stats],
                   runtime_seconds=report.runtime_seconds,
                   generated_at=time.strftime("%Y-%m-%dT%H:%M:%S"))
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Single-run command helpers (the CLI surface)

def cmd_simulate(scenario, n, horizon, seed=0, out_dir=None, n_snapshots=11):
    scenario = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    rep = validate_scenario(scenario)
    if not rep.ok:
        raise ConfigError(f"scenario invalid:\n{rep}")
    if n < 1:
        raise ConfigError("N must be >= 1")
    grid_times = np.linspace(0.0, horizon, n_snapshots)
    pop = draw_population(scenario, n, seed)
    graph = sample_graph(pop.xs, scenario.kernels, n, seed)
    res = run(graph, scenario, pop, horizon, snapshot_grid=grid_times,
              master_seed=seed)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_events_csv(os.path.join(out_dir, "events.csv"), res, pop)
        _write_snapshots_csv(os.path.join(out_dir, "snapshots.csv"), res, grid_times)
    return res


def _write_events_csv(path, res, pop):
    dim = pop.xs.shape[1]
    xcols = ",".join(f"x{d}" for d in range(dim))
    tau = res.trajectory.tau
    with open(path, "w", encoding="utf8") as fh:
        fh.write(f"time,kind,individual,{xcols},age_at_event\n")
        for t, k, i in zip(res.log.times, res.log.kinds, res.log.ids):
            name = "infection" if k == 0 else "recovery"
            xv = ",".join(f"{v:.10g}" for v in pop.xs[i])
            age = 0.0 if k == 0 else t - tau[i]
            fh.write(f"{t:.12g},{name},{i},{xv},{age:.12g}\n")


def _write_snapshots_csv(path, res, grid_times):
    traj = res.trajectory
    dim = traj.population.xs.shape[1]
    xcols = ",".join(f"x{d}" for d in range(dim))
    with open(path, "w", encoding="utf8") as fh:
        fh.write(f"t,compartment,{xcols},age,weight\n")
        for t in grid_times:
            for comp in ("S", "I", "R"):
                mu = traj.measure_at(t, comp)
                for idx in range(len(mu.weights)):
                    xv = ",".join(f"{v:.10g}" for v in mu.points[idx])
                    age = mu.ages[idx] if mu.has_ages else 0.0
                    fh.write(f"{t:.10g},{comp},{xv},{age:.12g},"
                             f"{mu.weights[idx]:.12g}\n")


def cmd_limit(scenario, horizon, solver: SolverConfig = None, picard=False,
              out_dir=None, age_dump=False):
    scenario = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    rep = validate_scenario(scenario)
    if not rep.ok:
        raise ConfigError(f"scenario invalid:\n{rep}")
    solver = solver or SolverConfig()
    grid = build_grid(scenario, solver.cells_per_dim)
    if picard:
        sol, _ = solve_picard(scenario, grid, solver, horizon)
    else:
        sol = solve_timestep(scenario, grid, solver, horizon)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        sol.export_force_csv(os.path.join(out_dir, "force.csv"))
        sol.export_sir_csv(os.path.join(out_dir, "sir.csv"))
        if age_dump:
            _write_age_dump(os.path.join(out_dir, "infected_age.csv"), sol)
    return sol


def _write_age_dump(path, sol):
    with open(path, "w", encoding="utf8") as fh:
        fh.write("t,cell,x,age,mass\n")
        ks = np.unique(np.linspace(0, sol.n_steps, 21).astype(int))
        for k in ks:
            mu = sol.i_measure(sol.times[k])
            idx = sol.grid.cell_index(mu.points)
            for j in range(len(mu.weights)):
                xv = " ".join(f"{v:.8g}" for v in mu.points[j])
                fh.write(f"{sol.times[k]:.10g},{idx[j]},{xv},"
                         f"{mu.ages[j]:.10g},{mu.weights[j]:.12g}\n")


def cmd_stats(scenario, n, seed=0, out_dir=None):
    scenario = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    if n < 1:
        raise ConfigError("N must be >= 1")
    pop = draw_population(scenario, n, seed)
    graph = sample_graph(pop.xs, scenario.kernels, n, seed)
    gs = graph_stats(graph, pop.xs, scenario.kernels)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "graph_stats.csv"), "w", encoding="utf8") as fh:
            fh.write("N,gamma_bar,upsilon,kernel_gap,gap_exact,edge_count,mean_degree\n")
            fh.write(f"{n},{gs.gamma_bar:.12g},{gs.upsilon:.12g},"
                     f"{gs.kernel_gap:.12g},{int(gs.gap_exact)},{gs.edge_count},"
                     f"{gs.mean_degree:.10g}\n")
    return gs
