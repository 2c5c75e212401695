"""Exact stochastic dynamics on the sampled graph by Poisson thinning.

``run`` drives the network epidemic with one candidate stream per infectious
source: candidates arrive at rate envelope * (total outgoing weight), pick a
target proportionally to the directed weight, and are accepted with
probability rate(age)/envelope while the source is still infectious.  This
is the superposition form of thinning and is exact; recoveries occur exactly
at infection time + duration.

``run_coupled`` additionally drives, for every initially susceptible i, the
mean-field indicator fed by a supplied limit force: one point process per
individual dominates both the network rate and the limit rate, and each
point's uniform mark is compared to both rates, realizing the two indicators
on the same underlying Poisson measure.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .measures import AtomicMeasure
from .model import (ConstantRate, Scenario, sample_characteristics,
                    sample_duration, sample_residual_duration)
from .rng import stream

_REC, _CAND = 0, 1   # heap kinds; recoveries sort first at equal times


@dataclass
class Population:
    xs: np.ndarray          # (N, dim) characteristics
    status0: np.ndarray     # int8: 0=S, 1=I, 2=R at time 0
    init_age: np.ndarray    # (N,) infection age at time 0 (0 unless initially infected)

    @property
    def n(self):
        return len(self.xs)


def draw_population(scenario: Scenario, n: int, master_seed) -> Population:
    """Characteristics plus initial compartments and initial ages.

    Compartments are filled by exact quota (largest-remainder rounding of the
    scenario fractions) and assigned by a seeded permutation, so the scaled
    initial measures match the declared fractions up to 1/N.
    """
    xs = sample_characteristics(scenario, n, stream(master_seed, "chars"))
    rng = stream(master_seed, "init")
    init = scenario.initial
    fracs = np.array([init.susceptible, init.infected, init.recovered])
    counts = np.floor(fracs * n).astype(np.int64)
    short = n - int(counts.sum())
    order = np.argsort(-(fracs * n - counts), kind="stable")
    counts[order[:short]] += 1
    status = np.repeat(np.array([0, 1, 2], dtype=np.int8), counts)
    rng.shuffle(status)
    ages = np.zeros(n)
    inf_mask = status == 1
    n_inf = int(inf_mask.sum())
    if n_inf:
        ages[inf_mask] = init.age.sample(n_inf, stream(master_seed, "init_age"))
    return Population(xs=xs, status0=status, init_age=ages)


@dataclass
class EventLog:
    times: np.ndarray
    kinds: np.ndarray        # 0 infection, 1 recovery
    ids: np.ndarray
    forces: np.ndarray       # force acting on the individual at acceptance

    def __len__(self):
        return len(self.times)

    @property
    def infection_times(self):
        return self.times[self.kinds == 0]


def _log_from_lists(ts, ks, ids, fs) -> EventLog:
    return EventLog(np.asarray(ts, dtype=float), np.asarray(ks, dtype=np.int8),
                    np.asarray(ids, dtype=np.int64), np.asarray(fs, dtype=float))


@dataclass
class Trajectory:
    """Full pathwise state: infection/recovery times determine the empirical
    measures at any time in [0, horizon]."""

    population: Population
    tau: np.ndarray          # infection time (-init_age for initially infected,
                             # -inf for initially recovered, +inf if never)
    rec: np.ndarray          # recovery time (same conventions)
    horizon: float
    times: np.ndarray        # requested snapshot grid

    @property
    def n(self):
        return self.population.n

    def status_at(self, t) -> np.ndarray:
        s = np.zeros(self.n, dtype=np.int8)
        s[(self.tau <= t) & (self.rec > t)] = 1
        s[self.rec <= t] = 2
        return s

    def counts_at(self, t):
        s = self.status_at(t)
        return int((s == 0).sum()), int((s == 1).sum()), int((s == 2).sum())

    def measure_at(self, t, compartment) -> AtomicMeasure:
        """Scaled empirical measure (weights 1/N); 'I' carries exact ages."""
        s = self.status_at(t)
        code = {"S": 0, "I": 1, "R": 2}[compartment]
        sel = np.flatnonzero(s == code)
        w = np.full(len(sel), 1.0 / self.n)
        if compartment == "I":
            return AtomicMeasure(self.population.xs[sel], w, ages=t - self.tau[sel])
        return AtomicMeasure(self.population.xs[sel], w)


@dataclass
class SimulationResult:
    log: EventLog
    trajectory: Trajectory


@dataclass
class CouplingReport:
    times: np.ndarray
    dbar: np.ndarray               # fraction of initially susceptibles whose two
                                   # indicators have disagreed by each grid time
    mismatch_times: np.ndarray     # per individual; +inf when the paths agree


@dataclass
class CoupledResult:
    log: EventLog                  # network-side events
    log_meanfield: EventLog        # mean-field first jumps
    report: CouplingReport
    trajectory: Trajectory


def _check_args(graph, population, horizon):
    if population.n == 0:
        raise ConfigError("empty population")
    if graph.n != population.n:
        raise ConfigError(f"graph size {graph.n} != population size {population.n}")
    if not horizon > 0:
        raise ConfigError("horizon must be > 0")


def _init_state(scenario, population, master_seed, horizon, heap):
    """Common start-of-run state; returns (status, tau, rec)."""
    n = population.n
    status = population.status0.astype(np.int8).copy()
    tau = np.full(n, np.inf)
    rec = np.full(n, np.inf)
    tau[status == 2] = -np.inf
    rec[status == 2] = -np.inf
    inf0 = np.flatnonzero(status == 1)
    for j in inf0:
        a0 = population.init_age[j]
        resid = float(sample_residual_duration(
            scenario.infectivity, population.xs[j:j + 1],
            np.array([a0]), stream(master_seed, "dur", int(j)))[0])
        tau[j] = -a0
        rec[j] = resid
        if resid <= horizon:
            heapq.heappush(heap, (resid, _REC, int(j)))
    return status, tau, rec


def _force_on(graph, shape, xs, status, tau, i, t):
    """F_i^N(t): total incoming infectious pressure on i at time t."""
    nbr, win, _ = graph.row(i)
    if len(nbr) == 0:
        return 0.0
    mask = status[nbr] == 1
    if not mask.any():
        return 0.0
    sel = nbr[mask]
    lam = shape.rate(xs[sel], t - tau[sel])
    return float(np.dot(win[mask], np.asarray(lam, dtype=float)))


@dataclass
class Event:
    time: float
    kind: str                  # "infection" | "recovery"
    individual: int
    force: float               # force acting on the individual at acceptance


class EventEngine:
    """Stepwise form of the thinning simulation: ``next_event`` returns the
    next accepted infection or scheduled recovery in global time order, or
    None once the horizon (or an empty candidate set) is reached."""

    def __init__(self, graph, scenario: Scenario, population: Population,
                 horizon, master_seed=0, tight_envelopes=False):
        _check_args(graph, population, horizon)
        self.graph = graph
        self.population = population
        self.horizon = float(horizon)
        self.master_seed = master_seed
        self.tight_envelopes = tight_envelopes
        self.xs = population.xs
        self.inf_model = scenario.infectivity
        self.shape = self.inf_model.shape
        self.lam_star = float(self.inf_model.lambda_star)
        self._const_rate = self.shape.kind == "constant"
        self.heap = []
        self.status, self.tau, self.rec = _init_state(
            scenario, population, master_seed, self.horizon, self.heap)
        self.sources = {}
        for j in np.flatnonzero(self.status == 1):
            self._activate(int(j), 0.0)

    def _activate(self, j, t_now):
        nbr, _, wout = self.graph.row(j)
        if len(nbr) == 0:
            return
        cum = np.cumsum(wout)
        total = float(cum[-1])
        if total <= 0.0:
            return
        if self.tight_envelopes:
            env = float(np.asarray(self.shape.remaining_sup(
                self.xs[j:j + 1],
                np.array([max(t_now - self.tau[j], 0.0)]))).ravel()[0])
        else:
            env = self.lam_star
        if env <= 0.0:
            return
        rng_j = stream(self.master_seed, "src", int(j))
        self.sources[j] = (rng_j, nbr, cum, total, env)
        t_c = t_now + rng_j.exponential(1.0 / (env * total))
        if t_c <= self.horizon and t_c < self.rec[j]:
            heapq.heappush(self.heap, (t_c, _CAND, int(j)))

    def next_event(self):
        """Advance past rejected candidates to the next event; None at end."""
        while self.heap:
            t, kind, j = heapq.heappop(self.heap)
            if kind == _REC:
                self.status[j] = 2
                return Event(time=t, kind="recovery", individual=j,
                             force=float("nan"))
            if t >= self.rec[j]:
                continue              # source recovered; its stream ends
            rng_j, nbr, cum, total, env = self.sources[j]
            u = rng_j.random()
            i = int(nbr[np.searchsorted(cum, u * total, side="right")])
            accept = False
            if self.status[i] == 0:
                if self._const_rate and env <= self.shape.level:
                    accept = True     # envelope equals the constant rate
                else:
                    if self._const_rate:
                        lam = self.shape.level
                    else:
                        lam = float(np.asarray(self.shape.rate(
                            self.xs[j:j + 1],
                            np.array([t - self.tau[j]]))).ravel()[0])
                    accept = rng_j.random() * env <= lam
            t_next = t + rng_j.exponential(1.0 / (env * total))
            if t_next <= self.horizon and t_next < self.rec[j]:
                heapq.heappush(self.heap, (t_next, _CAND, j))
            if accept:
                force = _force_on(self.graph, self.shape, self.xs, self.status,
                                  self.tau, i, t)
                self.status[i] = 1
                self.tau[i] = t
                eta = float(np.asarray(sample_duration(
                    self.inf_model, self.xs[i:i + 1],
                    stream(self.master_seed, "dur", i))).ravel()[0])
                self.rec[i] = t + eta
                if self.rec[i] <= self.horizon:
                    heapq.heappush(self.heap, (self.rec[i], _REC, i))
                self._activate(i, t)
                return Event(time=t, kind="infection", individual=i, force=force)
        return None


def run(graph, scenario: Scenario, population: Population, horizon,
        snapshot_grid=None, master_seed=0, max_infections=None,
        tight_envelopes=False) -> SimulationResult:
    """Event-exact simulation; bit-deterministic given ``master_seed``."""
    engine = EventEngine(graph, scenario, population, horizon,
                         master_seed=master_seed,
                         tight_envelopes=tight_envelopes)
    if snapshot_grid is None:
        snapshot_grid = np.linspace(0.0, float(horizon), 11)
    ts, ks, ids, fs = [], [], [], []
    n_new = 0
    while True:
        ev = engine.next_event()
        if ev is None:
            break
        ts.append(ev.time)
        ks.append(0 if ev.kind == "infection" else 1)
        ids.append(ev.individual)
        fs.append(ev.force)
        if ev.kind == "infection":
            n_new += 1
            if max_infections is not None and n_new >= max_infections:
                break
    traj = Trajectory(population=population, tau=engine.tau, rec=engine.rec,
                      horizon=float(horizon),
                      times=np.asarray(snapshot_grid, dtype=float))
    return SimulationResult(log=_log_from_lists(ts, ks, ids, fs), trajectory=traj)


def run_coupled(graph, scenario: Scenario, population: Population, force_field,
                horizon, snapshot_grid=None, master_seed=0) -> CoupledResult:
    """Network and mean-field indicators driven by the same point streams.

    ``force_field`` must provide ``value(t, x_row) -> float``, a global
    ``bound``, and ``t_max`` covering the horizon.
    """
    _check_args(graph, population, horizon)
    horizon = float(horizon)
    if getattr(force_field, "t_max", np.inf) < horizon:
        raise ConfigError("limit force grid does not cover the horizon")
    if snapshot_grid is None:
        snapshot_grid = np.linspace(0.0, horizon, 11)
    snapshot_grid = np.asarray(snapshot_grid, dtype=float)
    xs = population.xs
    n = population.n
    inf_model = scenario.infectivity
    shape = inf_model.shape
    lam_star = float(inf_model.lambda_star)

    heap = []
    ts, ks, ids, fs = [], [], [], []
    status, tau, rec = _init_state(scenario, population, master_seed, horizon, heap)
    s0 = np.flatnonzero(status == 0)
    mf_tau = np.full(n, np.inf)
    bound = float(force_field.bound)
    win_sums = graph.in_weight_sums()

    rngs = {}
    dominator = np.zeros(n)
    for i in s0:
        m_i = max(lam_star * float(win_sums[i]), bound)
        if m_i <= 0.0:
            continue
        dominator[i] = m_i
        rngs[i] = stream(master_seed, "qi", int(i))
        t_c = rngs[i].exponential(1.0 / m_i)
        if t_c <= horizon:
            heapq.heappush(heap, (t_c, _CAND, int(i)))

    mf_ts, mf_ids, mf_fs = [], [], []
    while heap:
        t, kind, i = heapq.heappop(heap)
        if kind == _REC:
            status[i] = 2
            ts.append(t); ks.append(1); ids.append(i); fs.append(np.nan)
            continue
        need_net = status[i] == 0
        need_mf = not np.isfinite(mf_tau[i])
        if not (need_net or need_mf):
            continue
        rng_i = rngs[i]
        u = rng_i.random() * dominator[i]
        if need_net:
            f_net = _force_on(graph, shape, xs, status, tau, i, t)
            if u <= f_net:
                status[i] = 1
                tau[i] = t
                eta = float(np.asarray(sample_duration(
                    inf_model, xs[i:i + 1], stream(master_seed, "dur", i))).ravel()[0])
                rec[i] = t + eta
                if rec[i] <= horizon:
                    heapq.heappush(heap, (rec[i], _REC, i))
                ts.append(t); ks.append(0); ids.append(i); fs.append(f_net)
                need_net = False
        if need_mf:
            f_mf = float(force_field.value(t, xs[i]))
            if u <= f_mf:
                mf_tau[i] = t
                mf_ts.append(t); mf_ids.append(i); mf_fs.append(f_mf)
                need_mf = False
        if need_net or need_mf:
            t_next = t + rng_i.exponential(1.0 / dominator[i])
            if t_next <= horizon:
                heapq.heappush(heap, (t_next, _CAND, i))

    mismatch = np.full(n, np.inf)
    both = np.minimum(tau[s0], mf_tau[s0])
    differ = tau[s0] != mf_tau[s0]
    mismatch[s0[differ]] = both[differ]
    dbar = np.array([(mismatch <= tk).sum() / n for tk in snapshot_grid])
    report = CouplingReport(times=snapshot_grid, dbar=dbar, mismatch_times=mismatch)
    traj = Trajectory(population=population, tau=tau, rec=rec,
                      horizon=horizon, times=snapshot_grid)
    mf_log = EventLog(np.asarray(mf_ts, dtype=float),
                      np.zeros(len(mf_ts), dtype=np.int8),
                      np.asarray(mf_ids, dtype=np.int64),
                      np.asarray(mf_fs, dtype=float))
    return CoupledResult(log=_log_from_lists(ts, ks, ids, fs),
                         log_meanfield=mf_log, report=report, trajectory=traj)
