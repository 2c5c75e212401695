"""Stochastic SIR with age-dependent infectivity on weighted random graphs,
its graphon mean-field limit, and tooling to verify the convergence."""

from .errors import (ConfigError, ConvergenceFailure, NumericalError,
                     UnsupportedFamilyError)
from .graphgen import (GraphStats, WeightedContactGraph, graph_from_edges,
                       graph_stats, row_force_bound, sample_graph)
from .grids import TypeGrid, build_grid
from .harness import (ConvergenceReport, ExperimentPlan, cmd_limit,
                      cmd_simulate, cmd_stats, run_convergence, write_report)
from .limit import (ForceField, LimitSolution, SolverConfig, eval_muI,
                    eval_muR, force_regularity_probe,
                    pde_characteristics_check, solve_picard, solve_timestep)
from .measures import (AtomicMeasure, TestDictionary, build_dictionary,
                       pair_test, project_to_grid, write_distance_table)
from .model import (AgeAtZero, AgeDeterministic, AgeExponential, AgeUniform,
                    ConstantRate, ConstPair, DeterministicDuration,
                    ExponentialDecayRate, ExponentialDuration, GammaDuration,
                    InfectivityModel, InitialCondition, KernelSuite,
                    LogNormalDuration, PRESETS, ProductPair, Scenario,
                    StepRate, TableRate, TriangularRate, TwoScalePair,
                    TypeSpace, WeightSpread, load_scenario, make_scenario,
                    mean_infectivity, sample_characteristics, sample_duration,
                    sample_residual_duration, validate_scenario)
from .rng import replica_seed, stream
from .simulate import (CoupledResult, CouplingReport, Event, EventEngine,
                       EventLog, Population, SimulationResult, Trajectory,
                       draw_population, run, run_coupled)

__version__ = "0.1.0"
