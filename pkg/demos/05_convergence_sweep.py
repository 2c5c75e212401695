"""A small law-of-large-numbers sweep.

For increasing N, the dictionary distance between the empirical measures and
the limit solution should shrink roughly like 1/sqrt(N); the fitted log-log
slope is printed at the end.  (The acceptance suite runs the full-size
version of this experiment.)
"""

import numpy as np

import graphon_epi as g
from graphon_epi.harness import default_workers


def main():
    plan = g.ExperimentPlan(scenario="product_graphon_sweep",
                            n_list=[125, 250, 500, 1000], replicas=10,
                            horizon=10.0,
                            solver=g.SolverConfig(dt=1e-2, cells_per_dim=64),
                            master_seed=7, workers=default_workers())
    report = g.run_convergence(plan)
    print(f"{'N':>6} {'median dist(S)':>15} {'IQR':>8}")
    for n in plan.n_list:
        med = report.median_at(n, plan.horizon, "S")
        iqr = [r[4] for r in report.summary
               if r[0] == n and r[2] == "S"][0]
        print(f"{n:6d} {med:15.4f} {iqr:8.4f}")
    print(f"fitted slope of log(median) vs log(N): {report.slopes['S']:.3f}")
    for row in report.graph_stats:
        print(f"  graph stats N={row[0]}: gamma_bar={row[1]:.3e} "
              f"upsilon={row[2]:.3e} kernel_gap={row[3]:.2e}")


if __name__ == "__main__":
    main()
