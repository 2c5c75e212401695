"""The shared-noise coupling between the graph epidemic and its mean field.

Each initially susceptible individual carries one Poisson mark stream; the
network indicator accepts marks below the realized force, the mean-field
indicator accepts marks below the limit force.  The fraction of individuals
whose two indicators ever disagree is the pathwise discrepancy D_N(t), and
it shrinks as N grows.
"""

import numpy as np

import graphon_epi as g


def main():
    sc = g.make_scenario("product_graphon_sweep")
    grid = g.build_grid(sc, 64)
    horizon = 10.0
    sol = g.solve_timestep(sc, grid, g.SolverConfig(dt=5e-3, cells_per_dim=64),
                           horizon)
    ff = sol.force_field()
    grid_times = np.linspace(0, horizon, 6)
    print(f"{'N':>6} " + " ".join(f"{'D(' + format(t, '.0f') + ')':>8}"
                                  for t in grid_times))
    for n in (500, 1000, 2000, 4000):
        vals = []
        for rep in range(5):
            seed = g.replica_seed(123, n, rep)
            pop = g.draw_population(sc, n, seed)
            graph = g.sample_graph(pop.xs, sc.kernels, n, seed)
            res = g.run_coupled(graph, sc, pop, ff, horizon,
                                snapshot_grid=grid_times, master_seed=seed)
            vals.append(res.report.dbar)
        med = np.median(np.asarray(vals), axis=0)
        print(f"{n:6d} " + " ".join(f"{v:8.4f}" for v in med))


if __name__ == "__main__":
    main()
