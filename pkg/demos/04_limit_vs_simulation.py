"""Empirical measures against the limiting solution at a single N.

Runs one N=4000 trajectory, then prints the S/I/R masses and the dictionary
distance to the limit at a few snapshot times.  If matplotlib is available,
saves an overlay plot to demos/out/.
"""

import os

import numpy as np

import graphon_epi as g


def main():
    n, horizon, seed = 4000, 10.0, 3
    sc = g.make_scenario("product_graphon")
    grid = g.build_grid(sc, 64)
    sol = g.solve_timestep(sc, grid, g.SolverConfig(dt=5e-3, cells_per_dim=64),
                           horizon)
    s_bar, i_bar, r_bar = sol.totals()
    d = g.build_dictionary(sc.space, size=32)
    pop = g.draw_population(sc, n, seed)
    graph = g.sample_graph(pop.xs, sc.kernels, n, seed)
    res = g.run(graph, sc, pop, horizon, master_seed=seed)
    print(f"{'t':>5} {'S_N':>7} {'S_lim':>7} {'dist(S)':>8} {'dist(I)':>8}")
    for t in np.linspace(0, horizon, 6):
        k = sol.time_index(round(t / sol.dt) * sol.dt)
        emp_s = res.trajectory.measure_at(t, "S")
        emp_i = res.trajectory.measure_at(t, "I")
        ds = g.pair_test(emp_s, sol.s_measure(t), d).distance
        di = g.pair_test(emp_i, sol.i_measure(t), d).distance
        print(f"{t:5.1f} {emp_s.total_mass:7.4f} {s_bar[k]:7.4f} "
              f"{ds:8.4f} {di:8.4f}")
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipping the plot")
        return
    ts = np.linspace(0, horizon, 41)
    counts = np.array([res.trajectory.counts_at(t) for t in ts]) / n
    fig, ax = plt.subplots(figsize=(7, 4))
    for j, (label, series) in enumerate((("S", s_bar), ("I", i_bar), ("R", r_bar))):
        ax.plot(sol.times, series, label=f"{label} limit")
        ax.plot(ts, counts[:, j], "o", ms=3, label=f"{label} empirical")
    ax.set_xlabel("t")
    ax.set_ylabel("scaled mass")
    ax.legend(ncol=3)
    os.makedirs(os.path.join(os.path.dirname(__file__), "out"), exist_ok=True)
    path = os.path.join(os.path.dirname(__file__), "out", "limit_vs_sim.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    print(f"overlay plot saved to {path}")


if __name__ == "__main__":
    main()
