"""Render static images from a convergence report directory.

Usage: python demos/plot_report.py <report_dir>

Reads the plain CSVs written by `graphon-epi converge --out <dir>` (or
graphon_epi.write_report) and saves log-log distance curves plus, when
present, the coupling discrepancy curves, next to them.
"""

import os
import sys

import numpy as np

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required for plotting")


def main(report_dir):
    summary = np.genfromtxt(os.path.join(report_dir, "summary.csv"),
                            delimiter=",", names=True, dtype=None,
                            encoding="utf8")
    t_final = summary["t"].max()
    fig, ax = plt.subplots(figsize=(6, 4))
    for comp in ("S", "I", "R"):
        rows = summary[(summary["compartment"] == comp)
                       & (np.abs(summary["t"] - t_final) < 1e-9)]
        ax.loglog(rows["N"], rows["median"], "o-", label=comp)
    ax.set_xlabel("N")
    ax.set_ylabel(f"median dictionary distance at t={t_final:g}")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    out = os.path.join(report_dir, "distance_vs_n.png")
    fig.savefig(out, dpi=120, bbox_inches="tight")
    print(f"wrote {out}")

    dbar_path = os.path.join(report_dir, "dbar.csv")
    if os.path.exists(dbar_path):
        dbar = np.genfromtxt(dbar_path, delimiter=",", names=True)
        fig, ax = plt.subplots(figsize=(6, 4))
        for n in np.unique(dbar["N"]):
            rows = dbar[dbar["N"] == n]
            ts = np.unique(rows["t"])
            med = [np.median(rows["dbar"][rows["t"] == t]) for t in ts]
            ax.plot(ts, med, "o-", label=f"N={int(n)}")
        ax.set_xlabel("t")
        ax.set_ylabel("median coupling discrepancy")
        ax.legend()
        ax.grid(True, alpha=0.3)
        out = os.path.join(report_dir, "dbar_vs_t.png")
        fig.savefig(out, dpi=120, bbox_inches="tight")
        print(f"wrote {out}")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    main(sys.argv[1])
