"""Finite partitions of the type space used by the limit solver and the
measure utilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import Scenario, TypeSpace


@dataclass
class TypeGrid:
    space: TypeSpace
    reps: np.ndarray        # (M, dim) representative points
    weights: np.ndarray     # (M,) mu_X cell masses
    cells_per_dim: int      # box refinement (1 if no box part)

    @property
    def n_cells(self) -> int:
        return len(self.reps)

    def cell_index(self, points) -> np.ndarray:
        """Cell of each point; raises if a point escapes every cell."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        sp = self.space
        if not sp.contains(pts).all():
            bad = pts[~sp.contains(pts)][0]
            raise ConfigError(f"point outside the type space: {bad}")
        c = self.cells_per_dim
        idx = np.zeros(len(pts), dtype=np.int64)
        for d in range(sp.box_dim):
            k = np.clip(np.floor(pts[:, d] * c).astype(np.int64), 0, c - 1)
            idx = idx * c + k
        if sp.n_labels:
            vals = np.asarray(sp.label_values)
            lab = np.searchsorted(vals, pts[:, sp.box_dim])
            lab = np.clip(lab, 0, sp.n_labels - 1)
            idx = idx * sp.n_labels + lab
        return idx

    def refined_points(self, per_dim=3):
        """Sub-sample each box cell with a per-dimension Gauss grid; returns
        (points, fraction-of-cell weights) grouped cell-major, for low-bias
        functional evaluation of piecewise-constant cell measures."""
        sp = self.space
        if sp.box_dim == 0 or per_dim <= 1:
            return self.reps.copy(), np.ones(self.n_cells)
        t, w = np.polynomial.legendre.leggauss(per_dim)
        t = (t + 1.0) / 2.0            # nodes in (0,1)
        w = w / 2.0
        c = self.cells_per_dim
        pts_list, frac_list = [], []
        for m in range(self.n_cells):
            base = self.reps[m]
            axes = [np.floor(base[d] * c) / c + t / c for d in range(sp.box_dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            sub = np.stack([mm.ravel() for mm in mesh], axis=1)
            fr = np.ones(len(sub))
            for gw in np.meshgrid(*[w] * sp.box_dim, indexing="ij"):
                fr *= gw.ravel()
            if sp.n_labels:
                sub = np.hstack([sub, np.full((len(sub), 1), base[sp.box_dim])])
            pts_list.append(sub)
            frac_list.append(fr)
        return np.vstack(pts_list), np.concatenate(frac_list)


def build_grid(scenario: Scenario, cells_per_dim=32) -> TypeGrid:
    """Partition the scenario's type space; weights follow its mu_X."""
    sp = scenario.space
    if cells_per_dim < 1:
        raise ConfigError("cells_per_dim must be >= 1")
    c = cells_per_dim if sp.box_dim else 1
    axes = [(np.arange(c) + 0.5) / c for _ in range(sp.box_dim)]
    if sp.box_dim:
        mesh = np.meshgrid(*axes, indexing="ij")
        box_reps = np.stack([m.ravel() for m in mesh], axis=1)
    else:
        box_reps = np.zeros((1, 0))
    if sp.n_labels:
        vals = np.asarray(sp.label_values, dtype=float)
        probs = np.asarray(scenario.label_probs or
                           [1.0 / sp.n_labels] * sp.n_labels, dtype=float)
        reps = np.hstack([np.repeat(box_reps, sp.n_labels, axis=0),
                          np.tile(vals, len(box_reps))[:, None]])
        w = np.tile(probs, len(box_reps)) / max(len(box_reps), 1)
    else:
        reps = box_reps
        w = np.full(len(box_reps), 1.0 / len(box_reps))
    grid = TypeGrid(space=sp, reps=np.ascontiguousarray(reps),
                    weights=w, cells_per_dim=c)
    if scenario.sampler == "custom" and scenario.custom_density is not None:
        pts, frac = grid.refined_points(4)
        dens = np.asarray(scenario.custom_density(pts[:, :sp.box_dim]), dtype=float)
        per_cell = (dens * frac).reshape(grid.n_cells, -1).sum(axis=1)
        total = per_cell.sum()
        if total <= 0:
            raise ConfigError("custom density integrates to zero on the box")
        grid.weights = per_cell / total
    return grid
