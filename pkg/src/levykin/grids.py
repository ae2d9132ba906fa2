"""Rectangular phase-space grids for d = 1 histograms and operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PhaseGrid"]


@dataclass(frozen=True)
class PhaseGrid:
    """Cell partition of a rectangle [x0, x1] x [v0, v1], d = 1 only.

    Cells are indexed row-major: flat = ix * n_v + iv. Points outside the
    rectangle map to -1.
    """

    x_edges: np.ndarray
    v_edges: np.ndarray

    @classmethod
    def regular(cls, x_lo, x_hi, v_lo, v_hi, n_x, n_v) -> "PhaseGrid":
        return cls(
            x_edges=np.linspace(x_lo, x_hi, n_x + 1),
            v_edges=np.linspace(v_lo, v_hi, n_v + 1),
        )

    @property
    def n_x(self) -> int:
        return len(self.x_edges) - 1

    @property
    def n_v(self) -> int:
        return len(self.v_edges) - 1

    @property
    def n_cells(self) -> int:
        return self.n_x * self.n_v

    @property
    def cell_volume(self) -> np.ndarray:
        dx = np.diff(self.x_edges)
        dv = np.diff(self.v_edges)
        return np.outer(dx, dv).ravel()

    def centers(self) -> np.ndarray:
        cx = 0.5 * (self.x_edges[:-1] + self.x_edges[1:])
        cv = 0.5 * (self.v_edges[:-1] + self.v_edges[1:])
        gx, gv = np.meshgrid(cx, cv, indexing="ij")
        return np.stack([gx.ravel(), gv.ravel()], axis=1)

    def cell_bounds(self, flat: int) -> tuple:
        ix, iv = divmod(flat, self.n_v)
        return (
            (self.x_edges[ix], self.x_edges[ix + 1]),
            (self.v_edges[iv], self.v_edges[iv + 1]),
        )

    def flat_index(self, x, v) -> np.ndarray:
        """Flat cell index per point; -1 for points outside the rectangle."""
        x = np.asarray(x, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        ix = np.searchsorted(self.x_edges, x, side="right") - 1
        iv = np.searchsorted(self.v_edges, v, side="right") - 1
        # top-edge points belong to the last cell
        ix = np.where((x == self.x_edges[-1]) & (ix == self.n_x), self.n_x - 1, ix)
        iv = np.where((v == self.v_edges[-1]) & (iv == self.n_v), self.n_v - 1, iv)
        ok = (ix >= 0) & (ix < self.n_x) & (iv >= 0) & (iv < self.n_v)
        return np.where(ok, ix * self.n_v + iv, -1)

    def histogram(self, x, v) -> tuple:
        """(masses over cells summing to inside fraction, outside fraction)."""
        idx = self.flat_index(x, v)
        n = len(idx)
        inside = idx >= 0
        counts = np.bincount(idx[inside], minlength=self.n_cells).astype(float)
        return counts / max(n, 1), float(np.count_nonzero(~inside)) / max(n, 1)

    def uniform_points(self, flat: int, count: int, gen) -> tuple:
        (x0, x1), (v0, v1) = self.cell_bounds(flat)
        return (
            gen.uniform(x0, x1, size=(count, 1)),
            gen.uniform(v0, v1, size=(count, 1)),
        )
