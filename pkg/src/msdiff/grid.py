"""Uniform periodic grids and the discrete calculus used by the solver.

Cell-centered fields on a 1-3 dimensional torus: central-difference
gradients, conservative (face-averaged) divergence, midpoint quadrature,
and snapshot IO. All reductions use numpy's pairwise summation, so
results are reproducible across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class GridMismatch(ValueError):
    """Fields that should share a grid or species layout do not."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform cell-centered grid on a periodic box.

    cells    -- number of cells per axis (1 to 3 axes)
    lengths  -- box edge lengths, defaults to a unit torus
    """

    cells: tuple
    lengths: tuple = None

    def __post_init__(self):
        cells = tuple(int(m) for m in np.atleast_1d(self.cells))
        if not 1 <= len(cells) <= 3:
            raise ValueError(f"grid must have 1 to 3 axes, got {len(cells)}")
        if any(m < 1 for m in cells):
            raise ValueError(f"cell counts must be positive, got {cells}")
        lengths = self.lengths
        if lengths is None:
            lengths = (1.0,) * len(cells)
        lengths = tuple(float(L) for L in np.atleast_1d(lengths))
        if len(lengths) != len(cells):
            raise ValueError("lengths must match the number of axes")
        if any(L <= 0 for L in lengths):
            raise ValueError(f"box lengths must be positive, got {lengths}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self):
        return len(self.cells)

    @property
    def spacing(self):
        return tuple(L / m for L, m in zip(self.lengths, self.cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def measure(self):
        return float(np.prod(self.lengths))

    def axes(self):
        """Cell-center coordinates along each axis."""
        return tuple(
            (np.arange(m) + 0.5) * h for m, h in zip(self.cells, self.spacing)
        )

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def refine(self, factor=2):
        return PeriodicGrid(tuple(m * factor for m in self.cells), self.lengths)

    def check_field(self, f):
        if tuple(np.shape(f))[-self.dim:] != self.cells:
            raise GridMismatch(
                f"field shape {np.shape(f)} does not end with grid cells {self.cells}"
            )


def gradient(f, grid):
    """Central-difference gradient of a cell field.

    Leading axes of ``f`` are treated as a batch; the result has an extra
    axis of length ``grid.dim`` inserted before the cell axes.
    """
    f = np.asarray(f, dtype=float)
    grid.check_field(f)
    comps = []
    for k, h in enumerate(grid.spacing):
        ax = f.ndim - grid.dim + k
        comps.append((np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * h))
    return np.stack(comps, axis=f.ndim - grid.dim)


def divergence(F, grid):
    """Divergence of a cell vector field, in conservative form.

    Face values are arithmetic means of the two adjacent cells and the
    divergence is the net face flux per cell, so the cell sum telescopes
    to zero identically. ``F`` has a component axis of length ``grid.dim``
    before the cell axes; leading axes are a batch.
    """
    F = np.asarray(F, dtype=float)
    grid.check_field(F)
    comp_ax = F.ndim - grid.dim - 1
    if F.shape[comp_ax] != grid.dim:
        raise GridMismatch(
            f"vector field needs {grid.dim} components, got shape {F.shape}"
        )
    out = 0.0
    for k, h in enumerate(grid.spacing):
        Fk = np.take(F, k, axis=comp_ax)
        ax = Fk.ndim - grid.dim + k
        face = 0.5 * (Fk + np.roll(Fk, -1, axis=ax))
        out = out + (face - np.roll(face, 1, axis=ax)) / h
    return out


def integrate(f, grid):
    """Midpoint quadrature over the torus; batch axes are preserved."""
    f = np.asarray(f, dtype=float)
    grid.check_field(f)
    axes = tuple(range(f.ndim - grid.dim, f.ndim))
    val = f.sum(axis=axes) * grid.cell_volume
    return float(val) if np.ndim(val) == 0 else val


def l2_norm(f, grid):
    """L2 norm over the torus; batch axes are folded into the norm."""
    return float(np.sqrt(np.sum(integrate(np.asarray(f, dtype=float) ** 2, grid))))


@dataclass
class ConcentrationState:
    """Molar concentrations of n species on a grid at one instant.

    ``c`` has shape (n, *grid.cells); concentrations sum to one in every
    cell and each lies in [0, 1], up to the validation tolerance.
    """

    grid: PeriodicGrid
    c: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.ndim != 1 + self.grid.dim:
            raise GridMismatch(
                f"concentration array must have shape (n, *cells), got {self.c.shape}"
            )
        self.grid.check_field(self.c)

    @property
    def n(self):
        return self.c.shape[0]

    def validate(self, tol=1e-12):
        if self.n < 2:
            raise ValueError("need at least two species")
        simplex = np.abs(self.c.sum(axis=0) - 1.0)
        if simplex.max() > tol:
            raise ValueError(
                f"concentrations do not sum to 1 (max defect {simplex.max():.3e})"
            )
        if self.c.min() < -tol or self.c.max() > 1.0 + tol:
            raise ValueError(
                f"concentrations outside [0, 1]: min {self.c.min():.3e}, "
                f"max {self.c.max():.3e}"
            )
        return self

    def species_mass(self):
        return integrate(self.c, self.grid)

    def copy(self):
        return ConcentrationState(self.grid, self.c.copy(), self.time)


@dataclass
class FluxField:
    """Per-species molar fluxes on a grid; shape (n, dim, *cells).

    The species sum vanishes pointwise for fluxes produced by the solver.
    """

    grid: PeriodicGrid
    j: np.ndarray

    def __post_init__(self):
        self.j = np.asarray(self.j, dtype=float)
        if self.j.ndim != 2 + self.grid.dim or self.j.shape[1] != self.grid.dim:
            raise GridMismatch(
                f"flux array must have shape (n, dim, *cells), got {self.j.shape}"
            )
        self.grid.check_field(self.j)

    @property
    def n(self):
        return self.j.shape[0]

    def zero_sum_defect(self):
        return float(np.abs(self.j.sum(axis=0)).max())

    def velocities(self, state, floor=1e-14):
        """Species velocities u_i = J_i / c_i, guarded below by ``floor``."""
        c = np.maximum(state.c, floor)
        return self.j / c[:, None]


_MAGIC = np.int64(0x4D534446)  # file tag, "MSDF"


def save_snapshot(state, path):
    """Write a state to a little-endian binary snapshot.

    Layout: tag, dim, cells[dim], n (all int64), time (float64), then the
    concentration payload as float64 in C order, species-major.
    """
    with open(path, "wb") as fh:
        header = np.array(
            [_MAGIC, state.grid.dim, *state.grid.cells, state.n], dtype="<i8"
        )
        header.tofile(fh)
        np.array(state.grid.lengths, dtype="<f8").tofile(fh)
        np.array([state.time], dtype="<f8").tofile(fh)
        np.ascontiguousarray(state.c, dtype="<f8").tofile(fh)


def load_snapshot(path):
    with open(path, "rb") as fh:
        tag, dim = np.fromfile(fh, dtype="<i8", count=2)
        if tag != _MAGIC:
            raise ValueError(f"{path} is not a concentration snapshot")
        cells = tuple(np.fromfile(fh, dtype="<i8", count=int(dim)).astype(int))
        (n,) = np.fromfile(fh, dtype="<i8", count=1)
        lengths = tuple(np.fromfile(fh, dtype="<f8", count=int(dim)))
        (time,) = np.fromfile(fh, dtype="<f8", count=1)
        payload = np.fromfile(fh, dtype="<f8", count=int(n) * int(np.prod(cells)))
    grid = PeriodicGrid(cells, lengths)
    return ConcentrationState(grid, payload.reshape((int(n),) + cells), float(time))


def state_to_csv(state, path):
    """Write a 1-D state as CSV with columns x, c1..cn."""
    if state.grid.dim != 1:
        raise GridMismatch("CSV export is defined for 1-D states only")
    (x,) = state.grid.axes()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x"] + [f"c{i + 1}" for i in range(state.n)])
        for k in range(state.grid.cells[0]):
            writer.writerow([repr(float(x[k]))] + [repr(float(v)) for v in state.c[:, k]])


def state_from_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = len(header) - 1
    c = np.array([[float(v) for v in row[1:]] for row in body]).T
    x = np.array([float(row[0]) for row in body])
    # recover the box length from the uniform cell centers
    h = x[1] - x[0] if len(x) > 1 else 1.0
    grid = PeriodicGrid((len(x),), (h * len(x),))
    return ConcentrationState(grid, c.reshape(n, len(x)))
