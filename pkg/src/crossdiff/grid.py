"""Uniform cell-centred grids on boxes with homogeneous Neumann stencils.

Fields are plain numpy arrays of shape ``grid.shape``.  Boundary closure is
by mirror ghost cells (ghost value equals the adjacent interior value), so
the discrete Laplacian is symmetric negative semidefinite with the
constants as kernel and is diagonalised by the type-II cosine transform.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.sparse as sp


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    n: tuple[int, ...]
    length: tuple[float, ...]

    def __init__(self, dim: int, n, length=1.0):
        n = (int(n),) * dim if np.ndim(n) == 0 else tuple(int(k) for k in n)
        length = (float(length),) * dim if np.ndim(length) == 0 else tuple(float(x) for x in length)
        if dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if len(n) != dim or len(length) != dim:
            raise ValueError("n and length must have one entry per axis")
        if any(k < 3 for k in n):
            raise ValueError("need at least 3 cells per axis")
        if any(not (L > 0) for L in length):
            raise ValueError("domain length must be positive")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / k for L, k in zip(self.length, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return math.prod(self.n)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    @property
    def volume(self) -> float:
        return math.prod(self.length)

    @property
    def hmax(self) -> float:
        return max(self.h)

    def axes(self) -> list[np.ndarray]:
        """Cell-centre coordinates along each axis."""
        return [(np.arange(k) + 0.5) * h for k, h in zip(self.n, self.h)]

    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def eigenvalue(self, modes) -> float:
        """Eigenvalue of ``-laplacian`` for the cosine mode with given wavenumbers."""
        modes = (modes,) * self.dim if np.ndim(modes) == 0 else tuple(modes)
        return sum(
            (2.0 / h**2) * (1.0 - math.cos(k * math.pi * h / L))
            for k, h, L in zip(modes, self.h, self.length)
        )

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        return f

    # operators ---------------------------------------------------------

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return laplacian_neumann(self, f)

    def integrate(self, f: np.ndarray) -> float:
        return integrate(self, f)

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse matrix of `laplacian_neumann` acting on C-order flattened fields."""
        mats = []
        for k, h in zip(self.n, self.h):
            main = np.full(k, -2.0)
            main[0] = main[-1] = -1.0
            off = np.ones(k - 1)
            mats.append(sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2)
        if self.dim == 1:
            return mats[0].tocsr()
        ix = sp.identity(self.n[0], format="csr")
        iy = sp.identity(self.n[1], format="csr")
        return (sp.kron(mats[0], iy) + sp.kron(ix, mats[1])).tocsr()


def _shift_pair(f: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Left and right neighbour arrays along ``axis`` with mirror ghosts."""
    lo = np.concatenate([np.take(f, [0], axis=axis), np.take(f, np.arange(f.shape[axis] - 1), axis=axis)], axis=axis)
    hi = np.concatenate([np.take(f, np.arange(1, f.shape[axis]), axis=axis), np.take(f, [-1], axis=axis)], axis=axis)
    return lo, hi


def laplacian_neumann(grid: Grid, f) -> np.ndarray:
    """3-point (1D) / 5-point (2D) Laplacian with mirror ghost cells.

    Neighbour pairs are summed before subtracting the centre so that the
    result commutes bit-for-bit with reflections of the grid.
    """
    f = grid.check(f)
    out = np.zeros_like(f)
    for axis, h in enumerate(grid.h):
        lo, hi = _shift_pair(f, axis)
        out += ((lo + hi) - 2.0 * f) / h**2
    return out


def face_differences(grid: Grid, f) -> list[np.ndarray]:
    """Interior face differences ``f[i+1] - f[i]`` along each axis.

    Boundary faces carry zero flux and are omitted.
    """
    f = grid.check(f)
    return [np.diff(f, axis=axis) for axis in range(grid.dim)]


def face_average(grid: Grid, f) -> list[np.ndarray]:
    f = grid.check(f)
    out = []
    for axis in range(grid.dim):
        n = f.shape[axis]
        out.append(0.5 * (np.take(f, np.arange(n - 1), axis=axis) + np.take(f, np.arange(1, n), axis=axis)))
    return out


def fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def integrate(grid: Grid, f) -> float:
    """Midpoint rule, ``sum(f) * cell volume``, with compensated summation."""
    f = grid.check(f)
    return fsum(f) * grid.cell_volume


def face_bilinear(grid: Grid, f, g, weight=None) -> float:
    """Discrete ``int w grad f . grad g`` from interior face differences.

    ``weight`` is an optional list of face arrays (one per axis).
    """
    df = face_differences(grid, f)
    dg = face_differences(grid, g)
    total = 0.0
    for axis, h in enumerate(grid.h):
        prod = df[axis] * dg[axis]
        if weight is not None:
            prod = prod * weight[axis]
        total += fsum(prod) / h**2
    return total * grid.cell_volume


def grad_sq_integral(grid: Grid, f) -> float:
    """Discrete ``int |grad f|^2``; Neumann boundary faces contribute zero."""
    return face_bilinear(grid, f, f)


def _dct_eigenvalues(grid: Grid) -> np.ndarray:
    lam = np.zeros(grid.shape)
    for axis, (k, h) in enumerate(zip(grid.n, grid.h)):
        mu = (2.0 / h**2) * (1.0 - np.cos(np.pi * np.arange(k) / k))
        shape = [1] * grid.dim
        shape[axis] = k
        lam = lam + mu.reshape(shape)
    return lam


def poisson_neumann_solve(grid: Grid, f) -> np.ndarray:
    """Zero-mean solution of ``-laplacian(phi) = f - mean(f)``.

    The mirror-ghost Laplacian is diagonal in the orthonormal DCT-II basis,
    so the solve is a forward transform, a division and an inverse
    transform; the constant mode is dropped.
    """
    f = grid.check(f)
    if not np.all(np.isfinite(f)):
        raise SolverFailure("non-finite right-hand side")
    fhat = scipy.fft.dctn(f, type=2, norm="ortho")
    lam = _dct_eigenvalues(grid)
    fhat.flat[0] = 0.0
    lam.flat[0] = 1.0
    phi = scipy.fft.idctn(fhat / lam, type=2, norm="ortho")
    phi -= fsum(phi) / phi.size
    return phi


def h_minus1_norm(grid: Grid, f) -> float:
    """Dual norm of the zero-mean part of ``f``: ``|grad phi|`` with ``-lap phi = f - <f>``."""
    phi = poisson_neumann_solve(grid, f)
    return math.sqrt(max(grad_sq_integral(grid, phi), 0.0))


def cell_gradient(grid: Grid, f) -> list[np.ndarray]:
    """Centred cell gradient with mirror ghosts (one-sided halves at walls)."""
    f = grid.check(f)
    out = []
    for axis, h in enumerate(grid.h):
        lo, hi = _shift_pair(f, axis)
        out.append((hi - lo) / (2.0 * h))
    return out


def hessian(grid: Grid, f) -> list[list[np.ndarray]]:
    """Componentwise second differences with mirror ghosts."""
    f = grid.check(f)
    out = [[None] * grid.dim for _ in range(grid.dim)]
    for axis, h in enumerate(grid.h):
        lo, hi = _shift_pair(f, axis)
        out[axis][axis] = ((lo + hi) - 2.0 * f) / h**2
    if grid.dim == 2:
        gx = cell_gradient(grid, f)[0]
        gxy = cell_gradient(grid, gx)[1]
        out[0][1] = out[1][0] = gxy
    return out


# field snapshots -----------------------------------------------------------


@dataclass
class Field:
    """A grid function with its grid; used for snapshot I/O."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = self.grid.check(self.values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))


def write_field_csv(path: str | Path, grid: Grid, values) -> None:
    values = grid.check(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if grid.dim == 1:
            writer.writerow(["index", "x", "value"])
            (x,) = grid.axes()
            for i in range(grid.n[0]):
                writer.writerow([i, repr(float(x[i])), repr(float(values[i]))])
        else:
            writer.writerow(["index", "j", "x", "y", "value"])
            x, y = grid.axes()
            for i in range(grid.n[0]):
                for j in range(grid.n[1]):
                    writer.writerow([i, j, repr(float(x[i])), repr(float(y[j])), repr(float(values[i, j]))])


def read_field_csv(path: str | Path, grid: Grid | None = None) -> Field:
    """Read a Field CSV.  Without ``grid``, the grid is inferred from the coordinates."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header == ["index", "x", "value"]:
        idx = np.array([int(r[0]) for r in body])
        xs = np.array([float(r[1]) for r in body])
        vals = np.array([float(r[2]) for r in body])
        n = len(body)
        if grid is None:
            grid = Grid(1, n, float(np.round(2 * xs[idx == 0][0] * n, 12)))
        out = np.empty(grid.shape)
        out[idx] = vals
    elif header == ["index", "j", "x", "y", "value"]:
        ii = np.array([int(r[0]) for r in body])
        jj = np.array([int(r[1]) for r in body])
        xs = np.array([float(r[2]) for r in body])
        ys = np.array([float(r[3]) for r in body])
        vals = np.array([float(r[4]) for r in body])
        if grid is None:
            nx, ny = int(ii.max()) + 1, int(jj.max()) + 1
            Lx = float(np.round(2 * xs[ii == 0][0] * nx, 12))
            Ly = float(np.round(2 * ys[jj == 0][0] * ny, 12))
            grid = Grid(2, (nx, ny), (Lx, Ly))
        out = np.empty(grid.shape)
        out[ii, jj] = vals
    else:
        raise ValueError(f"unrecognised field CSV header: {header}")
    return Field(grid, out)
