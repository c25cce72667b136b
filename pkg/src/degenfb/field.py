"""Uniform Cartesian grids, nonnegative scalar fields, and quadrature.

Everything downstream (energies, Weiss densities, rescalings, audits) is an
integral or average over balls and circles, so the quadrature rules here are
the workhorses:

* ball integrals use cell counting with partial cells weighted by a 4x4
  subsample of the circle-cell overlap,
* circle integrals sample the bilinear interpolant at an angular resolution
  tied to the grid spacing,
* the Dirichlet integrand |grad u|^2 is accumulated from half-edge
  differences, which keeps it consistent with the solver's discrete energy.

Fields are immutable during analysis; only the solver mutates values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BoundaryNodeError(ValueError):
    """A stencil was requested at a node without interior neighbors."""


class QuadratureDomainError(ValueError):
    """A ball or circle reaches outside the grid."""


@dataclass(frozen=True)
class Grid:
    origin: tuple
    h: float
    shape: tuple

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("spacing must be positive")
        if self.shape[0] < 2 or self.shape[1] < 2:
            raise ValueError("need at least 2 nodes per direction")

    @classmethod
    def centered(cls, extent, n):
        """Square grid with n x n nodes on [-extent, extent]^2."""
        h = 2.0 * extent / (n - 1)
        return cls(origin=(-extent, -extent), h=h, shape=(n, n))

    @property
    def xs(self):
        return self.origin[0] + self.h * np.arange(self.shape[0])

    @property
    def ys(self):
        return self.origin[1] + self.h * np.arange(self.shape[1])

    def nodes(self):
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @property
    def xmax(self):
        return self.origin[0] + self.h * (self.shape[0] - 1)

    @property
    def ymax(self):
        return self.origin[1] + self.h * (self.shape[1] - 1)

    def contains_ball(self, center, r, margin=0.0):
        cx, cy = center
        m = r + margin
        return (cx - m >= self.origin[0] and cx + m <= self.xmax
                and cy - m >= self.origin[1] and cy + m <= self.ymax)

    def index_of(self, point):
        """Nearest node index of a point."""
        i = int(round((point[0] - self.origin[0]) / self.h))
        j = int(round((point[1] - self.origin[1]) / self.h))
        return i, j

    def node_position(self, i, j):
        return np.array([self.origin[0] + i * self.h, self.origin[1] + j * self.h])


class ScalarField:
    """Grid-sampled nonnegative field with a Dirichlet-node mask."""

    def __init__(self, grid, values, dirichlet=None):
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(grid.shape):
            raise ValueError("value array does not match grid shape")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if values.min() < 0:
            raise ValueError("field values must be nonnegative")
        if dirichlet is None:
            dirichlet = border_mask(grid)
        self.grid = grid
        self.values = values
        self.dirichlet = np.asarray(dirichlet, dtype=bool)

    def copy(self):
        return ScalarField(self.grid, self.values.copy(), self.dirichlet.copy())

    @property
    def h(self):
        return self.grid.h

    def max(self):
        return float(self.values.max())


def border_mask(grid):
    m = np.zeros(grid.shape, dtype=bool)
    m[0, :] = m[-1, :] = True
    m[:, 0] = m[:, -1] = True
    return m


def disk_dirichlet_mask(grid, radius):
    """Dirichlet nodes for a disk domain: the box border plus everything
    at distance >= radius from the grid center of symmetry (the origin)."""
    X, Y = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    m = border_mask(grid)
    m |= X**2 + Y**2 >= radius**2
    return m


# ---------------------------------------------------------------------------
# interpolation and differential operators
# ---------------------------------------------------------------------------

def interpolate(field, pts):
    """Bilinear interpolation at points (..., 2); coordinates are clamped
    to the grid hull."""
    g = field.grid
    pts = np.asarray(pts, dtype=float)
    fx = np.clip((pts[..., 0] - g.origin[0]) / g.h, 0.0, g.shape[0] - 1.0)
    fy = np.clip((pts[..., 1] - g.origin[1]) / g.h, 0.0, g.shape[1] - 1.0)
    i0 = np.minimum(fx.astype(int), g.shape[0] - 2)
    j0 = np.minimum(fy.astype(int), g.shape[1] - 2)
    sx = fx - i0
    sy = fy - j0
    v = field.values
    return ((1 - sx) * (1 - sy) * v[i0, j0] + sx * (1 - sy) * v[i0 + 1, j0]
            + (1 - sx) * sy * v[i0, j0 + 1] + sx * sy * v[i0 + 1, j0 + 1])


def gradient(field, node):
    """Central-difference gradient at an interior node."""
    i, j = node
    v = field.values
    nx, ny = field.grid.shape
    if not (0 < i < nx - 1 and 0 < j < ny - 1):
        raise BoundaryNodeError("gradient needs an interior node")
    h = field.h
    return np.array([(v[i + 1, j] - v[i - 1, j]) / (2 * h),
                     (v[i, j + 1] - v[i, j - 1]) / (2 * h)])


def laplacian(field, node):
    """Five-point Laplacian at an interior node."""
    i, j = node
    v = field.values
    nx, ny = field.grid.shape
    if not (0 < i < nx - 1 and 0 < j < ny - 1):
        raise BoundaryNodeError("laplacian needs an interior node")
    h = field.h
    return (v[i + 1, j] + v[i - 1, j] + v[i, j + 1] + v[i, j - 1] - 4 * v[i, j]) / h**2


def gradient_fields(field):
    """Componentwise np.gradient arrays (central in the interior)."""
    gx, gy = np.gradient(field.values, field.h, edge_order=1)
    return gx, gy


def laplacian_field(field):
    """Five-point Laplacian on the interior; edges are NaN."""
    v = field.values
    h2 = field.h**2
    lap = np.full_like(v, np.nan)
    lap[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]
                       - 4 * v[1:-1, 1:-1]) / h2
    return lap


def grad_sq_field(field):
    """|grad u|^2 accumulated from half-edge differences.

    Along each direction the two adjacent edge slopes are averaged in the
    square, matching the edge-based discrete Dirichlet energy.  Boundary
    nodes use their single available edge.
    """
    v = field.values
    h2 = field.h**2
    dx2 = np.diff(v, axis=0) ** 2 / h2
    dy2 = np.diff(v, axis=1) ** 2 / h2
    gx2 = np.empty_like(v)
    gx2[1:-1, :] = 0.5 * (dx2[:-1, :] + dx2[1:, :])
    gx2[0, :] = dx2[0, :]
    gx2[-1, :] = dx2[-1, :]
    gy2 = np.empty_like(v)
    gy2[:, 1:-1] = 0.5 * (dy2[:, :-1] + dy2[:, 1:])
    gy2[:, 0] = dy2[:, 0]
    gy2[:, -1] = dy2[:, -1]
    return gx2 + gy2


# ---------------------------------------------------------------------------
# ball and circle quadrature
# ---------------------------------------------------------------------------

_SUB = 4
_subgrid = (np.arange(_SUB) + 0.5) / _SUB - 0.5


def ball_window(grid, center, r):
    """Index window and per-node cell-overlap fractions for B_r(center).

    Interior cells get weight 1, exterior 0, and cells cut by the circle the
    fraction of a 4x4 subsample that lands inside.
    """
    cx, cy = float(center[0]), float(center[1])
    h = grid.h
    i0 = max(0, int(np.floor((cx - r - h - grid.origin[0]) / h)))
    i1 = min(grid.shape[0] - 1, int(np.ceil((cx + r + h - grid.origin[0]) / h)))
    j0 = max(0, int(np.floor((cy - r - h - grid.origin[1]) / h)))
    j1 = min(grid.shape[1] - 1, int(np.ceil((cy + r + h - grid.origin[1]) / h)))
    xs = grid.origin[0] + h * np.arange(i0, i1 + 1)
    ys = grid.origin[1] + h * np.arange(j0, j1 + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    d = np.hypot(X - cx, Y - cy)
    half_diag = h * np.sqrt(0.5)
    frac = np.zeros(X.shape)
    frac[d <= r - half_diag] = 1.0
    cut = (d > r - half_diag) & (d < r + half_diag)
    if np.any(cut):
        sx = X[cut][:, None] + (h * _subgrid)[None, :]
        sy = Y[cut][:, None] + (h * _subgrid)[None, :]
        # all sub-cell combinations: (m, SUB, SUB)
        dx2 = (sx - cx)[:, :, None] ** 2
        dy2 = (sy - cy)[:, None, :] ** 2
        frac[cut] = np.mean(dx2 + dy2 <= r * r, axis=(1, 2))
    return (slice(i0, i1 + 1), slice(j0, j1 + 1)), frac


def integrate_ball(field, center, r, integrand=None):
    """Integral of the field (or a node-sampled integrand array) over B_r."""
    grid = field.grid
    if not grid.contains_ball(center, r):
        raise QuadratureDomainError("ball reaches outside the grid")
    window, frac = ball_window(grid, center, r)
    vals = field.values if integrand is None else integrand
    return float(np.sum(frac * vals[window]) * grid.h**2)


def mean_ball(field, center, r, integrand=None):
    return integrate_ball(field, center, r, integrand) / (np.pi * r * r)


def sphere_sample_count(h, r):
    return int(max(64, np.ceil(8.0 * np.pi * r / h)))


def sphere_points(center, r, n):
    theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    return np.stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)], axis=-1)


def integrate_sphere(field, center, r, transform=None):
    """Circle integral of the bilinear interpolant over the circle of radius r.

    ``transform`` is applied to the sampled values before summation (e.g.
    np.square for boundary terms of densities).
    """
    grid = field.grid
    if not grid.contains_ball(center, r, margin=grid.h):
        raise QuadratureDomainError("circle (plus interpolation support) exceeds grid")
    n = sphere_sample_count(grid.h, r)
    vals = interpolate(field, sphere_points(center, r, n))
    if transform is not None:
        vals = transform(vals)
    return float(np.sum(vals) * (2.0 * np.pi * r / n))


def mean_sphere(field, center, r, transform=None):
    return integrate_sphere(field, center, r, transform) / (2.0 * np.pi * r)


def positivity_volume(field, center, r, threshold=0.0):
    """Area of {u > threshold} inside B_r by weighted cell counting.

    The ball is clipped to the grid box if it reaches outside.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    window, frac = ball_window(field.grid, center, r)
    pos = field.values[window] > threshold
    return float(np.sum(frac * pos) * field.grid.h**2)


# ---------------------------------------------------------------------------
# dump format: first line nx,ny,h,ox,oy then one row per x-index
# ---------------------------------------------------------------------------

def dump_field(field, path):
    g = field.grid
    with open(path, "w") as fh:
        fh.write(f"{g.shape[0]},{g.shape[1]},{float(g.h)!r},"
                 f"{float(g.origin[0])!r},{float(g.origin[1])!r}\n")
        for i in range(g.shape[0]):
            fh.write(",".join(repr(float(v)) for v in field.values[i]) + "\n")


def load_field(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        nx, ny = int(header[0]), int(header[1])
        h, ox, oy = float(header[2]), float(header[3]), float(header[4])
        values = np.empty((nx, ny))
        for i in range(nx):
            row = fh.readline().strip().split(",")
            if len(row) != ny:
                raise ValueError(f"row {i} has {len(row)} values, expected {ny}")
            values[i] = [float(tok) for tok in row]
    return ScalarField(Grid(origin=(ox, oy), h=h, shape=(nx, ny)), values)
