"""Discrete minimization of J(u) = int |grad u|^2 + Q^2 chi_{u>0}.

The continuous problem has no canonical discretization, so the scheme here
is exact single-node descent on the edge-based discrete energy

    E(u) = sum_edges (du)^2 + sum_nodes h^2 Q_i^2 [u_i > 0].

At a node the one-node energy is a quadratic in u_i plus the penalty when
u_i > 0; the two candidate states are the neighbor average and zero, and the
update keeps the positive candidate exactly when 4 avg^2 > h^2 Q_i^2 (ties
zero out, so runs are deterministic).  Sweeps are monotone in E by
construction.

Plain sweeps stall at the usual Gauss-Seidel rate, so between sweeps the
solver re-solves the harmonic system exactly on the current positivity set
("harmonic replacement").  The replacement minimizes the Dirichlet part for
the frozen indicator, hence is itself monotone in E, and at a joint fixed
point every interior node with a positive neighborhood is harmonic to the
accuracy of the sparse solve.  Coarse-to-fine initialization keeps large
grids cheap; each level runs the same monotone iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blowup import sector_solution
from .field import (Grid, ScalarField, border_mask, disk_dirichlet_mask,
                    grad_sq_field)

LEXICOGRAPHIC = "lexicographic"
RED_BLACK = "red-black"


@dataclass
class EnergyBreakdown:
    dirichlet: float
    measure: float

    @property
    def total(self):
        return self.dirichlet + self.measure


@dataclass
class BoundaryRecipe:
    """Dirichlet data recipe.

    kinds: ``sector-trace`` (homogeneous wedge profile, optionally modulated
    by 1 + m cos(theta - theta_mid) to break exact homogeneity), ``constant``
    and ``custom`` (explicit node samples).

    ``one_sided`` pins u = 0 on the closed upper side of the weight manifold
    (the physical stagnation-point setting, where the fluid region cannot
    cross the zero-weight line).  Without it the positivity set is free to
    cross, and at finite spacing the discrete minimizer grows hairline
    positive tendrils hugging the manifold where the penalty h^2 Q^2 is
    negligible; the tendrils thin out with the mesh but pollute tip-scale
    diagnostics.
    """
    kind: str = "sector-trace"
    constant: float = 0.0
    orientation: float | None = None
    amplitude: float | None = None
    modulation: float = 0.0
    custom: np.ndarray | None = None
    one_sided: bool = False

    def __post_init__(self):
        if self.kind not in ("sector-trace", "constant", "custom"):
            raise ValueError(f"unknown boundary recipe {self.kind!r}")
        if abs(self.modulation) >= 1.0:
            raise ValueError("modulation must keep the data nonnegative (|m| < 1)")
        if self.kind == "constant" and self.constant < 0:
            raise ValueError("boundary data must be nonnegative")


@dataclass
class ScenarioConfig:
    gamma: float
    manifold: object
    boundary: BoundaryRecipe
    energy_budget: float | None = None   # recorded Dirichlet budget
    sup_bound: float | None = None       # recorded sup of the data
    locality_radius: float | None = None # recorded, not enforced
    standard_scale: float = 1.0
    domain_radius: float | None = None   # disk domain; None keeps the box

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass
class SolveConfig:
    tolerance: float = 1e-12
    max_sweeps: int = 20000
    ordering: str = RED_BLACK
    positivity_threshold: float = 0.0
    replacement: bool = True
    replace_interval: int = 6
    nested: bool = True
    coarsest: int = 65
    initialization: str = "auto"

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_sweeps < 1:
            raise ValueError("bad solver configuration")
        if self.ordering not in (LEXICOGRAPHIC, RED_BLACK):
            raise ValueError(f"unknown sweep ordering {self.ordering!r}")
        if self.initialization not in ("auto", "data", "harmonic"):
            raise ValueError(f"unknown initialization {self.initialization!r}")


@dataclass
class SolveResult:
    field: ScalarField
    converged: bool
    sweeps: int
    telemetry: list = dc_field(default_factory=list)   # (label, energy) pairs
    residual: float = np.nan

    @property
    def energies(self):
        return np.array([e for _, e in self.telemetry])


def boundary_values(grid, scenario):
    """Dirichlet data evaluated at every node of the grid."""
    bc = scenario.boundary
    if bc.kind == "constant":
        return np.full(grid.shape, float(bc.constant))
    if bc.kind == "custom":
        vals = np.asarray(bc.custom, dtype=float)
        if vals.shape != tuple(grid.shape):
            raise ValueError("custom boundary samples do not match the grid")
        if vals.min() < 0:
            raise ValueError("boundary data must be nonnegative")
        return vals.copy()
    model = sector_solution(scenario.gamma, bc.orientation, bc.amplitude)
    nodes = grid.nodes()
    vals = model.evaluate(nodes)
    if bc.modulation:
        # excite the first overtone of the wedge harmonics: the factor
        # vanishes at both free rays, so the ray positions (and the corner)
        # are preserved to leading order while the data becomes genuinely
        # inhomogeneous across scales
        rel = np.mod(np.arctan2(nodes[..., 1], nodes[..., 0])
                     - model.orientation, 2.0 * np.pi)
        overtone = np.sin(2.0 * (1.0 + scenario.gamma) * rel)
        vals = vals * (1.0 + bc.modulation * np.where(rel <= model.aperture,
                                                      overtone, 0.0))
    return vals


def upper_side_mask(grid, manifold):
    """Nodes on or above the weight manifold (lines and graph curves)."""
    if manifold.kind == "single-point":
        raise ValueError("one-sided constraint needs a line or graph manifold")
    nodes = grid.nodes()
    if manifold.kind == "axis-line":
        return nodes[..., 1] >= manifold.anchor[1]
    height = manifold.anchor[1] + manifold._f(nodes[..., 0] - manifold.anchor[0])
    return nodes[..., 1] >= height


def dirichlet_mask(grid, scenario):
    if scenario.domain_radius is None:
        mask = border_mask(grid)
    else:
        mask = disk_dirichlet_mask(grid, scenario.domain_radius)
    if scenario.boundary.one_sided:
        mask = mask | upper_side_mask(grid, scenario.manifold)
    return mask


def scenario_setup(grid, scenario):
    """Dirichlet data and mask, with one-sided constraints zeroed out."""
    u0 = boundary_values(grid, scenario)
    fixed = dirichlet_mask(grid, scenario)
    if scenario.boundary.one_sided:
        u0 = np.where(upper_side_mask(grid, scenario.manifold), 0.0, u0)
    return u0, fixed


def penalty_field(grid, scenario):
    """h^2 Q^2 at every node."""
    q = scenario.manifold.weight(grid.nodes(), scenario.gamma)
    return grid.h**2 * q**2


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def discrete_energy(values, penalty):
    """Edge-based Dirichlet sum plus the penalty of the positivity set."""
    return (float(np.sum(np.diff(values, axis=0) ** 2))
            + float(np.sum(np.diff(values, axis=1) ** 2))
            + float(np.sum(penalty[values > 0])))


def energy(u, manifold, gamma, region=None):
    """Trapezoidal Dirichlet term plus cell-counted measure term.

    ``region`` is ((xlo, xhi), (ylo, yhi)) in world coordinates; the default
    covers the whole grid.
    """
    g = u.grid
    gsq = grad_sq_field(u)
    q2 = manifold.weight(g.nodes(), gamma) ** 2
    chi = u.values > 0
    if region is None:
        i0, i1, j0, j1 = 0, g.shape[0] - 1, 0, g.shape[1] - 1
    else:
        (xlo, xhi), (ylo, yhi) = region
        i0 = max(0, int(np.ceil((xlo - g.origin[0]) / g.h - 1e-9)))
        i1 = min(g.shape[0] - 1, int(np.floor((xhi - g.origin[0]) / g.h + 1e-9)))
        j0 = max(0, int(np.ceil((ylo - g.origin[1]) / g.h - 1e-9)))
        j1 = min(g.shape[1] - 1, int(np.floor((yhi - g.origin[1]) / g.h + 1e-9)))
    wx = np.ones(i1 - i0 + 1)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(j1 - j0 + 1)
    wy[0] = wy[-1] = 0.5
    w = wx[:, None] * wy[None, :] * g.h**2
    box = (slice(i0, i1 + 1), slice(j0, j1 + 1))
    dirichlet = float(np.sum(w * gsq[box]))
    measure = float(np.sum(g.h**2 * (q2 * chi)[box]))
    return EnergyBreakdown(dirichlet=dirichlet, measure=measure)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _neighbor_average(v):
    avg = np.zeros_like(v)
    avg[1:-1, 1:-1] = 0.25 * (v[2:, 1:-1] + v[:-2, 1:-1]
                              + v[1:-1, 2:] + v[1:-1, :-2])
    return avg


def _red_black_sweep(v, free, penalty, parity):
    """One full red-black sweep in place; returns (flips, max move)."""
    flips = 0
    move = 0.0
    for color in (0, 1):
        avg = _neighbor_average(v)
        upd = free & (parity == color)
        cand = avg[upd]
        new = np.where(4.0 * cand * cand > penalty[upd], cand, 0.0)
        old = v[upd]
        flips += int(np.count_nonzero((old > 0) != (new > 0)))
        if new.size:
            move = max(move, float(np.max(np.abs(new - old))))
        v[upd] = new
    return flips, move


def _lexicographic_sweep(v, free, penalty):
    flips = 0
    move = 0.0
    nx, ny = v.shape
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            if not free[i, j]:
                continue
            avg = 0.25 * (v[i + 1, j] + v[i - 1, j] + v[i, j + 1] + v[i, j - 1])
            new = avg if 4.0 * avg * avg > penalty[i, j] else 0.0
            old = v[i, j]
            if (old > 0) != (new > 0):
                flips += 1
            move = max(move, abs(new - old))
            v[i, j] = new
    return flips, move


def _harmonic_replacement(v, free, fixed_values):
    """Solve the five-point Laplace system exactly on free & positive nodes.

    Off-set neighbors contribute their current values (Dirichlet data or
    zero-set zeros).  Returns the number of unknowns solved.
    """
    active = free & (v > 0)
    n_active = int(np.count_nonzero(active))
    if n_active == 0:
        return 0
    idx = -np.ones(v.shape, dtype=np.int64)
    idx[active] = np.arange(n_active)
    ii, jj = np.nonzero(active)
    rows = [np.arange(n_active)]
    cols = [np.arange(n_active)]
    data = [np.full(n_active, 4.0)]
    rhs = np.zeros(n_active)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        nb = idx[ni, nj]
        inside = nb >= 0
        rows.append(np.arange(n_active)[inside])
        cols.append(nb[inside])
        data.append(np.full(int(inside.sum()), -1.0))
        np.add.at(rhs, np.arange(n_active)[~inside], v[ni[~inside], nj[~inside]])
    A = sp.csr_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_active, n_active))
    x = spla.spsolve(A, rhs)
    v[active] = np.clip(x, 0.0, None)
    return n_active


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def solve(grid, scenario, config=None):
    """Minimize the discrete functional on the grid for the given scenario.

    The descent rule only shrinks or locally adjusts the positivity set, so
    the fixed point reached depends on the starting basin; near the weight
    manifold the functional has distinct local minima separated by moves no
    single-node update can make.  ``auto`` initialization therefore runs two
    nested descents, one seeded from the harmonic extension of the data and
    one from the boundary recipe evaluated on the whole grid, and returns
    the fixed point of lower discrete energy.
    """
    config = config or SolveConfig()
    if config.initialization == "auto":
        seeds = ("harmonic", "data")
    else:
        seeds = (config.initialization,)
    best = None
    for seed in seeds:
        run = _nested_solve(grid, scenario, config, seed)
        if best is None or run.telemetry[-1][1] < best.telemetry[-1][1]:
            best = run
    return best


def _nested_solve(grid, scenario, config, seed):
    if seed == "data":
        # seed the target grid directly: coarse-level fixed points can sit
        # in a different basin and would drag the prolonged state there
        return _solve_single_level(grid, scenario, config,
                                   boundary_values(grid, scenario))
    if config.nested and min(grid.shape) >= 2 * config.coarsest - 1:
        n_coarse = (grid.shape[0] - 1) // 2 + 1
        extent = (grid.shape[0] - 1) * grid.h / 2.0
        coarse = _nested_solve(Grid.centered(extent, n_coarse), scenario,
                               config, seed)
        init = _prolong(coarse.field.values)
    else:
        init = None   # harmonic extension, built inside the level solve
    return _solve_single_level(grid, scenario, config, init)


def _prolong(coarse):
    nx = 2 * coarse.shape[0] - 1
    ny = 2 * coarse.shape[1] - 1
    fine = np.zeros((nx, ny))
    fine[::2, ::2] = coarse
    fine[1::2, ::2] = 0.5 * (coarse[:-1, :] + coarse[1:, :])
    fine[::2, 1::2] = 0.5 * (coarse[:, :-1] + coarse[:, 1:])
    fine[1::2, 1::2] = 0.25 * (coarse[:-1, :-1] + coarse[1:, :-1]
                               + coarse[:-1, 1:] + coarse[1:, 1:])
    return fine


def _solve_single_level(grid, scenario, config, init):
    u0, fixed = scenario_setup(grid, scenario)
    if u0.min() < 0:
        raise ValueError("boundary data must be nonnegative")
    free = ~fixed
    penalty = penalty_field(grid, scenario)
    v = u0.copy() if init is None else np.where(fixed, u0, np.clip(init, 0.0, None))
    if init is None:
        # agnostic start: harmonic extension of the data over the whole domain
        _harmonic_replacement(v, free, u0)
    scale = max(float(u0.max()), 1.0)
    fixed_tol = 1e-11 * scale

    telemetry = [("init", discrete_energy(v, penalty))]
    sweeps = 0
    converged = False
    prev = telemetry[0][1]
    guard = 1e-9 * (1.0 + abs(prev))

    def log(label):
        nonlocal prev
        e = discrete_energy(v, penalty)
        if e > prev + guard:
            raise RuntimeError(f"energy increased during {label}: {prev} -> {e}")
        telemetry.append((label, e))
        prev = e
        return e

    if config.ordering == RED_BLACK:
        parity = (np.add.outer(np.arange(grid.shape[0]),
                               np.arange(grid.shape[1]))) % 2
        sweep = lambda: _red_black_sweep(v, free, penalty, parity)
    else:
        sweep = lambda: _lexicographic_sweep(v, free, penalty)

    while sweeps < config.max_sweeps:
        if config.replacement and sweeps % config.replace_interval == 0:
            _harmonic_replacement(v, free, u0)
            log("replacement")
        flips, move = sweep()
        sweeps += 1
        e_before = prev
        log("sweep")
        if flips == 0 and move <= fixed_tol:
            converged = True
            break
        if flips == 0 and e_before - prev < config.tolerance * (1.0 + abs(prev)):
            if not config.replacement:
                converged = True   # plain-descent stall is the stopping rule
                break
            _harmonic_replacement(v, free, u0)
            log("replacement")
            flips, move = sweep()
            sweeps += 1
            log("sweep")
            if flips == 0 and move <= fixed_tol:
                converged = True
                break

    out = ScalarField(grid, v, fixed)
    result = SolveResult(field=out, converged=converged, sweeps=sweeps,
                         telemetry=telemetry)
    result.residual = nodewise_optimality_residual(out)
    return result


# ---------------------------------------------------------------------------
# optimality diagnostics
# ---------------------------------------------------------------------------

def nodewise_optimality_residual(u):
    """max |sum of neighbors - 4 u_i| over interior nodes whose five-point
    neighborhood is entirely positive (the discrete harmonicity residual,
    |five-point Laplacian| * h^2)."""
    v = u.values
    free = ~u.dirichlet
    pos = v > 0
    core = free[1:-1, 1:-1] & pos[1:-1, 1:-1] & pos[2:, 1:-1] & pos[:-2, 1:-1] \
        & pos[1:-1, 2:] & pos[1:-1, :-2]
    if not np.any(core):
        return 0.0
    lap = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]
           - 4.0 * v[1:-1, 1:-1])
    return float(np.max(np.abs(lap[core])))


def noether_residual(u, manifold, gamma, vector_field):
    """Grid quadrature of the inner-variation identity

        int |grad u|^2 div(phi) + Q^2 chi div(phi)
            - 2 grad(u) . Dphi grad(u) - chi grad(Q^2) . phi dx

    which vanishes for critical points when phi is compactly supported in
    the interior.  ``vector_field`` must expose value(points), jacobian
    (points), and support(center, radius).
    """
    g = u.grid
    center, radius = vector_field.support
    if not g.contains_ball(center, radius, margin=g.h):
        raise ValueError("vector field support touches the boundary")
    nodes = g.nodes()
    gx, gy = np.gradient(u.values, g.h, edge_order=2)
    chi = (u.values > 0).astype(float)
    dist = manifold.distance(nodes)
    phi = vector_field.value(nodes)
    dphi = vector_field.jacobian(nodes)
    div = dphi[..., 0, 0] + dphi[..., 1, 1]
    gsq = gx * gx + gy * gy
    q2 = dist ** (2.0 * gamma)
    # grad(Q^2) = 2 gamma dist^{2 gamma - 1} grad(dist); the unit direction
    # field is (x - projection)/dist, undefined on Gamma itself where the
    # integrand carries weight zero anyway
    eps = 1e-12
    safe = np.where(dist > eps, dist, 1.0)
    # nearest-point directions, vectorized per manifold kind
    if manifold.kind == "axis-line":
        ndir = np.zeros_like(nodes)
        ndir[..., 1] = np.sign(nodes[..., 1] - manifold.anchor[1])
    elif manifold.kind == "single-point":
        ndir = (nodes - manifold.anchor) / safe[..., None]
    else:
        tree, t = manifold._kdtree()
        _, nearest = tree.query(nodes.reshape(-1, 2), k=1)
        proj = manifold.curve_points(t[nearest]).reshape(nodes.shape)
        ndir = (nodes - proj) / safe[..., None]
    grad_q2 = (2.0 * gamma * np.where(dist > eps, dist, 0.0) ** (2.0 * gamma - 1.0)
               )[..., None] * ndir
    quad = (gx * (dphi[..., 0, 0] * gx + dphi[..., 0, 1] * gy)
            + gy * (dphi[..., 1, 0] * gx + dphi[..., 1, 1] * gy))
    integrand = (gsq * div + q2 * chi * div - 2.0 * quad
                 - chi * (grad_q2[..., 0] * phi[..., 0]
                          + grad_q2[..., 1] * phi[..., 1]))
    return abs(float(np.sum(integrand) * g.h**2))


class RadialBump:
    """Smooth compactly supported vector field g(|x-c|) (x - c) with
    g(rho) = (1 - (rho/R)^2)^4 inside the support radius R."""

    def __init__(self, center=(0.0, 0.0), radius=0.5):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    @property
    def support(self):
        return self.center, self.radius

    def _g_and_dg(self, rho2):
        s = rho2 / self.radius**2
        inside = s < 1.0
        base = np.where(inside, 1.0 - s, 0.0)
        g = base**4
        dg_drho2 = np.where(inside, -4.0 * base**3 / self.radius**2, 0.0)
        return g, dg_drho2

    def value(self, pts):
        d = pts - self.center
        rho2 = d[..., 0] ** 2 + d[..., 1] ** 2
        g, _ = self._g_and_dg(rho2)
        return g[..., None] * d

    def jacobian(self, pts):
        d = pts - self.center
        rho2 = d[..., 0] ** 2 + d[..., 1] ** 2
        g, dg = self._g_and_dg(rho2)
        J = np.zeros(pts.shape[:-1] + (2, 2))
        J[..., 0, 0] = g + 2.0 * d[..., 0] * d[..., 0] * dg
        J[..., 1, 1] = g + 2.0 * d[..., 1] * d[..., 1] * dg
        J[..., 0, 1] = 2.0 * d[..., 0] * d[..., 1] * dg
        J[..., 1, 0] = J[..., 0, 1]
        return J


def subharmonicity_check(u, tol=None, radii=(2, 4)):
    """Violations of the discrete mean-value inequality at ring radii 2h/4h.

    The ring average at radius 2h is the exact two-step mean of the
    five-point stencil (1/12 on the four axis neighbors at distance 2h, 1/6
    on the diagonals), for which discrete subharmonicity gives
    u_i <= average exactly; radius 4h composes it twice.  The inequality
    chain needs the averaging property at every stencil node, so the check
    runs where the whole footprint consists of free nodes.  Returns a list
    of (i, j, radius, shortfall) entries.
    """
    from scipy.ndimage import minimum_filter
    from scipy.signal import convolve2d

    if tol is None:
        tol = 1e-6 * max(u.max(), 1e-300)
    k2 = np.zeros((5, 5))
    for di, dj in ((2, 0), (-2, 0), (0, 2), (0, -2)):
        k2[2 + di, 2 + dj] = 1.0 / 12.0
    for di, dj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        k2[2 + di, 2 + dj] = 1.0 / 6.0
    kernels = {}
    if 2 in radii:
        kernels[2] = k2
    if 4 in radii:
        kernels[4] = convolve2d(k2, k2)
    violations = []
    interior = ~u.dirichlet
    for radius, kernel in sorted(kernels.items()):
        half = kernel.shape[0] // 2
        if u.values.shape[0] <= 2 * half or u.values.shape[1] <= 2 * half:
            continue
        avg = convolve2d(u.values, kernel[::-1, ::-1], mode="valid")
        footprint_free = minimum_filter(interior.astype(np.uint8),
                                        size=kernel.shape[0],
                                        mode="constant", cval=0).astype(bool)
        core = footprint_free[half:-half, half:-half]
        short = u.values[half:-half, half:-half] - avg
        bad = core & (short > tol)
        for i, j in zip(*np.nonzero(bad)):
            violations.append((int(i + half), int(j + half), radius,
                               float(short[i, j])))
    return violations
