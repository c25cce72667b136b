"""Free-boundary extraction and empirical estimate audits.

The positivity interface is pulled out of a field by marching squares at a
small threshold (default h^{1+gamma}, the natural growth scale where the
weight degenerates, which suppresses single-cell noise).  On top of the
polyline the module audits the growth inequalities, the Lipschitz scaling
|grad u| ~ r^gamma at degenerate corners, interior-ball nondegeneracy, and
coarea/perimeter bounds.  None of the audits certify constants; they report
empirical ones and flag violations of supplied floors.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure as _measure

from .field import (ball_window, gradient_fields, grad_sq_field, interpolate,
                    mean_sphere, positivity_volume)


class CornerError(ValueError):
    """The requested vertex does not have two emanating branches."""


@dataclass
class FreeBoundary:
    chains: list                      # world-coordinate polylines (k, 2)
    threshold: float
    source: object                    # the ScalarField it was extracted from
    gamma_distances: list | None = None

    @property
    def vertices(self):
        if not self.chains:
            return np.zeros((0, 2))
        return np.concatenate(self.chains, axis=0)

    def __len__(self):
        return sum(len(c) for c in self.chains)


def default_threshold(field, gamma):
    return field.h ** (1.0 + gamma)


def extract_free_boundary(field, tau, manifold=None):
    """Marching-squares contour of u = tau with linear interpolation."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    g = field.grid
    chains = []
    for c in _measure.find_contours(field.values, tau):
        world = np.empty_like(c)
        world[:, 0] = g.origin[0] + c[:, 0] * g.h
        world[:, 1] = g.origin[1] + c[:, 1] * g.h
        chains.append(world)
    fb = FreeBoundary(chains=chains, threshold=float(tau), source=field)
    if manifold is not None and chains:
        fb.gamma_distances = [manifold.distance(c) for c in chains]
    return fb


# ---------------------------------------------------------------------------
# corner angle
# ---------------------------------------------------------------------------

def _branch_split(offsets):
    """Split interface points around a vertex into two angular clusters by
    cutting the sorted angles at the two largest circular gaps."""
    ang = np.mod(np.arctan2(offsets[:, 1], offsets[:, 0]), 2.0 * np.pi)
    order = np.argsort(ang)
    sorted_ang = ang[order]
    gaps = np.diff(np.concatenate([sorted_ang, [sorted_ang[0] + 2 * np.pi]]))
    if len(gaps) < 2:
        raise CornerError("not enough interface points near the vertex")
    top = np.argsort(gaps)[-2:]
    g1, g2 = sorted(top)
    cluster_a = order[g1 + 1:g2 + 1]
    cluster_b = np.concatenate([order[g2 + 1:], order[:g1 + 1]])
    if len(cluster_a) < 2 or len(cluster_b) < 2:
        raise CornerError("fewer than 2 emanating branches")
    return cluster_a, cluster_b


def _ray_angle(offsets):
    """Weighted principal direction of offsets through the origin, oriented
    toward the points."""
    w = np.hypot(offsets[:, 0], offsets[:, 1])
    M = (offsets * w[:, None]).T @ offsets
    _, vecs = np.linalg.eigh(M)
    d = vecs[:, -1]
    if np.sum(offsets @ d) < 0:
        d = -d
    return float(np.arctan2(d[1], d[0]))


def corner_angle(fb, vertex, fit_radius=0.2, inner_cutoff=None):
    """Included angle of the positivity side between the two interface rays
    emanating from a corner vertex."""
    field = fb.source
    if inner_cutoff is None:
        inner_cutoff = 4.0 * field.h
    vertex = np.asarray(vertex, dtype=float)
    pts = fb.vertices
    if len(pts) == 0:
        raise CornerError("empty free boundary")
    off = pts - vertex
    d = np.hypot(off[:, 0], off[:, 1])
    keep = (d >= inner_cutoff) & (d <= fit_radius)
    if np.count_nonzero(keep) < 4:
        raise CornerError("no interface points in the fit annulus")
    off = off[keep]
    ca, cb = _branch_split(off)
    th1 = _ray_angle(off[ca])
    th2 = _ray_angle(off[cb])
    span = np.mod(th2 - th1, 2.0 * np.pi)
    rho = 0.5 * fit_radius
    mid_inside = th1 + 0.5 * span
    mid_outside = th1 + 0.5 * span + np.pi
    probe = lambda a: interpolate(field, vertex + rho * np.array([np.cos(a), np.sin(a)]))
    if probe(mid_inside) >= probe(mid_outside):
        return float(span)
    return float(2.0 * np.pi - span)


# ---------------------------------------------------------------------------
# growth audits
# ---------------------------------------------------------------------------

@dataclass
class GrowthSample:
    point: tuple
    r: float
    upper_ratio: float
    lower_ratio: float | None


@dataclass
class GrowthReport:
    name: str
    samples: list
    c_max: float
    c_min: float | None
    bulk_min: float | None
    violations: list
    skipped: int


def _ball_extreme(dist_field, grid, center, r, mode):
    window, frac = ball_window(grid, center, r)
    vals = dist_field[window][frac > 0]
    if vals.size == 0:
        return None
    return float(vals.max() if mode == "max" else vals.min())


def growth_audit(u, manifold, gamma, fb, radii, stride=7, lower_floor=None,
                 bulk_stride=11):
    """Empirical growth constants along the interface.

    For sampled interface points x and radii r the upper ratio is
    mean_{dB_r} u / (r max_{B_r} Q) and, on balls where u does not vanish
    identically on B_{r/2}, the lower ratio is mean_{dB_r} u /
    (r min_{B_{r/2}} Q).  The bulk ratio u / (dist(., interface) Q) is
    minimized over positive nodes.  ``lower_floor``, when given, records
    violations of lower_ratio >= lower_floor.
    """
    if len(fb.chains) == 0:
        return GrowthReport("growth", [], np.nan, None, None, [], 0)
    g = u.grid
    dist = manifold.distance(g.nodes())
    samples = []
    violations = []
    skipped = 0
    pts = fb.vertices[::max(stride, 1)]
    for x in pts:
        for r in radii:
            if not g.contains_ball(x, r, margin=g.h):
                skipped += 1
                continue
            qmax = _ball_extreme(dist, g, x, r, "max") ** gamma
            avg = mean_sphere(u, x, r)
            upper = avg / (r * qmax) if qmax > 0 else np.inf
            lower = None
            vol = positivity_volume(u, x, r / 2.0)
            if vol > 0:
                qmin = _ball_extreme(dist, g, x, r / 2.0, "min") ** gamma
                if qmin > 0:
                    lower = avg / (r * qmin)
                    if lower_floor is not None and lower < lower_floor:
                        violations.append((tuple(x), float(r), float(lower)))
            samples.append(GrowthSample(tuple(x), float(r), float(upper),
                                        None if lower is None else float(lower)))
    uppers = [s.upper_ratio for s in samples if np.isfinite(s.upper_ratio)]
    lowers = [s.lower_ratio for s in samples if s.lower_ratio is not None]
    bulk = _bulk_growth(u, manifold, gamma, fb, bulk_stride)
    return GrowthReport("growth", samples,
                        c_max=float(np.max(uppers)) if uppers else np.nan,
                        c_min=float(np.min(lowers)) if lowers else None,
                        bulk_min=bulk, violations=violations, skipped=skipped)


def _bulk_growth(u, manifold, gamma, fb, stride):
    if len(fb) == 0:
        return None
    g = u.grid
    tree = cKDTree(fb.vertices)
    nodes = g.nodes()
    pos = (u.values > 0) & ~u.dirichlet
    ii, jj = np.nonzero(pos)
    ii, jj = ii[::stride], jj[::stride]
    if ii.size == 0:
        return None
    pts = nodes[ii, jj]
    d_fb, _ = tree.query(pts, k=1)
    q = manifold.weight(pts, gamma)
    ok = (d_fb > 2 * g.h) & (q > 0)
    if not np.any(ok):
        return None
    ratios = u.values[ii, jj][ok] / (d_fb[ok] * q[ok])
    return float(np.min(ratios))


@dataclass
class LipschitzReport:
    radii: np.ndarray
    maxima: np.ndarray
    slope: float | None
    gap: float | None


def lipschitz_audit(u, gamma, radii, center=(0.0, 0.0)):
    """Dyadic log-log fit of max_{B_r} |grad u| against r."""
    g = u.grid
    gx, gy = gradient_fields(u)
    speed = np.hypot(gx, gy)
    nodes = g.nodes()
    d = np.hypot(nodes[..., 0] - center[0], nodes[..., 1] - center[1])
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    maxima = np.array([speed[d <= r].max() if np.any(d <= r) else 0.0
                       for r in radii])
    if np.any(maxima <= 0):
        return LipschitzReport(radii, maxima, None, None)
    slope = float(np.polyfit(np.log(radii), np.log(maxima), 1)[0])
    return LipschitzReport(radii, maxima, slope, slope - gamma)


@dataclass
class InteriorBallEntry:
    point: tuple
    center: tuple | None
    radius: float
    min_value: float
    violation: bool


def interior_ball_audit(u, manifold, gamma, fb, r, c_min, n_angles=128,
                        stride=13):
    """Search dB_{r/2}(x) for a witness ball where u stays above
    c_min r Q_min / 4, for interface points x whose ball avoids the weight
    manifold."""
    g = u.grid
    dist = manifold.distance(g.nodes())
    entries = []
    for x in fb.vertices[::max(stride, 1)]:
        if manifold.distance(x[None, :])[0] <= r:
            continue
        if not g.contains_ball(x, r, margin=g.h):
            continue
        qmin = _ball_extreme(dist, g, x, r / 2.0, "min") ** gamma
        threshold = c_min * r * qmin / 4.0
        best = (0.0, None, 0.0)
        angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
        for a in angles:
            y = x + 0.5 * r * np.array([np.cos(a), np.sin(a)])
            rad, mn = _largest_good_ball(u, y, threshold, r / 2.0)
            if rad > best[0]:
                best = (rad, y, mn)
        entries.append(InteriorBallEntry(
            point=tuple(x),
            center=None if best[1] is None else tuple(best[1]),
            radius=float(best[0]), min_value=float(best[2]),
            violation=best[0] < g.h))
    return entries


def _largest_good_ball(u, center, threshold, r_cap):
    """Largest radius around center where every covered node value stays at
    or above the threshold."""
    g = u.grid
    cap = min(r_cap, center[0] - g.origin[0], g.xmax - center[0],
              center[1] - g.origin[1], g.ymax - center[1])
    if cap <= 0:
        return 0.0, 0.0
    window, frac = ball_window(g, center, cap)
    vals = u.values[window][frac > 0]
    xs = g.origin[0] + g.h * np.arange(window[0].start, window[0].stop)
    ys = g.origin[1] + g.h * np.arange(window[1].start, window[1].stop)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    d = np.hypot(X - center[0], Y - center[1])[frac > 0]
    order = np.argsort(d)
    good = vals[order] >= threshold
    bad = np.nonzero(~good)[0]
    if bad.size == 0:
        return float(cap), float(vals.min())
    if bad[0] == 0:
        return 0.0, 0.0
    rad = float(d[order][bad[0] - 1])
    return rad, float(np.min(vals[order][:bad[0]]))


# ---------------------------------------------------------------------------
# coarea and perimeter
# ---------------------------------------------------------------------------

@dataclass
class CoareaReport:
    layer_energy: float
    fitted_c: float
    perimeter: float
    q_min: float | None
    bound_constant: float | None


def coarea_perimeter(u, manifold, gamma, center, radius, eps, levels=16,
                     with_bound=True):
    """Layer energy over {0 < u <= eps} in a disk region and the coarea
    perimeter estimate (1/eps) int_0^eps H^1({u = t}) dt from marching
    squares at ``levels`` equispaced slice heights."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    g = u.grid
    nodes = g.nodes()
    d = np.hypot(nodes[..., 0] - center[0], nodes[..., 1] - center[1])
    region = d <= radius
    q = manifold.weight(nodes, gamma)
    q_min = float(q[region].min()) if np.any(region) else None
    if with_bound and (q_min is None or q_min <= 0):
        raise ValueError("perimeter bound needs a region clear of the "
                         "weight manifold (Q_min > 0)")
    layer = region & (u.values > 0) & (u.values <= eps)
    gsq = grad_sq_field(u)
    layer_energy = float(np.sum((gsq + q * q)[layer]) * g.h**2)
    total_len = 0.0
    for m in range(levels):
        t = eps * (m + 0.5) / levels
        for chain in _measure.find_contours(u.values, t):
            world = np.empty_like(chain)
            world[:, 0] = g.origin[0] + chain[:, 0] * g.h
            world[:, 1] = g.origin[1] + chain[:, 1] * g.h
            seg = np.diff(world, axis=0)
            mids = 0.5 * (world[1:] + world[:-1])
            inside = np.hypot(mids[:, 0] - center[0],
                              mids[:, 1] - center[1]) <= radius
            total_len += float(np.sum(np.hypot(seg[:, 0], seg[:, 1])[inside]))
    perimeter = total_len / levels
    bound = perimeter * np.sqrt(q_min) if (with_bound and q_min) else None
    return CoareaReport(layer_energy=layer_energy, fitted_c=layer_energy / eps,
                        perimeter=perimeter, q_min=q_min,
                        bound_constant=bound)
