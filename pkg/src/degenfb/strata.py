"""Quantitative strata, Jones beta numbers, and singular-set diagnostics.

Beta numbers quantify how far a weighted point measure is from sitting on an
affine k-plane inside a ball: with the mass-averaged second-moment form of
the ball, beta^2 = mu(B_r) / r^{k+2} * (sum of the n-k smallest eigenvalues),
which coincides with the minimum of r^{-(k+2)} int_{B_r} dist(y, L)^2 dmu
over affine k-planes L.  The extra r^2 in the normalization (absent from
some displays whose eigenvalues carry squared-length units) makes the number
scale invariant.

Strata membership is quantitative: a point belongs to the j-stratum at
(eps, rho) when its trace-normalized rescalings stay at L2(B_1) distance at
least eps from every nontrivial (j+1)-symmetric homogeneous profile at every
dyadic scale between rho and the distance to the domain boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .blowup import (VanishingTraceError, full_symmetry_deficit, rescale,
                     symmetry_deficit)
from .weiss import THETA_CUT, volume_density


@dataclass
class PointMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights disagree in length")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")

    @classmethod
    def uniform(cls, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points, np.ones(len(points)))

    def restrict(self, x, r):
        d = np.hypot(self.points[:, 0] - x[0], self.points[:, 1] - x[1])
        keep = d <= r
        return self.points[keep], self.weights[keep]


@dataclass
class BetaProfile:
    center: tuple
    radius: float
    k: int
    beta_sq: float
    eigenvalues: np.ndarray      # descending
    center_of_mass: np.ndarray
    mass: float


def beta_number(mu, x, r, k):
    """Scale-normalized Jones number of mu in B_r(x) against k-planes."""
    x = np.asarray(x, dtype=float)
    n = mu.points.shape[1]
    if not 0 <= k < n:
        raise ValueError("k must satisfy 0 <= k < ambient dimension")
    pts, w = mu.restrict(x, r)
    if len(pts) == 0:
        raise ValueError("empty ball: beta number undefined")
    mass = float(w.sum())
    com = (w[:, None] * pts).sum(axis=0) / mass
    centered = pts - com
    second = (w[:, None, None] * centered[:, :, None]
              * centered[:, None, :]).sum(axis=0) / mass
    lam = np.linalg.eigvalsh(second)[::-1]
    lam = np.clip(lam, 0.0, None)
    beta_sq = mass / r ** (k + 2) * float(lam[k:].sum())
    return BetaProfile(center=tuple(x), radius=float(r), k=k,
                       beta_sq=beta_sq, eigenvalues=lam,
                       center_of_mass=com, mass=mass)


def reifenberg_sum(mu, x, r, k, depth=None):
    """Dyadic approximation of int_0^r int_{B_2r(x)} beta^2(z, s) dmu ds/s.

    Scales shrink dyadically from r until balls become single points (where
    the summand vanishes); each dyadic level contributes ln 2 of ds/s mass.
    """
    x = np.asarray(x, dtype=float)
    pts, w = mu.restrict(x, 2.0 * r)
    if len(pts) == 0:
        return 0.0
    if depth is None:
        gaps = _min_gap(pts)
        depth = 1 if gaps <= 0 else max(1, int(np.ceil(np.log2(r / gaps))) + 1)
        depth = min(depth, 40)
    total = 0.0
    for i in range(depth):
        s = r * 2.0 ** (-i)
        level = 0.0
        for z, wz in zip(pts, w):
            sub_pts, sub_w = mu.restrict(z, s)
            if len(sub_pts) <= 1:
                continue
            level += wz * beta_number(mu, z, s, k).beta_sq
        total += level * np.log(2.0)
    return float(total)


def _min_gap(pts):
    if len(pts) < 2:
        return 0.0
    from scipy.spatial import cKDTree
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.min(d[:, 1]))


@dataclass
class PackingReport:
    total: float
    violations: list


def packing_check(balls, j):
    """Sum of r^j over the collection, with pairwise-overlap verification."""
    centers = np.array([b[0] for b in balls], dtype=float)
    radii = np.array([b[1] for b in balls], dtype=float)
    if np.any(radii <= 0):
        raise ValueError("ball radii must be positive")
    violations = []
    for a in range(len(balls)):
        for b in range(a + 1, len(balls)):
            gap = np.hypot(*(centers[a] - centers[b])) - (radii[a] + radii[b])
            if gap < -1e-12:
                violations.append((a, b, float(gap)))
    return PackingReport(total=float(np.sum(radii**j)), violations=violations)


# ---------------------------------------------------------------------------
# strata classification
# ---------------------------------------------------------------------------

@dataclass
class PointStratum:
    point: tuple
    scales: list
    deficits: dict               # j -> list aligned with scales
    labels: dict                 # j -> bool (in the stratum at (eps, rho))
    theta_limit: float | None
    tag: str                     # 'ok' | 'degenerate-candidate'


@dataclass
class StratumReport:
    eps: float
    rho: float
    rows: list

    def members(self, j):
        return [row.point for row in self.rows if row.labels.get(j)]


def dyadic_scales(r_hi, r_lo):
    out = []
    r = float(r_hi)
    while r >= r_lo * (1 - 1e-12):
        out.append(r)
        r /= 2.0
    return out


def classify_strata(u, manifold, gamma, points, eps, rho, domain_radius=None,
                    theta_radii=None):
    """Per-point stratum labels from trace-rescaled symmetry deficits.

    deficit_{j+1} is evaluated at every dyadic scale in [rho, dist(x, dOmega)];
    the point carries the j-label when the deficit stays >= eps at all of
    them.  In the plane the (j+1)-classes are the direction profiles (j = 0)
    and the constants (j = 1); the latter deficit is floored by the former
    so that the label nesting of the containment chain holds by
    construction.  Points with a vanishing trace at some scale are tagged
    degenerate candidates and excluded from the labels.
    """
    g = u.grid
    if domain_radius is None:
        domain_radius = min(-g.origin[0], g.xmax, -g.origin[1], g.ymax)
    rows = []
    for x in points:
        x = np.asarray(x, dtype=float)
        r_hi = domain_radius - float(np.hypot(x[0], x[1]))
        r_hi = min(r_hi, min(x[0] - g.origin[0], g.xmax - x[0],
                             x[1] - g.origin[1], g.ymax - x[1]) - 2 * g.h)
        scales = [r for r in dyadic_scales(r_hi, rho) if r >= 8 * u.h]
        d1, d2 = [], []
        tag = "ok"
        for r in scales:
            try:
                T = rescale(u, x, r, gamma, "trace")
            except VanishingTraceError:
                tag = "degenerate-candidate"
                break
            dj1 = symmetry_deficit(T, 1, gamma).deficit
            d1.append(dj1)
            d2.append(max(full_symmetry_deficit(T), dj1))
        labels = {}
        if tag == "ok" and d1:
            labels = {0: bool(np.min(d1) >= eps), 1: bool(np.min(d2) >= eps)}
        theta = None
        if theta_radii is None:
            radii = [r for r in (8 * u.h, 16 * u.h, 32 * u.h) if r <= r_hi]
        else:
            radii = list(theta_radii)
        if radii:
            theta = volume_density(u, x, radii).limit
        rows.append(PointStratum(point=tuple(x), scales=scales,
                                 deficits={0: d1, 1: d2}, labels=labels,
                                 theta_limit=theta, tag=tag))
    return StratumReport(eps=float(eps), rho=float(rho), rows=rows)


# ---------------------------------------------------------------------------
# singular-set decomposition, containment, Minkowski content
# ---------------------------------------------------------------------------

@dataclass
class SingularDecomposition:
    degenerate: list             # cusp-like: volume density below the cut
    nondegenerate: list
    theta: dict                  # point -> extrapolated density


def candidate_gamma_points(fb, manifold, tol):
    """Interface vertices within tol of the weight manifold, clustered."""
    pts = fb.vertices
    if len(pts) == 0:
        return []
    d = manifold.distance(pts)
    near = pts[d <= tol]
    reps = []
    for p in near:
        if all(np.hypot(p[0] - q[0], p[1] - q[1]) > 3 * tol for q in reps):
            reps.append(p)
    return [np.asarray(p) for p in reps]


def decompose_singular(u, manifold, gamma, fb, theta_cut=THETA_CUT,
                       near_tol=None, radii=None):
    """Split interface points on the weight manifold by extrapolated volume
    density: below the cut is cusp-like (degenerate), the rest carry
    positive density."""
    if near_tol is None:
        near_tol = 2.0 * u.h
    reps = candidate_gamma_points(fb, manifold, near_tol)
    if radii is None:
        radii = [8 * u.h, 16 * u.h, 32 * u.h]
    degenerate, nondegenerate = [], []
    theta = {}
    for p in reps:
        est = volume_density(u, p, radii, theta_cut)
        theta[tuple(p)] = est.limit
        (degenerate if est.limit < theta_cut else nondegenerate).append(tuple(p))
    return SingularDecomposition(degenerate=degenerate,
                                 nondegenerate=nondegenerate, theta=theta)


@dataclass
class ContainmentReport:
    epsilon_star: float | None
    per_point: dict


def containment_audit(u, manifold, gamma, points, rho, domain_radius=None):
    """Smallest direction-class deficit over all tested points and scales.

    A positive value certifies empirically that the nondegenerate singular
    points stay out of the (1, eps)-symmetric regime at every tested scale,
    i.e. sit inside the codimension-2 stratum for some positive eps.
    """
    if len(points) == 0:
        return ContainmentReport(epsilon_star=None, per_point={})
    report = classify_strata(u, manifold, gamma, points, eps=0.0, rho=rho,
                             domain_radius=domain_radius)
    per_point = {}
    eps_star = np.inf
    for row in report.rows:
        if row.tag != "ok" or not row.deficits[0]:
            per_point[row.point] = None
            continue
        val = float(np.min(row.deficits[0]))
        per_point[row.point] = val
        eps_star = min(eps_star, val)
    if not np.isfinite(eps_star):
        return ContainmentReport(epsilon_star=None, per_point=per_point)
    return ContainmentReport(epsilon_star=eps_star, per_point=per_point)


@dataclass
class MinkowskiFit:
    radii: np.ndarray
    volumes: np.ndarray
    slope: float | None
    normalized: np.ndarray | None   # volumes / r^{n-j}


def minkowski_content(points, radii, h, j=0, clip_radius=None):
    """Lattice-counted areas of the r-neighborhoods of a point set and the
    log-log slope over the dyadic radii; for isolated points the slope is
    the ambient dimension."""
    radii = np.asarray(sorted(radii), dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float)) if len(points) else \
        np.zeros((0, 2))
    if clip_radius is not None and len(pts):
        keep = np.hypot(pts[:, 0], pts[:, 1]) <= clip_radius
        pts = pts[keep]
    if len(pts) == 0:
        return MinkowskiFit(radii, np.zeros(len(radii)), None, None)
    r_max = radii[-1]
    lo = pts.min(axis=0) - r_max - h
    hi = pts.max(axis=0) + r_max + h
    xs = np.arange(lo[0], hi[0] + h, h)
    ys = np.arange(lo[1], hi[1] + h, h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    d2 = np.full(X.shape, np.inf)
    for p in pts:
        d2 = np.minimum(d2, (X - p[0]) ** 2 + (Y - p[1]) ** 2)
    vols = np.array([float(np.count_nonzero(d2 <= r * r)) * h * h
                     for r in radii])
    good = vols > 0
    slope = None
    if np.count_nonzero(good) >= 2:
        slope = float(np.polyfit(np.log(radii[good]), np.log(vols[good]), 1)[0])
    return MinkowskiFit(radii, vols, slope, vols / radii ** (2 - j))
