"""Weiss density, almost-monotonicity audits, and volume densities.

In the plane the density at a point x0 and scale r is

    W(x0, r) = r^-(2 gamma + 2) int_{B_r} |grad u|^2 + Q^2 chi_{u>0}
             - (gamma + 1) r^-(2 gamma + 3) int_{dB_r} u^2,

which is tuned so that harmonic (1+gamma)-homogeneous profiles vanishing on
the ray structure have r-independent density.  On a curved weight manifold
the density is only monotone up to the drift allowance
16 (gamma/alpha) [Gamma]_alpha R^alpha, which the audit applies pairwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import (QuadratureDomainError, grad_sq_field, integrate_ball,
                    integrate_sphere, interpolate, positivity_volume,
                    sphere_points, sphere_sample_count)

# shared degeneracy cut for the split between cusp-like and sector-like
# volume densities; empirical (reports carry it alongside every label)
THETA_CUT = 0.05


@dataclass
class WeissProfile:
    point: tuple
    scales: np.ndarray          # strictly decreasing
    values: np.ndarray
    allowances: np.ndarray      # 16 (gamma/alpha) [Gamma]_alpha r^alpha

    def __post_init__(self):
        if np.any(np.diff(self.scales) >= 0):
            raise ValueError("scales must be strictly decreasing")
        if not (np.all(np.isfinite(self.values))
                and np.all(np.isfinite(self.allowances))):
            raise ValueError("profile entries must be finite")


@dataclass
class DensityEstimate:
    point: tuple
    radii: np.ndarray
    values: np.ndarray
    limit: float
    hint: str                   # 'degenerate' | 'non-degenerate'


@dataclass
class MonotonicityViolation:
    r: float
    R: float
    w_r: float
    w_R: float
    allowance: float


class WeissCalculator:
    """Caches the energy-density integrand fields of one minimizer."""

    def __init__(self, u, manifold, gamma):
        self.u = u
        self.gamma = float(gamma)
        q = manifold.weight(u.grid.nodes(), gamma)
        self.measure_part = q * q * (u.values > 0)
        self.energy_density = grad_sq_field(u) + self.measure_part

    def density(self, x0, r):
        u = self.u
        if r < 4.0 * u.h:
            raise QuadratureDomainError("scale below 4h is unreliable")
        x0 = np.asarray(x0, dtype=float)
        bulk = integrate_ball(u, x0, r, integrand=self.energy_density)
        boundary = integrate_sphere(u, x0, r, transform=np.square)
        p = 2.0 * self.gamma + 2.0
        return bulk / r**p - (self.gamma + 1.0) * boundary / r ** (p + 1.0)

    def measure_density(self, x0, r):
        """r^-(2 gamma + 2) of the weighted positivity measure alone; the
        small-scale limit of the density at degenerate-weight points."""
        return (integrate_ball(self.u, x0, r, integrand=self.measure_part)
                / r ** (2 * self.gamma + 2))


def weiss_density(u, manifold, gamma, x0, r):
    return WeissCalculator(u, manifold, gamma).density(x0, r)


def weiss_profile(u, manifold, gamma, x0, scales=None, r_max=None):
    """Density profile over dyadic scales (decreasing, down to 8h)."""
    calc = WeissCalculator(u, manifold, gamma)
    if scales is None:
        if r_max is None:
            raise ValueError("give either scales or r_max")
        scales = []
        r = float(r_max)
        while r >= 8.0 * u.h:
            scales.append(r)
            r /= 2.0
    scales = np.asarray(sorted(scales, reverse=True), dtype=float)
    values = np.array([calc.density(x0, r) for r in scales])
    seminorm = manifold.holder_seminorm(1.0)
    allowances = 16.0 * (gamma / manifold.alpha) * seminorm * scales**manifold.alpha
    return WeissProfile(point=tuple(np.asarray(x0, float)), scales=scales,
                        values=values, allowances=allowances)


def monotonicity_audit(profile, seminorm, alpha, gamma, tolerance):
    """Pairs r < R with W(r) > W(R) + 16 (gamma/alpha) seminorm R^alpha + tol."""
    out = []
    s = profile.scales
    w = profile.values
    for big in range(len(s)):
        for small in range(big + 1, len(s)):
            allowance = 16.0 * (gamma / alpha) * seminorm * s[big] ** alpha
            if w[small] > w[big] + allowance + tolerance:
                out.append(MonotonicityViolation(
                    r=float(s[small]), R=float(s[big]),
                    w_r=float(w[small]), w_R=float(w[big]),
                    allowance=float(allowance)))
    return out


def homogeneity_deficit(u, x0, gamma, r1, r2, mask_interface=True):
    """Shell quadrature of int s^-(4+2gamma) int_{dB_s} (grad u . (x-x0)
    - (1+gamma) u)^2 dsigma ds over the annulus [r1, r2].

    Vanishes exactly on (1+gamma)-homogeneous fields.  Circle samples whose
    bilinear stencil mixes positive and zero nodes are dropped when
    ``mask_interface`` is set: the true integrand vanishes from both sides
    of the positivity interface while the mixed stencils alias the gradient
    jump, so dropping them removes an O(h/s) artificial floor.
    """
    if not r1 < r2:
        raise ValueError("need r1 < r2")
    h = u.h
    if r1 < 2 * h:
        raise QuadratureDomainError("inner radius below 2h")
    if not u.grid.contains_ball(x0, r2, margin=h):
        raise QuadratureDomainError("annulus exceeds grid")
    x0 = np.asarray(x0, dtype=float)
    gx, gy = np.gradient(u.values, h, edge_order=2)
    gxf = _as_field(u, gx)
    gyf = _as_field(u, gy)
    chi = _as_field(u, (u.values > 0).astype(float))
    total = 0.0
    m = max(int(np.ceil((r2 - r1) / h)), 2)
    ds = (r2 - r1) / m
    for k in range(m):
        s = r1 + (k + 0.5) * ds
        pts = sphere_points(x0, s, sphere_sample_count(h, s))
        gxs = interpolate(gxf, pts)
        gys = interpolate(gyf, pts)
        us = interpolate(u, pts)
        resid = (gxs * (pts[..., 0] - x0[0]) + gys * (pts[..., 1] - x0[1])
                 - (1.0 + gamma) * us) ** 2
        if mask_interface:
            ind = interpolate(chi, pts)
            keep = (ind <= 1e-9) | (ind >= 1.0 - 1e-9)
            resid = resid[keep]
        shell = np.sum(resid) * (2.0 * np.pi * s / len(pts))
        total += s ** (-(4.0 + 2.0 * gamma)) * shell * ds
    return float(total)


def _as_field(u, values):
    from .field import ScalarField
    out = ScalarField.__new__(ScalarField)
    out.grid = u.grid
    out.values = values
    out.dirichlet = u.dirichlet
    return out


def volume_density(u, x, radii, theta_cut=THETA_CUT):
    """Positivity-volume fractions Theta(r) with a two-scale extrapolated
    limit and a degeneracy hint."""
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    if np.any(radii < 4.0 * u.h):
        raise QuadratureDomainError("radii below 4h are unreliable")
    vals = np.array([positivity_volume(u, x, r) / (np.pi * r * r) for r in radii])
    limit = float(np.mean(vals[-2:])) if len(vals) >= 2 else float(vals[-1])
    hint = "degenerate" if limit < theta_cut else "non-degenerate"
    return DensityEstimate(point=tuple(np.asarray(x, float)), radii=radii,
                           values=vals, limit=limit, hint=hint)


@dataclass
class ProbeEntry:
    point: tuple
    estimate: float
    classification: str


@dataclass
class ProbeReport:
    entries: list
    gap: float
    split: float


def energy_lower_bound_probe(u, manifold, gamma, points):
    """Small-scale density estimates at candidate interface points on the
    weight manifold, split into a near-zero cluster and a bounded-below
    cluster at the largest empirical gap.

    Points whose smallest ball is entirely positive are filtered out as
    non-interface input.
    """
    calc = WeissCalculator(u, manifold, gamma)
    h = u.h
    entries = []
    estimates = []
    for x in points:
        x = np.asarray(x, dtype=float)
        filled = positivity_volume(u, x, 8 * h) / (np.pi * (8 * h) ** 2)
        if filled > 0.999:
            entries.append(ProbeEntry(tuple(x), np.nan, "not-interface"))
            continue
        w8 = calc.density(x, 8 * h)
        w16 = calc.density(x, 16 * h)
        est = 2.0 * w8 - w16        # linear extrapolation toward scale zero
        entries.append(ProbeEntry(tuple(x), float(est), ""))
        estimates.append(float(est))
    if not estimates:
        return ProbeReport(entries=entries, gap=0.0, split=0.0)
    est = np.sort(np.asarray(estimates))
    if len(est) == 1:
        gap, split = 0.0, est[0] / 2.0
    else:
        gaps = np.diff(est)
        k = int(np.argmax(gaps))
        gap = float(gaps[k])
        split = float(0.5 * (est[k] + est[k + 1]))
    for e in entries:
        if e.classification == "":
            e.classification = ("degenerate" if e.estimate < split
                                else "non-degenerate")
    return ProbeReport(entries=entries, gap=gap, split=split)
