"""Rescalings, homogeneous sector models, and symmetry deficits.

Rescaled fields live on a fixed 129^2 reference lattice covering the unit
ball so that L2(B_1) distances are comparable across points and scales.  Two
normalizations are supported: power-law division by r^{1+gamma} and division
by the L2 norm of the trace on the unit circle.

The deficit of a trace-normalized field measures its L2(B_1) distance from
the model classes that can arise as fine-scale limits:

* j = 0: the (1+gamma)-homogeneous fields rho^{1+gamma} g(theta), with the
  optimal angular profile g recovered by weighted least squares in a dense
  periodic piecewise-linear basis (a closed-form radial projection),
* j = 1: two-sided power profiles a (x.e)_+^{1+gamma} + b (x.e)_-^{1+gamma}
  with a, b >= 0, swept over a dense direction grid with one golden-section
  refinement, each comparison trace-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gamma as gamma_fn

from .field import (Grid, ScalarField, ball_window, integrate_sphere,
                    interpolate, sphere_points)

REFERENCE_N = 129
N_DIRECTIONS = 720
_ANGULAR_KNOTS = 720


class VanishingTraceError(ValueError):
    """Trace normalization failed: the field vanishes on the circle."""


@dataclass
class SymmetryDeficit:
    j: int
    deficit: float
    direction: float | None = None
    coefficients: tuple | None = None


@dataclass
class BlowupSequence:
    scales: list
    fields: list
    distances: list
    converged: bool
    truncated: bool


class ModelSolution:
    """Homogeneous sector profile amp * rho^{1+gamma} sin((1+gamma) theta').

    The profile is supported on the sector theta' in [0, pi/(1+gamma)]
    measured from ``orientation`` and vanishes elsewhere.
    """

    def __init__(self, gamma, orientation=0.0, amplitude=1.0):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)
        self.orientation = float(orientation)
        self.amplitude = float(amplitude)

    @property
    def aperture(self):
        return np.pi / (1.0 + self.gamma)

    def evaluate(self, pts):
        pts = np.asarray(pts, dtype=float)
        x = pts[..., 0]
        y = pts[..., 1]
        rho = np.hypot(x, y)
        rel = np.mod(np.arctan2(y, x) - self.orientation, 2.0 * np.pi)
        inside = rel <= self.aperture
        vals = np.where(
            inside,
            self.amplitude * rho ** (1.0 + self.gamma)
            * np.sin((1.0 + self.gamma) * rel),
            0.0,
        )
        return np.clip(vals, 0.0, None)

    def field(self, grid, dirichlet=None):
        return ScalarField(grid, self.evaluate(grid.nodes()), dirichlet)


def stokes_orientation(gamma):
    """First sector edge for a wedge hanging symmetrically below the x-axis."""
    return -np.pi / 2.0 - np.pi / (2.0 * (1.0 + gamma))


def stokes_amplitude(gamma):
    """Amplitude matching |grad u| = Q on both free rays of the wedge.

    Each edge of the symmetric wedge sits at angle aperture/2 from the
    downward vertical, so its distance to the x-axis is rho*cos(aperture/2).
    """
    aperture = np.pi / (1.0 + gamma)
    return np.cos(aperture / 2.0) ** gamma / (1.0 + gamma)


def sector_solution(gamma, orientation=None, amplitude=None):
    """The Stokes-oriented sector model; orientation/amplitude default to the
    symmetric free-ray-consistent choice."""
    if orientation is None:
        orientation = stokes_orientation(gamma)
    if amplitude is None:
        amplitude = stokes_amplitude(gamma)
    return ModelSolution(gamma, orientation, amplitude)


# ---------------------------------------------------------------------------
# reference lattice
# ---------------------------------------------------------------------------

class _Reference:
    def __init__(self, n=REFERENCE_N):
        self.grid = Grid.centered(1.0, n)
        nodes = self.grid.nodes()
        self.X = nodes[..., 0]
        self.Y = nodes[..., 1]
        self.rho = np.hypot(self.X, self.Y)
        self.theta = np.mod(np.arctan2(self.Y, self.X), 2.0 * np.pi)
        window, frac = ball_window(self.grid, (0.0, 0.0), 1.0)
        w = np.zeros(self.grid.shape)
        w[window] = frac
        self.weights = w * self.grid.h**2     # L2(B_1) quadrature weights
        self.wflat = self.weights.ravel()
        self.xflat = self.X.ravel()
        self.yflat = self.Y.ravel()

    def inner(self, f, g):
        return float(np.sum(self.weights * f * g))

    def norm(self, f):
        return float(np.sqrt(max(self.inner(f, f), 0.0)))


_REF = {}


def reference(n=REFERENCE_N):
    if n not in _REF:
        _REF[n] = _Reference(n)
    return _REF[n]


def ball_distance(f, g, n=REFERENCE_N):
    """L2(B_1) distance between two reference-lattice value arrays."""
    return reference(n).norm(np.asarray(f, float) - np.asarray(g, float))


def trace_norm_squared(field, x, r):
    """Integral of u(x + r y)^2 over the unit circle, via the source grid."""
    return integrate_sphere(field, x, r, transform=np.square) / r


# profile caches keyed by gamma (float32 tables of direction profiles)
_PROFILE_CACHE = {}


def _angular_design(ref):
    """Sparse design matrix of the periodic piecewise-linear basis at the
    reference node angles."""
    K = _ANGULAR_KNOTS
    pos = ref.theta.ravel() * K / (2.0 * np.pi)
    k0 = np.floor(pos).astype(int) % K
    s = pos - np.floor(pos)
    rows = np.repeat(np.arange(pos.size), 2)
    cols = np.stack([k0, (k0 + 1) % K], axis=1).ravel()
    vals = np.stack([1.0 - s, s], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(pos.size, K))


def rescale(field, x, r, gamma, normalization="trace", n=REFERENCE_N):
    """Resample u around x at scale r onto the reference lattice.

    power-law mode divides by r^{1+gamma}; trace mode divides by the circle
    L2 norm of the rescaled field and raises VanishingTraceError when that
    norm is numerically zero.  Corner samples outside B_1 are clamped to the
    source hull; only the content inside B_1 is meaningful.
    """
    if not field.grid.contains_ball(x, r, margin=field.h):
        raise ValueError("rescaling ball (plus interpolation support) exceeds grid")
    ref = reference(n)
    pts = np.stack([x[0] + r * ref.X, x[1] + r * ref.Y], axis=-1)
    vals = interpolate(field, pts)
    if normalization == "power":
        scale = r ** (1.0 + gamma)
    elif normalization == "trace":
        n2 = trace_norm_squared(field, np.asarray(x, float), r)
        floor = (1e-12 * (1.0 + field.max())) ** 2
        if n2 <= floor:
            raise VanishingTraceError(f"vanishing trace at x={tuple(x)}, r={r}")
        scale = float(np.sqrt(n2))
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return ScalarField(ref.grid, np.clip(vals / scale, 0.0, None))


def normalization_ratio(field, x, r, gamma):
    """Ratio of the power-law to the trace normalizer, r^{1+gamma} / |trace|."""
    n2 = trace_norm_squared(field, np.asarray(x, float), r)
    return r ** (1.0 + gamma) / float(np.sqrt(n2)) if n2 > 0 else np.inf


# ---------------------------------------------------------------------------
# symmetry deficits
# ---------------------------------------------------------------------------

def trace_profile_constant(gamma):
    """Circle L2 norm^2 of ((x.e)_+)^{1+gamma}: int cos^{2+2gamma} over a
    half-period, in closed form."""
    return float(np.sqrt(np.pi) * gamma_fn(gamma + 1.5) / gamma_fn(gamma + 2.0))


def _direction_profiles(gamma, n=REFERENCE_N):
    """Per-direction profile tables and their Gram entries.

    The profile values are kept in float32 (two 720 x 16641 tables); the
    Gram entries are accumulated in float64.  Only the most recent gamma is
    retained.
    """
    key = (round(float(gamma), 12), n)
    if key not in _PROFILE_CACHE:
        ref = reference(n)
        psi = np.pi * np.arange(N_DIRECTIONS) / N_DIRECTIONS
        power = 1.0 + gamma
        pp32 = np.empty((N_DIRECTIONS, ref.xflat.size), dtype=np.float32)
        pm32 = np.empty_like(pp32)
        gpp = np.empty(N_DIRECTIONS)
        gpm = np.empty(N_DIRECTIONS)
        w = ref.wflat
        for d in range(N_DIRECTIONS):
            s = np.cos(psi[d]) * ref.xflat + np.sin(psi[d]) * ref.yflat
            pp = np.clip(s, 0.0, None) ** power
            pm = np.clip(-s, 0.0, None) ** power
            gpp[d] = np.dot(w * pp, pp)
            gpm[d] = np.dot(w * pm, pm)
            pp32[d] = pp
            pm32[d] = pm
        _PROFILE_CACHE.clear()
        _PROFILE_CACHE[key] = (psi, pp32, pm32, gpp, gpm)
    return _PROFILE_CACHE[key]


def _clipped_fit(bp, bm, gpp, gpm, fnorm2, ctrace):
    """Distance^2 of F to the trace-normalized nonnegative two-sided profile,
    elementwise over directions.  The cross Gram term vanishes because the
    two one-sided profiles have disjoint supports."""
    a = np.where(gpp > 0, np.clip(bp, 0.0, None) / np.where(gpp > 0, gpp, 1.0), 0.0)
    b = np.where(gpm > 0, np.clip(bm, 0.0, None) / np.where(gpm > 0, gpm, 1.0), 0.0)
    trivial = (a == 0.0) & (b == 0.0)
    a = np.where(trivial & (bp >= bm), 1.0, a)
    b = np.where(trivial & (bp < bm), 1.0, b)
    nrm = np.sqrt((a * a + b * b) * ctrace)
    d2 = (fnorm2 - 2.0 * (a * bp + b * bm) / nrm
          + (a * a * gpp + b * b * gpm) / nrm**2)
    return np.clip(d2, 0.0, None), a, b


def symmetry_deficit(ref_field, j, gamma):
    """L2(B_1) distance of a trace-normalized reference field from the
    j-symmetric homogeneous model class (j in {0, 1} in the plane)."""
    if j not in (0, 1):
        raise ValueError("j must be 0 or 1 in two dimensions")
    ref = reference(ref_field.grid.shape[0])
    F = ref_field.values.ravel()
    w = ref.wflat
    if j == 0:
        A = _angular_design(ref)
        radial = ref.rho.ravel() ** (1.0 + gamma)
        Aw = A.multiply((w * radial * radial)[:, None])
        normal = (A.T @ Aw).tocsc()
        # tiny ridge keeps empty angular bins harmless
        normal += 1e-12 * sp.eye(normal.shape[0], format="csc")
        rhs = A.T @ (w * radial * F)
        g = spla.spsolve(normal, rhs)
        proj = radial * (A @ g)
        deficit = float(np.sqrt(max(np.sum(w * (F - proj) ** 2), 0.0)))
        return SymmetryDeficit(j=0, deficit=deficit)
    psi, pp32, pm32, gpp, gpm = _direction_profiles(gamma, ref_field.grid.shape[0])
    ctrace = trace_profile_constant(gamma)
    Fw = w * F
    fnorm2 = float(np.sum(w * F * F))
    bp = pp32 @ Fw.astype(np.float32)
    bm = pm32 @ Fw.astype(np.float32)
    d2_all, _, _ = _clipped_fit(bp.astype(float), bm.astype(float),
                                gpp, gpm, fnorm2, ctrace)
    power = 1.0 + gamma

    def eval_at(angle):
        s = np.cos(angle) * ref.xflat + np.sin(angle) * ref.yflat
        pp = np.clip(s, 0.0, None) ** power
        pm = np.clip(-s, 0.0, None) ** power
        d2, a, b = _clipped_fit(np.dot(Fw, pp), np.dot(Fw, pm),
                                np.dot(w * pp, pp), np.dot(w * pm, pm),
                                fnorm2, ctrace)
        return float(d2), float(a), float(b)

    best_idx = int(np.argmin(d2_all))
    best = eval_at(psi[best_idx]) + (psi[best_idx],)
    # one golden-section refinement around the best grid direction
    step = np.pi / N_DIRECTIONS
    lo, hi = psi[best_idx] - step, psi[best_idx] + step
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
    fc, fd = eval_at(c), eval_at(d)
    for _ in range(24):
        if fc[0] < fd[0]:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = eval_at(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = eval_at(d)
    for cand, angle in ((fc, c), (fd, d)):
        if cand[0] < best[0]:
            best = cand + (angle,)
    d2, a, b, direction = best
    return SymmetryDeficit(j=1, deficit=float(np.sqrt(max(d2, 0.0))),
                           direction=float(np.mod(direction, np.pi)),
                           coefficients=(float(a), float(b)))


def full_symmetry_deficit(ref_field):
    """Distance of a trace-normalized field from the normalized positive
    constant, the only nontrivial fully-translation-invariant homogeneous
    profile in the plane."""
    ref = reference(ref_field.grid.shape[0])
    c = 1.0 / np.sqrt(2.0 * np.pi)
    return ref.norm(ref_field.values - c)


# ---------------------------------------------------------------------------
# blow-up sequences
# ---------------------------------------------------------------------------

def blowup_sequence(field, x, gamma, scales, tol=1e-3):
    """Trace-normalized rescalings along shrinking scales with successive
    L2(B_1) distances; truncates with a flag if the trace vanishes."""
    scales = list(scales)
    fields = []
    used = []
    truncated = False
    for r in scales:
        try:
            fields.append(rescale(field, x, r, gamma, "trace"))
            used.append(r)
        except VanishingTraceError:
            truncated = True
            break
    dists = [ball_distance(fields[i].values, fields[i + 1].values)
             for i in range(len(fields) - 1)]
    converged = bool(dists) and dists[-1] < tol and not truncated
    return BlowupSequence(scales=used, fields=fields, distances=dists,
                          converged=converged, truncated=truncated)


def align_to_model(ref_field, model_gamma, amplitude=None, n_rot=N_DIRECTIONS):
    """Distance of a reference field to the trace-normalized sector model,
    minimized over rotations.  Returns (distance, best orientation)."""
    ref = reference(ref_field.grid.shape[0])
    aperture = np.pi / (1.0 + model_gamma)
    # trace-normalized sector: amplitude drops out
    norm = np.sqrt(np.pi / (2.0 * (1.0 + model_gamma)))
    best = (np.inf, 0.0)
    for k in range(n_rot):
        ori = 2.0 * np.pi * k / n_rot
        rel = np.mod(ref.theta - ori, 2.0 * np.pi)
        model = np.where(rel <= aperture,
                         ref.rho ** (1.0 + model_gamma)
                         * np.sin((1.0 + model_gamma) * rel) / norm, 0.0)
        d = ref.norm(ref_field.values - np.clip(model, 0.0, None))
        if d < best[0]:
            best = (d, ori)
    return best


def rigidity_probe(field, manifold, gamma, x, scale, fraction=0.5):
    """Pair (Weiss drop over [fraction*scale, scale], 0-symmetry deficit of
    the trace rescaling at ``scale``); small drops should accompany small
    deficits."""
    from .weiss import weiss_density
    drop = (weiss_density(field, manifold, gamma, x, scale)
            - weiss_density(field, manifold, gamma, x, fraction * scale))
    deficit = symmetry_deficit(rescale(field, x, scale, gamma, "trace"), 0, gamma)
    return float(drop), deficit.deficit
