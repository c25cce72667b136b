"""Low-dimensional submanifolds and the degenerate weight Q = dist(.,Gamma)^gamma.

The weight vanishes on a submanifold Gamma of the plane.  Three analytic
families cover every regime needed by the diagnostics: a horizontal line
(k = 1, flat), a single point (k = 0), and a power-series graph curve
(k = 1, curved).  All distance queries, nearest-point projections, Hoelder
seminorms and tubular-neighborhood volumes live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

AXIS_LINE = "axis-line"
SINGLE_POINT = "single-point"
GRAPH_CURVE = "graph-curve"

_KINDS = (AXIS_LINE, SINGLE_POINT, GRAPH_CURVE)

# golden-section refinement target for nearest-parameter searches
_GOLDEN_TOL = 1e-10
# two parameter minima closer than this in distance count as a tie
_TIE_TOL = 1e-8


@dataclass(frozen=True)
class ProjectionResult:
    """Nearest point on Gamma, the distance, and the unit normal direction.

    ``unique`` is False when two distinct parameter minima realize the same
    distance within the tie tolerance.  On-manifold queries (distance 0)
    report a zero normal; the gradient of the distance is undefined there.
    """

    point: np.ndarray
    distance: float
    normal: np.ndarray
    unique: bool


class Manifold:
    """A k-dimensional weight-manifold Gamma in the plane (k = 0 or 1).

    Parameters
    ----------
    kind : str
        One of ``axis-line``, ``single-point``, ``graph-curve``.
    anchor : pair of floats
        Point on Gamma.  Lines run horizontally through the anchor; graph
        curves are y = anchor_y + f(t), x = anchor_x + t.
    alpha : float in (0, 1]
        Hoelder exponent of Df.
    coeffs : list of (power, coefficient)
        Graph function f(t) = sum c * |t|^p (even extension for fractional
        powers).  Powers must be > 1 so that Df(0) exists and Df is
        C^{0,alpha} near the anchor.
    bound : float
        Declared seminorm bound M; the sampled seminorm on the unit chart
        must not exceed it.
    """

    def __init__(self, kind, anchor=(0.0, 0.0), alpha=1.0, coeffs=(),
                 bound=0.0, param_halfwidth=4.0, samples=4097):
        if kind not in _KINDS:
            raise ValueError(f"unknown manifold kind {kind!r}")
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        self.kind = kind
        self.anchor = np.asarray(anchor, dtype=float)
        self.alpha = float(alpha)
        self.coeffs = [(float(p), float(c)) for p, c in coeffs]
        self.bound = float(bound)
        self.param_halfwidth = float(param_halfwidth)
        self._samples = int(samples)
        self.k = 0 if kind == SINGLE_POINT else 1
        if kind == GRAPH_CURVE:
            for p, _ in self.coeffs:
                if p <= 1.0:
                    raise ValueError("graph powers must exceed 1 for a C^1 chart")
            if not np.isfinite(self._f(0.0)) or not np.isfinite(self._df(0.0)):
                raise ValueError("graph value/derivative at anchor not finite")
            sem = self.holder_seminorm(1.0)
            if self.bound and sem > self.bound * (1 + 1e-9):
                raise ValueError(
                    f"sampled seminorm {sem:.6g} exceeds declared bound {self.bound:.6g}")
        self._tree = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def axis_line(cls, y=0.0, anchor_x=0.0, alpha=1.0):
        return cls(AXIS_LINE, anchor=(anchor_x, y), alpha=alpha, bound=0.0)

    @classmethod
    def point(cls, at=(0.0, 0.0), alpha=1.0):
        return cls(SINGLE_POINT, anchor=at, alpha=alpha, bound=0.0)

    @classmethod
    def graph(cls, coeffs, alpha=1.0, anchor=(0.0, 0.0), bound=None, **kw):
        m = cls(GRAPH_CURVE, anchor=anchor, alpha=alpha, coeffs=coeffs,
                bound=bound if bound is not None else np.inf, **kw)
        if bound is None:
            # default declared bound: the sampled seminorm on the unit chart
            m.bound = m.holder_seminorm(1.0)
        return m

    # -- graph helpers -----------------------------------------------------

    def _f(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p, c in self.coeffs:
            out = out + c * np.abs(t) ** p
        return out

    def _df(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p, c in self.coeffs:
            out = out + c * p * np.sign(t) * np.abs(t) ** (p - 1.0)
        return out

    def curve_points(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([self.anchor[0] + t, self.anchor[1] + self._f(t)], axis=-1)

    def _kdtree(self):
        if self._tree is None:
            t = np.linspace(-self.param_halfwidth, self.param_halfwidth, self._samples)
            self._tree = (cKDTree(self.curve_points(t)), t)
        return self._tree

    # -- distance and weight -----------------------------------------------

    def distance(self, pts):
        """Euclidean distance to Gamma, vectorized over points (..., 2)."""
        pts = np.asarray(pts, dtype=float)
        if self.kind == AXIS_LINE:
            return np.abs(pts[..., 1] - self.anchor[1])
        if self.kind == SINGLE_POINT:
            return np.hypot(pts[..., 0] - self.anchor[0], pts[..., 1] - self.anchor[1])
        tree, _ = self._kdtree()
        flat = pts.reshape(-1, 2)
        d, _ = tree.query(flat, k=1)
        return d.reshape(pts.shape[:-1])

    def weight(self, pts, gamma):
        """Q(x) = dist(x, Gamma)^gamma."""
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        return self.distance(pts) ** gamma

    # -- projection ----------------------------------------------------------

    def project(self, x):
        """Nearest-point projection of a single point onto Gamma."""
        x = np.asarray(x, dtype=float)
        if self.kind == AXIS_LINE:
            p = np.array([x[0], self.anchor[1]])
            d = abs(x[1] - self.anchor[1])
            n = np.array([0.0, np.sign(x[1] - self.anchor[1])]) if d > 0 else np.zeros(2)
            return ProjectionResult(p, d, n, True)
        if self.kind == SINGLE_POINT:
            p = self.anchor.copy()
            d = float(np.hypot(*(x - p)))
            n = (x - p) / d if d > 0 else np.zeros(2)
            return ProjectionResult(p, d, n, True)
        return self._project_curve(x)

    def _project_curve(self, x):
        T = self.param_halfwidth
        t = np.linspace(-T, T, 1024)
        d2 = self._dist2_curve(x, t)
        # every interior local minimum plus the endpoints is a candidate
        idx = [0, len(t) - 1]
        mid = np.nonzero((d2[1:-1] <= d2[:-2]) & (d2[1:-1] <= d2[2:]))[0] + 1
        idx.extend(mid.tolist())
        refined = []
        for i in sorted(set(idx)):
            lo = t[max(i - 1, 0)]
            hi = t[min(i + 1, len(t) - 1)]
            tb = self._golden(x, lo, hi)
            refined.append((self._dist2_curve(x, tb), tb))
        refined.sort()
        best_d2, best_t = refined[0]
        unique = True
        for d2o, to in refined[1:]:
            if abs(to - best_t) > 1e-6 and np.sqrt(d2o) - np.sqrt(best_d2) <= _TIE_TOL:
                unique = False
                break
        p = self.curve_points(best_t)
        d = float(np.sqrt(best_d2))
        n = (x - p) / d if d > 0 else np.zeros(2)
        return ProjectionResult(p, d, n, unique)

    def _dist2_curve(self, x, t):
        p = self.curve_points(t)
        return (p[..., 0] - x[0]) ** 2 + (p[..., 1] - x[1]) ** 2

    def _golden(self, x, lo, hi):
        invphi = (np.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc = self._dist2_curve(x, c)
        fd = self._dist2_curve(x, d)
        while abs(b - a) > _GOLDEN_TOL:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = self._dist2_curve(x, c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = self._dist2_curve(x, d)
        return 0.5 * (a + b)

    # -- seminorm, tangent frame, dilation ----------------------------------

    def holder_seminorm(self, window):
        """sup |Df(y) - Df(z)| / |y - z|^alpha over sampled pairs, |t| <= window."""
        if window <= 0:
            raise ValueError("window must be positive")
        if self.kind != GRAPH_CURVE:
            return 0.0
        t = np.linspace(-window, window, 2049)
        df = self._df(t)
        best = 0.0
        step = 256
        for i0 in range(0, len(t), step):
            block = slice(i0, min(i0 + step, len(t)))
            dt = np.abs(t[block, None] - t[None, :])
            num = np.abs(df[block, None] - df[None, :])
            mask = dt > 0
            r = np.where(mask, num / np.where(mask, dt, 1.0) ** self.alpha, 0.0)
            best = max(best, float(r.max()))
        return best

    def tangent(self, t=0.0):
        if self.kind == AXIS_LINE:
            return np.array([1.0, 0.0])
        if self.kind == SINGLE_POINT:
            raise ValueError("a point has no tangent direction")
        v = np.array([1.0, float(self._df(t))])
        return v / np.hypot(*v)

    def normal_at(self, t=0.0):
        tx, ty = self.tangent(t)
        return np.array([-ty, tx])

    def dilated(self, r):
        """The rescaled manifold (Gamma - anchor) / r, anchored at the origin.

        Only dilation about the anchor is supported; the analytic graph
        family is closed under it (coefficients pick up a factor r^{p-1}).
        """
        if r <= 0:
            raise ValueError("scale must be positive")
        if self.kind == AXIS_LINE:
            return Manifold.axis_line(y=0.0, alpha=self.alpha)
        if self.kind == SINGLE_POINT:
            return Manifold.point(at=(0.0, 0.0), alpha=self.alpha)
        coeffs = [(p, c * r ** (p - 1.0)) for p, c in self.coeffs]
        return Manifold(GRAPH_CURVE, anchor=(0.0, 0.0), alpha=self.alpha,
                        coeffs=coeffs, bound=np.inf,
                        param_halfwidth=self.param_halfwidth / min(r, 1.0),
                        samples=self._samples)

    # -- tubular neighborhood ------------------------------------------------

    def tube_volume(self, delta, center, radius):
        """Lattice-counted area of B_delta(Gamma) intersected with a ball.

        Center-in counting on a lattice fine enough to resolve delta; only
        scaling exponents are asserted downstream, so sub-cell accuracy is
        not pursued.
        """
        if delta <= 0 or radius <= 0:
            raise ValueError("delta and radius must be positive")
        n = int(min(1025, max(129, np.ceil(8.0 * radius / delta) + 1)))
        cx, cy = float(center[0]), float(center[1])
        xs = np.linspace(cx - radius, cx + radius, n)
        ys = np.linspace(cy - radius, cy + radius, n)
        s = xs[1] - xs[0]
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
        inside = (X - cx) ** 2 + (Y - cy) ** 2 <= radius**2
        near = self.distance(pts) <= delta
        return float(np.count_nonzero(inside & near)) * s * s

    def describe(self):
        return {
            "kind": self.kind,
            "k": self.k,
            "alpha": self.alpha,
            "anchor": [float(self.anchor[0]), float(self.anchor[1])],
            "coeffs": [[p, c] for p, c in self.coeffs],
            "bound": float(self.bound),
        }


def tube_exponent_fit(manifold, center, radius, levels=range(2, 7)):
    """Log-log slope of tube volume against dyadic widths 2^-i.

    For a k-dimensional Gamma the volume scales like delta^{n-k}; the fitted
    slope estimates n - k.
    """
    deltas = np.array([2.0 ** (-i) for i in levels])
    vols = np.array([manifold.tube_volume(d, center, radius) for d in deltas])
    keep = vols > 0
    slope, _ = np.polyfit(np.log(deltas[keep]), np.log(vols[keep]), 1)
    return float(slope), deltas, vols
