import numpy as np
import pytest

from degenfb.geometry import Manifold, tube_exponent_fit

# frozen oracle: scipy bounded minimization of |x - (t, 0.05 t^2)| over a
# dense bracket, for x = (1.0, 0.2); see tests/oracles.py
DIST_CURVE_ORACLE = 0.14924444286278266
# frozen oracle: dense-pair sampling of |Df(y)-Df(z)|/|y-z|^0.5 for
# f = |t|^1.5 on [-1, 1]; the sup is attained straddling the origin (3/sqrt2)
SEMINORM_T15_ORACLE = 2.1213203435596433


def test_distance_and_weight_axis():
    man = Manifold.axis_line()
    d = man.distance(np.array([0.3, 0.4]))
    assert d == pytest.approx(0.4)
    assert man.weight(np.array([0.3, 0.4]), 0.5) == pytest.approx(np.sqrt(0.4))


def test_weight_vanishes_on_manifold_only():
    man = Manifold.axis_line()
    assert man.weight(np.array([1.0, 0.0]), 0.7) == 0.0
    assert man.weight(np.array([1.0, 1e-8]), 0.7) > 0.0


def test_distance_curve_matches_refinement_oracle():
    man = Manifold.graph([(2.0, 0.05)])
    d = man.project(np.array([1.0, 0.2])).distance
    assert d == pytest.approx(DIST_CURVE_ORACLE, abs=1e-9)
    # the lattice distance used for whole-grid weights is close too
    assert man.distance(np.array([1.0, 0.2])) == pytest.approx(
        DIST_CURVE_ORACLE, abs=1e-5)


def test_project_axis_and_point():
    man = Manifold.axis_line()
    p = man.project(np.array([0.3, 0.4]))
    assert np.allclose(p.point, [0.3, 0.0])
    assert np.allclose(p.normal, [0.0, 1.0])
    assert p.unique

    pt = Manifold.point()
    q = pt.project(np.array([0.0, 1.0]))
    assert np.allclose(q.point, [0.0, 0.0])
    assert q.distance == pytest.approx(1.0)


def test_project_symmetric_tie_reported():
    # x on the symmetry axis above a steep even curve: two mirrored minima
    man = Manifold.graph([(2.0, 1.0)], bound=None, param_halfwidth=2.0)
    res = man.project(np.array([0.0, 0.8]))
    assert not res.unique
    assert res.distance < 0.8


def test_holder_seminorm_line_and_parabola():
    assert Manifold.axis_line().holder_seminorm(1.0) == 0.0
    man = Manifold.graph([(2.0, 0.05)])
    assert man.holder_seminorm(1.0) == pytest.approx(0.1, rel=1e-3)


def test_holder_seminorm_fractional_power():
    man = Manifold.graph([(1.5, 1.0)], alpha=0.5, bound=None)
    assert man.holder_seminorm(1.0) == pytest.approx(SEMINORM_T15_ORACLE,
                                                     rel=2e-3)


def test_seminorm_bound_enforced():
    with pytest.raises(ValueError):
        Manifold.graph([(2.0, 0.05)], bound=0.05)


def test_tube_volume_strip_and_disk():
    line = Manifold.axis_line()
    v = line.tube_volume(0.25, (0.0, 0.0), 1.0)
    assert v <= 4 * 0.25 * 1.02   # strip bound, one-cell slack
    assert v > 0.8                # the strip fills most of the bound
    pt = Manifold.point()
    v2 = pt.tube_volume(0.1, (0.0, 0.0), 1.0)
    assert v2 == pytest.approx(np.pi * 0.01, rel=0.05)


def test_tube_exponent_fit_curved():
    man = Manifold.graph([(2.0, 0.05)])
    slope, _, _ = tube_exponent_fit(man, (0.0, 0.0), 1.0)
    assert slope == pytest.approx(1.0, abs=0.1)   # n - k with k = 1


def test_distance_is_lipschitz(rng):
    man = Manifold.graph([(2.0, 0.05), (3.0, 0.02)])
    pts = rng.uniform(-1.5, 1.5, size=(200, 2))
    d = man.distance(pts)
    for _ in range(20):
        i, j = rng.integers(0, len(pts), size=2)
        gap = np.hypot(*(pts[i] - pts[j]))
        assert abs(d[i] - d[j]) <= gap + 1e-9


def test_normal_drift_bound(rng):
    # (pi(x) - x0) . normal <= 8 [Gamma]_alpha r^{1+alpha} for x0 on the
    # curve: the along-manifold displacement of the projection is nearly
    # orthogonal to the normal at the projected point
    man = Manifold.graph([(2.0, 0.05)])
    sem = man.holder_seminorm(1.0)
    x0 = man.curve_points(0.0)
    r0 = 0.75
    pts = x0 + rng.uniform(-r0 / 1.5, r0 / 1.5, size=(120, 2))
    for x in pts:
        res = man.project(x)
        if res.distance == 0:
            continue
        drift = abs(float(np.dot(res.point - x0, res.normal)))
        assert drift <= 8.0 * sem * r0 ** (1.0 + man.alpha) + 1e-6


def test_graph_containment():
    # |f(y)| <= [Gamma]_alpha |y|^{1+alpha} for curves anchored with Df = 0
    man = Manifold.graph([(2.0, 0.05)])
    sem = man.holder_seminorm(1.0)
    ys = np.linspace(-1.0, 1.0, 101)
    f = man.curve_points(ys)[:, 1]
    assert np.all(np.abs(f) <= sem * np.abs(ys) ** 2 + 1e-12)


def test_dilated_seminorm_rescaling_law():
    man = Manifold.graph([(2.0, 0.05)])
    base = man.holder_seminorm(1.0)
    for r in (0.5, 0.25):
        scaled = man.dilated(r).holder_seminorm(1.0)
        assert scaled == pytest.approx(base * r**man.alpha, rel=1e-6)
    frac = Manifold.graph([(1.5, 0.3)], alpha=0.5, bound=None)
    base = frac.holder_seminorm(1.0)
    scaled = frac.dilated(0.25).holder_seminorm(1.0)
    assert scaled == pytest.approx(base * 0.25**0.5, rel=1e-6)
