import numpy as np
import pytest

from degenfb.field import (BoundaryNodeError, Grid, QuadratureDomainError,
                           ScalarField, dump_field, gradient, grad_sq_field,
                           integrate_ball, integrate_sphere, interpolate,
                           laplacian, load_field, mean_sphere,
                           positivity_volume)


def grid_field(fn, extent=1.0, n=257):
    g = Grid.centered(extent, n)
    return ScalarField(g, fn(g.nodes()))


def test_field_validation():
    g = Grid.centered(1.0, 17)
    with pytest.raises(ValueError):
        ScalarField(g, -np.ones(g.shape))          # u >= 0 required
    with pytest.raises(ValueError):
        ScalarField(g, np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        Grid(origin=(0, 0), h=-1.0, shape=(4, 4))


def test_gradient_laplacian_on_quadratics():
    u = grid_field(lambda p: p[..., 0] ** 2, n=65)
    i, j = u.grid.index_of((0.0, 0.0))
    assert np.allclose(gradient(u, (i, j)), [0.0, 0.0], atol=1e-12)
    assert laplacian(u, (i, j)) == pytest.approx(2.0, abs=1e-9)
    const = grid_field(lambda p: np.ones(p.shape[:-1]), n=17)
    ic, jc = const.grid.index_of((0.1, 0.1))
    assert np.allclose(gradient(const, (ic, jc)), 0.0)
    with pytest.raises(BoundaryNodeError):
        gradient(const, (0, 3))


def test_laplacian_refinement_on_smooth_positive_field():
    # harmonic away from the corner: laplacian -> 0 at rate ~ h^2
    from degenfb.blowup import sector_solution
    model = sector_solution(0.5)
    errs = []
    for n in (65, 129, 257):
        u = model.field(Grid.centered(1.0, n))
        i, j = u.grid.index_of((-0.31, -0.52))   # inside the wedge
        errs.append(abs(laplacian(u, (i, j))))
    assert errs[2] < errs[0]
    assert errs[2] < 2e-2


def test_ball_quadrature_constants_and_odd():
    one = grid_field(lambda p: np.ones(p.shape[:-1]))
    assert integrate_ball(one, (0.0, 0.0), 0.5) == pytest.approx(
        np.pi * 0.25, abs=1e-3)
    odd = grid_field(lambda p: np.clip(p[..., 0], 0, None))
    plus = integrate_ball(odd, (0.0, 0.0), 0.6)
    # x_+ integrates to the half-ball moment: 2/3 r^3
    assert plus == pytest.approx(2.0 / 3.0 * 0.6**3, rel=1e-3)


def test_ball_quadrature_random_centers(rng):
    one = grid_field(lambda p: np.ones(p.shape[:-1]))
    for _ in range(12):
        r = rng.uniform(0.1, 0.4)
        c = rng.uniform(-0.5, 0.5, size=2)
        v = integrate_ball(one, c, r)
        assert abs(v - np.pi * r * r) <= 2 * one.h / r * (np.pi * r * r)


def test_sphere_quadrature():
    one = grid_field(lambda p: np.ones(p.shape[:-1]))
    assert integrate_sphere(one, (0.0, 0.0), 0.5) == pytest.approx(
        np.pi, abs=1e-9)
    rad2 = grid_field(lambda p: p[..., 0] ** 2 + p[..., 1] ** 2)
    assert mean_sphere(rad2, (0.0, 0.0), 0.7) == pytest.approx(0.49, abs=1e-4)
    with pytest.raises(QuadratureDomainError):
        integrate_sphere(one, (0.9, 0.0), 0.2)


def test_positivity_volume_sector_fraction():
    from degenfb.blowup import sector_solution
    u = sector_solution(0.5).field(Grid.centered(1.2, 257))
    area = positivity_volume(u, (0.0, 0.0), 1.0)
    assert area == pytest.approx(np.pi / 3.0, abs=0.02)
    zero = grid_field(lambda p: np.zeros(p.shape[:-1]), n=33)
    assert positivity_volume(zero, (0.0, 0.0), 0.3) == 0.0


def test_grad_sq_field_matches_edge_energy():
    u = grid_field(lambda p: np.clip(p[..., 0], 0, None), n=129)
    gsq = grad_sq_field(u)
    interior = gsq[1:-1, 1:-1]
    # slope 1 on the positive side, 0 on the negative side
    assert interior.max() == pytest.approx(1.0, abs=1e-9)
    assert interior.min() == pytest.approx(0.0, abs=1e-12)


def test_interpolation_exact_for_bilinear():
    u = grid_field(lambda p: 2.0 + p[..., 0] + 3 * np.clip(p[..., 1], 0, None),
                   n=33)
    pts = np.array([[0.13, 0.21], [-0.4, 0.37], [0.05, -0.61]])
    expect = 2.0 + pts[:, 0] + 3 * np.clip(pts[:, 1], 0, None)
    # exact wherever the field is bilinear on the containing cell
    assert np.allclose(interpolate(u, pts)[[0, 1]], expect[[0, 1]], atol=1e-9)


def test_dump_round_trip_bit_exact(tmp_path, rng):
    g = Grid.centered(1.3, 33)
    vals = rng.uniform(0.0, 2.0, size=g.shape)
    vals[5, 7] = 1.0 / 3.0
    u = ScalarField(g, vals)
    path = tmp_path / "field.csv"
    dump_field(u, path)
    v = load_field(path)
    assert v.grid == u.grid
    assert np.array_equal(v.values, u.values)
    dump_field(v, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
