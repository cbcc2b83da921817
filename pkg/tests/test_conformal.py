"""Stereographic machinery, map identities, pullbacks, regions, kernels."""

import math

import numpy as np
import pytest

from logsphere import (
    ExtremizerParams,
    GridFunction,
    LiftedInversion,
    LiftedReflection,
    Moebius,
    PoleError,
    antisymmetry_defect,
    apply_map,
    bubble_to_zeta,
    extremizer,
    in_sigma,
    integrate,
    inverse,
    inverse_stereographic,
    jacobian,
    kernel_l,
    map_from_json,
    map_to_json,
    pullback,
    pullback_to_plane,
    random_coeffs,
    region_of,
    sample_region,
    sphere_area,
    sphere_point,
    stereographic,
    zeta_to_bubble,
)
from logsphere.harmonics import as_evaluable


def random_points(rng, n, k):
    return sphere_point(rng.standard_normal((k, n + 1)))


def example_maps(n):
    # base points sit near the north pole so the lifted inversions stay mild
    xi0 = sphere_point([0.35, 0.9] if n == 1 else [0.5, -0.2, 0.9])
    zeta = np.array([0.25, -0.15, 0.3][: n + 1])
    return [
        LiftedInversion(0.8, xi0),
        LiftedReflection(0.4, np.array([0.6, 0.8][:n] if n == 2 else [1.0])),
        Moebius(zeta),
    ]


def test_stereographic_special_points():
    np.testing.assert_allclose(stereographic(np.zeros(2)), [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(stereographic(np.array([1.0])), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(inverse_stereographic(np.array([0.0, 0.0, 1.0])), 0.0, atol=1e-15)
    np.testing.assert_allclose(
        inverse_stereographic(np.array([1.0, 0.0, 0.0])), [1.0, 0.0], atol=1e-15
    )


def test_stereographic_roundtrip(rng):
    for n in (1, 2):
        x = 3.0 * rng.standard_normal((40, n))
        np.testing.assert_allclose(inverse_stereographic(stereographic(x)), x, atol=1e-12)


def test_south_pole_rejected():
    south = np.array([0.0, 0.0, -1.0])
    with pytest.raises(PoleError):
        inverse_stereographic(south)
    with pytest.raises(PoleError):
        inverse_stereographic(np.array([1e-8, 0.0, -1.0 + 1e-15]))


def test_reflection_fixes_its_plane():
    psi = LiftedReflection(0.0, np.array([0.0, 1.0]))
    fixed = stereographic(np.array([0.7, 0.0]))  # x.e = 0
    np.testing.assert_allclose(apply_map(psi, fixed), fixed, atol=1e-12)


def test_inversion_fixes_its_sphere():
    xi0 = sphere_point([0.3, 0.1, 0.95])
    lam = 0.85
    phi = LiftedInversion(lam, xi0)
    x0 = inverse_stereographic(xi0)
    on_sphere = stereographic(x0 + lam * np.array([1.0, 0.0]))
    np.testing.assert_allclose(apply_map(phi, on_sphere), on_sphere, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_involution(rng, n):
    pts = random_points(rng, n, 100)
    for phi in example_maps(n)[:2]:  # inversion and reflection variants
        assert np.abs(apply_map(phi, apply_map(phi, pts)) - pts).max() < 1e-10
    moeb = example_maps(n)[2]
    back = apply_map(inverse(moeb), apply_map(moeb, pts))
    assert np.abs(back - pts).max() < 1e-10


def test_pole_inputs_rejected():
    phi = LiftedInversion(0.8, sphere_point([0.5, -0.2, 0.9]))
    with pytest.raises(PoleError):
        apply_map(phi, np.array([0.0, 0.0, -1.0]))
    with pytest.raises(PoleError):
        apply_map(phi, phi.xi0)
    with pytest.raises(PoleError):
        jacobian(phi, np.array([0.0, 0.0, -1.0]))


@pytest.mark.parametrize("n", [1, 2])
def test_conformal_distance_identity(rng, n):
    pts = random_points(rng, n, 200)
    a, b = pts[:100], pts[100:]
    for phi in example_maps(n):
        ja, jb = jacobian(phi, a), jacobian(phi, b)
        lhs = ja ** (1.0 / n) * np.sum((a - b) ** 2, axis=1) * jb ** (1.0 / n)
        rhs = np.sum(
            (np.atleast_2d(apply_map(phi, a)) - np.atleast_2d(apply_map(phi, b))) ** 2,
            axis=1,
        )
        assert np.abs(lhs / rhs - 1.0).max() < 1e-9


def test_moebius_jacobian_closed_form(rng):
    zeta = np.array([0.3, -0.2, 0.4])
    phi = Moebius(zeta)
    pts = random_points(rng, 2, 50)
    expected = (math.sqrt(1.0 - np.dot(zeta, zeta)) / (1.0 - pts @ zeta)) ** 2
    np.testing.assert_allclose(jacobian(phi, pts), expected, rtol=1e-12)
    ident = Moebius(np.zeros(3))
    np.testing.assert_allclose(jacobian(ident, pts), 1.0, atol=1e-14)
    np.testing.assert_allclose(apply_map(ident, pts), pts, atol=1e-14)


def test_jacobian_chain_inverse(rng):
    pts = random_points(rng, 2, 30)
    for phi in example_maps(2):
        mapped = np.atleast_2d(apply_map(phi, pts))
        assert np.abs(jacobian(phi, pts) * jacobian(inverse(phi), mapped) - 1.0).max() < 1e-10


def test_pullback_identity_and_jacobian_root(grids, rng):
    u = as_evaluable(random_coeffs(2, 6, rng))
    pts = random_points(rng, 2, 40)
    np.testing.assert_allclose(
        pullback(u, Moebius(np.zeros(3)))(pts), np.atleast_1d(u(pts)), atol=1e-12
    )
    phi = Moebius(np.array([0.2, 0.1, -0.3]))
    one = lambda q: np.ones(np.atleast_2d(q).shape[0])
    np.testing.assert_allclose(
        pullback(one, phi)(pts), np.sqrt(jacobian(phi, pts)), atol=1e-13
    )


@pytest.mark.parametrize("n", [1, 2])
def test_pullback_preserves_l2_norm(grids, rng, n):
    # u_phi is analytic but concentrated, so the quadrature needs headroom
    g = grids(n, 64 if n == 1 else 32)
    c = random_coeffs(n, 8, rng)
    u = as_evaluable(c)
    for phi in example_maps(n):
        vals = pullback(u, phi)(g.nodes)
        norm_sq = integrate(g, GridFunction(g, vals * vals))
        assert abs(norm_sq - c.norm_sq()) < 1e-6 * c.norm_sq()


def test_pullback_composes(rng):
    u = as_evaluable(random_coeffs(2, 5, rng))
    m1 = Moebius(np.array([0.2, 0.0, 0.1]))
    m2 = Moebius(np.array([-0.1, 0.3, 0.0]))
    pts = random_points(rng, 2, 60)
    lhs = pullback(pullback(u, m1), m2)(pts)
    comp_jac = jacobian(m2, pts) * jacobian(m1, np.atleast_2d(apply_map(m2, pts)))
    rhs = np.sqrt(comp_jac) * np.atleast_1d(u(apply_map(m1, apply_map(m2, pts))))
    assert np.abs(lhs - rhs).max() < 1e-9


def test_extremizer_values_and_errors(grids):
    n = 2
    zeta = np.array([0.0, 0.0, 0.6])
    u = extremizer(ExtremizerParams(zeta, 2.0))
    assert u(np.array([0.0, 0.0, 1.0])) == pytest.approx(
        2.0 * ((1.0 + 0.6) / (1.0 - 0.6)) ** (n / 4.0), rel=1e-12
    )
    const = extremizer(ExtremizerParams(np.zeros(3), 3.0))
    assert const(np.array([1.0, 0.0, 0.0])) == pytest.approx(3.0)
    g = grids(2, 32)
    vals = extremizer(ExtremizerParams(zeta, 1.0))(g.nodes)
    assert integrate(g, GridFunction(g, vals * vals)) == pytest.approx(
        sphere_area(2), rel=1e-6
    )
    with pytest.raises(ValueError):
        ExtremizerParams(np.array([1.0, 0.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        ExtremizerParams(np.zeros(3), -1.0)


def test_extremizer_is_conformal_orbit_of_constant(rng):
    zeta = np.array([0.25, 0.1, -0.35])
    u = extremizer(ExtremizerParams(zeta, 1.0))
    one = lambda q: np.ones(np.atleast_2d(q).shape[0])
    pts = random_points(rng, 2, 80)
    assert np.abs(u(pts) - pullback(one, Moebius(zeta))(pts)).max() < 1e-10


def test_pullback_to_plane_standard_bubble(rng):
    one = lambda q: np.ones(np.atleast_2d(q).shape[0])
    v = pullback_to_plane(one, 2)
    x = rng.standard_normal((30, 2))
    expected = (2.0 / (1.0 + np.sum(x * x, axis=1))) ** 1.0
    np.testing.assert_allclose(v(x), expected, rtol=1e-12)


def test_pullback_to_plane_of_family_is_bubble(rng):
    # planar form must match c (2b/(b^2+|x-a|^2))^{n/2}; fit (a, b, c) by
    # Gauss-Newton from a perturbed start and check residual and parameters
    n = 2
    zeta = np.array([0.3, -0.1, 0.2])
    v = pullback_to_plane(extremizer(ExtremizerParams(zeta, 1.0)), n)
    a_true, b_true = zeta_to_bubble(zeta)
    x = 2.0 * rng.standard_normal((200, n))
    target = v(x)

    def model(p):
        a, b, c = p[:n], p[n], p[n + 1]
        return c * (2.0 * b / (b * b + np.sum((x - a) ** 2, axis=1))) ** (n / 2.0)

    p = np.concatenate([a_true + 0.1, [b_true * 1.3], [0.7]])
    for _ in range(80):
        r = model(p) - target
        J = np.empty((x.shape[0], p.size))
        for k in range(p.size):
            e = np.zeros_like(p)
            e[k] = 1e-7
            J[:, k] = (model(p + e) - model(p - e)) / 2e-7
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        p = p + step
        if np.linalg.norm(step) < 1e-14:
            break
    residual = np.linalg.norm(model(p) - target) / np.linalg.norm(target)
    assert residual < 1e-8
    np.testing.assert_allclose(p[:n], a_true, atol=1e-8)
    assert p[n] == pytest.approx(b_true, abs=1e-8)
    assert p[n + 1] == pytest.approx(1.0, abs=1e-8)
    # and the zeta <-> (a, b) bijection inverts
    np.testing.assert_allclose(bubble_to_zeta(a_true, b_true), zeta, atol=1e-13)


def test_planar_norm_equals_spherical_norm(grids, rng):
    # independent planar quadrature: polar coordinates, r = s/(1-s) on GL nodes
    n = 2
    c = random_coeffs(n, 6, rng)
    u = as_evaluable(c)
    v = pullback_to_plane(u, n)
    s_nodes, s_weights = np.polynomial.legendre.leggauss(220)
    s_nodes = 0.5 * (s_nodes + 1.0)
    s_weights = 0.5 * s_weights
    r = s_nodes / (1.0 - s_nodes)
    dr = 1.0 / (1.0 - s_nodes) ** 2
    m = 160
    angles = 2.0 * math.pi * np.arange(m) / m
    total = 0.0
    for ang in angles:
        pts = np.column_stack([r * math.cos(ang), r * math.sin(ang)])
        total += np.sum(s_weights * dr * r * v(pts) ** 2) * (2.0 * math.pi / m)
    assert abs(total - c.norm_sq()) < 1e-6 * c.norm_sq()


@pytest.mark.parametrize("n", [1, 2])
def test_kernel_positive_in_region(rng, n):
    for phi in example_maps(n)[:2]:
        region = region_of(phi)
        a = sample_region(region, 4000, rng)
        b = sample_region(region, 4000, rng)
        keep = np.sum((a - b) ** 2, axis=1) > 1e-10
        vals = kernel_l(phi, a[keep], b[keep])
        assert np.all(vals > 0.0)


def test_kernel_symmetry_and_errors(rng):
    phi = example_maps(2)[0]
    region = region_of(phi)
    a = sample_region(region, 300, rng)
    b = sample_region(region, 300, rng)
    keep = np.sum((a - b) ** 2, axis=1) > 1e-4
    sym = kernel_l(phi, a[keep], b[keep]) - kernel_l(phi, b[keep], a[keep])
    assert np.abs(sym).max() < 1e-10
    with pytest.raises(ValueError):
        kernel_l(phi, a[0], a[0])


def test_in_sigma_geometry(rng):
    xi0 = sphere_point([0.4, 0.2, 0.8])
    phi = LiftedInversion(0.7, xi0)
    region = region_of(phi)
    assert in_sigma(region, xi0)
    x0 = inverse_stereographic(xi0)
    boundary = stereographic(x0 + 0.7 * np.array([0.0, 1.0]))
    assert not in_sigma(region, boundary)  # strict inequality
    inside = sample_region(region, 400, rng)
    assert np.all(in_sigma(region, inside))
    mapped = np.atleast_2d(apply_map(phi, inside))
    assert not np.any(in_sigma(region, mapped))
    with pytest.raises(PoleError):
        in_sigma(region, np.array([0.0, 0.0, -1.0]))


def test_reflection_region_is_halfspace_image(rng):
    psi = LiftedReflection(0.3, np.array([0.0, 1.0]))
    region = region_of(psi)
    pts = sample_region(region, 300, rng)
    x = inverse_stereographic(pts)
    assert np.all(x @ psi.e > psi.alpha)


def test_antisymmetry_defect_cases(grids, rng):
    g = grids(2, 16)
    phi = LiftedInversion(0.9, sphere_point([0.3, 0.0, 0.9]))
    region = region_of(phi)
    pts = sample_region(region, 500, rng)
    u = as_evaluable(random_coeffs(2, 6, rng))
    w = lambda q: pullback(u, phi)(q) - np.atleast_1d(u(q))
    assert antisymmetry_defect(w, phi, region, points=pts) < 1e-8
    one = lambda q: np.ones(np.atleast_2d(q).shape[0])
    expected = float((1.0 + np.sqrt(jacobian(phi, pts))).max())
    assert antisymmetry_defect(one, phi, region, points=pts) == pytest.approx(expected, rel=1e-12)
    zero = lambda q: np.zeros(np.atleast_2d(q).shape[0])
    assert antisymmetry_defect(zero, phi, region, points=pts) == 0.0
    # GridFunction input goes through harmonic synthesis
    f = GridFunction(g, np.ones(g.node_count))
    assert antisymmetry_defect(f, phi, region, grid=g) > 1.0


def test_map_json_roundtrip():
    for phi in example_maps(2):
        data = map_to_json(phi)
        back = map_from_json(data)
        assert type(back) is type(phi)
        if isinstance(phi, Moebius):
            np.testing.assert_allclose(back.zeta, phi.zeta)
    with pytest.raises(ValueError):
        map_from_json({"variant": "spiral"})


def test_map_constructor_validation():
    with pytest.raises(ValueError):
        LiftedInversion(-1.0, np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        LiftedInversion(1.0, np.array([0.0, 0.0, -1.0]))  # south pole base
    with pytest.raises(ValueError):
        LiftedReflection(0.0, np.zeros(2))
    with pytest.raises(ValueError):
        Moebius(np.array([1.0, 0.0, 0.0]))
