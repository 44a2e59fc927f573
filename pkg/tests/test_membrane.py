import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peskin3d import sht
from peskin3d.bie import real_harmonic
from peskin3d.atlas import metric_factor, rotation_to, stereo_jacobian, stereo_to_sphere
from peskin3d.errors import DegreeOverflow, StretchOutOfRange
from peskin3d.membrane import (MembraneState, SphereGrid, TensionLaw, arc_chord, area, dealias, diagnostics,
                               elastic_force_density, energy, holder_seminorm_estimate, read_snapshot,
                               sh_analyze, sh_synthesize, stretch_factor, surface_gradient, volume,
                               write_coefficients, write_snapshot)


def random_coeffs(rng, L, shape=(), decay=1.0):
    c = rng.normal(size=shape + (L + 1, L + 1)) + 1j * rng.normal(size=shape + (L + 1, L + 1))
    l = np.arange(L + 1)
    c *= np.tril(np.ones((L + 1, L + 1)))
    c *= (1.0 + l[:, None]) ** -decay
    c[..., 0] = c[..., 0].real
    return c


def bumpy_state(L, rng, amp=0.05, lmax=4):
    grid = SphereGrid(L)
    c = np.zeros((3, L + 1, L + 1), complex)
    c[:, : lmax + 1, : lmax + 1] = amp * random_coeffs(rng, lmax, (3,))
    return MembraneState.from_coeffs(grid, MembraneState.sphere(grid).coeffs + c)


# ---------------------------------------------------------------------------
# grid and transforms
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("L", [4, 9, 16])
def test_grid_weights_and_orthonormality(L):
    g = SphereGrid(L)
    assert abs(g.weights.sum() - 4 * np.pi) < 1e-10
    t = g.sht
    ell, em = sht.lm_index(L)
    Y = t.P[ell, em][:, :, None] * np.exp(1j * em[:, None, None] * g.phi[None, None, :])
    gram = np.einsum("ajk,bjk,jk->ab", Y, Y.conj(), g.weights)
    assert np.abs(gram - np.eye(len(ell))).max() < 1e-10


def test_transform_examples():
    g = SphereGrid(8)
    c = sh_analyze(g, np.ones(g.shape))
    assert abs(c[0, 0] - np.sqrt(4 * np.pi)) < 1e-13
    c[0, 0] = 0
    assert np.abs(c).max() < 1e-13
    c = sh_analyze(g, np.sqrt(3 / (4 * np.pi)) * g.nodes[2])
    expect = np.zeros_like(c)
    expect[1, 0] = 1.0
    assert np.abs(c - expect).max() < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2 ** 32 - 1))
def test_round_trip(L, seed):
    g = SphereGrid(L)
    c = random_coeffs(np.random.default_rng(seed), L)
    c[:, 0] = c[:, 0].real
    back = sh_analyze(g, sh_synthesize(c, g))
    assert np.abs(back - c).max() < 1e-10


def test_degree_overflow_and_dealias():
    g = SphereGrid(6)
    c = random_coeffs(np.random.default_rng(0), 9)
    with pytest.raises(DegreeOverflow):
        sh_synthesize(c, g)
    d = dealias(random_coeffs(np.random.default_rng(1), 12), 12)
    assert np.all(d[9:] == 0) and np.any(d[8] != 0)


def test_point_evaluation_matches_grid():
    rng = np.random.default_rng(2)
    g = SphereGrid(10)
    c = random_coeffs(rng, 10)
    vals = sh_synthesize(c, g)
    x = g.nodes.reshape(3, -1).T
    v, grad = sht.evaluate(c, x, grad=True)
    np.testing.assert_allclose(v, vals.ravel(), atol=1e-12)
    np.testing.assert_allclose(grad, g.sht.gradient(c).reshape(3, -1), atol=1e-11)


def test_mean_zero_laplacian():
    rng = np.random.default_rng(4)
    g = SphereGrid(12)
    c = random_coeffs(rng, 12)
    lap = g.sht.synthesize(g.sht.laplacian(c))
    assert abs(g.integrate(lap)) < 1e-10 * np.abs(lap).max()


# ---------------------------------------------------------------------------
# gradients and stretch
# ---------------------------------------------------------------------------
def test_gradient_examples():
    g = SphereGrid(16)
    c0 = MembraneState.from_values(g, np.ones((3,) + g.shape))
    assert np.abs(surface_gradient(c0)).max() < 1e-12
    x3 = g.nodes[2]
    gr = g.sht.gradient(g.sht.analyze(x3))
    expect = np.array([0.0, 0.0, 1.0])[:, None, None] - x3 * g.nodes
    np.testing.assert_allclose(gr, expect, atol=1e-12)
    eq = g.L // 2  # the middle Gauss node is the equator for even L
    assert abs(g.theta[eq] - np.pi / 2) < 1e-14
    np.testing.assert_allclose(np.linalg.norm(gr[:, eq], axis=0), 1.0, atol=1e-12)
    for R in (1.0, 2.5):
        s = MembraneState.sphere(g, R)
        lam = stretch_factor(s)
        np.testing.assert_allclose(lam, np.sqrt(2) * R, rtol=1e-12)
    # the Frobenius norm sums nine roundoff-level gradient entries
    assert np.abs(stretch_factor(c0)).max() < 1e-11


def test_gradient_tangent():
    s = bumpy_state(12, np.random.default_rng(5), amp=0.3)
    gr = surface_gradient(s)
    normal = np.einsum("kijl,ijl->kjl", gr, s.grid.nodes)
    assert np.abs(normal).max() < 1e-9 * np.abs(s.values).max()


def _chart_derivatives(coeffs, R, theta, h=1e-3):
    """d X / d theta_i of X(R stereo(theta)) by a fourth-order central stencil."""
    def X(t):
        return sht.evaluate(coeffs, (stereo_to_sphere(t) @ R.T)[None])[..., 0]
    out = []
    for e in np.eye(2):
        f = lambda a: X(theta + a * h * e)
        out.append((-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h))
    return np.stack(out, axis=-1)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_stretch_matches_chart_formula(seed):
    # lambda_n = sqrt2 |grad X_n|_F / |grad Xhat_n|_F with both gradients taken in the chart
    s = bumpy_state(12, np.random.default_rng(seed), amp=0.2)
    lam = stretch_factor(s)
    rng = np.random.default_rng(seed + 10)
    for _ in range(4):
        j, i = rng.integers(s.grid.n_colat), rng.integers(s.grid.n_lon)
        R = rotation_to(s.grid.nodes[:, j, i])
        t0 = np.zeros(2)
        dXn = _chart_derivatives(s.coeffs, R, t0)
        dXh = R @ stereo_jacobian(t0)
        lam_n = np.sqrt(2) * np.linalg.norm(dXn) / np.linalg.norm(dXh)
        assert abs(lam_n - lam[j, i]) < 1e-8 * lam[j, i]


# ---------------------------------------------------------------------------
# tension laws
# ---------------------------------------------------------------------------
def test_law_invariants_and_bounds():
    laws = [TensionLaw.hookean(2.0, 0.5, 3.0), TensionLaw.affine(1.5, 0.2, 0.3, 0.5, 3.0),
            TensionLaw.tabulated(np.linspace(0.5, 3, 40), 0.1 + np.linspace(0.5, 3, 40) ** 3)]
    s = np.linspace(0.5, 3.0, 1000)
    for law in laws:
        assert np.all(law.tau(s) > 0) and np.all(law.dtau(s) >= -1e-12)
        b = law.bounds(1.2, 0.7)
        assert 0 < b.z_m <= b.z_M0
    with pytest.raises(ValueError):
        TensionLaw.affine(-1.0, 0.0, 5.0, 0.5, 3.0)
    TensionLaw.affine(-1.0, 0.0, 5.0, 0.5, 3.0, experimental=True)
    with pytest.raises(ValueError):
        TensionLaw.hookean(0.0)


def test_law_range_and_antiderivative():
    law = TensionLaw.hookean(1.0, 0.5, 1.0)
    with pytest.raises(StretchOutOfRange):
        law.check_range(np.array([0.7, 1.2]))
    lam = np.linspace(1, 2, 20)
    tab = TensionLaw.tabulated(lam, 3 * lam)
    aff = TensionLaw.affine(3.0, 0.0, 0.0, 1.0, 2.0)
    x = np.array([1.1, 1.5, 1.9])
    np.testing.assert_allclose(tab.antiderivative(x), aff.antiderivative(x) - aff.antiderivative(1.0), atol=1e-9)


# ---------------------------------------------------------------------------
# force, volume, energy
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("R", [1.0, 1.7])
def test_force_examples(R):
    g = SphereGrid(12)
    s = MembraneState.sphere(g, R)
    F = elastic_force_density(s, TensionLaw.hookean(1.0))
    np.testing.assert_allclose(F, -2 * R * g.nodes, atol=1e-12)
    c = MembraneState.from_values(g, np.full((3,) + g.shape, 0.3))
    assert np.abs(elastic_force_density(c, TensionLaw.hookean(1.0))).max() < 1e-12
    with pytest.raises(StretchOutOfRange):
        elastic_force_density(s, TensionLaw.hookean(1.0, 0.0, 0.5))


def test_hookean_fast_path_is_laplacian():
    s = bumpy_state(10, np.random.default_rng(8), amp=0.3)
    F = elastic_force_density(s, TensionLaw.hookean(2.5))
    np.testing.assert_allclose(F, 2.5 * s.grid.sht.synthesize(s.grid.sht.laplacian(s.coeffs)), atol=1e-13)


@pytest.mark.parametrize("law", [TensionLaw.affine(1.3, 0.4, 0.2, 0.5, 5.0),
                                 TensionLaw.tabulated(np.linspace(0.5, 3.5, 60),
                                                      0.3 + 0.5 * np.linspace(0.5, 3.5, 60) ** 2)])
def test_force_matches_chart_divergence(law):
    # in isothermal coordinates div(T grad X) = (1/g) d_i (T d_i X) with g the conformal factor squared
    L = 16
    rng = np.random.default_rng(11)
    grid = SphereGrid(L)
    c = np.zeros((3, L + 1, L + 1), complex)
    c[:, :3, :3] = 0.05 * random_coeffs(rng, 2, (3,))
    s = MembraneState.from_coeffs(grid, MembraneState.sphere(grid).coeffs + c)
    F = elastic_force_density(s, law)

    def flux(R, t):
        x = stereo_to_sphere(t) @ R.T
        _, gr = sht.evaluate(s.coeffs, x[None], grad=True)
        dX = gr[..., 0] @ (R @ stereo_jacobian(t))  # (3, 2): d X_k / d theta_i
        lam = np.sqrt(np.sum(dX ** 2)) / metric_factor(t)
        return law.T(lam) * dX

    h = 1e-3
    for _ in range(5):
        j, i = rng.integers(grid.n_colat), rng.integers(grid.n_lon)
        R = rotation_to(grid.nodes[:, j, i])
        div = np.zeros(3)
        for a, e in enumerate(np.eye(2)):
            f = lambda k: flux(R, k * h * e)[:, a]
            div += (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h)
        div /= metric_factor(np.zeros(2)) ** 2
        assert np.linalg.norm(div - F[:, j, i]) < 1e-6 * np.linalg.norm(F[:, j, i])


def test_force_is_energy_gradient():
    rng = np.random.default_rng(12)
    s = bumpy_state(12, rng, amp=0.1)
    law = TensionLaw.hookean(1.3)
    F = elastic_force_density(s, law)
    Y = s.grid.sht.synthesize(dealias(random_coeffs(rng, 12, (3,), decay=2.0), 12))
    eps = 1e-5
    dE = (energy(s.with_values(s.values + eps * Y), law) - energy(s.with_values(s.values - eps * Y), law)) / (2 * eps)
    pair = s.grid.integrate(np.sum(F * Y, axis=0))
    assert abs(pair + dE) < 1e-5 * abs(dE)


def test_volume_examples():
    g = SphereGrid(10)
    for R in (1.0, 0.4):
        s = MembraneState.sphere(g, R)
        assert volume(s) == pytest.approx(4 / 3 * np.pi * R ** 3, rel=1e-8)
    t = MembraneState.sphere(g, 1.0, center=(0.3, -2.0, 5.0))
    assert volume(t) == pytest.approx(4 / 3 * np.pi, rel=1e-8)
    a, b, c = 1.5, 0.7, 2.2
    e = MembraneState.from_values(g, np.array([a, b, c])[:, None, None] * g.nodes)
    assert volume(e) == pytest.approx(4 / 3 * np.pi * a * b * c, rel=1e-10)
    assert area(MembraneState.sphere(g, 2.0)) == pytest.approx(16 * np.pi, rel=1e-10)


def test_energy_examples():
    g = SphereGrid(10)
    hk = TensionLaw.hookean(1.0)
    assert energy(MembraneState.sphere(g, 1.0), hk) == pytest.approx(4 * np.pi, rel=1e-12)
    assert energy(MembraneState.sphere(g, 1.5), hk) == pytest.approx(4 * np.pi * 1.5 ** 2, rel=1e-12)
    c = MembraneState.from_values(g, np.ones((3,) + g.shape))
    assert abs(energy(c, hk)) < 1e-20


# ---------------------------------------------------------------------------
# arc-chord and Holder diagnostics
# ---------------------------------------------------------------------------
def test_arc_chord_examples():
    g = SphereGrid(8)
    assert arc_chord(MembraneState.sphere(g, 2.0)) == pytest.approx(2.0, rel=1e-12)
    Q = rotation_to([0.3, -0.5, 0.8])
    rot = MembraneState.from_values(g, np.einsum("ab,bjk->ajk", Q, g.nodes))
    assert arc_chord(rot) == pytest.approx(1.0, rel=1e-12)
    # flatten the z direction: mirror nodes (theta, phi), (pi - theta, phi) pinch to ratio delta
    delta = 1e-6
    flat = MembraneState.from_values(g, np.array([1.0, 1.0, delta])[:, None, None] * g.nodes)
    j = 0
    x, y = g.nodes[:, j, 0], g.nodes[:, -1 - j, 0]
    ratio = np.linalg.norm(flat.values[:, j, 0] - flat.values[:, -1 - j, 0]) / np.linalg.norm(x - y)
    assert arc_chord(flat) == pytest.approx(delta, rel=1e-6)
    assert ratio == pytest.approx(delta, rel=1e-6)


def test_holder_examples():
    g = SphereGrid(16)
    pts = g.nodes.reshape(3, -1).T
    assert holder_seminorm_estimate(np.ones(len(pts)), 0.5, pts) == 0.0
    f = pts[:, 2]
    est = holder_seminorm_estimate(f, 0.99, pts)
    assert abs(est - 1) < 0.1
    assert holder_seminorm_estimate(3.5 * f, 0.5, pts) == pytest.approx(3.5 * holder_seminorm_estimate(f, 0.5, pts))
    with pytest.raises(ValueError):
        holder_seminorm_estimate(f, 0.0, pts)


def test_state_consistency_and_diagnostics():
    s = bumpy_state(10, np.random.default_rng(13), amp=0.2)
    np.testing.assert_allclose(s.grid.sht.synthesize(s.coeffs), s.values, atol=1e-10)
    np.testing.assert_allclose(s.grid.sht.analyze(s.values), s.coeffs, atol=1e-10)
    d = diagnostics(s, TensionLaw.hookean(1.0))
    assert d.volume > 0 and d.arc_chord_min > 0 and d.stretch_min <= d.stretch_max
    with pytest.raises(ValueError):
        s.values[0, 0, 0] = 1.0


def test_perturbed_sphere_radius():
    g = SphereGrid(12)
    s = MembraneState.perturbed_sphere(g, [(2, 0, 0.05)], 2.0)
    r = np.linalg.norm(s.values, axis=0)
    y20 = np.sqrt(5 / (16 * np.pi)) * (3 * np.cos(g.theta) ** 2 - 1)
    np.testing.assert_allclose(r, np.broadcast_to(2.0 * (1 + 0.05 * y20)[:, None], r.shape), atol=1e-12)
    for m in (2, -2):
        s = MembraneState.perturbed_sphere(g, [(3, m, 0.1)])
        r = np.linalg.norm(s.values, axis=0)
        np.testing.assert_allclose(r, 1 + 0.1 * real_harmonic(g, 3, m), atol=1e-12)


def test_snapshot_and_coefficient_export(tmp_path):
    s = bumpy_state(6, np.random.default_rng(14))
    p = tmp_path / "snap.csv"
    write_snapshot(s, p)
    head = p.read_text().splitlines()[0]
    assert head == "i_colat,i_lon,nx,ny,nz,X1,X2,X3"
    back = read_snapshot(p)
    # reading re-projects onto degree L, which is exact up to roundoff
    np.testing.assert_allclose(back.values, s.values, atol=1e-13)
    write_snapshot(s, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == p.read_bytes()
    q = tmp_path / "coeffs.json"
    write_coefficients(s, q)
    recs = json.loads(q.read_text())
    assert recs[0].keys() == {"component", "l", "m", "re", "im"}
    assert len(recs) == 3 * (7 * 8 // 2)
    r = [x for x in recs if x["component"] == 2 and x["l"] == 1 and x["m"] == 1][0]
    assert complex(r["re"], r["im"]) == s.coeffs[1, 1, 1]
