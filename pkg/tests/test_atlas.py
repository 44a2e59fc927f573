import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peskin3d import atlas
from peskin3d.atlas import (ChartAtlas, StereoKind, ball_radius, chart_inverse, chart_jacobian, chart_map,
                            default_atlas, metric_factor, partition_weights, sphere_to_stereo,
                            sphere_to_stereo_ext, stereo_jacobian, stereo_to_sphere, stereo_to_sphere_ext)
from peskin3d.errors import IndexOutOfRange, PoleSingular, UncoveredPoint

coord = st.floats(-50, 50, allow_nan=False)
plane_point = st.tuples(coord, coord).map(np.array)


@pytest.fixture(scope="module")
def icosa():
    return default_atlas()


def test_stereo_examples():
    np.testing.assert_allclose(stereo_to_sphere([0.0, 0.0]), [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(stereo_to_sphere([1.0, 0.0]), [1, 0, 0], atol=1e-15)
    far = stereo_to_sphere([1e9, -3e8])
    np.testing.assert_allclose(far, [0, 0, 1], atol=1e-8)
    assert stereo_to_sphere_ext(StereoKind.INFINITY).tolist() == [0.0, 0.0, 1.0]


def test_inverse_examples():
    np.testing.assert_allclose(sphere_to_stereo([0, 0, -1.0]), [0, 0], atol=0)
    np.testing.assert_allclose(sphere_to_stereo([1.0, 0, 0]), [1, 0], atol=0)
    with pytest.raises(PoleSingular):
        sphere_to_stereo([0, 0, 1.0])
    kind, t = sphere_to_stereo_ext(np.array([0, 0, 1.0]))
    assert kind is StereoKind.INFINITY and t is None


@given(plane_point)
def test_unit_norm_and_round_trip(theta):
    x = stereo_to_sphere(theta)
    assert abs(np.linalg.norm(x) - 1) < 1e-14
    if 1 - x[2] > 1e-6:
        back = sphere_to_stereo(x)
        assert np.allclose(back, theta, rtol=1e-12, atol=1e-12 * (1 + np.dot(theta, theta)))


@given(plane_point, plane_point)
def test_upper_chord_bound(t, s):
    d = np.linalg.norm(stereo_to_sphere(t) - stereo_to_sphere(s))
    assert d <= 2 * np.linalg.norm(t - s) * (1 + 1e-12) + 1e-300


@given(st.floats(0, 1), st.floats(0, 2 * np.pi), st.floats(0, 1), st.floats(0, 2 * np.pi))
def test_lower_chord_bound_in_v_sqrt2(r1, a1, r2, a2):
    rv = ball_radius(np.sqrt(2.0))
    t = rv * np.sqrt(r1) * np.array([np.cos(a1), np.sin(a1)])
    s = rv * np.sqrt(r2) * np.array([np.cos(a2), np.sin(a2)])
    d = np.linalg.norm(stereo_to_sphere(t) - stereo_to_sphere(s))
    assert d >= (2 / np.pi) * np.linalg.norm(t - s) * (1 - 1e-12)


def test_metric_factor_examples():
    assert metric_factor([0.0, 0.0]) == 2.0
    assert metric_factor([1.0, 0.0]) == pytest.approx(1.0, abs=1e-15)
    assert metric_factor([np.sqrt(1.5), np.sqrt(1.5)]) == pytest.approx(0.5, abs=1e-15)


@given(plane_point)
def test_isothermal_by_finite_differences(theta):
    h = 1e-6 * (1 + np.linalg.norm(theta))
    cols = [(stereo_to_sphere(theta + h * e) - stereo_to_sphere(theta - h * e)) / (2 * h) for e in np.eye(2)]
    mf = metric_factor(theta)
    assert abs(np.dot(*cols)) <= 1e-6 * mf ** 2
    assert abs(np.linalg.norm(cols[0]) - np.linalg.norm(cols[1])) <= 1e-6 * mf
    J = stereo_jacobian(theta)
    np.testing.assert_allclose(J.T @ J, mf ** 2 * np.eye(2), atol=1e-12 * max(mf ** 2, 1e-300))


def test_ball_image():
    for R in (0.3, 1.0, np.sqrt(2.0) - 1e-9):
        a = np.linspace(0, 2 * np.pi, 400)
        edge = ball_radius(R) * np.stack([np.cos(a), np.sin(a)], 1)
        d = np.linalg.norm(stereo_to_sphere(edge) - atlas.SOUTH, axis=1)
        assert np.all(d <= R * (1 + 1e-12))
        np.testing.assert_allclose(d, R, rtol=1e-12)


def test_atlas_invariants(icosa):
    assert len(icosa) == 12
    assert icosa.covers()
    assert 0 < icosa.radius < np.sqrt(2)
    for n in range(len(icosa)):
        Th = icosa.rotations[n]
        assert np.abs(Th.T @ Th - np.eye(3)).max() < 1e-12
        np.testing.assert_allclose(chart_map(icosa, n, [0.0, 0.0]), icosa.centers[n], atol=1e-15)


def test_identity_chart_and_round_trip():
    a = ChartAtlas.from_centers([[0, 0, -1.0], [0, 0, 1.0]], 1.2)
    np.testing.assert_allclose(a.rotations[0], np.eye(3), atol=0)
    np.testing.assert_allclose(chart_map(a, 0, [0.0, 0.0]), [0, 0, -1], atol=0)
    rng = np.random.default_rng(3)
    ic = default_atlas()
    for n in range(len(ic)):
        t = rng.normal(size=(50, 2))
        np.testing.assert_allclose(chart_inverse(ic, n, chart_map(ic, n, t)), t, atol=1e-12 * 10)
        J = chart_jacobian(ic, n, t)
        np.testing.assert_allclose(J, ic.rotations[n] @ stereo_jacobian(t), atol=1e-15)


def test_bad_index_and_radius(icosa):
    with pytest.raises(IndexOutOfRange):
        chart_map(icosa, 12, [0.0, 0.0])
    with pytest.raises(IndexOutOfRange):
        chart_inverse(icosa, -1, [1.0, 0, 0])
    with pytest.raises(ValueError):
        ChartAtlas.from_centers([[0, 0, 1.0]], 1.5)


def test_partition_examples(icosa):
    # two antipodal centers with small radius: 2R = 0.4 < 2, so weight is exactly one at a center
    a = ChartAtlas.from_centers([[0, 0, -1.0], [0, 0, 1.0]], 0.2)
    w = partition_weights(a, a.centers[0])
    assert w.tolist() == [1.0, 0.0]
    with pytest.raises(UncoveredPoint):
        partition_weights(a, np.array([1.0, 0.0, 0.0]))
    x = atlas.fibonacci_sphere(5000)
    w = partition_weights(icosa, x)
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-14
    d = np.linalg.norm(x[:, None] - icosa.centers[None], axis=-1)
    assert np.all(w[d >= 2 * icosa.radius] == 0)
    assert np.all((w >= 0) & (w <= 1))


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_partition_rotation_consistency(seed):
    # weights depend only on distances to centers, so rotating the atlas and the point together is a no-op
    rng = np.random.default_rng(seed)
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    R = atlas.rotation_to(rng.normal(size=3))
    ic = default_atlas()
    rot = ChartAtlas.from_centers(ic.centers @ R.T, ic.radius)
    np.testing.assert_allclose(partition_weights(rot, R @ x), partition_weights(ic, x), atol=1e-13)


def test_rotation_to_antipode():
    R = atlas.rotation_to([0, 0, 1.0])
    np.testing.assert_allclose(R @ atlas.SOUTH, [0, 0, 1], atol=0)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-15


def test_geometry_violations_zero():
    counts = atlas.geometry_violations(2000, seed=1)
    assert set(counts) >= {"chord_upper", "chord_lower", "isothermal", "ball_image", "partition_sum"}
    assert all(v == 0 for v in counts.values()), counts
