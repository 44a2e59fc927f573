"""Stereographic chart system on the unit sphere.

The basic chart is the stereographic projection from the north pole,

    X(theta) = (2 theta_1, 2 theta_2, |theta|^2 - 1) / (1 + |theta|^2),

which sends the origin to the south pole ``(0, 0, -1)``.  Further charts are
obtained by composing with rotations ``Theta_n`` that carry the south pole to a
chart center ``x_n``.  A smooth partition of unity built from compactly
supported bumps localises functions to the charts.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, PoleSingular, UncoveredPoint

SOUTH = np.array([0.0, 0.0, -1.0])
NORTH = np.array([0.0, 0.0, 1.0])


class StereoKind(enum.Enum):
    """Tag for points of the extended plane R^2 + {infinity}."""

    FINITE = "finite"
    INFINITY = "infinity"


def stereo_to_sphere(theta):
    """Map plane points to the unit sphere.

    Parameters
    ----------
    theta : array_like, shape (..., 2)

    Returns
    -------
    ndarray, shape (..., 3)
    """
    theta = np.asarray(theta, dtype=float)
    r2 = np.sum(theta * theta, axis=-1)
    den = 1.0 + r2
    return np.stack([2 * theta[..., 0] / den, 2 * theta[..., 1] / den, (r2 - 1.0) / den], axis=-1)


def stereo_jacobian(theta):
    """Coordinate tangent vectors dX/dtheta_i, shape (..., 3, 2)."""
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    den = 1.0 + t1 * t1 + t2 * t2
    d2 = den * den
    j = np.empty(theta.shape[:-1] + (3, 2))
    j[..., 0, 0] = 2 * (den - 2 * t1 * t1) / d2
    j[..., 0, 1] = -4 * t1 * t2 / d2
    j[..., 1, 0] = -4 * t1 * t2 / d2
    j[..., 1, 1] = 2 * (den - 2 * t2 * t2) / d2
    j[..., 2, 0] = 4 * t1 / d2
    j[..., 2, 1] = 4 * t2 / d2
    return j


def sphere_to_stereo(x):
    """Inverse stereographic projection ``(x1, x2) / (1 - x3)``.

    Raises
    ------
    PoleSingular
        If any point lies within 1e-12 of the north pole.
    """
    x = np.asarray(x, dtype=float)
    den = 1.0 - x[..., 2]
    if np.any(den < 1e-12):
        raise PoleSingular("point at the projection pole (0, 0, 1) has no finite preimage")
    return np.stack([x[..., 0] / den, x[..., 1] / den], axis=-1)


def sphere_to_stereo_ext(x):
    """Inverse projection onto the extended plane.

    Returns ``(StereoKind.INFINITY, None)`` at the pole instead of raising.
    """
    x = np.asarray(x, dtype=float)
    if 1.0 - x[2] < 1e-12:
        return StereoKind.INFINITY, None
    return StereoKind.FINITE, sphere_to_stereo(x)


def stereo_to_sphere_ext(kind, theta=None):
    """Forward projection on the extended plane (infinity maps to the north pole)."""
    if kind is StereoKind.INFINITY:
        return NORTH.copy()
    return stereo_to_sphere(theta)


def metric_factor(theta):
    """Conformal factor 2 / (1 + |theta|^2) of the stereographic chart."""
    theta = np.asarray(theta, dtype=float)
    return 2.0 / (1.0 + np.sum(theta * theta, axis=-1))


def ball_radius(R):
    """Plane radius of V_R, the preimage of the chord ball B((0,0,-1), R)."""
    return R / np.sqrt(4.0 - R * R)


def rotation_to(target):
    """Orthogonal matrix sending the south pole to the unit vector ``target``."""
    t = np.asarray(target, dtype=float)
    t = t / np.linalg.norm(t)
    c = float(np.dot(SOUTH, t))
    if c < -1.0 + 1e-14:
        # antipodal: half turn about the x axis
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(SOUTH, t)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


@dataclass(frozen=True)
class ChartAtlas:
    """Finite atlas of rotated stereographic charts.

    Attributes
    ----------
    centers : ndarray, shape (n, 3)
        Chart centers x_n = Theta_n (0, 0, -1).
    rotations : ndarray, shape (n, 3, 3)
    radius : float
        Chord radius R of the chart balls, 0 < R < sqrt(2).
    bump_sharpness : float
        Exponent scale s of the bump exp(-s / (1 - (d / 2R)^2)).
    """

    centers: np.ndarray
    rotations: np.ndarray
    radius: float
    bump_sharpness: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.radius < np.sqrt(2.0):
            raise ValueError(f"chart radius must lie in (0, sqrt 2), got {self.radius}")
        if self.bump_sharpness <= 0:
            raise ValueError("bump_sharpness must be positive")
        rot = np.asarray(self.rotations)
        err = np.abs(np.einsum("nji,njk->nik", rot, rot) - np.eye(3)).max()
        if err > 1e-12:
            raise ValueError(f"chart rotations are not orthogonal (error {err:.2e})")
        if np.abs(rot @ SOUTH - self.centers).max() > 1e-12:
            raise ValueError("rotations do not send the south pole to the centers")

    def __len__(self):
        return len(self.centers)

    @classmethod
    def from_centers(cls, centers, radius, bump_sharpness=1.0):
        centers = np.asarray(centers, dtype=float)
        centers = centers / np.linalg.norm(centers, axis=1, keepdims=True)
        rots = np.array([rotation_to(c) for c in centers])
        # use the rotated south pole as the stored center so Theta_n e = x_n exactly
        return cls(rots @ SOUTH, rots, float(radius), float(bump_sharpness))

    def _check_index(self, n):
        if not (0 <= n < len(self.centers)):
            raise IndexOutOfRange(f"chart index {n} outside 0..{len(self.centers) - 1}")

    def covers(self, samples=None):
        """True if every sample point is within chord distance R of a center."""
        if samples is None:
            samples = fibonacci_sphere(20000)
        d = np.linalg.norm(samples[:, None, :] - self.centers[None, :, :], axis=-1)
        return bool(np.all(d.min(axis=1) < self.radius))


def icosahedron_vertices():
    """The 12 unit vertices of a regular icosahedron."""
    p = (1 + np.sqrt(5)) / 2
    v = []
    for a in (-1, 1):
        for b in (-p, p):
            v += [(0, a, b), (a, b, 0), (b, 0, a)]
    v = np.array(v, dtype=float)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def fibonacci_sphere(n):
    """Quasi-uniform points on S^2 (golden spiral)."""
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + np.sqrt(5)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def covering_radius(centers):
    """Chord covering radius of a point set, estimated on a dense sample."""
    pts = fibonacci_sphere(40000)
    d = np.linalg.norm(pts[:, None, :] - np.asarray(centers)[None, :, :], axis=-1)
    return float(d.min(axis=1).max())


def icosahedral_covering_radius():
    """Exact chord distance from an icosahedron face center to its vertices."""
    v = icosahedron_vertices()
    # a face: three mutually adjacent vertices (edge length is the minimal distance)
    d = np.linalg.norm(v[:, None] - v[None], axis=-1)
    edge = np.min(d[d > 1e-9])
    i = 0
    nb = np.where(np.abs(d[i] - edge) < 1e-9)[0]
    j = nb[0]
    k = [m for m in nb[1:] if abs(d[j, m] - edge) < 1e-9][0]
    c = v[i] + v[j] + v[k]
    c /= np.linalg.norm(c)
    return float(np.linalg.norm(c - v[i]))


def default_atlas(scale=1.2, bump_sharpness=1.0):
    """Icosahedral atlas: 12 charts, R = ``scale`` times the covering radius."""
    R = scale * icosahedral_covering_radius()
    return ChartAtlas.from_centers(icosahedron_vertices(), R, bump_sharpness)


def chart_map(atlas, n, theta):
    """Chart n: ``Theta_n X(theta)``."""
    atlas._check_index(n)
    return stereo_to_sphere(theta) @ atlas.rotations[n].T


def chart_jacobian(atlas, n, theta):
    """Tangent vectors of chart n, shape (..., 3, 2)."""
    atlas._check_index(n)
    return np.einsum("ij,...jk->...ik", atlas.rotations[n], stereo_jacobian(theta))


def chart_inverse(atlas, n, x):
    """Plane coordinates of x in chart n."""
    atlas._check_index(n)
    return sphere_to_stereo(np.asarray(x, dtype=float) @ atlas.rotations[n])


def _raw_bumps(atlas, x):
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(x[..., None, :] - atlas.centers, axis=-1)
    q = d / (2.0 * atlas.radius)
    out = np.zeros_like(q)
    inside = q < 1.0
    out[inside] = np.exp(-atlas.bump_sharpness / (1.0 - q[inside] ** 2))
    return out


def partition_weights(atlas, x):
    """Partition-of-unity weights rho_n(x), shape (..., n_charts).

    Raises
    ------
    UncoveredPoint
        If every bump vanishes at some requested point.
    """
    b = _raw_bumps(atlas, x)
    s = b.sum(axis=-1, keepdims=True)
    if np.any(s <= 0.0):
        raise UncoveredPoint("no chart bump is positive at the requested point")
    return b / s


def best_chart(atlas, x):
    """Index of the chart whose center is closest to x."""
    d = np.linalg.norm(atlas.centers - np.asarray(x, dtype=float), axis=1)
    return int(np.argmin(d))


def _random_plane_points(rng, n):
    """Plane points spread over several decades of radius."""
    r = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), n))
    a = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=1)


def _random_disc_points(rng, n, radius):
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    a = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=1)


def geometry_violations(n=10000, seed=0, atlas=None):
    """Count sampled violations of the chart-geometry properties.

    Properties: the chord bounds |X(t) - X(s)| <= 2 |t - s| (all t, s) and
    >= (2/pi) |t - s| (t, s in V_sqrt2), the isothermal property of the
    stereographic Jacobian, the ball image of V_R, unit norm of the
    projection, and the partition of unity summing to 1 with the 2R support
    condition.

    Returns
    -------
    dict mapping property name to violation count (all zero when they hold).
    """
    rng = np.random.default_rng(seed)
    atlas = default_atlas() if atlas is None else atlas
    out = {}
    t, s = _random_plane_points(rng, n), _random_plane_points(rng, n)
    # include close pairs, where the bound is tightest near the origin
    s[: n // 2] = t[: n // 2] + 1e-3 * rng.normal(size=(n // 2, 2))
    d_img = np.linalg.norm(stereo_to_sphere(t) - stereo_to_sphere(s), axis=1)
    d_par = np.linalg.norm(t - s, axis=1)
    out["chord_upper"] = int(np.sum(d_img > 2 * d_par * (1 + 1e-12)))
    rv = ball_radius(np.sqrt(2.0))
    t, s = _random_disc_points(rng, n, rv), _random_disc_points(rng, n, rv)
    d_img = np.linalg.norm(stereo_to_sphere(t) - stereo_to_sphere(s), axis=1)
    d_par = np.linalg.norm(t - s, axis=1)
    out["chord_lower"] = int(np.sum(d_img < (2 / np.pi) * d_par * (1 - 1e-12)))
    t = _random_plane_points(rng, n)
    J = stereo_jacobian(t)
    g = np.einsum("nki,nkj->nij", J, J)
    mf = metric_factor(t)
    iso = (np.abs(g[:, 0, 1]) > 1e-10 * mf ** 2) | (np.abs(g[:, 0, 0] - g[:, 1, 1]) > 1e-10 * mf ** 2)
    iso |= np.abs(np.sqrt(g[:, 0, 0]) - mf) > 1e-10 * mf
    # finite-difference cross-check of the analytic Jacobian away from infinity
    tt = t[np.linalg.norm(t, axis=1) < 10]
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (stereo_to_sphere(tt + e) - stereo_to_sphere(tt - e)) / (2 * h)
        bad = np.abs(fd - stereo_jacobian(tt)[:, :, i]).max(axis=1) > 1e-8
        out.setdefault("jacobian_fd", 0)
        out["jacobian_fd"] += int(bad.sum())
    out["isothermal"] = int(iso.sum())
    R = atlas.radius
    a = rng.uniform(0, 2 * np.pi, n)
    edge = ball_radius(R) * np.stack([np.cos(a), np.sin(a)], axis=1)
    inner = edge * np.sqrt(rng.uniform(0, 1, n))[:, None]
    imgs = stereo_to_sphere(np.concatenate([edge, inner]))
    out["ball_image"] = int(np.sum(np.linalg.norm(imgs - SOUTH, axis=1) > R * (1 + 1e-12)))
    x = fibonacci_sphere(n)
    x = x @ rotation_to(rng.normal(size=3)).T
    out["unit_norm"] = int(np.sum(np.abs(np.linalg.norm(stereo_to_sphere(_random_plane_points(rng, n)), axis=1) - 1) > 1e-14))
    w = partition_weights(atlas, x)
    out["partition_sum"] = int(np.sum(np.abs(w.sum(axis=1) - 1.0) > 1e-14))
    d = np.linalg.norm(x[:, None, :] - atlas.centers[None], axis=-1)
    out["partition_support"] = int(np.sum((d >= 2 * R) & (w != 0.0)) + np.sum((w < 0) | (w > 1)))
    return out
