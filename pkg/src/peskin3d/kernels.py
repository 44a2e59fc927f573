"""Stokeslet kernels, their derivatives, and frozen-coefficient kernels.

    G(x) = (1/8 pi) (I / |x| + x x^T / |x|^3) = G1(x) + G2(x)

All functions broadcast over leading axes of their 3-vector arguments.
Derivative arrays are indexed ``[..., i, k, l]`` for d G_kl / d x_i.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CoincidentPoints, DegenerateDirection, OriginSingular

EIGHT_PI = 8.0 * np.pi
_I3 = np.eye(3)


def _norm(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < 1e-300):
        raise OriginSingular("Stokeslet evaluated at the origin")
    return x, r


def stokeslet(x):
    """Free-space Stokeslet G(x), shape (..., 3, 3)."""
    g1, g2 = stokeslet_parts(x)
    return g1 + g2


def stokeslet_parts(x):
    """The split (G1, G2) with G1 = I/(8 pi |x|), G2 = x x^T/(8 pi |x|^3)."""
    x, r = _norm(x)
    r = r[..., None, None]
    g1 = _I3 / (EIGHT_PI * r)
    g2 = x[..., :, None] * x[..., None, :] / (EIGHT_PI * r ** 3)
    return g1 + 0 * g2, g2


def stokeslet_grad_parts(x):
    """Derivatives of G1 and G2: arrays [..., i, k, l] = d G^j_kl / d x_i."""
    x, r = _norm(x)
    r = r[..., None, None, None]
    xi = x[..., :, None, None]
    xk = x[..., None, :, None]
    xl = x[..., None, None, :]
    d1 = -xi * _I3[None, :, :] / (EIGHT_PI * r ** 3)
    d_ki = _I3[:, :, None]  # delta_{k i} indexed [i, k, .]
    d_il = _I3[:, None, :]  # delta_{i l} indexed [i, ., l]
    d2 = (d_ki * xl + xk * d_il) / (EIGHT_PI * r ** 3) - 3.0 * xk * xl * xi / (EIGHT_PI * r ** 5)
    return d1 + 0 * d2, d2


def stokeslet_grad(x):
    """d G_kl / d x_i, shape (..., 3, 3, 3) indexed [i, k, l]."""
    d1, d2 = stokeslet_grad_parts(x)
    return d1 + d2


def stokeslet_apply(d, f):
    """G(d) f without forming matrices; d, f of shape (..., 3)."""
    r2 = np.einsum("...i,...i->...", d, d)
    r = np.sqrt(r2)
    df = np.einsum("...i,...i->...", d, f)
    return (f / r[..., None] + d * (df / (r2 * r))[..., None]) / EIGHT_PI


# ---------------------------------------------------------------------------
# surface q-kernel (weak form on the sphere)
# ---------------------------------------------------------------------------
def surface_q_kernel(d, grad_y):
    """q_kl(x, y) = -dG_kl/dx_i (d) grad_{S^2} X_i(y).

    Parameters
    ----------
    d : ndarray (..., 3)
        X(x) - X(y).
    grad_y : ndarray (..., 3, 3)
        ``grad_y[..., i, :]`` is the ambient gradient of X_i at y.

    Returns
    -------
    ndarray (..., 3, 3, 3) indexed [a, k, l] with a the ambient tangent index.
    """
    dG = stokeslet_grad(d)
    return -np.einsum("...ikl,...ia->...akl", dG, grad_y)


def q_kernel_bound_constant():
    """C with |q_kl| <= C ||grad X|| / (|X|_*^2 |x - y|^2).

    Entrywise |dG_kl/dx_i| <= 6/(8 pi |x|^2); contracting with grad X (Frobenius
    norm ||grad X||) over i costs a factor sqrt(3).
    """
    return 6.0 * np.sqrt(3.0) / EIGHT_PI


# ---------------------------------------------------------------------------
# planar (chart) kernels
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Patch:
    """A parametrised surface patch theta -> X(theta) with Jacobian."""

    value: Callable
    jacobian: Callable

    def __call__(self, theta):
        return self.value(theta)


def affine_patch(A, b=(0.0, 0.0, 0.0)):
    """X(theta) = A theta + b."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return Patch(lambda t: A @ np.asarray(t, float) + b, lambda t: A.copy())


def frozen_kernel_m(A, dX, theta, eta):
    """Frozen kernels m_{i,k,l} = -dG_kl/dx_j (A (theta - eta)) dX_j/d eta_i.

    Parameters
    ----------
    A : (3, 2) frozen matrix
    dX : (3, 2) tangent vectors dX/d eta_i (columns)

    Returns
    -------
    ndarray (2, 3, 3)
    """
    A = np.asarray(A, dtype=float)
    x = A @ (np.asarray(theta, float) - np.asarray(eta, float))
    if np.linalg.norm(x) < 1e-14 * max(1.0, np.linalg.norm(A)):
        raise DegenerateDirection("A (theta - eta) vanishes")
    dG = stokeslet_grad(x)
    return -np.einsum("jkl,ji->ikl", dG, np.asarray(dX, float))


def frozen_kernel_m_parts(A, dX, theta, eta):
    """(m1, m2) from the closed forms (second code path)."""
    A = np.asarray(A, dtype=float)
    dX = np.asarray(dX, dtype=float)
    x = A @ (np.asarray(theta, float) - np.asarray(eta, float))
    r = np.linalg.norm(x)
    if r < 1e-14 * max(1.0, np.linalg.norm(A)):
        raise DegenerateDirection("A (theta - eta) vanishes")
    m1 = np.einsum("i,kl->ikl", dX.T @ x, _I3) / (EIGHT_PI * r ** 3)
    m2 = (-(np.einsum("ki,l->ikl", dX, x) + np.einsum("k,li->ikl", x, dX)) / (EIGHT_PI * r ** 3)
          + 3.0 * np.einsum("k,l,i->ikl", x, x, dX.T @ x) / (EIGHT_PI * r ** 5))
    return m1, m2


def q_kernel(patch, theta, eta):
    """q_{i,k,l} = -dG_kl/dx_m (X(theta) - X(eta)) dX_m/d eta_i, shape (2, 3, 3)."""
    d = patch.value(theta) - patch.value(eta)
    if np.linalg.norm(d) < 1e-300:
        raise DegenerateDirection("X(theta) = X(eta)")
    J = patch.jacobian(eta)
    return -np.einsum("mkl,mi->ikl", stokeslet_grad(d), J)


def remainder_kernel(patch, theta, eta):
    """K = -q + m with m frozen at A = grad X(eta), shape (2, 3, 3)."""
    J = patch.jacobian(eta)
    return -q_kernel(patch, theta, eta) + frozen_kernel_m(J, J, theta, eta)


def remainder_kernel_expanded(patch, theta, eta):
    """K = K1 + K21 + K22 from the expanded difference-quotient formulas.

    Written in terms of the normalised difference D = (X(theta) - X(eta))/|theta - eta|,
    the directional derivative e = (theta - eta)^/|.| . grad X(eta) and the
    remainder E = e - D.  Returns (2, 3, 3).
    """
    theta = np.asarray(theta, float)
    eta = np.asarray(eta, float)
    h = theta - eta
    r = np.linalg.norm(h)
    if r == 0:
        raise CoincidentPoints("theta = eta")
    J = patch.jacobian(eta)
    D = (patch.value(theta) - patch.value(eta)) / r
    e = J @ (h / r)
    E = e - D
    nD, ne = np.linalg.norm(D), np.linalg.norm(e)
    if ne < 1e-14 or nD < 1e-300:
        raise DegenerateDirection("degenerate difference quotient")
    inv3 = odd_power_difference(D, e, 3)  # 1/|D|^3 - 1/|e|^3
    inv5 = odd_power_difference(D, e, 5)
    dXi = J.T  # rows: dX/d eta_i
    c = 1.0 / (EIGHT_PI * r * r)
    # K1
    s1 = dXi @ E / nD ** 3 - (dXi @ e) * inv3
    K1 = c * np.einsum("i,kl->ikl", s1, _I3)
    # K21
    K21 = c * (
        -np.einsum("ik,l->ikl", dXi, E) / nD ** 3
        + np.einsum("ik,l->ikl", dXi, e) * inv3
        - np.einsum("il,k->ikl", dXi, E) / nD ** 3
        + np.einsum("il,k->ikl", dXi, e) * inv3
    )
    # K22
    pe = dXi @ e
    K22 = 3.0 * c * (
        np.einsum("k,l,i->ikl", D, D, dXi @ E) / nD ** 5
        + np.einsum("i,k,l->ikl", pe, D, E) / nD ** 5
        + np.einsum("i,l,k->ikl", pe, e, E) / nD ** 5
        - np.einsum("i,l,k->ikl", pe, e, e) * inv5
    )
    return K1 + K21 + K22


def finite_diff_remainder(patch, theta, eta):
    """E^eta X(theta) = (theta-eta)^ . grad X(eta) - (X(theta)-X(eta))/|theta-eta|."""
    theta = np.asarray(theta, float)
    eta = np.asarray(eta, float)
    h = theta - eta
    r = np.linalg.norm(h)
    if r == 0:
        raise CoincidentPoints("theta = eta")
    return patch.jacobian(eta) @ (h / r) - (patch.value(theta) - patch.value(eta)) / r


def odd_power_difference(u, v, k):
    """1/|u|^k - 1/|v|^k in the factored (cancellation-revealing) form, k odd."""
    if k % 2 != 1 or k < 1:
        raise ValueError("k must be a positive odd integer")
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    num = np.einsum("...i,...i->...", v - u, u + v)
    s = sum(nu ** (2 * (i - 1)) * nv ** (2 * (k - i)) for i in range(1, k + 1))
    return num / (nu ** k + nv ** k) * s / (nu ** k * nv ** k)


# ---------------------------------------------------------------------------
# principal-value identity
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PVCheck:
    """Annulus integral of grad_eta G(A eta) and the matching boundary terms.

    ``interior`` and ``boundary`` have shape (2, 3, 3) indexed [i, k, l]
    (derivative index i).  ``inner`` is -oint_{|eta|=eps} G n and ``outer`` is
    oint_{|eta|=L_out} G n, so that interior = inner + outer.
    """

    interior: np.ndarray
    inner: np.ndarray
    outer: np.ndarray

    @property
    def boundary(self):
        return self.inner + self.outer

    @property
    def mismatch(self):
        return float(np.abs(self.interior - self.boundary).max())

    @property
    def combined(self):
        """Magnitude of the truncated principal value itself."""
        return float(np.abs(self.interior).max())


def _grad_eta_G(A, eta):
    """d/d eta_i G(A eta) = dG/dx_j (A eta) A_ji, shape (..., 2, 3, 3)."""
    dG = stokeslet_grad(eta @ A.T)
    return np.einsum("...jkl,ji->...ikl", dG, A)


def _circle_term(A, rad, n_psi, center=None):
    psi = 2 * np.pi * np.arange(n_psi) / n_psi
    nrm = np.stack([np.cos(psi), np.sin(psi)], axis=1)
    c = np.zeros(2) if center is None else center
    G = stokeslet((c + rad * nrm) @ A.T)
    return np.einsum("pkl,pi->ikl", G, nrm) * rad * (2 * np.pi / n_psi)


def pv_annulus_check(A, eps, L_out, n_r=64, n_psi=256, panels=None, center=None):
    """Integrate grad_eta G(A eta) over eps < |eta - c| , |eta| < L_out in polar coordinates.

    The excluded disc has radius eps about ``center`` (default the origin) and
    must contain the singularity at 0.  Polar coordinates are taken about the
    center; the radial direction uses Gauss-Legendre panels in log r, so the
    r^-2 decay is integrated uniformly well over several decades.  With an
    off-center disc neither side of the divergence identity vanishes by
    symmetry, which makes ``mismatch`` a non-trivial check.
    """
    A = np.asarray(A, dtype=float)
    if not 0 < eps < L_out:
        raise ValueError("need 0 < eps < L_out")
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    if np.linalg.norm(c) >= eps:
        raise ValueError("the excluded disc must contain the origin")
    if panels is None:
        panels = max(1, int(np.ceil(np.log10(L_out / eps))))
    xg, wg = np.polynomial.legendre.leggauss(n_r)
    psi = 2 * np.pi * np.arange(n_psi) / n_psi
    dirs = np.stack([np.cos(psi), np.sin(psi)], axis=1)
    # distance from c to the outer circle along each direction
    cu = dirs @ c
    r_max = -cu + np.sqrt(cu * cu + L_out * L_out - c @ c)
    edges = np.linspace(np.log(eps), np.log(r_max), panels + 1)  # (panels+1, n_psi)
    total = np.zeros((2, 3, 3))
    for a, b in zip(edges[:-1], edges[1:]):
        u = 0.5 * (b - a)[None, :] * xg[:, None] + 0.5 * (a + b)[None, :]  # (n_r, n_psi)
        wu = 0.5 * (b - a)[None, :] * wg[:, None]
        r = np.exp(u)
        eta = c + r[:, :, None] * dirs[None, :, :]
        vals = _grad_eta_G(A, eta)  # (n_r, n_psi, 2, 3, 3)
        # d eta = r dr dpsi = r^2 du dpsi
        total += np.einsum("rpikl,rp->ikl", vals, wu * r * r) * (2 * np.pi / n_psi)
    inner = -_circle_term(A, eps, n_psi, c)
    outer = _circle_term(A, L_out, n_psi)
    return PVCheck(total, inner, outer)
