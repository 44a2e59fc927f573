"""Spherical-harmonic transforms on a Gauss-Legendre x uniform-longitude grid.

Orthonormal complex harmonics with the Condon-Shortley phase,

    Y_lm(theta, phi) = Pbar_l^m(cos theta) exp(i m phi),   int |Y_lm|^2 = 1,

are used throughout.  Fields are real, so only ``m >= 0`` coefficients are
stored, in a dense complex array ``c[l, m]`` (entries with ``m > l`` are zero).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DegreeOverflow


def lm_index(L):
    """Packed (l, m) ordering used by the Legendre tables: m outer, l inner."""
    ell, em = [], []
    for m in range(L + 1):
        for l in range(m, L + 1):
            ell.append(l)
            em.append(m)
    return np.array(ell), np.array(em)


def legendre(L, ct, st, derivs=False):
    """Normalised associated Legendre functions at colatitudes.

    Parameters
    ----------
    L : int
        Maximum degree.
    ct, st : ndarray, shape (n,)
        cos(theta) and sin(theta) (sin >= 0).
    derivs : bool
        Also return Pbar / sin(theta) and dPbar/dtheta.

    Returns
    -------
    P : ndarray, shape (L+1, L+1, n)  indexed [l, m, point]
    (Ps, dP) : same shapes, only if ``derivs``.  Ps[:, 0] is zero.
    """
    ct = np.asarray(ct, dtype=float)
    st = np.asarray(st, dtype=float)
    n = ct.shape[0]
    P = np.zeros((L + 1, L + 1, n))
    Ps = np.zeros((L + 1, L + 1, n)) if derivs else None
    pmm = np.full(n, 1.0 / np.sqrt(4 * np.pi))
    for m in range(L + 1):
        if m > 0:
            fac = -np.sqrt((2 * m + 1) / (2.0 * m))
            if derivs:
                # Pbar_m^m / sin = fac * Pbar_{m-1}^{m-1}: stays finite at the poles
                _column(L, m, ct, fac * pmm, Ps)
            pmm = fac * st * pmm
        _column(L, m, ct, pmm, P)
    if not derivs:
        return P
    dP = np.zeros_like(P)
    for l in range(L + 1):
        if l >= 1:
            dP[l, 0] = np.sqrt(l * (l + 1.0)) * P[l, 1]
        for m in range(1, l + 1):
            up = np.sqrt((l - m) * (l + m + 1.0)) * P[l, m + 1] if m < l else 0.0
            dn = np.sqrt((l + m) * (l - m + 1.0)) * P[l, m - 1]
            dP[l, m] = 0.5 * (up - dn)
    return P, Ps, dP


def _column(L, m, x, start, out):
    """Fill out[l, m] for l = m..L by the three-term recurrence in l."""
    out[m, m] = start
    if m + 1 > L:
        return
    out[m + 1, m] = np.sqrt(2 * m + 3.0) * x * start
    for l in range(m + 2, L + 1):
        a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
        b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
        out[l, m] = a * (x * out[l - 1, m] - b * out[l - 2, m])


def _mweights(L):
    w = np.full(L + 1, 2.0)
    w[0] = 1.0
    return w


class Transform:
    """Analysis/synthesis operators for one grid resolution.

    Parameters
    ----------
    L : int
        Maximum degree; the grid has L+1 colatitudes and 2(L+1) longitudes.
    """

    def __init__(self, L):
        if L < 0:
            raise ValueError("degree must be non-negative")
        self.L = L
        self.n_colat = L + 1
        self.n_lon = 2 * (L + 1)
        x, w = np.polynomial.legendre.leggauss(self.n_colat)
        order = np.argsort(-x)  # north to south
        self.cos_theta = x[order]
        self.gl_weights = w[order]
        self.theta = np.arccos(self.cos_theta)
        self.sin_theta = np.sqrt(1.0 - self.cos_theta ** 2)
        self.phi = 2 * np.pi * np.arange(self.n_lon) / self.n_lon
        self.P, self.Ps, self.dP = legendre(L, self.cos_theta, self.sin_theta, derivs=True)
        self.ell = np.arange(L + 1)

    # -- transforms -----------------------------------------------------
    def analyze(self, values):
        """Grid values (..., n_colat, n_lon) -> coefficients (..., L+1, L+1)."""
        values = np.asarray(values, dtype=float)
        F = np.fft.rfft(values, axis=-1)[..., : self.L + 1] * (2 * np.pi / self.n_lon)
        return np.einsum("...jm,lmj,j->...lm", F, self.P, self.gl_weights)

    def _lon_synth(self, G):
        G = np.asarray(G)
        pad = np.zeros(G.shape[:-1] + (self.n_lon // 2 + 1,), dtype=complex)
        pad[..., : self.L + 1] = G
        pad[..., 0] = pad[..., 0].real
        return np.fft.irfft(pad, n=self.n_lon, axis=-1) * self.n_lon

    def synthesize(self, coeffs):
        """Coefficients (..., L'+1, L'+1) with L' <= L -> grid values."""
        c = self.fit(coeffs)
        G = np.einsum("...lm,lmj->...jm", c, self.P)
        return self._lon_synth(G)

    def fit(self, coeffs):
        """Zero-pad coefficients to this degree, or raise if they exceed it."""
        c = np.asarray(coeffs, dtype=complex)
        Lc = c.shape[-1] - 1
        if Lc == self.L:
            return c
        if Lc > self.L:
            tail = np.abs(c[..., self.L + 1 :, :]).max() if Lc > self.L else 0.0
            if tail > 0:
                raise DegreeOverflow(f"coefficients of degree {Lc} exceed grid degree {self.L}")
            return c[..., : self.L + 1, : self.L + 1]
        out = np.zeros(c.shape[:-2] + (self.L + 1, self.L + 1), dtype=complex)
        out[..., : Lc + 1, : Lc + 1] = c
        return out

    def gradient(self, coeffs):
        """Ambient surface gradient, shape (..., 3, n_colat, n_lon)."""
        c = self.fit(coeffs)
        m = np.arange(self.L + 1)
        Gt = np.einsum("...lm,lmj->...jm", c, self.dP)
        Gp = np.einsum("...lm,lmj->...jm", c * (1j * m), self.Ps)
        ft = self._lon_synth(Gt)
        fp = self._lon_synth(Gp)
        et, ep = self.frames()
        return (ft[..., None, :, :] * et + fp[..., None, :, :] * ep)

    def frames(self):
        """Unit vectors e_theta, e_phi at the nodes, each (3, n_colat, n_lon)."""
        th = self.theta[:, None]
        ph = self.phi[None, :]
        et = np.stack(np.broadcast_arrays(np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th) + 0 * ph))
        ep = np.stack(np.broadcast_arrays(-np.sin(ph) + 0 * th, np.cos(ph) + 0 * th, 0 * th + 0 * ph))
        return et, ep

    def nodes(self):
        """Unit node vectors, shape (3, n_colat, n_lon)."""
        th = self.theta[:, None]
        ph = self.phi[None, :]
        return np.stack(
            np.broadcast_arrays(np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th) + 0 * ph)
        )

    def weights(self):
        """Quadrature weights, shape (n_colat, n_lon); they sum to 4 pi."""
        return np.repeat(self.gl_weights[:, None] * (2 * np.pi / self.n_lon), self.n_lon, axis=1)

    def laplacian(self, coeffs):
        c = np.asarray(coeffs)
        l = np.arange(c.shape[-2])
        return c * (-(l * (l + 1.0)))[:, None]

    def truncate(self, coeffs, lmax):
        c = np.array(coeffs, dtype=complex, copy=True)
        c[..., lmax + 1 :, :] = 0.0
        return c


@lru_cache(maxsize=16)
def transform(L):
    """Cached :class:`Transform` for degree L."""
    return Transform(L)


def point_basis(L, theta, phi, grad=False):
    """Real design matrices for evaluating real fields at arbitrary points.

    A real field with coefficients ``c`` (dense, m >= 0) evaluates as
    ``f = B @ concat(Re c_packed, Im c_packed)`` where the packing follows
    :func:`lm_index`.

    Returns
    -------
    B : ndarray, shape (n, 2 n_lm)
    dB : ndarray, shape (3, n, 2 n_lm), ambient gradient, only if ``grad``.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    ell, em = lm_index(L)
    w = _mweights(L)[em]
    if grad:
        P, Ps, dP = legendre(L, ct, st, derivs=True)
    else:
        P = legendre(L, ct, st)
    Pk = P[ell, em]  # (n_lm, n)
    ph = em[:, None] * phi[None, :]
    cs, sn = np.cos(ph), np.sin(ph)
    B = np.concatenate([(w[:, None] * Pk * cs).T, (-w[:, None] * Pk * sn).T], axis=1)
    if not grad:
        return B
    dPk = dP[ell, em]
    Psk = Ps[ell, em]
    # d/dtheta and (1/sin) d/dphi of Re/Im parts
    t_re, t_im = (w[:, None] * dPk * cs).T, (-w[:, None] * dPk * sn).T
    p_re, p_im = (-w[:, None] * em[:, None] * Psk * sn).T, (-w[:, None] * em[:, None] * Psk * cs).T
    Bt = np.concatenate([t_re, t_im], axis=1)
    Bp = np.concatenate([p_re, p_im], axis=1)
    et = np.stack([ct * np.cos(phi), ct * np.sin(phi), -st])
    ep = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)])
    dB = et[:, :, None] * Bt[None] + ep[:, :, None] * Bp[None]
    return B, dB


def pack(coeffs):
    """Dense (..., L+1, L+1) complex -> real (..., 2 n_lm) for :func:`point_basis`."""
    c = np.asarray(coeffs)
    L = c.shape[-1] - 1
    ell, em = lm_index(L)
    ck = c[..., ell, em]
    return np.concatenate([ck.real, ck.imag], axis=-1)


def cart_to_angles(x):
    """Colatitude and longitude of unit vectors (..., 3)."""
    x = np.asarray(x, dtype=float)
    theta = np.arctan2(np.hypot(x[..., 0], x[..., 1]), x[..., 2])
    phi = np.arctan2(x[..., 1], x[..., 0])
    return theta, phi


def evaluate(coeffs, x, grad=False):
    """Evaluate real fields with the given coefficients at unit vectors x.

    Parameters
    ----------
    coeffs : ndarray, shape (..., L+1, L+1)
    x : ndarray, shape (n, 3)

    Returns
    -------
    values : ndarray, shape (..., n)
    gradients : ndarray, shape (..., 3, n), only if ``grad``.
    """
    x = np.atleast_2d(x)
    c = np.asarray(coeffs)
    L = c.shape[-1] - 1
    th, ph = cart_to_angles(x)
    v = pack(c)
    if grad:
        B, dB = point_basis(L, th, ph, grad=True)
        return v @ B.T, np.einsum("...k,dnk->...dn", v, dB)
    B = point_basis(L, th, ph)
    return v @ B.T
