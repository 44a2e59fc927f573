"""Boundary-integral quadrature on the parameter sphere.

The primary scheme rotates a polar grid so that the target sits at its pole.
In the rotated colatitude s the surface measure carries a factor sin(s), which
cancels the 1/|x - y| ~ 1/s singularity of the Stokeslet; the remaining
integrand is smooth in (s, psi), so Gauss-Legendre in s and the trapezoid rule
in psi converge spectrally.  Field values at rotated nodes come from direct
spherical-harmonic synthesis.

Targets on one grid ring share the rotation Ry(theta_j); the longitude of the
target only multiplies the coefficients by exp(i m phi_k), so one design
matrix per ring serves every target on it.
"""
from __future__ import annotations

import os
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import sht
from .errors import DegenerateState
from .kernels import EIGHT_PI, stokeslet, stokeslet_apply, stokeslet_grad
from .membrane import (MembraneState, SphereGrid, arc_chord, dealias, elastic_force_density,
                       surface_gradient)

ARC_CHORD_MIN = 1e-8


@dataclass(frozen=True)
class QuadratureScheme:
    """Quadrature choice.

    Attributes
    ----------
    kind : {"polar_rotated", "punctured"}
    oversample : float
        Rotated grid uses ``n_s = ceil(oversample * n_colat)`` colatitudes and
        ``n_psi = 2 n_s`` longitudes (polar scheme only).
    n_s, n_psi : int, optional
        Explicit rotated-grid sizes, overriding ``oversample``.
    workers : int, optional
        Thread count for ring-parallel evaluation; defaults to the
        ``PESKIN3D_THREADS`` environment variable, else 1.
    """

    kind: str = "polar_rotated"
    oversample: float = 2.0
    n_s: int | None = None
    n_psi: int | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.kind not in ("polar_rotated", "punctured"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.oversample < 1.0:
            raise ValueError("oversample must be >= 1 (rotated grid at least as fine as the source)")

    def resolution(self, grid):
        n_s = self.n_s if self.n_s is not None else int(np.ceil(self.oversample * grid.n_colat))
        if n_s < grid.n_colat:
            raise ValueError("rotated grid must be at least as fine as the source grid")
        n_psi = self.n_psi if self.n_psi is not None else 2 * n_s
        return n_s, n_psi

    def n_workers(self):
        if self.workers is not None:
            return max(1, int(self.workers))
        try:
            return max(1, int(os.environ.get("PESKIN3D_THREADS", "1")))
        except ValueError:
            return 1


POLAR = QuadratureScheme()
PUNCTURED = QuadratureScheme("punctured")


# ---------------------------------------------------------------------------
# rotated polar grid machinery
# ---------------------------------------------------------------------------
def local_grid(n_s, n_psi):
    """Polar grid around the north pole.

    Returns
    -------
    p : (n_s * n_psi, 3) unit vectors
    w : (n_s * n_psi,) weights including the sin(s) Jacobian
    s : (n_s * n_psi,) polar angles
    """
    x, wx = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * np.pi * (x + 1.0)
    ws = 0.5 * np.pi * wx
    psi = 2 * np.pi * np.arange(n_psi) / n_psi
    S, PSI = np.meshgrid(s, psi, indexing="ij")
    p = np.stack([np.sin(S) * np.cos(PSI), np.sin(S) * np.sin(PSI), np.cos(S)], axis=-1).reshape(-1, 3)
    w = (ws[:, None] * np.sin(s)[:, None] * np.full((1, n_psi), 2 * np.pi / n_psi)).ravel()
    return p, w, S.ravel()


def rot_y(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class LocalSynth:
    """Spherical-harmonic synthesis on the rotated polar grid of one resolution.

    Legendre tables at the Gauss-Legendre colatitudes s are shared by every
    target; a target only changes the coefficients, through a rotation.
    """

    def __init__(self, L, n_s, n_psi):
        if n_psi <= 2 * L:
            raise ValueError("n_psi must exceed 2L to resolve all longitudinal modes")
        self.L, self.n_s, self.n_psi = L, n_s, n_psi
        self.p, self.w, self.s = local_grid(n_s, n_psi)
        s1 = self.s.reshape(n_s, n_psi)[:, 0]
        self.P, self.Ps, self.dP = sht.legendre(L, np.cos(s1), np.sin(s1), derivs=True)
        S = s1[:, None]
        psi = 2 * np.pi * np.arange(n_psi)[None, :] / n_psi
        et = np.stack(np.broadcast_arrays(np.cos(S) * np.cos(psi), np.cos(S) * np.sin(psi), -np.sin(S) + 0 * psi))
        ep = np.stack(np.broadcast_arrays(-np.sin(psi) + 0 * S, np.cos(psi) + 0 * S, 0 * S + 0 * psi))
        self.et = et.reshape(3, -1)
        self.ep = ep.reshape(3, -1)

    def _lon(self, G):
        pad = np.zeros(G.shape[:-1] + (self.n_psi // 2 + 1,), dtype=complex)
        pad[..., : self.L + 1] = G
        pad[..., 0] = pad[..., 0].real
        out = np.fft.irfft(pad, n=self.n_psi, axis=-1) * self.n_psi
        return out.reshape(out.shape[:-2] + (-1,))

    def _legendre_sum(self, c, table):
        """sum_l c[..., l, m] table[l, m, s] -> (..., s, m) via batched matmul over m."""
        lead = c.shape[:-2]
        cm = np.moveaxis(c.reshape((-1,) + c.shape[-2:]), -1, 0)  # (m, X, l)
        tm = np.moveaxis(table, 1, 0)  # (m, l, s)
        out = np.matmul(cm, tm.astype(complex))  # (m, X, s)
        return np.moveaxis(out, 0, -1).reshape(lead + (self.n_s, self.L + 1))

    def values(self, c):
        """Coefficients (..., L+1, L+1) -> values (..., n_s * n_psi)."""
        return self._lon(self._legendre_sum(c, self.P))

    def gradient(self, c):
        """Ambient gradient in the local frame, (..., 3, n_s * n_psi)."""
        m = np.arange(self.L + 1)
        ft = self._lon(self._legendre_sum(c, self.dP))
        fp = self._lon(self._legendre_sum(c * (1j * m), self.Ps))
        return ft[..., None, :] * self.et + fp[..., None, :] * self.ep


@lru_cache(maxsize=8)
def local_synth(L, n_s, n_psi):
    return LocalSynth(L, n_s, n_psi)


@lru_cache(maxsize=256)
def _generators(L):
    """Real antisymmetric generators of f -> f o Ry(beta) on each degree block."""
    gens = []
    for l in range(L + 1):
        m = np.arange(-l, l + 1)
        up = np.sqrt(l * (l + 1.0) - m[:-1] * (m[:-1] + 1))
        M = np.zeros((2 * l + 1, 2 * l + 1))
        # d/dbeta Y_lm o Ry = (L+ - L-)/2 Y_lm
        M[np.arange(1, 2 * l + 1), np.arange(2 * l)] = 0.5 * up
        M[np.arange(2 * l), np.arange(1, 2 * l + 1)] = -0.5 * up
        gens.append(M)
    return gens


@lru_cache(maxsize=512)
def rotation_blocks(L, beta):
    """Padded Wigner blocks E[l] (2L+1, 2L+1) with Y_lm o Ry(beta) = sum_m' E[l][m', m] Y_lm'.

    Indices are offset by L; entries with |m| > l are zero.
    """
    E = np.zeros((L + 1, 2 * L + 1, 2 * L + 1))
    for l, M in enumerate(_generators(L)):
        E[l, L - l : L + l + 1, L - l : L + l + 1] = expm(beta * M)
    return E


def rotate_coeffs(c, phi, beta):
    """Coefficients of f o Rz(phi) Ry(beta).

    Parameters
    ----------
    c : ndarray (nf, L+1, L+1), real-field coefficients (m >= 0)
    phi : ndarray (nt,)
    beta : float

    Returns
    -------
    ndarray (nt, nf, L+1, L+1)
    """
    nf, L1, _ = c.shape
    L = L1 - 1
    m = np.arange(L + 1)
    cp = c[None] * np.exp(1j * np.outer(phi, m))[:, None, None, :]  # (nt, nf, l, m)
    full = np.zeros(cp.shape[:-1] + (2 * L + 1,), dtype=complex)
    full[..., L:] = cp
    sign = (-1.0) ** m[1:]
    full[..., :L][..., ::-1] = sign * np.conj(cp[..., 1:])
    E = rotation_blocks(L, float(beta))
    nt = cp.shape[0]
    x = np.moveaxis(full.reshape(nt * nf, L + 1, 2 * L + 1), 0, -1)  # (l, b, X)
    rot = np.matmul(E[:, L:, :].astype(complex), x)  # (l, m>=0, X)
    return np.moveaxis(rot, -1, 0).reshape(nt, nf, L + 1, L + 1)


def _ring_fields(coeffs, L, n_s, n_psi, theta, phis, grad):
    """Values (and ambient gradients) of the fields at rotated nodes for each target.

    The rotated nodes for the target at (theta, phi_k) are y = Rz(phi_k) Ry(theta) p.

    Returns
    -------
    vals : (nt, nf, n_loc)
    grads : (nt, nf, 3, n_loc) or None, in the physical frame
    p, w, s : local geometry
    """
    ls = local_synth(L, n_s, n_psi)
    rc = rotate_coeffs(coeffs, phis, theta)
    vals = ls.values(rc)
    grads = None
    if grad:
        g = ls.gradient(rc)
        R = np.stack([rot_z(a) @ rot_y(theta) for a in phis])  # (nt, 3, 3)
        grads = np.einsum("tab,tfbn->tfan", R, g)
    return vals, grads, ls.p, ls.w, ls.s


def clear_cache():
    local_synth.cache_clear()
    rotation_blocks.cache_clear()


def _targets_by_ring(theta, tol=1e-13):
    order = np.argsort(theta, kind="stable")
    groups = []
    start = 0
    for i in range(1, len(order) + 1):
        if i == len(order) or abs(theta[order[i]] - theta[order[start]]) > tol:
            groups.append(order[start:i])
            start = i
    return groups


def _map_rings(fn, groups, workers):
    if workers <= 1 or len(groups) <= 1:
        return [fn(g) for g in groups]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, groups))


def _check_state(state):
    ac = arc_chord(state)
    if ac < ARC_CHORD_MIN:
        raise DegenerateState(f"arc-chord constant {ac:.3e} below {ARC_CHORD_MIN}")


def _as_targets(grid, target):
    """Normalise targets to (N, 3) unit vectors; None means all grid nodes."""
    if target is None:
        return grid.nodes.reshape(3, -1).T, True
    t = np.atleast_2d(np.asarray(target, dtype=float))
    return t / np.linalg.norm(t, axis=1, keepdims=True), False


# ---------------------------------------------------------------------------
# Stokes single layer
# ---------------------------------------------------------------------------
def velocity_at(state, force, target=None, scheme=POLAR, check=True):
    """Single-layer velocity u(x) = int G(X(x) - X(y)) F(y) dy.

    Parameters
    ----------
    state : MembraneState
    force : ndarray (3, n_colat, n_lon)
        Force density per unit reference area, on the grid.
    target : array_like (3,) or (N, 3), optional
        Unit parameter points; all grid nodes if omitted.
    scheme : QuadratureScheme

    Returns
    -------
    ndarray (3,) for a single target, else (N, 3).
    """
    if check:
        _check_state(state)
    grid = state.grid
    tg, on_grid = _as_targets(grid, target)
    single = target is not None and np.ndim(target) == 1
    if scheme.kind == "punctured":
        out = _punctured_strong(state, force, tg)
        return out[0] if single else out
    fc = grid.sht.analyze(force)
    coeffs = np.concatenate([state.coeffs, fc], axis=0)
    if on_grid:
        Xt = state.points
    else:
        Xt = sht.evaluate(state.coeffs, tg).T
    th, ph = sht.cart_to_angles(tg)
    n_s, n_psi = scheme.resolution(grid)
    L = grid.L
    out = np.zeros((len(tg), 3))

    def ring(idx):
        vals, _, _, w, _ = _ring_fields(coeffs, L, n_s, n_psi, th[idx[0]], ph[idx], False)
        Xy = vals[:, :3].transpose(0, 2, 1)
        Fy = vals[:, 3:].transpose(0, 2, 1)
        d = Xt[idx][:, None, :] - Xy
        return idx, np.einsum("tpk,p->tk", stokeslet_apply(d, Fy), w)

    for idx, u in _map_rings(ring, _targets_by_ring(th), scheme.n_workers()):
        out[idx] = u
    return out[0] if single else out


def _nearest_node(grid, tg):
    nodes = grid.nodes.reshape(3, -1).T
    return np.argmax(tg @ nodes.T, axis=1)


def _punctured_strong(state, force, tg):
    grid = state.grid
    w = grid.weights.ravel()
    Xn = state.points
    Fn = force.reshape(3, -1).T
    skip = _nearest_node(grid, tg)
    if np.allclose(tg, grid.nodes.reshape(3, -1).T[skip], atol=1e-14):
        Xt = Xn[skip]
    else:
        Xt = sht.evaluate(state.coeffs, tg).T
    out = np.zeros((len(tg), 3))
    for a in range(len(tg)):
        d = Xt[a] - Xn
        d[skip[a]] = 1.0
        v = stokeslet_apply(d, Fn) * w[:, None]
        v[skip[a]] = 0.0
        out[a] = v.sum(axis=0)
    return out


def velocity_field(state, law, scheme=POLAR, dealias_force=False, check=True):
    """Velocity at every node, shape (3, n_colat, n_lon).

    Cost is O(N * n_s * n_psi * L^2) for N nodes (polar scheme).
    """
    F = elastic_force_density(state, law, dealias_output=dealias_force)
    u = velocity_at(state, F, None, scheme, check=check)
    return u.T.reshape((3,) + state.grid.shape)


# ---------------------------------------------------------------------------
# weak (integrated-by-parts) form
# ---------------------------------------------------------------------------
def _tension_field(law, grads):
    """Z_l = T(lambda) grad X_l from ambient gradients (..., 3[l], 3[a], n)."""
    lam = np.sqrt(np.einsum("...lan,...lan->...n", grads, grads))
    law.check_range(lam)
    return law.T(lam)[..., None, None, :] * grads


def velocity_weak_form(state, law, target=None, scheme=POLAR, z_override=None, check=True):
    """Velocity from the integrated-by-parts form.

    u_k(x) = -int q_kl(x, y) . (Z_l(y) - Z_l(x)) dy - 2 int G_kl(X(x) - X(y)) (Z_l(x) . y) dy

    with Z_l = T(lambda) grad X_l and q_kl = grad_y G_kl(X(x) - X(y)).  The
    second integral is the exact contribution of the subtracted constant:
    for a fixed ambient vector c, int grad g . c = 2 int g (c . y) on S^2.

    Parameters
    ----------
    z_override : callable, optional
        ``z_override(y, grads) -> Z`` replaces T(lambda) grad X (used for
        consistency checks with prescribed tension fields).

    Returns
    -------
    ndarray (3,) or (N, 3)
    """
    if check:
        _check_state(state)
    grid = state.grid
    tg, on_grid = _as_targets(grid, target)
    single = target is not None and np.ndim(target) == 1
    zfun = z_override if z_override is not None else (lambda y, g: _tension_field(law, g))
    # Z at the targets
    Xt, gt = sht.evaluate(state.coeffs, tg, grad=True)  # (3, N), (3, 3, N)
    Zt = zfun(tg.T, gt)  # (3[l], 3[a], N)
    if scheme.kind == "punctured":
        out = _punctured_weak(state, zfun, tg, Xt.T, Zt)
        return out[0] if single else out
    th, ph = sht.cart_to_angles(tg)
    n_s, n_psi = scheme.resolution(grid)
    L = grid.L
    out = np.zeros((len(tg), 3))

    def ring(idx):
        vals, grads, q, w, _ = _ring_fields(state.coeffs, L, n_s, n_psi, th[idx[0]], ph[idx], True)
        res = np.zeros((len(idx), 3))
        for t, a in enumerate(idx):
            y = rot_z(ph[a]) @ rot_y(th[a]) @ q.T  # (3, n_loc)
            gy = grads[t]  # (3[i], 3[a], n)
            Zy = zfun(y, gy)
            d = (Xt[:, a][:, None] - vals[t]).T  # (n, 3)
            dG = stokeslet_grad(d)  # (n, i, k, l)
            # q_kl . V_l = -dG_kl/dx_i (grad X_i . V_l)
            dZ = Zy - Zt[:, :, a][:, :, None]  # (l, a, n)
            gv = np.einsum("ian,lan->nil", gy, dZ)
            first = np.einsum("nikl,nil,n->k", dG, gv, w)  # = -int q . (Z - C)
            cy = np.einsum("la,an->nl", Zt[:, :, a], y)
            second = -2.0 * np.einsum("nkl,nl,n->k", stokeslet(d), cy, w)
            res[t] = first + second
        return idx, res

    for idx, u in _map_rings(ring, _targets_by_ring(th), scheme.n_workers()):
        out[idx] = u
    return out[0] if single else out


def _punctured_weak(state, zfun, tg, Xt, Zt):
    grid = state.grid
    w = grid.weights.ravel()
    nodes = grid.nodes.reshape(3, -1)
    Xn = state.points
    gn = surface_gradient(state).reshape(3, 3, -1)
    Zn = zfun(nodes, gn)
    skip = _nearest_node(grid, tg)
    out = np.zeros((len(tg), 3))
    for a in range(len(tg)):
        d = Xt[a] - Xn
        d[skip[a]] = 1.0
        wa = w.copy()
        wa[skip[a]] = 0.0
        dG = stokeslet_grad(d)
        dZ = Zn - Zt[:, :, a][:, :, None]
        gv = np.einsum("ian,lan->nil", gn, dZ)
        first = np.einsum("nikl,nil,n->k", dG, gv, wa)
        cy = np.einsum("la,an->nl", Zt[:, :, a], nodes)
        second = -2.0 * np.einsum("nkl,nl,n->k", stokeslet(d), cy, wa)
        out[a] = first + second
    return out


# ---------------------------------------------------------------------------
# scalar layer potentials on the unit sphere
# ---------------------------------------------------------------------------
def single_layer_scalar(grid, density, target=None, scheme=POLAR):
    """(1/4 pi) int density(y) / |x - y| dy on the unit sphere.

    Parameters
    ----------
    grid : SphereGrid
    density : ndarray (n_colat, n_lon)
    target : array_like (3,) or (N, 3), optional (all nodes if omitted)
    """
    c = grid.sht.analyze(density)[None]
    return _scalar_layer(grid, c, target, scheme, 1.0 / (4 * np.pi))


def _scalar_layer(grid, coeffs, target, scheme, factor):
    tg, _ = _as_targets(grid, target)
    single = target is not None and np.ndim(target) == 1
    if scheme.kind == "punctured":
        out = _punctured_scalar(grid, coeffs[0], tg, factor)
        return out[0] if single else out
    th, ph = sht.cart_to_angles(tg)
    n_s, n_psi = scheme.resolution(grid)
    out = np.zeros(len(tg))

    def ring(idx):
        vals, _, _, w, s = _ring_fields(coeffs, grid.L, n_s, n_psi, th[idx[0]], ph[idx], False)
        # |x - y| = 2 sin(s/2) in the rotated frame
        kern = w / (2.0 * np.sin(0.5 * s))
        return idx, factor * vals[:, 0, :] @ kern

    for idx, u in _map_rings(ring, _targets_by_ring(th), scheme.n_workers()):
        out[idx] = u
    return out[0] if single else out


def _punctured_scalar(grid, coeffs, tg, factor):
    w = grid.weights.ravel()
    nodes = grid.nodes.reshape(3, -1).T
    f = grid.sht.synthesize(coeffs).ravel() * w
    skip = _nearest_node(grid, tg)
    r = np.linalg.norm(tg[:, None, :] - nodes[None], axis=-1)
    r[np.arange(len(tg)), skip] = np.inf
    return factor * (1.0 / r) @ f


def s00_apply(grid, field, scheme=POLAR):
    """(1/8 pi) int Lap_{S^2} field(y) / |x - y| dy at every node, (n_colat, n_lon)."""
    c = grid.sht.laplacian(grid.sht.analyze(field))[None]
    return _scalar_layer(grid, c, None, scheme, 1.0 / EIGHT_PI).reshape(grid.shape)


def single_layer_eigen_error(L, ell, m=0, scheme=POLAR):
    """Max relative error of the single-layer eigenrelation for Y_{ell m} on grid L."""
    grid = SphereGrid(L)
    Y = _real_harmonic(grid, ell, m)
    u = single_layer_scalar(grid, Y, None, scheme).reshape(grid.shape)
    return float(np.abs(u - Y / (2 * ell + 1)).max() / (np.abs(Y).max() / (2 * ell + 1)))


def s00_eigen_error(L, ell, m=0, scheme=POLAR):
    grid = SphereGrid(L)
    Y = _real_harmonic(grid, ell, m)
    lam = -ell * (ell + 1.0) / (2 * (2 * ell + 1))
    u = s00_apply(grid, Y, scheme)
    return float(np.abs(u - lam * Y).max() / (abs(lam) * np.abs(Y).max()))


def _real_harmonic(grid, ell, m):
    """Re Y_{ell |m|} (m >= 0) or Im Y_{ell |m|} (m < 0) on the grid."""
    c = np.zeros((grid.L + 1, grid.L + 1), dtype=complex)
    c[ell, abs(m)] = 1.0 if m >= 0 else -1j
    if m == 0:
        return grid.sht.synthesize(c)
    # a real field with stored coefficient c represents 2 Re(c Y)
    return grid.sht.synthesize(0.5 * c)


def real_harmonic(grid, ell, m=0):
    return _real_harmonic(grid, ell, m)
