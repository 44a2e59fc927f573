"""Frozen-coefficient symbols of the linearised membrane operator.

Freezing the surface gradient at a 3x2 matrix A turns the linearised problem
into a Fourier multiplier on R^2,

    L_A(xi) = (F G_A)(xi) M_A(xi),

where F G_A is the transform of the Stokeslet composed with the affine map
theta -> A theta and M_A is the symbol of the frozen elastic force.  With
B = sqrt(A^T A), Q = A B^-1, mu = 1 / (det B |B^-1 xi|) and the unit vector
v = Q R B^-1 xi / |B^-1 xi| (R a quarter turn),

    F G_A(xi) = (mu / 4) (I + v v^T),
    M_A(xi)   = (T/lam) (|xi|^2 I - A xi A xi^T / lam^2) + T' A xi A xi^T / lam^2,

with lam = |A|_F.  This module evaluates these symbols, checks their spectral
bounds, and builds the real-space semigroup kernel by FFT.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import (GridTooCoarse, RankDeficient, SingularResolvent, StretchOutOfRange,
                     ZeroFrequency)
from .membrane import TensionLaw, surface_gradient

QUARTER_TURN = np.array([[0.0, -1.0], [1.0, 0.0]])
RANK_TOL = 1e-12
# relative slack for comparing computed spectra with analytic bounds; the
# isometric case attains the lower bound exactly
ROUNDOFF = 1e-12


# ---------------------------------------------------------------------------
# matrix factors
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FrozenMatrix:
    """A 3x2 matrix with its extreme singular values (sigma2 |xi| <= |A xi| <= sigma1 |xi|)."""

    A: np.ndarray
    sigma1: float
    sigma2: float

    @classmethod
    def from_matrix(cls, A):
        A = np.asarray(A, dtype=float)
        if A.shape != (3, 2):
            raise ValueError(f"frozen matrix must be 3x2, got {A.shape}")
        s = np.linalg.svd(A, compute_uv=False)
        if not np.all(np.isfinite(s)) or s[1] <= RANK_TOL * max(s[0], 1e-300):
            raise RankDeficient(f"frozen matrix has singular values {s}")
        return cls(A, float(s[0]), float(s[1]))


@dataclass(frozen=True)
class SymbolReport:
    """Static factors of a frozen matrix.

    Attributes
    ----------
    B : (2, 2) SPD square root of A^T A
    Q : (3, 2) isometry A B^-1
    U : (3, 2) A (A^T A)^-1
    P : (3, 3) orthogonal projector onto the column span of A
    detB, lam_F : float
    """

    A: np.ndarray
    sigma1: float
    sigma2: float
    B: np.ndarray
    Binv: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    P: np.ndarray
    detB: float
    lam_F: float


def matrix_factors(A):
    """Compute :class:`SymbolReport` for a nondegenerate 3x2 matrix.

    Raises
    ------
    RankDeficient
    """
    fm = A if isinstance(A, FrozenMatrix) else FrozenMatrix.from_matrix(A)
    A = fm.A
    G = A.T @ A
    w, V = np.linalg.eigh(G)
    w = np.maximum(w, 1e-300)
    B = (V * np.sqrt(w)) @ V.T
    Binv = (V / np.sqrt(w)) @ V.T
    Q = A @ Binv
    Ginv = (V / w) @ V.T
    U = A @ Ginv
    P = U @ A.T
    return SymbolReport(A, fm.sigma1, fm.sigma2, B, Binv, Q, U, P, float(np.sqrt(w[0] * w[1])),
                        float(np.linalg.norm(A)))


def _xi(xi):
    xi = np.asarray(xi, dtype=float)
    n = np.linalg.norm(xi, axis=-1)
    if np.any(n == 0.0):
        raise ZeroFrequency("symbols are undefined at xi = 0")
    return xi, n


def symbol_vectors(report, xi):
    """mu(xi) and v(xi), shapes (...) and (..., 3)."""
    xi, _ = _xi(xi)
    eta = xi @ report.Binv.T
    ne = np.linalg.norm(eta, axis=-1)
    mu = 1.0 / (report.detB * ne)
    v = (eta @ QUARTER_TURN.T) @ report.Q.T / ne[..., None]
    return mu, v


def green_symbol(report, xi):
    """(F G_A)(xi) = (mu/4)(I + v v^T), shape (..., 3, 3)."""
    mu, v = symbol_vectors(report, xi)
    return (mu / 4.0)[..., None, None] * (np.eye(3) + v[..., :, None] * v[..., None, :])


def green_symbol_direct(report, xi):
    """Same symbol from the transforms of 1/|B theta| and B theta B theta^T / |B theta|^3.

    (1 / (4 det B)) [(I + Q Q^T) / |eta| - Q eta Q eta^T / |eta|^3],  eta = B^-1 xi.
    """
    xi, _ = _xi(xi)
    eta = xi @ report.Binv.T
    ne = np.linalg.norm(eta, axis=-1)[..., None, None]
    qe = eta @ report.Q.T
    I_QQ = np.eye(3) + report.Q @ report.Q.T
    return (I_QQ / ne - qe[..., :, None] * qe[..., None, :] / ne ** 3) / (4.0 * report.detB)


def linear_symbol(report, xi):
    """L_A^L(xi) = |xi|^2 (F G_A)(xi), shape (..., 3, 3)."""
    xi, n = _xi(xi)
    return (n ** 2)[..., None, None] * green_symbol(report, xi)


def linear_spectrum(report, xi):
    """Closed-form eigenvalues (ascending) and the top eigenvector of L_A^L(xi)."""
    xi, n = _xi(xi)
    mu, v = symbol_vectors(report, xi)
    lo = mu * n ** 2 / 4.0
    return np.stack([lo, lo, 2.0 * lo], axis=-1), v


# ---------------------------------------------------------------------------
# tension tensors and the full symbol
# ---------------------------------------------------------------------------
def _frozen_coeffs(A, law):
    lam = float(np.linalg.norm(A))
    if not (law.lam_lo <= lam <= law.lam_hi):
        raise StretchOutOfRange(f"|A|_F = {lam} outside [{law.lam_lo}, {law.lam_hi}]")
    T = float(law.T(np.array([lam]))[0])
    dT = float(law.dtau(np.array([lam]))[0])
    return lam, T, dT


def tension_tensor(A, law):
    """Frozen tension tensor T_F(A) indexed [l, i, q, m].

    (T_F grad Y)_{l i} = (T/lam) dY_l/dtheta_i - (T/lam - T') A_li (A : grad Y) / lam^2.
    """
    A = np.asarray(A, dtype=float)
    lam, f1, dT = _frozen_coeffs(A, law)
    f2 = f1 - dT
    I = np.einsum("lq,im->liqm", np.eye(3), np.eye(2))
    return f1 * I - f2 * np.einsum("li,qm->liqm", A, A) / lam ** 2


def apply_tension_tensor(T, dY):
    return np.einsum("liqm,...qm->...li", T, dY)


def force_symbol(A, law, xi):
    """M_A(xi), shape (..., 3, 3)."""
    A = np.asarray(A, dtype=float)
    xi, n = _xi(xi)
    lam, f1, dT = _frozen_coeffs(A, law)
    ax = xi @ A.T
    outer = ax[..., :, None] * ax[..., None, :] / lam ** 2
    return f1 * ((n ** 2)[..., None, None] * np.eye(3) - outer) + dT * outer


def force_symbol_from_tensor(A, law, xi):
    """M_A(xi)_{lq} = sum_{i,m} xi_i xi_m T_F[l, i, q, m] (independent route)."""
    T = tension_tensor(A, law)
    xi, _ = _xi(xi)
    return np.einsum("...i,...m,liqm->...lq", xi, xi, T)


def force_spectrum(A, law, xi):
    """Eigenvalues of M_A: (T/lam)|xi|^2 twice and the A xi eigenvalue."""
    A = np.asarray(A, dtype=float)
    xi, n = _xi(xi)
    lam, f1, dT = _frozen_coeffs(A, law)
    a = np.sum((xi @ A.T) ** 2, axis=-1) / lam ** 2
    base = f1 * n ** 2
    return np.stack([base, base, f1 * (n ** 2 - a) + dT * a], axis=-1)


def full_symbol(report, law, xi):
    """L_A(xi) = (F G_A)(xi) M_A(xi)."""
    return green_symbol(report, xi) @ force_symbol(report.A, law, xi)


def full_symbol_sym(report, law, xi):
    """Symmetric matrix F^1/2 M F^1/2, similar to L_A(xi); also returns F^{+-1/2}."""
    mu, v = symbol_vectors(report, xi)
    vv = v[..., :, None] * v[..., None, :]
    s = np.sqrt(mu / 4.0)[..., None, None]
    Fh = s * (np.eye(3) + (np.sqrt(2.0) - 1.0) * vv)
    Fmh = (np.eye(3) + (1.0 / np.sqrt(2.0) - 1.0) * vv) / s
    M = force_symbol(report.A, law, xi)
    S = Fh @ M @ Fh
    return 0.5 * (S + np.swapaxes(S, -1, -2)), Fh, Fmh


def full_spectrum(report, law, xi):
    """Real eigenvalues of L_A(xi) (ascending), via the symmetric similar matrix."""
    S, _, _ = full_symbol_sym(report, law, xi)
    return np.linalg.eigvalsh(S)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------
def mu_bounds(report, xi):
    """(sigma2 / sigma1^2) / |xi| and (sigma1 / sigma2^2) / |xi|."""
    _, n = _xi(xi)
    s1, s2 = report.sigma1, report.sigma2
    return s2 / (s1 ** 2 * n), s1 / (s2 ** 2 * n)


def full_symbol_bounds(report, law, xi, bounds=None):
    """Eigenvalue bracket [mu z_m |xi|^2 / 4, mu z_M |xi|^2 / 2] and the sigma-only lower bound."""
    if bounds is None:
        bounds = law.bounds(report.sigma1, report.sigma2)
    mu, _ = symbol_vectors(report, xi)
    _, n = _xi(xi)
    lo = mu * bounds.z_m * n ** 2 / 4.0
    hi = mu * bounds.z_M0 * n ** 2 / 2.0
    lo_sigma = report.sigma2 * bounds.z_m * n / (4.0 * report.sigma1 ** 2)
    return lo, hi, lo_sigma


@dataclass(frozen=True)
class SectorSpec:
    """Sector S_{omega, delta} = {z : |arg(z - omega)| <= pi - delta}."""

    omega: float = 1.0
    delta: float = np.pi / 4
    samples: int = 200

    def __post_init__(self):
        if not 0.0 < self.delta < np.pi / 2:
            raise ValueError("sector angle delta must lie in (0, pi/2)")

    def contains(self, z):
        w = np.asarray(z, dtype=complex) - self.omega
        return (np.abs(np.angle(w)) <= np.pi - self.delta + 1e-12) & (w != 0)

    def boundary(self, r_max=1e3):
        """Points on both rays of the sector boundary, log-spaced in distance."""
        r = np.geomspace(1e-3, r_max, self.samples // 2)
        ang = np.pi - self.delta
        return np.concatenate([self.omega + r * np.exp(1j * ang), self.omega + r * np.exp(-1j * ang)])

    def sample(self, rng, n, r_max=1e3):
        """Random points of the sector (log-uniform radius, uniform angle)."""
        r = np.exp(rng.uniform(np.log(1e-3), np.log(r_max), n))
        a = rng.uniform(-(np.pi - self.delta), np.pi - self.delta, n)
        return self.omega + r * np.exp(1j * a)


@dataclass(frozen=True)
class ResolventResult:
    norm: float
    lower: float
    upper: float

    @property
    def lower_ok(self):
        return self.lower <= self.norm * (1 + ROUNDOFF)

    @property
    def upper_ok(self):
        return self.norm <= self.upper * (1 + ROUNDOFF)

    @property
    def ok(self):
        return self.lower_ok and self.upper_ok


def resolvent_norm(report, law, z, xi, sector=SectorSpec(), bounds=None):
    """Spectral norm of (z + L_A(xi))^-1 with the analytic bracket.

    lower = 1 / (|z| + sigma1 z_M |xi| / (2 sigma2^2))
    upper = 2 / sqrt((1 - cos delta) ((sigma2 z_m |xi| / (4 sigma1^2))^2 + |z|^2))

    Raises
    ------
    ValueError
        If z is outside the sector.
    SingularResolvent
        If z + L_A(xi) is numerically singular.
    """
    if not sector.contains(z):
        raise ValueError(f"z = {z} lies outside the sector")
    if bounds is None:
        bounds = law.bounds(report.sigma1, report.sigma2)
    xi, n = _xi(xi)
    M = z * np.eye(3) + full_symbol(report, law, xi)
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] < 1e-14 * s[0]:
        raise SingularResolvent(f"z + L_A(xi) has condition number {s[0] / s[-1]:.3e}")
    norm = 1.0 / s[-1]
    s1, s2 = report.sigma1, report.sigma2
    lower = 1.0 / (abs(z) + s1 * bounds.z_M0 * n / (2.0 * s2 ** 2))
    lam_lo = s2 * bounds.z_m * n / (4.0 * s1 ** 2)
    upper = 2.0 / np.sqrt((1.0 - np.cos(sector.delta)) * (lam_lo ** 2 + abs(z) ** 2))
    return ResolventResult(float(norm), float(lower), float(upper))


def sector_inequality(z, lam, delta):
    """|z + lam|^2 - (1 - cos delta)(lam^2 + |z|^2); non-negative on the sector for lam > 0."""
    return np.abs(z + lam) ** 2 - (1.0 - np.cos(delta)) * (lam ** 2 + np.abs(z) ** 2)


# ---------------------------------------------------------------------------
# random admissible samples
# ---------------------------------------------------------------------------
def random_frozen_matrix(rng, cond_max=5.0, scale=(0.3, 3.0)):
    """Random 3x2 matrix with singular-value ratio at most cond_max."""
    s1 = np.exp(rng.uniform(np.log(scale[0]), np.log(scale[1])))
    s2 = s1 / rng.uniform(1.0, cond_max)
    U, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    V, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    return U[:, :2] @ np.diag([s1, s2]) @ V.T


def random_law(rng, lam_lo, lam_hi):
    """Random admissible law (T > 0, T' >= 0) on [lam_lo, lam_hi]."""
    kind = rng.integers(3)
    if kind == 0:
        return TensionLaw.hookean(rng.uniform(0.2, 5.0), lam_lo, lam_hi)
    if kind == 1:
        k0 = rng.uniform(0.0, 5.0)
        lam0 = rng.uniform(0.0, lam_lo)
        return TensionLaw.affine(k0, lam0, rng.uniform(0.05, 3.0), lam_lo, lam_hi)
    # convex monotone cubic tabulated on the range
    a, b, c = rng.uniform(0.05, 2.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)
    lam = np.linspace(lam_lo, lam_hi, 64)
    return TensionLaw.tabulated(lam, c + a * lam + b * lam ** 3)


def random_admissible(rng, cond_max=5.0):
    """(A, law, xi) with |A|_F inside the law's range."""
    A = random_frozen_matrix(rng, cond_max)
    s = np.linalg.svd(A, compute_uv=False)
    law = random_law(rng, 0.9 * s[0], 1.1 * np.sqrt(2.0) * s[0])
    xi = rng.normal(size=2) * np.exp(rng.uniform(-3, 3))
    return A, law, xi


# ---------------------------------------------------------------------------
# semigroup kernel
# ---------------------------------------------------------------------------
def frequency_grid(n, half_width):
    """Angular frequencies (n, n, 2) matching an n x n sample grid on [-a, a)^2."""
    h = 2.0 * half_width / n
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    return np.stack([KX, KY], axis=-1), h


def semigroup_symbol(report, law, t, xi):
    """exp(-t L_A(xi)) for a batch of nonzero frequencies, via F^1/2 expm(-tS) F^-1/2."""
    S, Fh, Fmh = full_symbol_sym(report, law, xi)
    w, V = np.linalg.eigh(S)
    E = (V * np.exp(-t * w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return Fh @ E @ Fmh


@dataclass
class KernelResult:
    """Real-space kernel on the grid theta_j = -a + j h (both axes).

    Attributes
    ----------
    K : (n, n, 3, 3)
    grad : (n, n, 2, 3, 3) or None
    mass : (3, 3) discrete integral of K
    nyquist : largest |exp(-t L)| entry on the Nyquist frame
    """

    t: float
    half_width: float
    n: int
    K: np.ndarray
    grad: np.ndarray | None
    mass: np.ndarray
    nyquist: float
    fits: dict = field(default_factory=dict)

    @property
    def h(self):
        return 2.0 * self.half_width / self.n

    @property
    def axis(self):
        return -self.half_width + self.h * np.arange(self.n)


def spectral_filter(xi, k_nyq, order=8, strength=36.0):
    """Tensor-product exponential filter, 1 at xi = 0 and exp(-2 strength) at the corners."""
    return np.prod(np.exp(-strength * (np.abs(xi) / k_nyq) ** order), axis=-1)


def semigroup_kernel(report, law, t=1.0, n=1024, half_width=40.0, grad=True, nyquist_tol=1e-3,
                     fit_range=(2.0, 20.0), filter_order=8):
    """Kernel of exp(-t L_A) by a 2D inverse FFT of the symbol.

    The symbol is multiplied by an exponential filter of the given order
    (``None`` disables it) before inversion.  The filter equals 1 to machine
    precision near xi = 0 and deviates from 1 by at most 2 strength
    (|xi|_inf / k_nyq)^order, below 1e-5 inside an eighth of the Nyquist
    frame, so it leaves the mass and the far-field decay intact while
    removing the ringing caused by truncating the symbol, which otherwise
    swamps the |theta|^-4 gradient tail.

    Raises
    ------
    GridTooCoarse
        If the symbol is not resolved: its magnitude on the Nyquist frame
        exceeds ``nyquist_tol``.
    """
    if t <= 0:
        raise ValueError("time must be positive")
    xi, h = frequency_grid(n, half_width)
    flat = xi.reshape(-1, 2)
    Sym = np.empty((flat.shape[0], 3, 3))
    nz = np.any(flat != 0.0, axis=1)
    Sym[~nz] = np.eye(3)
    Sym[nz] = semigroup_symbol(report, law, t, flat[nz])
    Sym = Sym.reshape(n, n, 3, 3)
    edge = np.concatenate([Sym[n // 2], Sym[:, n // 2]])
    nyq = float(np.abs(edge).max())
    if nyq > nyquist_tol:
        raise GridTooCoarse(f"symbol magnitude {nyq:.2e} on the Nyquist frame exceeds {nyquist_tol:.1e}")
    if filter_order is not None:
        Sym = Sym * spectral_filter(xi, np.pi / h, filter_order)[..., None, None]

    def to_space(S):
        k = np.fft.ifft2(S, axes=(0, 1)) / h ** 2
        # sample j sits at theta = -a + j h: shift the zero index to the centre
        return np.fft.fftshift(k.real, axes=(0, 1))

    K = to_space(Sym)
    G = None
    if grad:
        G = np.stack([to_space(1j * xi[..., d, None, None] * Sym) for d in range(2)], axis=2)
    res = KernelResult(t, half_width, n, K, G, K.sum(axis=(0, 1)) * h ** 2, nyq)
    if fit_range is not None:
        res.fits["kernel"] = decay_exponent(res, "kernel", fit_range)
        if grad:
            res.fits["gradient"] = decay_exponent(res, "gradient", fit_range)
    return res


def radial_profile(res, which="kernel", r_range=(2.0, 20.0), bins=24):
    """Log-spaced radial bins of the largest Frobenius norm in each annulus."""
    x = res.axis
    R = np.hypot(x[:, None], x[None, :])
    if which == "kernel":
        mag = np.sqrt(np.sum(res.K ** 2, axis=(-2, -1)))
    else:
        mag = np.sqrt(np.sum(res.grad ** 2, axis=(-3, -2, -1)))
    edges = np.geomspace(r_range[0], r_range[1], bins + 1)
    rc, mc = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (R >= a) & (R < b)
        if np.any(sel):
            rc.append(np.sqrt(a * b))
            mc.append(mag[sel].max())
    return np.array(rc), np.array(mc)


def decay_exponent(res, which="kernel", r_range=(2.0, 20.0)):
    """p in |K(theta)| ~ |theta|^-p from a least-squares log-log fit."""
    r, m = radial_profile(res, which, r_range)
    slope = np.polyfit(np.log(r), np.log(m), 1)[0]
    return float(-slope)


def self_similarity_error(report, law, n=512, half_width=20.0, t=2.0):
    """Relative max difference between K(t, theta) and t^-2 K(1, theta / t).

    K(t) is computed on the box scaled by t so both kernels are sampled at
    corresponding points theta and theta / t without interpolation.
    """
    k1 = semigroup_kernel(report, law, 1.0, n, half_width, grad=False, fit_range=None, nyquist_tol=np.inf)
    kt = semigroup_kernel(report, law, t, n, t * half_width, grad=False, fit_range=None, nyquist_tol=np.inf)
    return float(np.abs(kt.K - k1.K / t ** 2).max() / np.abs(kt.K).max())


# ---------------------------------------------------------------------------
# homogeneity of L_A and its derivatives
# ---------------------------------------------------------------------------
def _derivative(f, xi, beta, h):
    """Nested central differences of f at xi for the multi-index beta."""
    beta = list(beta)
    for d in range(2):
        if beta[d] > 0:
            beta[d] -= 1
            e = np.zeros(2)
            e[d] = h
            return (_derivative(f, xi + e, beta, h) - _derivative(f, xi - e, beta, h)) / (2 * h)
    return f(xi)


def symbol_homogeneity_check(report, law, beta, xi, rel_step=1e-4):
    """||d^beta L(2 xi) - 2^(1-|beta|) d^beta L(xi)|| / ||d^beta L(xi)||."""
    beta = tuple(int(b) for b in beta)
    if len(beta) != 2 or min(beta) < 0 or sum(beta) > 3:
        raise ValueError("multi-index must have two non-negative entries with |beta| <= 3")
    xi = np.asarray(xi, dtype=float)
    _xi(xi)
    f = lambda x: full_symbol(report, law, x)
    order = sum(beta)
    d1 = _derivative(f, xi, beta, rel_step * np.linalg.norm(xi))
    d2 = _derivative(f, 2 * xi, beta, rel_step * np.linalg.norm(2 * xi))
    return float(np.linalg.norm(d2 - 2.0 ** (1 - order) * d1) / np.linalg.norm(d1))


def symbol_derivative_norm(report, law, beta, xi, rel_step=1e-4):
    """Spectral norm of the finite-difference derivative d^beta L_A(xi)."""
    xi = np.asarray(xi, dtype=float)
    d = _derivative(lambda x: full_symbol(report, law, x), xi, tuple(beta), rel_step * np.linalg.norm(xi))
    return float(np.linalg.norm(d, 2))


# ---------------------------------------------------------------------------
# Gateaux derivative of the tension map
# ---------------------------------------------------------------------------
def _stretch(grads):
    return np.sqrt(np.einsum("la...,la...->...", grads, grads))


def tension_map(law, grads):
    """T(|grad X|) grad X for ambient gradients (3[l], 3[a], ...)."""
    lam = _stretch(grads)
    law.check_range(lam)
    return law.T(lam) * grads


def linearized_tension(state, law, node=None):
    """T_S at the nodes, indexed [l, a, q, b, ...] over ambient gradient components.

    T_S grad Y = (T/lam) grad Y + (T' - T/lam) (grad X : grad Y) grad X / lam^2.
    """
    gX = surface_gradient(state)
    if node is not None:
        gX = gX[(slice(None), slice(None)) + tuple(node)]
    lam = _stretch(gX)
    law.check_range(lam)
    f1 = law.T(lam)
    c = law.dtau(lam) - f1
    I = np.einsum("lq,ab->laqb", np.eye(3), np.eye(3))
    I = I.reshape(I.shape + (1,) * np.ndim(lam))
    return f1 * I + c * np.einsum("la...,qb...->laqb...", gX, gX) / lam ** 2


def apply_linearized_tension(law, gX, gY):
    """T_S(grad X) grad Y without forming the tensor."""
    lam = _stretch(gX)
    law.check_range(lam)
    f1 = law.T(lam)
    c = law.dtau(lam) - f1
    return f1 * gY + c * np.einsum("la...,la...->...", gX, gY) * gX / lam ** 2


def gateaux_check(state, law, Y, eps=1e-6):
    """Max-node relative residual of T_S grad Y against a central difference.

    Parameters
    ----------
    Y : ndarray (3, n_colat, n_lon)
        Perturbation values on the grid.
    """
    sh = state.grid.sht
    gX = surface_gradient(state)
    gY = sh.gradient(sh.analyze(Y))
    fd = (tension_map(law, gX + eps * gY) - tension_map(law, gX - eps * gY)) / (2 * eps)
    ts = apply_linearized_tension(law, gX, gY)
    return float(np.abs(fd - ts).max() / np.abs(ts).max())


# ---------------------------------------------------------------------------
# Fourier transforms of the homogeneous building blocks
# ---------------------------------------------------------------------------
def epstein_zeta_half(Q, kmax=8):
    """Analytically continued lattice sum sum'_j (j^T Q j)^(-1/2) over Z^2.

    Ewald splitting at t = 1 of the theta-function representation; both
    lattice sums converge like exp(-pi q), so kmax = 8 is ample for
    well-conditioned Q.
    """
    Q = np.asarray(Q, dtype=float)
    j = np.arange(-kmax, kmax + 1)
    J = np.stack(np.meshgrid(j, j, indexing="ij"), axis=-1).reshape(-1, 2)
    J = J[np.any(J != 0, axis=1)]
    q = np.einsum("na,ab,nb->n", J, Q, J)
    qd = np.einsum("na,ab,nb->n", J, np.linalg.inv(Q), J)
    d = np.sqrt(np.linalg.det(Q))
    # (pi q)^(-1/2) Gamma(1/2, pi q) = erfc(sqrt(pi q)) / sqrt(q)
    s1 = np.sum(erfc(np.sqrt(np.pi * q)) / np.sqrt(q))
    s2 = np.sum(erfc(np.sqrt(np.pi * qd)) / np.sqrt(qd)) / d
    return float(s1 + s2 - 2.0 - 2.0 / d)


def _zeta_gradient(Q, step=1e-5):
    """dZ/dQ_ab of :func:`epstein_zeta_half` by symmetric central differences."""
    G = np.zeros((2, 2))
    for a in range(2):
        for b in range(a, 2):
            E = np.zeros((2, 2))
            E[a, b] += 0.5
            E[b, a] += 0.5
            e = step * np.abs(Q).max()
            G[a, b] = G[b, a] = (epstein_zeta_half(Q + e * E) - epstein_zeta_half(Q - e * E)) / (2 * e)
    return G


def origin_corrections(B, h):
    """Origin sample values that make lattice sums of the homogeneous kernels
    reproduce their integrals to leading order.

    For f(theta) = 1/|B theta| sampled on h Z^2 the punctured Riemann sum
    exceeds the integral by h Z(1/2), Z the Epstein zeta function of B^2;
    setting f(0) = -Z / h removes this.  The tensor kernel
    B theta B theta^T / |B theta|^3 uses the Q-derivative of Z.
    """
    Q = B.T @ B
    Z = epstein_zeta_half(Q)
    Zt = -2.0 * B @ _zeta_gradient(Q) @ B.T
    return -Z / h, -Zt / h


def _window(r, r0, r1):
    """Smooth radial cutoff: 1 for r <= r0, 0 for r >= r1, C-infinity in between."""
    t = np.clip((r - r0) / (r1 - r0), 0.0, 1.0)
    f = lambda s: np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return f(1 - t) / (f(1 - t) + f(t))


@dataclass(frozen=True)
class FourierCheck:
    scalar: float
    tensor: float
    trace: float


def fourier_identity_check(B, n=1024, half_width=40.0, band=(1.0, 6.0)):
    """Windowed-FFT transforms of 1/|B theta| and B theta B theta^T / |B theta|^3.

    Compares with 2 pi / (det B |B^-1 xi|) and
    (2 pi / (det B |eta|)) (I - eta eta^T / |eta|^2) B-conjugated, eta = B^-1 xi,
    on frequencies with |xi| in ``band``.  The singular sample at the origin is
    replaced by the lattice-sum correction of :func:`origin_corrections`.

    Returns
    -------
    FourierCheck with max relative residuals (scalar, tensor, trace identity).

    Raises
    ------
    GridTooCoarse
        If the band reaches past half the Nyquist frequency or below the
        window's resolution.
    """
    B = np.asarray(B, dtype=float)
    if np.any(np.linalg.eigvalsh(B) <= 0) or np.abs(B - B.T).max() > 1e-14:
        raise ValueError("B must be symmetric positive definite")
    h = 2.0 * half_width / n
    if band[1] > 0.5 * np.pi / h or band[0] < 8.0 / half_width:
        raise GridTooCoarse("frequency band is not resolved by this grid and box")
    x = -half_width + h * np.arange(n)
    TH = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
    BT = TH @ B.T
    r = np.linalg.norm(BT, axis=-1)
    c = n // 2
    r[c, c] = 1.0
    win = _window(np.linalg.norm(TH, axis=-1), 0.1 * half_width, 0.9 * half_width)
    f = win / r
    g = win[..., None, None] * BT[..., :, None] * BT[..., None, :] / r[..., None, None] ** 3
    f[c, c], g[c, c] = origin_corrections(B, h)

    def ft(a):
        # F a(xi) = int exp(-i xi theta) a(theta) d theta, sample origin at index c
        return (np.fft.fft2(np.fft.ifftshift(a, axes=(0, 1)), axes=(0, 1)) * h ** 2).real

    F = ft(f)
    Gt = ft(g)
    xi, _ = frequency_grid(n, half_width)
    nx = np.linalg.norm(xi, axis=-1)
    sel = (nx >= band[0]) & (nx <= band[1])
    Binv = np.linalg.inv(B)
    detB = np.linalg.det(B)
    eta = xi[sel] @ Binv.T
    ne = np.linalg.norm(eta, axis=-1)
    exact_s = 2 * np.pi / (detB * ne)
    # F[B th B th^T / |B th|^3](xi) = (1/det B) * F[y y^T/|y|^3](B^-1 xi)
    ehat = eta / ne[:, None]
    exact_t = (2 * np.pi / (detB * ne))[:, None, None] * (np.eye(2) - ehat[:, :, None] * ehat[:, None, :])
    rs = np.abs(F[sel] - exact_s) / exact_s
    rt = np.abs(Gt[sel] - exact_t).max(axis=(1, 2)) / exact_s
    tr = np.abs(np.trace(Gt[sel], axis1=1, axis2=2) - F[sel]) / exact_s
    return FourierCheck(float(rs.max()), float(rt.max()), float(tr.max()))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------
def symbol_report(A, law, n_xi=64, sector=SectorSpec(), seed=0, kernel=True, kernel_n=1024,
                  kernel_half_width=40.0):
    """Sampled spectra and bound checks for one frozen matrix and law.

    Returns a JSON-serialisable dict whose ``violations`` list is empty when
    every bound holds.
    """
    rep = matrix_factors(A)
    rng = np.random.default_rng(seed)
    bnd = law.bounds(rep.sigma1, rep.sigma2)
    ang = 2 * np.pi * np.arange(n_xi) / n_xi
    xis = np.stack([np.cos(ang), np.sin(ang)], axis=1) * np.exp(rng.uniform(-2, 2, n_xi))[:, None]
    xis = np.concatenate([np.eye(2), xis])
    violations = []
    spectra = []
    for xi in xis:
        ev = full_spectrum(rep, law, xi)
        lo, hi, lo_s = full_symbol_bounds(rep, law, xi, bnd)
        spectra.append({"xi": xi.tolist(), "eigenvalues": ev.tolist()})
        if ev[0] < lo * (1 - ROUNDOFF) or ev[-1] > hi * (1 + ROUNDOFF):
            violations.append({"check": "full_symbol_bracket", "xi": xi.tolist()})
        if ev[0] < lo_s * (1 - ROUNDOFF):
            violations.append({"check": "full_symbol_sigma_lower", "xi": xi.tolist()})
        mu, _ = symbol_vectors(rep, xi)
        mlo, mhi = mu_bounds(rep, xi)
        if not (mlo * (1 - ROUNDOFF) <= mu <= mhi * (1 + ROUNDOFF)):
            violations.append({"check": "mu_bounds", "xi": xi.tolist()})
        for z in sector.boundary()[:: max(1, sector.samples // 8)]:
            r = resolvent_norm(rep, law, z, xi, sector, bnd)
            if not r.ok:
                violations.append({"check": "resolvent", "xi": xi.tolist(), "z": [z.real, z.imag]})
    out = {
        "A": rep.A.tolist(),
        "sigma1": rep.sigma1,
        "sigma2": rep.sigma2,
        "law": law.descriptor(),
        "bounds": {"z_m": bnd.z_m, "z_M0": bnd.z_M0},
        "sector": {"omega": sector.omega, "delta": sector.delta},
        "spectra": spectra,
        "violations": violations,
    }
    if kernel:
        try:
            k = semigroup_kernel(rep, law, 1.0, kernel_n, kernel_half_width)
            out["decay_fit"] = dict(k.fits)
            out["kernel_mass_error"] = float(np.abs(k.mass - np.eye(3)).max())
        except GridTooCoarse as exc:
            out["decay_fit"] = None
            out["kernel_error"] = str(exc)
    return out


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
