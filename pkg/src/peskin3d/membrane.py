"""Discrete membrane maps X: S^2 -> R^3, tension laws and elastic forces.

A :class:`MembraneState` stores the three Cartesian components of X both as
values on a :class:`SphereGrid` and as spherical-harmonic coefficients.
Surface derivatives are spectral; the Laplace-Beltrami operator is exact on
band-limited fields.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, interpolate

from . import sht
from .errors import DegreeOverflow, StretchOutOfRange


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre (colatitude) x uniform (longitude) quadrature grid.

    ``n_colat = L + 1`` and ``n_lon = 2 n_colat``.  Products of two degree-L
    harmonics are integrated exactly.
    """

    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("grid degree must be at least 1")

    @property
    def sht(self):
        return sht.transform(self.L)

    @property
    def n_colat(self):
        return self.L + 1

    @property
    def n_lon(self):
        return 2 * (self.L + 1)

    @property
    def shape(self):
        return (self.n_colat, self.n_lon)

    @property
    def size(self):
        return self.n_colat * self.n_lon

    @property
    def nodes(self):
        """Unit node vectors, shape (3, n_colat, n_lon)."""
        return self.sht.nodes()

    @property
    def weights(self):
        return self.sht.weights()

    @property
    def theta(self):
        return self.sht.theta

    @property
    def phi(self):
        return self.sht.phi

    def __eq__(self, other):
        return isinstance(other, SphereGrid) and other.L == self.L

    def __hash__(self):
        return hash(("SphereGrid", self.L))

    def integrate(self, values):
        """Quadrature of grid values over S^2 (trailing two axes)."""
        return np.einsum("...jk,jk->...", values, self.weights)


def sh_analyze(grid, values):
    """Grid values (..., n_colat, n_lon) to coefficients (..., L+1, L+1)."""
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] != grid.shape:
        raise ValueError(f"values of shape {values.shape[-2:]} do not match grid {grid.shape}")
    return grid.sht.analyze(values)


def sh_synthesize(coeffs, grid):
    """Coefficients to grid values.

    Raises
    ------
    DegreeOverflow
        If any coefficient above the grid degree is nonzero.
    """
    return grid.sht.synthesize(coeffs)


def dealias(coeffs, L=None):
    """Zero coefficients above floor(2L/3)."""
    c = np.array(coeffs, dtype=complex, copy=True)
    if L is None:
        L = c.shape[-1] - 1
    c[..., (2 * L) // 3 + 1 :, :] = 0.0
    return c


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class MembraneState:
    """The map X on the grid, with consistent coefficients.

    Attributes
    ----------
    grid : SphereGrid
    values : ndarray, shape (3, n_colat, n_lon)
    coeffs : ndarray, shape (3, L+1, L+1), complex
    time : float
    """

    grid: SphereGrid
    values: np.ndarray
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values.setflags(write=False)
        self.coeffs.setflags(write=False)

    @classmethod
    def from_coeffs(cls, grid, coeffs, time=0.0):
        c = grid.sht.fit(coeffs)
        c = np.array(c, dtype=complex)
        c[..., 0] = c[..., 0].real
        return cls(grid, grid.sht.synthesize(c), c, float(time))

    @classmethod
    def from_values(cls, grid, values, time=0.0):
        """Build from grid values; values are replaced by the degree-L projection."""
        c = grid.sht.analyze(values)
        return cls.from_coeffs(grid, c, time)

    @classmethod
    def from_function(cls, grid, fn, time=0.0):
        """Sample ``fn(xhat) -> X`` with xhat of shape (3, ...)."""
        return cls.from_values(grid, fn(grid.nodes), time)

    @classmethod
    def sphere(cls, grid, radius=1.0, center=(0.0, 0.0, 0.0)):
        c = np.asarray(center, dtype=float)[:, None, None]
        return cls.from_values(grid, radius * grid.nodes + c)

    @classmethod
    def perturbed_sphere(cls, grid, modes, radius=1.0):
        """X = R xhat (1 + sum_k a_k Y_k(xhat)).

        Parameters
        ----------
        modes : iterable of (l, m, amplitude)
            Y_k is Re Y_lm for m >= 0 and Im Y_l|m| for m < 0 (see
            :func:`peskin3d.bie.real_harmonic`).
        """
        xh = grid.nodes
        th, ph = grid.theta, grid.phi
        P = sht.legendre(max([1] + [int(l) for l, _, _ in modes]), np.cos(th), np.sin(th))
        r = np.ones(grid.shape)
        for l, m, a in modes:
            l, m = int(l), int(m)
            if abs(m) > l:
                raise ValueError(f"invalid harmonic ({l}, {m})")
            trig = np.cos(m * ph) if m >= 0 else np.sin(-m * ph)
            r = r + a * P[l, abs(m)][:, None] * trig[None, :]
        return cls.from_values(grid, radius * xh * r[None])

    def with_values(self, values, time=None):
        return MembraneState.from_values(self.grid, values, self.time if time is None else time)

    def with_time(self, time):
        return replace(self, time=float(time))

    def dealiased(self):
        return MembraneState.from_coeffs(self.grid, dealias(self.coeffs, self.grid.L), self.time)

    @property
    def points(self):
        """Node images as an (N, 3) array."""
        return self.values.reshape(3, -1).T


# ---------------------------------------------------------------------------
# tension laws
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LawBounds:
    """Range constants of a tension law.

    ``z_m`` and ``z_M0`` bound the force symbol (lambda in [s1, sqrt2 s1]);
    ``z_M0_tf`` and ``z_M1`` bound the tension tensor and its derivative
    (lambda in [s2, sqrt2 s1]).
    """

    z_m: float
    z_M0: float
    z_M0_tf: float
    z_M1: float


@dataclass(frozen=True)
class TensionLaw:
    """Scalar tension law tau(lambda).

    Use the constructors :meth:`hookean`, :meth:`affine` and :meth:`tabulated`.
    """

    kind: str
    params: dict = field(default_factory=dict)
    lam_lo: float = 0.0
    lam_hi: float = np.inf
    experimental: bool = False
    _spline: object = field(default=None, repr=False, compare=False)

    # constructors ------------------------------------------------------
    @classmethod
    def hookean(cls, k0=1.0, lam_lo=0.0, lam_hi=np.inf):
        if k0 <= 0:
            raise ValueError("Hookean stiffness must be positive")
        return cls("hookean", {"k0": float(k0)}, lam_lo, lam_hi)

    @classmethod
    def affine(cls, k0, lam0=0.0, c=0.0, lam_lo=0.0, lam_hi=np.inf, experimental=False):
        """tau = k0 (lambda - lam0) + c."""
        law = cls("affine", {"k0": float(k0), "lam0": float(lam0), "c": float(c)},
                  float(lam_lo), float(lam_hi), experimental)
        law._check_admissible()
        return law

    @classmethod
    def tabulated(cls, lam, tau, experimental=False):
        """Cubic-spline law through the points (lam_i, tau_i); range = table span."""
        lam = np.asarray(lam, dtype=float)
        tau = np.asarray(tau, dtype=float)
        sp = interpolate.CubicSpline(lam, tau, bc_type="natural")
        law = cls("tabulated", {"lam": lam.tolist(), "tau": tau.tolist()},
                  float(lam[0]), float(lam[-1]), experimental, sp)
        law._check_admissible()
        return law

    def _check_admissible(self):
        if self.experimental:
            return
        hi = self.lam_hi if np.isfinite(self.lam_hi) else self.lam_lo + 10.0
        lo = max(self.lam_lo, 1e-12)
        s = np.linspace(lo, hi, 1000)
        if np.any(self.tau(s) <= 0) or np.any(self.dtau(s) < -1e-12):
            raise ValueError("tension law must satisfy tau > 0 and dtau >= 0 on its range")

    # evaluation --------------------------------------------------------
    @property
    def is_hookean(self):
        return self.kind == "hookean"

    def tau(self, lam):
        lam = np.asarray(lam, dtype=float)
        p = self.params
        if self.kind == "hookean":
            return p["k0"] * lam
        if self.kind == "affine":
            return p["k0"] * (lam - p["lam0"]) + p["c"]
        return self._spline(lam)

    def dtau(self, lam):
        lam = np.asarray(lam, dtype=float)
        p = self.params
        if self.kind in ("hookean", "affine"):
            return np.full_like(lam, p["k0"])
        return self._spline(lam, 1)

    def d2tau(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind in ("hookean", "affine"):
            return np.zeros_like(lam)
        return self._spline(lam, 2)

    def T(self, lam):
        """Tension coefficient tau(lambda) / lambda."""
        return self.tau(lam) / lam

    def antiderivative(self, lam):
        """A_E(lambda) with A_E' = tau (closed form when available)."""
        lam = np.asarray(lam, dtype=float)
        p = self.params
        if self.kind == "hookean":
            return 0.5 * p["k0"] * lam * lam
        if self.kind == "affine":
            return p["k0"] * (0.5 * lam * lam - p["lam0"] * lam) + p["c"] * lam
        flat = lam.ravel()
        out = np.array([integrate.quad(lambda s: float(self.tau(s)), self.lam_lo, v,
                                       epsabs=1e-10, limit=200)[0] for v in flat])
        return out.reshape(lam.shape)

    def check_range(self, lam):
        lam = np.asarray(lam)
        lo, hi = np.min(lam), np.max(lam)
        if lo < self.lam_lo or hi > self.lam_hi:
            raise StretchOutOfRange(
                f"stretch range [{lo:.6g}, {hi:.6g}] outside admissible [{self.lam_lo}, {self.lam_hi}]")

    def descriptor(self):
        d = {"kind": self.kind, **self.params, "lam_lo": self.lam_lo,
             "lam_hi": self.lam_hi if np.isfinite(self.lam_hi) else None}
        if self.experimental:
            d["experimental"] = True
        return d

    # range constants ---------------------------------------------------
    def bounds(self, sigma1, sigma2, samples=1001):
        """Range constants z_m, z_M0, z_M0_tf, z_M1 for frozen matrices with
        singular values in [sigma2, sigma1]."""
        a, b = sigma1, np.sqrt(2.0) * sigma1
        f_lo = lambda s: np.minimum(self.T(s), (self.T(s) + self.dtau(s)) * sigma2 ** 2 / s ** 2)
        f_hi = lambda s: self.T(s) + self.dtau(s)

        def f1p(s):
            return (self.dtau(s) * s - self.tau(s)) / s ** 2

        tf0 = lambda s: np.abs(self.T(s)) + np.abs(self.T(s) - self.dtau(s))
        tf1 = lambda s: np.abs(f1p(s)) + np.abs(f1p(s) - self.d2tau(s))
        z_m = _extremum(f_lo, a, b, samples, minimize=True)
        z_M0 = _extremum(f_hi, a, b, samples, minimize=False)
        z_tf = _extremum(tf0, sigma2, b, samples, minimize=False)
        z_1 = _extremum(tf1, sigma2, b, samples, minimize=False)
        return LawBounds(z_m, z_M0, z_tf, z_1)

    def stiffness(self, lam_max):
        """Largest T + dtau over [lam_lo, lam_max]; used for time-step control."""
        lo = max(self.lam_lo, 1e-6 * lam_max)
        return _extremum(lambda s: self.T(s) + self.dtau(s), lo, lam_max, 257, minimize=False)


def _extremum(fn, a, b, samples, minimize):
    """Sampled extremum of fn on [a, b] refined by a bounded scalar search."""
    from scipy.optimize import minimize_scalar

    if b <= a:
        return float(fn(np.array([a]))[0])
    s = np.linspace(a, b, samples)
    v = fn(s)
    sign = 1.0 if minimize else -1.0
    k = int(np.argmin(sign * v))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, samples - 1)]
    best = v[k]
    if hi > lo:
        r = minimize_scalar(lambda t: sign * float(fn(np.array([t]))[0]), bounds=(lo, hi),
                            method="bounded", options={"xatol": 1e-13 * max(1.0, abs(b))})
        cand = sign * r.fun
        best = min(best, cand) if minimize else max(best, cand)
    return float(best)


# ---------------------------------------------------------------------------
# geometry and forces
# ---------------------------------------------------------------------------
def surface_gradient(state):
    """Ambient surface gradients, shape (3, 3, n_colat, n_lon).

    ``out[k, :, j, i]`` is grad_{S^2} X_k at node (j, i).
    """
    return state.grid.sht.gradient(state.coeffs)


def scalar_gradient(grid, coeffs):
    """Ambient surface gradient of scalar fields given by coefficients."""
    return grid.sht.gradient(coeffs)


def stretch_factor(state, grad=None):
    """lambda = |grad_{S^2} X| (Frobenius), shape (n_colat, n_lon)."""
    g = surface_gradient(state) if grad is None else grad
    return np.sqrt(np.einsum("kijl,kijl->jl", g, g))


def laplace_beltrami(grid, coeffs):
    return grid.sht.laplacian(coeffs)


def elastic_force_density(state, law, dealias_output=False):
    """F = div_{S^2}(T(lambda) grad_{S^2} X) per node, shape (3, n_colat, n_lon).

    Raises
    ------
    StretchOutOfRange
        If any nodal stretch lies outside the law's admissible range.
    """
    grid = state.grid
    lapc = grid.sht.laplacian(state.coeffs)
    if law.is_hookean:
        lam = stretch_factor(state)
        law.check_range(lam)
        fc = law.params["k0"] * lapc
    else:
        g = surface_gradient(state)
        lam = stretch_factor(state, g)
        law.check_range(lam)
        Tc = grid.sht.analyze(law.T(lam))
        Tv = grid.sht.synthesize(Tc)
        gT = grid.sht.gradient(Tc)
        lap = grid.sht.synthesize(lapc)
        F = Tv[None] * lap + np.einsum("ijl,kijl->kjl", gT, g)
        if not dealias_output:
            return F
        fc = grid.sht.analyze(F)
    if dealias_output:
        fc = dealias(fc, grid.L)
    return grid.sht.synthesize(fc)


def volume(state):
    """Enclosed volume (1/3) int X . n dA, via ambient gradients."""
    g = surface_gradient(state)
    et, ep = state.grid.sht.frames()
    Xt = np.einsum("kijl,ijl->kjl", g, et)
    Xp = np.einsum("kijl,ijl->kjl", g, ep)
    n = np.cross(Xt, Xp, axis=0)
    return state.grid.integrate(np.einsum("kjl,kjl->jl", state.values, n)) / 3.0


def area(state):
    g = surface_gradient(state)
    et, ep = state.grid.sht.frames()
    Xt = np.einsum("kijl,ijl->kjl", g, et)
    Xp = np.einsum("kijl,ijl->kjl", g, ep)
    return state.grid.integrate(np.linalg.norm(np.cross(Xt, Xp, axis=0), axis=0))


def energy(state, law):
    """Elastic energy int A_E(lambda) dmu, A_E' = tau."""
    lam = stretch_factor(state)
    law.check_range(lam)
    return float(state.grid.integrate(law.antiderivative(lam)))


def _pairwise_min_ratio(P, Q, chunk=512):
    """min over i != j of |P_i - P_j| / |Q_i - Q_j| (P images, Q parameters)."""
    n = len(P)
    best = np.inf
    for s in range(0, n, chunk):
        dp = np.linalg.norm(P[s : s + chunk, None, :] - P[None, :, :], axis=-1)
        dq = np.linalg.norm(Q[s : s + chunk, None, :] - Q[None, :, :], axis=-1)
        idx = np.arange(s, min(s + chunk, n))
        dq[np.arange(len(idx)), idx] = 1.0
        r = dp / dq
        r[np.arange(len(idx)), idx] = np.inf
        best = min(best, float(r.min()))
    return best


def arc_chord(state):
    """Discrete arc-chord constant min |X(x)-X(y)| / |x-y| over node pairs."""
    P = state.points
    Q = state.grid.nodes.reshape(3, -1).T
    return max(0.0, _pairwise_min_ratio(P, Q))


def min_node_spacing(state):
    """Smallest distance between two node images."""
    P = state.points
    n = len(P)
    best = np.inf
    for s in range(0, n, 512):
        d = np.linalg.norm(P[s : s + 512, None, :] - P[None, :, :], axis=-1)
        idx = np.arange(s, min(s + 512, n))
        d[np.arange(len(idx)), idx] = np.inf
        best = min(best, float(d.min()))
    return best


def holder_seminorm_estimate(values, gamma, points):
    """Discrete Holder seminorm max |f(x)-f(y)| / |x-y|^gamma over point pairs.

    Parameters
    ----------
    values : ndarray, shape (N,) or (N, d)
    gamma : float in (0, 1]
    points : ndarray, shape (N, p)
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    f = np.asarray(values, dtype=float)
    f = f.reshape(len(f), -1)
    x = np.asarray(points, dtype=float).reshape(len(f), -1)
    best = 0.0
    n = len(f)
    for s in range(0, n, 512):
        df = np.linalg.norm(f[s : s + 512, None, :] - f[None, :, :], axis=-1)
        dx = np.linalg.norm(x[s : s + 512, None, :] - x[None, :, :], axis=-1)
        mask = dx > 0
        if np.any(mask):
            best = max(best, float((df[mask] / dx[mask] ** gamma).max()))
    return best


# ---------------------------------------------------------------------------
# diagnostics and export
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    volume: float
    energy: float
    arc_chord_min: float
    stretch_min: float
    stretch_max: float
    max_speed: float
    dt: float
    holder_estimate: tuple | None = None

    FIELDS = ("time", "volume", "energy", "arc_chord_min", "stretch_min", "stretch_max",
              "max_speed", "dt")

    def row(self):
        return [getattr(self, f) for f in self.FIELDS]


def diagnostics(state, law, max_speed=0.0, dt=0.0):
    lam = stretch_factor(state)
    return DiagnosticsRecord(
        time=float(state.time),
        volume=float(volume(state)),
        energy=energy(state, law),
        arc_chord_min=arc_chord(state),
        stretch_min=float(lam.min()),
        stretch_max=float(lam.max()),
        max_speed=float(max_speed),
        dt=float(dt),
    )


def snapshot_rows(state):
    """Rows (i_colat, i_lon, nx, ny, nz, X1, X2, X3) in node order."""
    xh = state.grid.nodes
    rows = []
    for j in range(state.grid.n_colat):
        for i in range(state.grid.n_lon):
            rows.append([j, i, *xh[:, j, i].tolist(), *state.values[:, j, i].tolist()])
    return rows


SNAPSHOT_HEADER = ["i_colat", "i_lon", "nx", "ny", "nz", "X1", "X2", "X3"]


def fmt(x):
    """Shortest round-trip float text."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_snapshot(state, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SNAPSHOT_HEADER) + "\n")
        for r in snapshot_rows(state):
            fh.write(",".join(fmt(v) for v in r) + "\n")


def read_snapshot(path, time=0.0):
    """Rebuild a state from a snapshot CSV written by :func:`write_snapshot`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    jc = data[:, 0].astype(int)
    il = data[:, 1].astype(int)
    n_colat = jc.max() + 1
    grid = SphereGrid(n_colat - 1)
    if il.max() + 1 != grid.n_lon or len(data) != grid.size:
        raise ValueError(f"{path}: rows do not form a {grid.shape} grid")
    vals = np.zeros((3,) + grid.shape)
    vals[:, jc, il] = data[:, 5:8].T
    return MembraneState.from_values(grid, vals, time)


def coefficient_records(state):
    out = []
    for k in range(3):
        for l in range(state.grid.L + 1):
            for m in range(l + 1):
                c = state.coeffs[k, l, m]
                out.append({"component": k + 1, "l": l, "m": m,
                            "re": float(c.real), "im": float(c.imag)})
    return out


def write_coefficients(state, path):
    with open(path, "w") as fh:
        json.dump(coefficient_records(state), fh, indent=1)
        fh.write("\n")


__all__ = [
    "SphereGrid", "MembraneState", "TensionLaw", "LawBounds", "DiagnosticsRecord",
    "sh_analyze", "sh_synthesize", "dealias", "surface_gradient", "stretch_factor",
    "elastic_force_density", "volume", "area", "energy", "arc_chord",
    "holder_seminorm_estimate", "diagnostics", "write_snapshot", "read_snapshot",
    "write_coefficients", "DegreeOverflow",
]
