"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line with the measured values."""
import time

import numpy as np
import pytest

from peskin3d import atlas, bie
from peskin3d import kernels as K
from peskin3d import spectral as S
from peskin3d.atlas import rotation_to
from peskin3d.membrane import MembraneState, SphereGrid, TensionLaw
from peskin3d.sim import SimConfig, run

HOOKE = TensionLaw.hookean(1.0)
ISO = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
ANISO = np.array([[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
# errors below this are roundoff; "monotone" and "decreasing" are judged above it
NOISE = 1e-10
N_RANDOM = 1000


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail

    return emit


def random_state(L, seed, amp=0.1, lmax=3):
    rng = np.random.default_rng(seed)
    g = SphereGrid(L)
    c = MembraneState.sphere(g).coeffs.copy()
    n = lmax + 1
    c[:, :n, :n] += amp * np.tril(rng.normal(size=(3, n, n)) + 1j * rng.normal(size=(3, n, n)))
    c[..., 0] = c[..., 0].real
    return MembraneState.from_coeffs(g, c)


def test_criterion_01_single_layer_eigenvalues(verdict):
    t0 = time.perf_counter()
    modes = [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]
    errs = [bie.single_layer_eigen_error(16, l, m) for l, m in modes]
    dt = time.perf_counter() - t0
    ok = max(errs) < 1e-3 and dt < 60
    verdict(1, ok, f"max rel error {max(errs):.2e} over l=0..2 at L=16, runtime {dt:.1f}s")


def test_criterion_02_s00_eigenvalues(verdict):
    parts, ok = [], True
    for l, m in ((1, 0), (1, 1), (2, 0), (2, 2)):
        e = [bie.s00_eigen_error(L, l, m) for L in (8, 16, 32)]
        mono = all(b <= max(a, NOISE) for a, b in zip(e, e[1:]))
        ok &= e[1] < 1e-3 and mono
        parts.append(f"Y({l},{m}) " + "/".join(f"{x:.1e}" for x in e))
    verdict(2, ok, "rel errors at L=8/16/32: " + ", ".join(parts))


def test_criterion_03_frozen_symbol(verdict):
    t0 = time.perf_counter()
    r = S.matrix_factors(ISO)
    iso_err = 0.0
    for xi in ([1.0, 0.0], [0.0, 1.0], [0.3, -1.2], [5.0, 7.0]):
        xi = np.array(xi)
        n = np.linalg.norm(xi)
        ev = np.sort(np.linalg.eigvals(S.full_symbol(r, TensionLaw.hookean(1.0), xi)).real)
        iso_err = max(iso_err, float(np.abs(ev - [n / 4, n / 4, n / 2]).max()))
    rng = np.random.default_rng(2024)
    bad_sandwich = bad_pos = 0
    for _ in range(N_RANDOM):
        A, law, xi = S.random_admissible(rng)
        rep = S.matrix_factors(A)
        ev = S.full_spectrum(rep, law, xi)
        lo, hi, lo_s = S.full_symbol_bounds(rep, law, xi)
        bad_sandwich += int(ev[0] < lo * (1 - S.ROUNDOFF) or ev[-1] > hi * (1 + S.ROUNDOFF))
        mu, _ = S.symbol_vectors(rep, xi)
        m_lo, m_hi = S.mu_bounds(rep, xi)
        bad_pos += int(not (0 < m_lo <= mu * (1 + S.ROUNDOFF) and mu <= m_hi * (1 + S.ROUNDOFF)) or lo_s <= 0)
    dt = time.perf_counter() - t0
    ok = iso_err < 1e-12 and bad_sandwich == 0 and bad_pos == 0 and dt < 10
    verdict(3, ok, f"isometric spectrum error {iso_err:.1e}; {N_RANDOM} samples: sandwich violations "
                   f"{bad_sandwich}, positivity violations {bad_pos}; runtime {dt:.1f}s")


def test_criterion_04_resolvent_bounds(verdict):
    rng = np.random.default_rng(7)
    sector = S.SectorSpec(1.0, np.pi / 4)
    bad = 0
    worst = np.inf
    for _ in range(N_RANDOM):
        A, law, xi = S.random_admissible(rng)
        rep = S.matrix_factors(A)
        z = sector.sample(rng, 1)[0]
        res = S.resolvent_norm(rep, law, z, xi, sector)
        bad += int(not res.ok)
        worst = min(worst, res.upper / res.norm, res.norm / res.lower)
    verdict(4, bad == 0, f"{N_RANDOM} samples in S(1, pi/4): violations {bad}, tightest ratio {worst:.3f}")


def test_criterion_05_semigroup_kernel(verdict):
    t0 = time.perf_counter()
    rep = S.matrix_factors(ISO)
    k = S.semigroup_kernel(rep, HOOKE, 1.0, n=1024, half_width=40.0)
    mass = float(np.abs(k.mass - np.eye(3)).max())
    ss = S.self_similarity_error(rep, HOOKE, n=1024, half_width=40.0)
    pk, pg = k.fits["kernel"], k.fits["gradient"]
    dt = time.perf_counter() - t0
    ok = ss < 1e-6 and mass < 1e-6 and abs(pk - 3) <= 0.3 and abs(pg - 4) <= 0.3 and dt < 30
    verdict(5, ok, f"self-similarity {ss:.1e}, mass error {mass:.1e}, decay K {pk:.3f}, "
                   f"grad K {pg:.3f}; runtime {dt:.1f}s at 1024^2")


def test_criterion_06_pv_identity(verdict):
    vals = {name: K.pv_annulus_check(A, 0.01, 200.0).combined for name, A in (("isotropic", ISO),
                                                                             ("anisotropic", ANISO))}
    ok = all(v < 1e-4 for v in vals.values())
    verdict(6, ok, ", ".join(f"{k} {v:.1e}" for k, v in vals.items()))


def test_criterion_07_conservation_dissipation(verdict):
    t0 = time.perf_counter()
    res = run(SimConfig(L=16, modes=((2, 0, 0.05),), t_end=0.5, law={"kind": "hookean", "k0": 1.0}))
    dt = time.perf_counter() - t0
    d = res.diagnostics
    v0 = d[0].volume
    drift = max(abs(r.volume - v0) for r in d) / v0
    rise = max((b.energy - a.energy) / abs(a.energy) for a, b in zip(d, d[1:]))
    ok = res.status == "completed" and drift <= 1e-3 and rise <= 1e-6 and dt < 600
    verdict(7, ok, f"{res.steps} steps to t={res.final.time:.3f}: volume drift {drift:.1e}, "
                   f"largest relative energy rise {rise:.1e}; runtime {dt:.1f}s")


def test_criterion_08_equilibrium(verdict):
    R = 1.0
    speeds = {}
    for L in (16, 32):
        s = MembraneState.sphere(SphereGrid(L), R)
        speeds[L] = float(np.linalg.norm(bie.velocity_field(s, HOOKE), axis=0).max())
    ok = speeds[16] <= 1e-3 * R and speeds[32] <= max(speeds[16], NOISE)
    verdict(8, ok, f"max speed L=16 {speeds[16]:.1e}, L=32 {speeds[32]:.1e}")


def test_criterion_09_invariances(verdict):
    s = random_state(12, 9)
    u = bie.velocity_field(s, HOOKE)
    shift = np.array([0.7, -1.2, 3.0])
    e_tr = np.abs(bie.velocity_field(s.with_values(s.values + shift[:, None, None]), HOOKE) - u).max()
    Q = rotation_to([0.2, 0.9, -0.4]) @ np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))[0]
    uq = bie.velocity_field(s.with_values(np.einsum("ab,bjk->ajk", Q, s.values)), HOOKE)
    e_rot = np.abs(uq - np.einsum("ab,bjk->ajk", Q, u)).max()
    e_dil = max(np.abs(bie.velocity_field(s.with_values(c * s.values), HOOKE) - u).max() for c in (0.5, 3.0))
    ok = max(e_tr, e_rot, e_dil) < 1e-10
    verdict(9, ok, f"translation {e_tr:.1e}, rotation {e_rot:.1e}, dilation {e_dil:.1e}")


def test_criterion_10_linearization(verdict):
    rng = np.random.default_rng(10)
    res = []
    for k in range(20):
        s = random_state(8, 100 + k, amp=0.08)
        law = S.random_law(rng, 0.5, 3.0)
        Y = rng.normal(size=(3,) + s.grid.shape)
        res.append(S.gateaux_check(s, law, Y))
    s = random_state(8, 5)
    T = S.linearized_tension(s, HOOKE)
    ident = np.array_equal(T, np.broadcast_to(np.einsum("lq,ab->laqb", np.eye(3), np.eye(3))[..., None, None], T.shape))
    ok = max(res) < 1e-6 and ident
    verdict(10, ok, f"max Gateaux residual {max(res):.1e} over 20 triples, Hookean T_S identity exact: {ident}")


def _curved_patch(rng):
    # curvature coefficients bounded away from zero: as they vanish K -> 0 while q stays ~ r^-2, so the
    # relative mismatch measures floating-point cancellation (about eps / (r |curvature|)) instead of algebra
    a = rng.uniform(-0.5, 0.5)
    b, c = rng.choice([-1.0, 1.0], 2) * rng.uniform(0.1, 0.5, 2)

    def value(t):
        return np.array([t[0] + a * np.sin(t[1]), t[1] + b * t[0] ** 2, c * np.cos(t[0] - t[1])])

    def jac(t):
        s = np.sin(t[0] - t[1])
        return np.array([[1.0, a * np.cos(t[1])], [2 * b * t[0], 1.0], [-c * s, c * s]])

    return K.Patch(value, jac), 1.0


def _sphere_chart(rng, charts=atlas.default_atlas()):
    n = int(rng.integers(len(charts)))
    return K.Patch(lambda t: atlas.chart_map(charts, n, t), lambda t: atlas.chart_jacobian(charts, n, t)), 0.5


def test_criterion_11_kernel_algebra(verdict):
    rng = np.random.default_rng(11)
    worst = 0.0
    for k in range(N_RANDOM):
        patch, box = (_curved_patch if k % 2 == 0 else _sphere_chart)(rng)
        et = rng.uniform(-box, box, 2)
        u = rng.normal(size=2)
        th = et + u / np.linalg.norm(u) * 10 ** rng.uniform(-3, 0)
        x = K.remainder_kernel(patch, th, et)
        y = K.remainder_kernel_expanded(patch, th, et)
        worst = max(worst, float(np.abs(x - y).max() / np.abs(x).max()))
    e_aff = 0.0
    for _ in range(100):
        A = rng.normal(size=(3, 2))
        p = K.affine_patch(A, rng.normal(size=3))
        th, et = rng.normal(size=2), rng.normal(size=2)
        e_aff = max(e_aff, float(np.abs(K.finite_diff_remainder(p, th, et)).max() / np.abs(A).max()))
    ok = worst < 1e-10 and e_aff < 1e-13
    verdict(11, ok, f"two-path relative mismatch {worst:.1e} on {N_RANDOM} samples "
                    f"(separations 1e-3..1), affine E {e_aff:.1e}")


def test_criterion_12_chart_geometry(verdict):
    counts = atlas.geometry_violations(10000, seed=12)
    verdict(12, all(v == 0 for v in counts.values()), "violations " + ", ".join(f"{k}={v}" for k, v in counts.items()))
