"""Explicit time integration of the membrane under its own Stokes velocity."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .bie import QuadratureScheme, velocity_field
from .errors import DegenerateState, StretchOutOfRange, ValidationError
from .membrane import (DiagnosticsRecord, MembraneState, SphereGrid, TensionLaw, arc_chord, dealias,
                       diagnostics, energy, fmt, min_node_spacing, stretch_factor, write_snapshot)

COMPLETED = "completed"
HALTED_DEGENERATE = "halted_degenerate"
HALTED_STRETCH = "halted_stretch"

# halt when the arc-chord constant falls below this fraction of its initial value
COLLAPSE_FRACTION = 1e-6
ENERGY_RTOL = 1e-6


def build_law(desc):
    """Tension law from a descriptor dict (see :meth:`TensionLaw.descriptor`)."""
    d = dict(desc)
    kind = d.pop("kind", "hookean")
    lo = d.pop("lam_lo", 0.0)
    hi = d.pop("lam_hi", None)
    hi = np.inf if hi is None else hi
    exp = bool(d.pop("experimental", False))
    if kind == "hookean":
        law = TensionLaw.hookean(d.pop("k0", 1.0), lo, hi)
    elif kind == "affine":
        law = TensionLaw.affine(d.pop("k0"), d.pop("lam0", 0.0), d.pop("c", 0.0), lo, hi, exp)
    elif kind == "tabulated":
        law = TensionLaw.tabulated(d.pop("lam"), d.pop("tau"), exp)
    else:
        raise ValueError(f"unknown law kind {kind!r}")
    if d:
        raise ValueError(f"unused law parameters {sorted(d)}")
    return law


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.

    Attributes
    ----------
    L : int
        Grid degree (>= 4).
    radius : float
        Radius of the initial sphere.
    modes : tuple of (l, m, amplitude)
        Radial perturbation of the initial sphere.
    law : dict
        Tension law descriptor.
    viscosity : float
        Fluid viscosity; velocities scale as 1 / viscosity.
    scheme : {"polar_rotated", "punctured"}
    dt : float, optional
        Fixed step; if omitted the step is chosen by :func:`adaptive_dt`.
    cfl : float
        Coefficient in (0, 1] for adaptive stepping.
    t_end : float
    snapshot_every : int
        Write a snapshot every this many steps (0 disables).
    output_dir : str, optional
    workers : int, optional
    max_steps : int
    """

    L: int = 12
    radius: float = 1.0
    modes: tuple = ()
    law: dict = field(default_factory=lambda: {"kind": "hookean", "k0": 1.0})
    viscosity: float = 1.0
    scheme: str = "polar_rotated"
    dt: float | None = None
    cfl: float = 0.5
    t_end: float = 0.1
    snapshot_every: int = 0
    output_dir: str | None = None
    workers: int | None = None
    max_steps: int = 100000

    def __post_init__(self):
        bad = self.violations()
        if bad:
            raise ValidationError(bad)

    def violations(self):
        bad = []
        if not isinstance(self.L, (int, np.integer)) or self.L < 4:
            bad.append(f"L: must be an integer >= 4, got {self.L!r}")
        if not self.radius > 0:
            bad.append(f"radius: must be positive, got {self.radius!r}")
        if not (isinstance(self.viscosity, (int, float)) and self.viscosity > 0):
            bad.append(f"viscosity: must be positive, got {self.viscosity!r}")
        if not self.t_end > 0:
            bad.append(f"t_end: must be positive, got {self.t_end!r}")
        if self.dt is not None and not self.dt > 0:
            bad.append(f"dt: must be positive, got {self.dt!r}")
        if not 0 < self.cfl <= 1:
            bad.append(f"cfl: must lie in (0, 1], got {self.cfl!r}")
        if self.scheme not in ("polar_rotated", "punctured"):
            bad.append(f"scheme: must be polar_rotated or punctured, got {self.scheme!r}")
        if not isinstance(self.snapshot_every, (int, np.integer)) or self.snapshot_every < 0:
            bad.append(f"snapshot_every: must be a non-negative integer, got {self.snapshot_every!r}")
        if self.workers is not None and (not isinstance(self.workers, (int, np.integer)) or self.workers < 1):
            bad.append(f"workers: must be a positive integer, got {self.workers!r}")
        if not isinstance(self.max_steps, (int, np.integer)) or self.max_steps < 1:
            bad.append(f"max_steps: must be a positive integer, got {self.max_steps!r}")
        for k, mode in enumerate(self.modes):
            try:
                l, m, a = mode
                if int(l) != l or int(m) != m or l < 0 or abs(m) > l or not np.isfinite(a):
                    raise ValueError
                if isinstance(self.L, (int, np.integer)) and l > self.L:
                    bad.append(f"modes[{k}]: degree {l} exceeds L = {self.L}")
            except (TypeError, ValueError):
                bad.append(f"modes[{k}]: expected [l, m, amplitude] with |m| <= l, got {mode!r}")
        try:
            build_law(self.law)
        except (TypeError, ValueError, KeyError) as exc:
            bad.append(f"law: {exc}")
        return bad

    def quadrature(self):
        return QuadratureScheme(self.scheme, workers=self.workers)

    def initial_state(self):
        grid = SphereGrid(self.L)
        return MembraneState.perturbed_sphere(grid, [tuple(m) for m in self.modes], self.radius)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------
def _velocity(state, law, scheme, dealias_stage=True, viscosity=1.0):
    u = velocity_field(state, law, scheme, dealias_force=dealias_stage) / viscosity
    if not dealias_stage:
        return u
    sh = state.grid.sht
    return sh.synthesize(dealias(sh.analyze(u), state.grid.L))


def step(state, law, dt, scheme=QuadratureScheme(), k1=None, dealias_stage=True, viscosity=1.0):
    """One classical RK4 step; returns the new state.

    Parameters
    ----------
    k1 : ndarray, optional
        Velocity at ``state`` if already known.

    Raises
    ------
    DegenerateState, StretchOutOfRange
    """
    if dt < 0:
        raise ValueError("time step must be non-negative")
    if dt == 0:
        return state
    X = state.values
    t = state.time
    vel = lambda s: _velocity(s, law, scheme, dealias_stage, viscosity)
    k1 = vel(state) if k1 is None else k1
    k2 = vel(state.with_values(X + 0.5 * dt * k1, t + 0.5 * dt))
    k3 = vel(state.with_values(X + 0.5 * dt * k2, t + 0.5 * dt))
    k4 = vel(state.with_values(X + dt * k3, t + dt))
    return state.with_values(X + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), t + dt)


def euler_step(state, law, dt, scheme=QuadratureScheme()):
    """Forward Euler step (reference for order-of-accuracy checks)."""
    u = _velocity(state, law, scheme)
    return state.with_values(state.values + dt * u, state.time + dt)


def adaptive_dt(state, law, cfl=0.5, max_speed=0.0, viscosity=1.0):
    """Step size for explicit RK4.

    dt = cfl / (max_speed / h_min + c_stiff),   c_stiff = z_M (L + 1) / arc_chord,

    with h_min the smallest node-image spacing and z_M the largest T + T'
    up to the current maximal stretch.  The linearised operator has order
    one, so its fastest rate grows like L and doubling L about halves dt.
    """
    lam = stretch_factor(state)
    z = law.stiffness(float(lam.max()))
    c_stiff = z * (state.grid.L + 1) / max(arc_chord(state), 1e-300) / viscosity
    h_min = min_node_spacing(state)
    return float(cfl / (max_speed / h_min + c_stiff))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
@dataclass
class SimResult:
    status: str
    final: MembraneState
    diagnostics: list
    snapshots: list = field(default_factory=list)
    message: str = ""
    energy_violations: list = field(default_factory=list)

    @property
    def steps(self):
        return len(self.diagnostics) - 1


def write_diagnostics(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DiagnosticsRecord.FIELDS)
        for r in records:
            w.writerow([fmt(v) for v in r.row()])


def run(config, progress=None):
    """Integrate to ``config.t_end`` or until the membrane degenerates.

    Returns
    -------
    SimResult
        ``diagnostics`` holds one record for the initial state and one per
        completed step.  Snapshots are (step, state) pairs, also written to
        ``output_dir/snap_<step>.csv`` when an output directory is set.
    """
    law = build_law(config.law)
    mu = config.viscosity
    scheme = config.quadrature()
    state = config.initial_state()
    out = config.output_dir
    if out is not None:
        os.makedirs(out, exist_ok=True)
    snaps = []

    def snapshot(n, s):
        snaps.append((n, s))
        if out is not None:
            write_snapshot(s, os.path.join(out, f"snap_{n}.csv"))

    ac0 = arc_chord(state)
    status, message = COMPLETED, ""
    records = []
    e_bad = []
    try:
        u = _velocity(state, law, scheme, viscosity=mu)
    except StretchOutOfRange as exc:
        return _finish(config, SimResult(HALTED_STRETCH, state, [diagnostics(state, law, 0.0, 0.0)],
                                          snaps, str(exc)))
    speed = float(np.linalg.norm(u, axis=0).max())
    records.append(diagnostics(state, law, speed, 0.0))
    if config.snapshot_every:
        snapshot(0, state)
    n = 0
    t_end = config.t_end
    while state.time < t_end * (1 - 1e-12) and n < config.max_steps:
        dt = config.dt if config.dt is not None else adaptive_dt(state, law, config.cfl, speed, mu)
        dt = min(dt, t_end - state.time)
        try:
            new = step(state, law, dt, scheme, k1=u, viscosity=mu)
            ac = arc_chord(new)
            if ac < COLLAPSE_FRACTION * ac0:
                raise DegenerateState(f"arc-chord constant {ac:.3e} fell below {COLLAPSE_FRACTION:g} of initial")
            u = _velocity(new, law, scheme, viscosity=mu)
        except DegenerateState as exc:
            status, message = HALTED_DEGENERATE, str(exc)
            break
        except StretchOutOfRange as exc:
            status, message = HALTED_STRETCH, str(exc)
            break
        n += 1
        state = new
        speed = float(np.linalg.norm(u, axis=0).max())
        rec = diagnostics(state, law, speed, dt)
        prev = records[-1].energy
        if rec.energy > prev + ENERGY_RTOL * abs(prev):
            e_bad.append((n, prev, rec.energy))
        records.append(rec)
        if config.snapshot_every and n % config.snapshot_every == 0:
            snapshot(n, state)
        if progress is not None:
            progress(n, rec)
    if config.snapshot_every and (not snaps or snaps[-1][0] != n):
        snapshot(n, state)
    return _finish(config, SimResult(status, state, records, snaps, message, e_bad))


def _finish(config, result):
    if config.output_dir is not None:
        write_diagnostics(result.diagnostics, os.path.join(config.output_dir, "diagnostics.csv"))
    return result


def with_overrides(config, **kw):
    return replace(config, **kw)
