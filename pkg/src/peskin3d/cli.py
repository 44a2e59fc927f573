"""Command-line interface: ``peskin3d {simulate,symbol,validate,export}``."""
from __future__ import annotations

import argparse
import difflib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import atlas, bie, kernels, spectral
from .errors import ParseError, RankDeficient, ValidationError
from .membrane import read_snapshot, write_coefficients, write_snapshot
from .sim import COMPLETED, HALTED_DEGENERATE, HALTED_STRETCH, SimConfig, build_law, run

CONFIG_KEYS = ("L", "radius", "modes", "law", "viscosity", "scheme", "dt", "cfl", "t_end", "snapshot_every",
               "output_dir", "workers", "max_steps")
EXIT_CODES = {COMPLETED: 0, HALTED_DEGENERATE: 2, HALTED_STRETCH: 3}
EXIT_IO = 1
EXIT_RANK = 4


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def _key_line(text, key):
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def parse_config_text(text, source="<config>"):
    """Parse JSON configuration text into a validated :class:`SimConfig`.

    Raises
    ------
    ParseError
        Malformed JSON (with line number) or an unknown key (with a suggestion).
    ValidationError
        Every out-of-range or ill-typed field, listed together.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}:{exc.lineno}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be an object", line=1)
    for key in data:
        if key not in CONFIG_KEYS:
            near = difflib.get_close_matches(key, CONFIG_KEYS, n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            line = _key_line(text, key)
            where = f"{source}:{line}" if line else source
            raise ParseError(f"{where}: unknown key {key!r}{hint}", line=line, field=key)
    kw = dict(data)
    if "modes" in kw and isinstance(kw["modes"], list):
        kw["modes"] = tuple(tuple(m) if isinstance(m, list) else m for m in kw["modes"])
    return SimConfig(**kw)


def parse_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, str(path))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_simulate(args):
    try:
        cfg = parse_config(args.config)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    over = {}
    if args.output_dir is not None:
        over["output_dir"] = args.output_dir
    if args.workers is not None:
        over["workers"] = args.workers
    if cfg.output_dir is None and "output_dir" not in over:
        over["output_dir"] = "."
    if over:
        cfg = replace(cfg, **over)
    try:
        res = run(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"status: {res.status} after {res.steps} steps at t = {res.final.time!r}")
    if res.message:
        print(f"reason: {res.message}")
    if res.energy_violations:
        print(f"warning: energy increased on {len(res.energy_violations)} step(s)")
    return EXIT_CODES[res.status]


def _load_law(text):
    if text is None:
        return build_law({"kind": "hookean", "k0": 1.0})
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    return build_law(json.loads(text))


def cmd_symbol(args):
    A = np.array(args.A, dtype=float).reshape(3, 2)
    try:
        law = _load_law(args.law)
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: invalid law: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        rep = spectral.symbol_report(
            A, law, n_xi=args.n_xi, sector=spectral.SectorSpec(args.omega, args.delta, args.z_samples),
            seed=args.seed, kernel=not args.no_kernel, kernel_n=args.kernel_n,
            kernel_half_width=args.kernel_half_width)
    except RankDeficient as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    text = json.dumps(rep, indent=2) + "\n"
    if args.output:
        try:
            with open(args.output, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return 0 if not rep["violations"] else 5


# -- validation suites ------------------------------------------------------
def _suite_charts(L):
    for name, count in atlas.geometry_violations(10000).items():
        yield count == 0, f"charts {name}", f"violations={count}"


def _suite_layer(L):
    for l, m in ((0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, -2)):
        if l > L:
            continue
        e = bie.single_layer_eigen_error(L, l, m)
        yield e < 1e-3, f"single layer Y({l},{m}) at L={L}", f"rel_error={e!r}"
    coarse = bie.single_layer_eigen_error(L, 1, 0, bie.PUNCTURED)
    fine = bie.single_layer_eigen_error(2 * L, 1, 0, bie.PUNCTURED)
    yield fine < coarse, f"punctured reference converges L={L} -> {2 * L}", f"errors={coarse!r},{fine!r}"


def _suite_s00(L):
    for l, m in ((1, 0), (1, 1), (2, 0), (2, 2)):
        if l > L:
            continue
        e = bie.s00_eigen_error(L, l, m)
        yield e < 1e-3, f"S00 Y({l},{m}) at L={L}", f"rel_error={e!r}"


def _suite_pv(L):
    for name, A in (("isotropic", np.eye(3)[:, :2]), ("anisotropic", np.diag([3.0, 1.0, 0.0])[:, :2])):
        p = kernels.pv_annulus_check(A, 0.01, 200.0)
        yield p.combined < 1e-4, f"p.v. {name} (0.01, 200)", f"combined={p.combined!r}"
        q = kernels.pv_annulus_check(A, 0.1, 50.0, center=(0.05, -0.03))
        yield q.mismatch < 1e-6, f"divergence identity {name} off-center disc", f"mismatch={q.mismatch!r}"


def _suite_decay(L):
    rep = spectral.matrix_factors(np.eye(3)[:, :2])
    law = build_law({"kind": "hookean", "k0": 1.0})
    k = spectral.semigroup_kernel(rep, law)
    pk, pg = k.fits["kernel"], k.fits["gradient"]
    mass = float(np.abs(k.mass - np.eye(3)).max())
    yield abs(pk - 3) <= 0.3, "kernel decay exponent", f"p={pk!r}"
    yield abs(pg - 4) <= 0.3, "gradient decay exponent", f"p={pg!r}"
    yield mass < 1e-6, "kernel unit mass", f"error={mass!r}"
    ss = spectral.self_similarity_error(rep, law)
    yield ss < 1e-6, "kernel self-similarity", f"error={ss!r}"


def _suite_symbol(L):
    rep = spectral.matrix_factors(np.eye(3)[:, :2])
    law = build_law({"kind": "hookean", "k0": 1.0})
    ev = np.sort(np.linalg.eigvals(spectral.full_symbol(rep, law, np.array([1.0, 0.0]))).real)
    err = float(np.abs(ev - [0.25, 0.25, 0.5]).max())
    yield err < 1e-12, "isometric spectrum {1/4, 1/4, 1/2}", f"error={err!r}"
    rng = np.random.default_rng(0)
    bad = 0
    for _ in range(200):
        A, lw, xi = spectral.random_admissible(rng)
        r = spectral.matrix_factors(A)
        ev = spectral.full_spectrum(r, lw, xi)
        lo, hi, _ = spectral.full_symbol_bounds(r, lw, xi)
        bad += int(ev[0] < lo * (1 - spectral.ROUNDOFF) or ev[-1] > hi * (1 + spectral.ROUNDOFF))
    yield bad == 0, "full symbol bracket on 200 random samples", f"violations={bad}"


SUITES = {"charts": _suite_charts, "layer": _suite_layer, "s00": _suite_s00, "pv": _suite_pv,
          "decay": _suite_decay, "symbol": _suite_symbol}


def cmd_validate(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        results.extend(SUITES[name](args.L))
    print("TAP version 13")
    print(f"1..{len(results)}")
    ok_all = True
    for i, (ok, desc, detail) in enumerate(results, 1):
        ok_all &= bool(ok)
        print(f"{'ok' if ok else 'not ok'} {i} - {desc} # {detail}")
    return 0 if ok_all else 1


def cmd_export(args):
    try:
        state = read_snapshot(args.snapshot)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    out = args.output
    try:
        if args.format == "coefficients":
            write_coefficients(state, out or "/dev/stdout")
        else:
            write_snapshot(state, out or "/dev/stdout")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser():
    p = argparse.ArgumentParser(prog="peskin3d", description="Elastic membrane in Stokes flow.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a time integration from a JSON config")
    s.add_argument("config")
    s.add_argument("--output-dir", default=None)
    s.add_argument("--workers", type=int, default=None,
                   help="threads for velocity evaluation (default: PESKIN3D_THREADS or 1)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("symbol", help="frozen-coefficient symbol report (JSON)")
    s.add_argument("--A", type=float, nargs=6, default=[1, 0, 0, 1, 0, 0], metavar="a",
                   help="row-major entries of the 3x2 matrix")
    s.add_argument("--law", default=None, help="law descriptor as JSON text or a path to a JSON file")
    s.add_argument("--omega", type=float, default=1.0)
    s.add_argument("--delta", type=float, default=np.pi / 4)
    s.add_argument("--z-samples", type=int, default=200)
    s.add_argument("--n-xi", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--kernel-n", type=int, default=1024)
    s.add_argument("--kernel-half-width", type=float, default=40.0)
    s.add_argument("--no-kernel", action="store_true", help="skip the FFT kernel and decay fits")
    s.add_argument("--output", default=None)
    s.set_defaults(func=cmd_symbol)

    s = sub.add_parser("validate", help="run numerical checks, TAP output")
    s.add_argument("--suite", choices=list(SUITES) + ["all"], default="all")
    s.add_argument("-L", type=int, default=16)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("export", help="convert a snapshot CSV")
    s.add_argument("snapshot")
    s.add_argument("--format", choices=["csv", "coefficients"], default="coefficients")
    s.add_argument("--output", default=None)
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
