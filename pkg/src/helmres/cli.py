"""Command-line front end.

Exit status: 0 success, 1 failed self-test, 2 input or assumption refusal,
3 numerical refusal (resonance hit, ill-conditioning, standoff of a source).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, geometry, qpgreen, scattering, selftest
from .bem import nystrom
from .farfield import CouplingSolver, track_eigenvalues

EXIT_OK, EXIT_SELFTEST, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

PROFILES = {
    "strict": {"node_factor": 2.0, "interior": "direct", "ewald_cutoff": 40.0},
    "default": {"node_factor": 1.0, "interior": "direct", "ewald_cutoff": 40.0},
    "fast": {"node_factor": 0.5, "interior": "direct", "ewald_cutoff": 30.0},
}


@dataclass
class RunManifest:
    """Provenance attached to every output: config hash, version, tolerances, timings, warnings."""

    command: str
    config_hash: str | None
    version: str = __version__
    tolerances: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def stage(self, name, start):
        self.timing[name] = round(time.perf_counter() - start, 6)


def format_float(x) -> str:
    return format(float(x), ".17g")


def parse_range(text, name):
    """``a:b:n`` -> ``numpy.linspace(a, b, n)``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"{name} must look like a:b:n, got {text!r}")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 1:
        raise ValueError(f"{name} needs at least one sample")
    return np.linspace(a, b, n)


def parse_point(text, name):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"{name} must look like x1,x2")
    return np.array([float(parts[0]), float(parts[1])])


def parse_grid(text):
    """``x1a:x1b:n,x2a:x2b:n`` -> points in row-major order (x2 outer, x1 inner)."""
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError("grid must look like x1a:x1b:n,x2a:x2b:n")
    x1 = parse_range(parts[0], "grid x1")
    x2 = parse_range(parts[1], "grid x2")
    X1, X2 = np.meshgrid(x1, x2)
    return np.column_stack([X1.ravel(), X2.ravel()])


def write_csv(stream, header, rows):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else format_float(v) for v in row])


# ----------------------------------------------------------------------
class Context:
    """Loaded configuration plus the effective tolerances for one invocation."""

    def __init__(self, args):
        self.args = args
        self.profile = PROFILES[args.tolerance_profile]
        self.config = None
        text = None
        if getattr(args, "config", None):
            with open(args.config, "rb") as fh:
                raw = fh.read()
            text = raw.decode("utf-8")
            self.config = geometry.parse_config(text, path=args.config)
        h = hashlib.sha256(text.encode()).hexdigest() if text is not None else None
        self.manifest = RunManifest(args.command, h)

    def wave(self, k=None, theta=None):
        w = self.config.wave
        k = w.k if k is None else k
        theta = w.theta if theta is None else theta
        return geometry.WaveParams(float(k), float(theta), w.I0)

    @property
    def cell(self):
        return self.config.cell

    @property
    def nodes(self) -> int:
        base = self.args.nodes or (self.config.nodes if self.config else 300)
        return max(int(round(base * self.profile["node_factor"])), 8 * 4)

    def solver_kw(self):
        return {"interior": self.profile["interior"],
                "ewald": qpgreen.EwaldParams(cutoff=self.profile["ewald_cutoff"])}

    def tolerances(self) -> dict:
        return {
            "profile": self.args.tolerance_profile,
            "nodes_per_cell": self.nodes,
            "interior_method": self.profile["interior"],
            "ewald_cutoff": self.profile["ewald_cutoff"],
            "wood_band": geometry.WOOD_BAND,
            "neumann_margin": geometry.NEUMANN_MARGIN,
            "standoff_spacings": nystrom.STANDOFF_SPACINGS,
            "nystrom_cond_limit": nystrom.COND_LIMIT,
            "singular_rtol": scattering.SINGULAR_RTOL,
            "resonance_ratio": scattering.RESONANCE_RATIO,
        }


def emit(ctx, text, suffix):
    """Write ``text`` to ``--output`` (plus a manifest sidecar) or to stdout."""
    out = ctx.args.output
    ctx.manifest.tolerances = ctx.tolerances()
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        if suffix != "json":
            with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
                json.dump(asdict(ctx.manifest), fh, indent=2, sort_keys=True)
    else:
        sys.stdout.write(text)


def dump_json(ctx, payload):
    ctx.manifest.tolerances = ctx.tolerances()
    payload = dict(payload)
    payload["manifest"] = asdict(ctx.manifest)
    emit(ctx, json.dumps(payload, indent=2, sort_keys=True) + "\n", "json")


# ----------------------------------------------------------------------
def cmd_validate(ctx):
    wave = ctx.wave(ctx.args.k, ctx.args.theta)
    rep = geometry.validate_assumptions(ctx.cell, wave)
    print(rep.format())
    return EXIT_OK if rep.ok else EXIT_INPUT


def cmd_solve(ctx):
    wave = ctx.wave(ctx.args.k, ctx.args.theta)
    t = time.perf_counter()
    coup = CouplingSolver(ctx.cell, wave, ctx.nodes, **ctx.solver_kw()).assemble()
    ctx.manifest.stage("coupling", t)
    t = time.perf_counter()
    sol = scattering.solve_Is(ctx.cell, wave, coup)
    ctx.manifest.stage("solve", t)
    dump_json(ctx, {"k": wave.k, "theta": wave.theta, "solution": sol.to_dict(),
                    "coupling": coup.to_dict()})
    return EXIT_OK


def cmd_sweep(ctx):
    ks = parse_range(ctx.args.k_range, "--k-range")
    ths = parse_range(ctx.args.theta_range, "--theta-range")
    I0 = ctx.config.wave.I0
    for th in ths:
        for k in (ks[0], ks[-1]):
            geometry.require_valid(ctx.cell, geometry.WaveParams(float(k), float(th), I0))
    t = time.perf_counter()
    pts = scattering.sweep(ctx.cell, ks, ths, I0, ctx.nodes, ctx.args.workers, **ctx.solver_kw())
    ctx.manifest.stage("sweep", t)
    buf = io.StringIO()
    write_csv(buf, ["k", "theta", "abs_Is", "phase_Is", "sigma_min_Q"],
              [(p.k, p.theta, p.amplitude, p.phase, p.sigma_min) for p in pts])
    emit(ctx, buf.getvalue(), "csv")
    return EXIT_OK


def cmd_field(ctx):
    wave = ctx.wave(ctx.args.k, ctx.args.theta)
    pts = parse_grid(ctx.args.grid)
    t = time.perf_counter()
    sc = scattering.Scatterer(ctx.cell, wave, ctx.nodes, **ctx.solver_kw())
    ctx.manifest.stage("solve", t)
    t = time.perf_counter()
    values = field_values(sc, pts)
    ctx.manifest.stage("field", t)
    refused = int(np.sum(~np.isfinite(values)))
    if refused:
        ctx.manifest.warnings.append(f"{refused} grid points within the wall standoff written as nan")
    buf = io.StringIO()
    write_csv(buf, ["x1", "x2", "re_U", "im_U"],
              [(p[0], p[1], v.real, v.imag) for p, v in zip(pts, values)])
    emit(ctx, buf.getvalue(), "csv")
    return EXIT_OK


def field_values(sc: scattering.Scatterer, pts):
    """Exterior or interior field at each point; ``nan`` where the standoff refuses."""
    out = np.full(len(pts), complex("nan+nanj"))
    delta = sc.cell.delta
    sp = pts / delta
    red = sp.copy()
    red[:, 0] = np.mod(red[:, 0] + 0.5, 1.0) - 0.5
    owner = sc.solver.sc.in_resonator(red)
    for i in range(-1, sc.cell.n):
        idx = np.nonzero(owner == i)[0]
        for j in idx:
            try:
                if i < 0:
                    out[j] = sc.near_field(pts[j:j + 1])[0]
                else:
                    # interior fields live in the reference copy of the resonator
                    shift = (sp[j, 0] - red[j, 0]) * delta
                    q = pts[j:j + 1] - [shift, 0.0]
                    out[j] = sc.interior_field(i, q)[0] * np.exp(-1j * sc.wave.k1 * shift)
            except scattering.StandoffError:
                pass
    return out


def cmd_tune(ctx):
    wave = ctx.wave(ctx.args.k, ctx.args.theta)
    a = ctx.args
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = scattering.tune_apertures(ctx.cell, wave, lam=a.eigenvalue, index=a.eigenvalue_index,
                                        nearest=a.nearest, nodes=ctx.nodes, **ctx.solver_kw())
    ctx.manifest.warnings += [str(w.message) for w in caught]
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    emit(ctx, config_toml(res.cell, ctx.config.wave, ctx.config.nodes, ctx.manifest, res.lam), "toml")
    return EXIT_OK


def config_toml(cell, wave, nodes, manifest=None, lam=None) -> str:
    lines = []
    if manifest is not None:
        lines.append(f"# helmres {manifest.version}; source config sha256 {manifest.config_hash}")
        if lam is not None:
            lines.append(f"# apertures tuned to eigenvalue real part {format_float(lam)}")
    lines += [f"delta = {format_float(cell.delta)}", f"k = {format_float(wave.k)}",
              f"theta = {format_float(wave.theta)}", f"I0 = {format_float(wave.I0)}",
              f"nodes = {int(nodes)}", ""]
    for r in cell.resonators:
        lines += ["[[resonators]]", f"h = {format_float(r.h)}", f"l = {format_float(r.l)}",
                  f"xi = {format_float(r.xi)}", f"eps = {format_float(r.eps)}", ""]
    return "\n".join(lines)


def cmd_greens(ctx):
    a = ctx.args
    wave = geometry.WaveParams(a.k, a.theta)
    sw = wave.scaled(a.delta)
    g = qpgreen.QuasiPeriodicGreen(sw.k, sw.k1, ewald=qpgreen.EwaldParams(cutoff=ctx.profile["ewald_cutoff"]))
    z = parse_point(a.source, "--source") / a.delta
    pts = parse_grid(a.grid)
    t = time.perf_counter()
    rows = []
    for p in pts:
        x = p / a.delta
        try:
            v = complex(g.value(z, x, method=a.method))
        except qpgreen.GreensFunctionError:
            v = complex("nan+nanj")
        rows.append((p[0], p[1], v.real, v.imag, a.method))
    ctx.manifest.stage("greens", t)
    buf = io.StringIO()
    write_csv(buf, ["x1", "x2", "re", "im", "method"], rows)
    emit(ctx, buf.getvalue(), "csv")
    return EXIT_OK


def cmd_coupling(ctx):
    ks = parse_range(ctx.args.k_range, "--k-range")
    theta = ctx.config.wave.theta if ctx.args.theta is None else ctx.args.theta
    t = time.perf_counter()
    data = [CouplingSolver(ctx.cell, ctx.wave(k, theta), ctx.nodes, **ctx.solver_kw()).assemble()
            for k in ks]
    ctx.manifest.stage("coupling", t)
    tracked = track_eigenvalues([d.eigenvalues() for d in data])
    rows = [(k, theta, str(b), ev.real, ev.imag)
            for k, row in zip(ks, tracked) for b, ev in enumerate(row)]
    buf = io.StringIO()
    write_csv(buf, ["k", "theta", "branch", "re_eig", "im_eig"], rows)
    emit(ctx, buf.getvalue(), "csv")
    if ctx.args.json:
        payload = {"coupling": [d.to_dict() for d in data], "manifest": asdict(ctx.manifest)}
        with open(ctx.args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return EXIT_OK


def run_suite(ctx, results):
    print(selftest.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


def cmd_bem_selftest(ctx):
    n = ctx.args.nodes or int(300 * ctx.profile["node_factor"])
    return run_suite(ctx, selftest.run_all(n))


def cmd_selftest(ctx):
    n = ctx.args.nodes or int(300 * ctx.profile["node_factor"])
    return run_suite(ctx, selftest.green_suite() + selftest.run_all(n))


COMMANDS = {
    "validate": cmd_validate, "solve": cmd_solve, "sweep": cmd_sweep, "field": cmd_field,
    "tune": cmd_tune, "greens": cmd_greens, "coupling": cmd_coupling,
    "bem-selftest": cmd_bem_selftest, "selftest": cmd_selftest,
}


def build_parser():
    p = argparse.ArgumentParser(prog="helmres", description="Periodic Helmholtz-resonator scattering")
    p.add_argument("--version", action="version", version=f"helmres {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tolerance-profile", choices=sorted(PROFILES), default="default")
    common.add_argument("--nodes", type=int, default=None, help="boundary nodes per cell (before profile scaling)")
    common.add_argument("-o", "--output", default=None, help="output file (default stdout)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_, config=True):
        s = sub.add_parser(name, parents=[common], help=help_)
        if config:
            s.add_argument("--config", required=True)
        return s

    s = add("validate", "check model assumptions")
    s.add_argument("--k", type=float)
    s.add_argument("--theta", type=float)
    s = add("solve", "scattered amplitude at one (k, theta)")
    s.add_argument("--k", type=float)
    s.add_argument("--theta", type=float)
    s = add("sweep", "amplitude and phase over a (k, theta) grid")
    s.add_argument("--k-range", required=True)
    s.add_argument("--theta-range", required=True)
    s.add_argument("--workers", type=int, default=None,
                   help=f"process count (default ${scattering.WORKERS_ENV} or 1)")
    s = add("field", "total field on a grid")
    s.add_argument("--k", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--grid", required=True)
    s = add("tune", "choose apertures from an eigenvalue of the coupling matrix")
    s.add_argument("--k", type=float)
    s.add_argument("--theta", type=float)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--eigenvalue-index", type=int)
    g.add_argument("--eigenvalue", type=float, help="use this value directly")
    g.add_argument("--nearest", type=float, help="eigenvalue whose real part is closest")
    s = add("greens", "quasi-periodic Green's function on a grid", config=False)
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--theta", type=float, required=True)
    s.add_argument("--delta", type=float, default=1.0)
    s.add_argument("--source", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--method", choices=["ewald", "spectral", "auto"], default="ewald")
    s = add("coupling", "eigenvalues of the coupling matrix over k")
    s.add_argument("--k-range", required=True)
    s.add_argument("--theta", type=float)
    s.add_argument("--json", default=None, help="also dump every coupling matrix here")
    add("bem-selftest", "Helmholtz-residual and period-doubling suites", config=False)
    add("selftest", "Green's-function identities plus the boundary-solver suites", config=False)
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            status = COMMANDS[args.command](ctx)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return status
    except (geometry.AssumptionError, geometry.ConfigError, geometry.GeometryError,
            qpgreen.WoodAnomalyError, scattering.StandoffError, scattering.TuningError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (scattering.ResonanceError, nystrom.SolverError, qpgreen.GreensFunctionError,
            np.linalg.LinAlgError) as err:
        print(f"numerical refusal: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, IndexError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
