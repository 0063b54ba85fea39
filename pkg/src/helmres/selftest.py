"""Built-in consistency suites: Helmholtz residuals of the Neumann functions and period doubling.

Both suites need no reference data. The first checks that the reconstructed
Neumann functions solve the Helmholtz equation away from their source; the
second describes the same grating with one resonator per period and with two
copies in a period twice as long and compares the invariant combinations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import qpgreen
from .bem import nystrom
from .farfield import CouplingSolver
from .geometry import Resonator, UnitCell, WaveParams, reference_cell
from .scattering import Scatterer

HELMHOLTZ_TOL = 1e-3
DOUBLING_TOL = 1e-5
WALL_TOL = 5e-2
FD_STEP = 0.01
WALL_STEP = 2e-3

EXTERIOR_PROBES = np.array([[0.0, 0.6], [0.3, 0.7], [-0.3, 0.5]])
FIELD_SOURCE = np.array([0.2, 0.85])


@dataclass(frozen=True)
class SelfTestResult:
    name: str
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.threshold)


def format_table(results) -> str:
    lines = [f"{'check':<34s} {'value':>11s} {'limit':>9s}  result"]
    for r in results:
        lines.append(f"{r.name:<34s} {r.value:11.3e} {r.threshold:9.1e}  "
                     f"{'PASS' if r.passed else 'FAIL'}  {r.detail}")
    return "\n".join(lines)


def fd_helmholtz_residual(func, points, k, h=FD_STEP):
    """``|Delta_h u + k^2 u| / (k^2 |u|)`` with the fourth-order nine-point cross stencil."""
    points = np.atleast_2d(points)
    steps = np.array([1, -1, 2, -2])
    coef = np.array([16, 16, -1, -1]) / (12 * h * h)
    offs = np.vstack([[0, 0]] + [[s * h, 0] for s in steps] + [[0, s * h] for s in steps])
    out = []
    for p in points:
        u = func(p + offs)
        lap = coef @ u[1:5] + coef @ u[5:9] - 60 / (12 * h * h) * u[0]
        out.append(abs(lap + k * k * u[0]) / (k * k * abs(u[0])))
    return np.array(out)


def neumann_functions(cell: UnitCell, wave: WaveParams, nodes=300, resonator=2):
    """Callables for ``N_{+,d}(a, .)``, ``N_+(z, .)`` and ``N_{i,d}(a, .)`` in the scaled frame."""
    solver = CouplingSolver(cell, wave, nodes)
    ex = solver.exterior
    a = solver.apertures[resonator]
    nb = ex.solve_boundary_source(a)
    nf = ex.solve_field_source(FIELD_SOURCE)
    res = solver.sc.resonators[resonator]
    inner = nystrom.InteriorProblem(res, solver.sw.k, solver.mesh.meshes[resonator])
    ni = inner.solve(a)
    interior_probes = np.array([[res.xi, 0.5 * res.h], [res.xi - 0.25 * res.l, 0.35 * res.h]])
    return solver, {"N_plus_boundary": (nb.total, EXTERIOR_PROBES, ex.boundary, 1.0),
                    "N_plus_field": (nf.total, EXTERIOR_PROBES, ex.boundary, 1.0),
                    "N_interior_boundary": (ni.total, interior_probes, inner.boundary, -1.0)}


def wall_points(boundary, fractions=(0.3, 0.7)):
    """Points on every straight wall (away from corners) with their normals."""
    pts, nrm = [], []
    for seg in boundary.segments:
        for f in fractions:
            pts.append(seg.start + f * seg.length * seg.direction)
            nrm.append(seg.normal)
    return np.array(pts), np.array(nrm)


def neumann_residual(func, boundary, side, d=WALL_STEP):
    """``max |du/dnu| / max |u|`` on the walls from one-sided second-order differences.

    ``side`` is ``+1`` to difference into the exterior (along the normal) and
    ``-1`` into the cavity.
    """
    p, n = wall_points(boundary)
    u = [func(p + side * j * d * n) for j in range(3)]
    du = side * (-3 * u[0] + 4 * u[1] - u[2]) / (2 * d)
    return float(np.max(np.abs(du)) / np.max(np.abs(u[0])))


def helmholtz_suite(nodes=300, cell=None, wave=None, h=FD_STEP, tol=HELMHOLTZ_TOL, walls=True,
                    wall_tol=WALL_TOL):
    """Max relative Helmholtz residual of each reconstructed Neumann function."""
    cell = reference_cell(0.01) if cell is None else cell
    wave = WaveParams(1.663, math.pi / 6) if wave is None else wave
    t0 = time.perf_counter()
    solver, funcs = neumann_functions(cell, wave, nodes)
    out = []
    for name, (f, probes, bnd, side) in funcs.items():
        r = fd_helmholtz_residual(f, probes, solver.sw.k, h)
        out.append(SelfTestResult(f"helmholtz {name} M={nodes}", float(r.max()), tol,
                                  f"{len(probes)} probes, step {h:g}", time.perf_counter() - t0))
        if walls:
            nr = neumann_residual(f, bnd, side)
            out.append(SelfTestResult(f"wall flux {name} M={nodes}", nr, wall_tol,
                                      "relative normal derivative on the walls",
                                      time.perf_counter() - t0))
    return out


def doubling_pair(k=1.663, theta=1.1, nodes=150, resonator=(0.3, 0.3, 0.01)):
    """Scatterers for one resonator per unit period and two copies per period 2."""
    h, l, eps = resonator
    single = UnitCell(1.0, (Resonator(h, l, 0.0, eps, 1),))
    wave = WaveParams(k, theta)
    return Scatterer(single, wave, nodes), Scatterer(single.doubled(), wave, 2 * nodes)


def doubling_quantities(s1: Scatterer, s2: Scatterer) -> dict:
    """Relative mismatch of each invariant combination.

    With copies at physical offset ``+1`` (period-2 frame) and ``k1`` the
    physical Bloch wavenumber::

        R1_11 = R2_11 + e^{-i k1} R2_12 - (2/pi) log 2
        r1 = 2 r2_j,  r1_d = 2 r2_d_j,  r1_ex = 2 r2_ex,  I_s equal

    The ``log 2`` shift and the factors 2 come from measuring lengths in units
    of the respective period.
    """
    a, b = s1.coupling, s2.coupling
    k1 = s1.wave.k1
    shift = (2.0 / math.pi) * math.log(s2.cell.delta / s1.cell.delta)

    def rel(x, y):
        return float(np.max(np.abs(np.asarray(x) - np.asarray(y))) / np.max(np.abs(x)))

    return {
        "R": max(rel(a.R[0, 0], b.R[0, 0] + np.exp(-1j * k1) * b.R[0, 1] - shift),
                 rel(a.R[0, 0], b.R[1, 1] + np.exp(1j * k1) * b.R[1, 0] - shift)),
        "r": rel(a.r[0], 2 * b.r),
        "r_del": rel(a.r_del[0], 2 * b.r_del),
        "r_ex": rel(a.r_ex, 2 * b.r_ex),
        "I_s": rel(s1.solution.Is, s2.solution.Is),
    }


def doubling_suite(nodes=150, tol=DOUBLING_TOL, **kw):
    t0 = time.perf_counter()
    s1, s2 = doubling_pair(nodes=nodes, **kw)
    q = doubling_quantities(s1, s2)
    dt = time.perf_counter() - t0
    return [SelfTestResult(f"period doubling {name}", v, tol, "", dt) for name, v in q.items()]


def green_suite(k=1.663, theta=math.pi / 6, pairs=20, seed=7):
    """Ewald against spectral evaluation, ground condition and Bloch factor in the source point."""
    t0 = time.perf_counter()
    w = WaveParams(k, theta)
    g = qpgreen.QuasiPeriodicGreen(w.k, w.k1)
    rng = np.random.default_rng(seed)
    z = np.column_stack([rng.uniform(-0.5, 0.5, pairs), rng.uniform(0.1, 1.5, pairs)])
    x = np.column_stack([rng.uniform(-0.5, 0.5, pairs), rng.uniform(0.1, 1.5, pairs)])
    far = np.abs(z[:, 1] - x[:, 1]) > 0.2
    ew = g.value(z[far], x[far], method="ewald")
    sp = g.value(z[far], x[far], method="spectral")
    ground = np.abs(g.value(z, x * [1.0, 0.0]))
    shifted = g.value(z + [1.0, 0.0], x) * np.exp(1j * g.k1) / g.value(z, x)
    dt = time.perf_counter() - t0
    return [SelfTestResult("green ewald vs spectral", float(np.max(np.abs(ew - sp) / np.abs(sp))), 1e-8,
                           f"{int(far.sum())} pairs", dt),
            SelfTestResult("green ground condition", float(ground.max() / np.abs(sp).max()), 1e-12, "", dt),
            SelfTestResult("green Bloch factor in z", float(np.max(np.abs(shifted - 1))), 1e-10, "", dt)]


def run_all(nodes=300):
    return helmholtz_suite(nodes) + doubling_suite(max(nodes // 2, 60))
