"""Aperture densities, the scattered amplitude ``I_s``, fields, tuning and resonance search.

The resonance matrix and all constants are assembled in the scaled frame
(period 1, wavenumber ``delta*k``); points passed to the field evaluators are
physical and divided by ``delta`` internally.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar

from . import qpgreen
from .bem import nystrom
from .bem.quadrature import graded_rule
from .farfield import CouplingData, CouplingInterpolant, CouplingSolver, track_eigenvalues
from .geometry import UnitCell, WaveParams

SINGULAR_RTOL = 1e-13
RESONANCE_RATIO = 1e-2
TINY_APERTURE = 1e-12
CHEB_NODES = 8
WORKERS_ENV = "HELMRES_WORKERS"
STATIONARY_VARIATION = 0.02
DISPERSIVE_VARIATION = 0.10


class ResonanceError(RuntimeError):
    """``Q`` is numerically singular at the requested wavenumber."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class TuningError(ValueError):
    """Tuned aperture would not fit on the resonator ceiling."""


class StandoffError(ValueError):
    """Evaluation point too close to a wall or outside the admissible region."""


# ----------------------------------------------------------------------
def hypersingular_inverse_const(eps, v=1.0):
    """``v * (L^eps)^{-1}[1]`` where ``L^eps[phi](t) = int log|t - s| phi(s) ds`` on ``(-eps, eps)``.

    Returns a callable ``t -> v / (pi log(eps/2) sqrt(eps^2 - t^2))``.
    """
    eps = float(eps)
    if not 0.0 < eps < 2.0:
        raise ValueError(f"aperture half-width must lie in (0, 2), got {eps!r}; log(eps/2) vanishes at 2")
    c = v / (math.pi * math.log(eps / 2.0))

    def profile(t):
        t = np.asarray(t, dtype=float)
        if np.any(np.abs(t) >= eps):
            raise ValueError("profile is defined on the open interval (-eps, eps)")
        return c / np.sqrt(eps * eps - t * t)

    return profile


def log_operator_chebyshev(eps, c, t, order=16):
    """``int_{-eps}^{eps} log|t - s| c(s) / (pi sqrt(eps^2 - s^2)) ds`` for smooth ``c``.

    With ``s = eps cos u`` the weight becomes ``du / pi`` and
    ``t - s = 2 eps sin((u + u0)/2) sin((u - u0)/2)`` with ``t = eps cos u0``,
    which is evaluated without cancellation; a Gauss rule graded
    geometrically toward ``u0`` resolves the log singularity.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.abs(t) > eps):
        raise ValueError("targets must lie on the aperture [-eps, eps]")
    out = np.empty(len(t), dtype=np.result_type(c(np.zeros(1)), float))
    for j, tj in enumerate(t):
        u0 = math.acos(tj / eps)
        u, w, rel = graded_rule(0.0, math.pi, u0, 0.0, order)
        diff = 2 * eps * np.sin((u + u0) / 2) * np.sin(rel / 2)
        out[j] = np.dot(w, np.log(np.abs(diff)) * c(eps * np.cos(u))) / math.pi
    return out


@dataclass(frozen=True)
class DensityProfile:
    """Aperture flux densities ``mu_i(t) = w_i / (pi sqrt(eps_i^2 - t^2))`` (scaled frame)."""

    w: np.ndarray
    eps: np.ndarray

    def __call__(self, i, t):
        e = self.eps[i]
        t = np.asarray(t, dtype=float)
        return self.w[i] / (math.pi * np.sqrt(e * e - t * t))

    def nodes(self, i, n=CHEB_NODES):
        """Gauss-Chebyshev nodes ``t_j`` and weights with ``sum weights * g(t_j) = int mu_i g``."""
        t = self.eps[i] * np.cos((2 * np.arange(1, n + 1) - 1) * math.pi / (2 * n))
        return t, np.full(n, self.w[i] / n)

    def integral(self, i, n=CHEB_NODES):
        return complex(np.sum(self.nodes(i, n)[1]))


# ----------------------------------------------------------------------
def _scaled(cell, wave):
    return cell.scaled(), wave.scaled(cell.delta)


def assemble_f(cell: UnitCell, wave: WaveParams, coupling: CouplingData) -> np.ndarray:
    """``f_i = 2 i dk2 I0 e^{-i dk1 xi_i} (2 sin(dk2 h_i) / dk2 - r^d_i)``."""
    sc, sw = _scaled(cell, wave)
    xi = np.array([r.xi for r in sc.resonators])
    h = np.array([r.h for r in sc.resonators])
    k1, k2 = sw.k1, sw.k2
    return 2j * k2 * sw.I0 * np.exp(-1j * k1 * xi) * (2 * np.sin(k2 * h) / k2 - coupling.r_del)


def geometric_diagonal(cell: UnitCell, wave: WaveParams) -> np.ndarray:
    """``1 / ((dk)^2 |D_i|) + (2/pi) log(eps_i / 2)`` in the scaled frame."""
    sc, sw = _scaled(cell, wave)
    area = np.array([r.area for r in sc.resonators])
    eps = np.array([r.eps for r in sc.resonators])
    if np.any(eps >= 2.0):
        raise ValueError("scaled aperture half-widths must stay below 2")
    return 1.0 / (sw.k ** 2 * area) + (2.0 / math.pi) * np.log(eps / 2.0)


def assemble_Q(cell: UnitCell, wave: WaveParams, coupling: CouplingData) -> np.ndarray:
    return np.diag(geometric_diagonal(cell, wave)).astype(complex) + coupling.R


def compute_Is(w, coupling: CouplingData, cell: UnitCell, I0: float) -> complex:
    """``sum w_i e^{i dk1 xi_i} (r_i - sin(dk2 h_i)/dk2) - I0 (1 - 2 i dk2 r_ex)``."""
    sc = cell.scaled()
    xi = np.array([r.xi for r in sc.resonators])
    h = np.array([r.h for r in sc.resonators])
    k1, k2 = coupling.dk1, coupling.dk2
    v = np.exp(1j * k1 * xi) * (coupling.r - np.sin(k2 * h) / k2)
    return complex(np.dot(v, w) - I0 * (1 - 2j * k2 * coupling.r_ex))


def principal_phase(z) -> float:
    """Argument in ``(-pi, pi]``."""
    a = float(np.angle(z))
    return a + 2 * math.pi if a <= -math.pi else a


@dataclass(frozen=True)
class ScatterSolution:
    """Densities and scattered amplitude at one ``(k, theta)``."""

    Q: np.ndarray
    f: np.ndarray
    w: np.ndarray
    Is: complex
    cond: float
    sigma_min: float
    eig_Q: np.ndarray
    error_budget: float
    density: DensityProfile = field(repr=False)
    residual: float = 0.0

    @property
    def amplitude(self) -> float:
        return abs(self.Is)

    @property
    def phase(self) -> float:
        return principal_phase(self.Is)

    def to_dict(self) -> dict:
        def c(z):
            z = np.asarray(z)
            return {"re": z.real.tolist(), "im": z.imag.tolist()}
        return {"Is": {"re": self.Is.real, "im": self.Is.imag, "abs": self.amplitude,
                       "phase": self.phase},
                "w": c(self.w), "f": c(self.f), "eig_Q": c(self.eig_Q),
                "sigma_min_Q": self.sigma_min, "cond_Q": self.cond,
                "error_budget": self.error_budget, "residual": self.residual}


def solve_Is(cell: UnitCell, wave: WaveParams, coupling: CouplingData | None = None,
             nodes=300, **kw) -> ScatterSolution:
    """Solve ``Q w = f`` (LU plus one refinement step) and assemble ``I_s``.

    Raises :class:`ResonanceError` if ``sigma_min(Q) < 1e-13 ||Q||``.
    """
    if coupling is None:
        coupling = CouplingSolver(cell, wave, nodes, **kw).assemble()
    Q = assemble_Q(cell, wave, coupling)
    f = assemble_f(cell, wave, coupling)
    sv = linalg.svdvals(Q)
    eig = np.linalg.eigvals(Q)
    if sv[-1] <= SINGULAR_RTOL * sv[0]:
        raise ResonanceError(
            f"resonance hit: sigma_min(Q) = {sv[-1]:.3g} relative to ||Q|| = {sv[0]:.3g}; "
            f"eig(Q) = {np.array2string(eig, precision=4)}", eig)
    lu = linalg.lu_factor(Q)
    w = linalg.lu_solve(lu, f)
    w = w + linalg.lu_solve(lu, f - Q @ w)
    fn = np.linalg.norm(f)
    res = float(np.linalg.norm(Q @ w - f) / fn) if fn > 0 else float(np.linalg.norm(Q @ w))
    if res > 1e-10:
        raise ResonanceError(f"refined solve residual {res:.3g} exceeds 1e-10", eig)
    sc = cell.scaled()
    eps = np.array([r.eps for r in sc.resonators])
    qinv = linalg.lu_solve(lu, np.eye(len(f)))
    budget = float(len(f) * eps.max() * np.linalg.norm(qinv, "fro"))
    Is = compute_Is(w, coupling, cell, wave.I0)
    return ScatterSolution(Q, f, w, Is, float(sv[0] / sv[-1]), float(sv[-1]), eig, budget,
                           DensityProfile(w, eps), res)


# ----------------------------------------------------------------------
class Scatterer:
    """Coupling solve, density solve and field evaluation at one ``(cell, wave)``.

    Parameters
    ----------
    cell, wave : UnitCell, WaveParams
    nodes : int
        Boundary nodes per cell.
    **kw
        Forwarded to :class:`~helmres.farfield.CouplingSolver`.
    """

    def __init__(self, cell: UnitCell, wave: WaveParams, nodes=300, **kw):
        self.cell = cell
        self.wave = wave
        self.solver = CouplingSolver(cell, wave, nodes, **kw)
        self.coupling = self.solver.assemble()
        self.solution = solve_Is(cell, wave, self.coupling)
        self._interior = {}

    @property
    def green(self) -> qpgreen.QuasiPeriodicGreen:
        return self.solver.green

    def _incident(self, zs):
        k1, k2, I0 = self.green.k1, self.green.k2, self.wave.I0
        return I0 * np.exp(-1j * k1 * zs[:, 0]) * np.exp(-1j * k2 * zs[:, 1])

    def far_field(self, z):
        """``U0(z) + I_s e^{-i k1 z1} e^{i k2 z2}``."""
        zs = np.atleast_2d(np.asarray(z, dtype=float)) / self.cell.delta
        k1, k2 = self.green.k1, self.green.k2
        return self._incident(zs) + self.solution.Is * np.exp(-1j * k1 * zs[:, 0] + 1j * k2 * zs[:, 1])

    def _check_exterior(self, zs, standoff):
        sc = self.solver.sc
        b = self.solver.exterior.boundary
        limit = nystrom.STANDOFF_SPACINGS * b.spacing if standoff is None else standoff
        if np.any(zs[:, 1] < 0):
            raise StandoffError("field points must satisfy z2 >= 0")
        red = zs.copy()
        red[:, 0] = np.mod(red[:, 0] + 0.5, 1.0) - 0.5  # periodic copies of the walls
        inside = sc.in_resonator(red) >= 0
        if np.any(inside):
            raise StandoffError(f"{int(np.sum(inside))} field point(s) lie inside a resonator")
        d = np.minimum.reduce([b.distance(red + [s_, 0.0]) for s_ in (-1.0, 0.0, 1.0)])
        if np.any(d < limit):
            raise StandoffError(f"field point {d.min():.3g} from a wall, below the standoff {limit:.3g}")

    def near_field(self, z, standoff=None):
        """Total field ``U^k(z)`` outside the resonators (physical points, shape ``(T, 2)``)."""
        zs = np.atleast_2d(np.asarray(z, dtype=float)) / self.cell.delta
        self._check_exterior(zs, standoff)
        ap = self.solver.apertures
        k1, k2, I0 = self.green.k1, self.green.k2, self.wave.I0
        out = np.empty(len(zs), dtype=complex)
        for lo in range(0, len(zs), 256):
            zc = zs[lo:lo + 256]
            rplus, C = self.solver.field_sources(zc)
            gam = self.green.value(zc[:, None, :], ap[None, :, :])
            out[lo:lo + 256] = ((gam + rplus) @ self.solution.w + 2j * I0 * k2 * C
                                - I0 * np.exp(-1j * k1 * zc[:, 0] + 1j * k2 * zc[:, 1]))
        return out + self._incident(zs)

    def _interior_problem(self, i):
        if i not in self._interior:
            res = self.solver.sc.resonators[i]
            mesh = self.solver.mesh.meshes[i]
            prob = nystrom.InteriorProblem(res, self.solver.sw.k, mesh)
            t, wts = self.solution.density.nodes(i)
            ys = np.column_stack([res.xi + t, np.full_like(t, res.h)])
            self._interior[i] = (prob, [prob.solve(y) for y in ys], wts)
        return self._interior[i]

    def interior_field(self, i, z, standoff=None):
        """``u(z) = -int mu_i(y) N_{i,d}(z, y) dy`` at physical points inside resonator ``i``."""
        zs = np.atleast_2d(np.asarray(z, dtype=float)) / self.cell.delta
        res = self.solver.sc.resonators[i]
        if not np.all(res.contains(zs)):
            raise StandoffError(f"points must lie strictly inside resonator {i}")
        prob, fields, wts = self._interior_problem(i)
        limit = nystrom.STANDOFF_SPACINGS * prob.boundary.spacing if standoff is None else standoff
        d = prob.boundary.distance(zs)
        if np.any(d < limit):
            raise StandoffError(f"interior point {d.min():.3g} from a wall, below the standoff {limit:.3g}")
        out = np.zeros(len(zs), dtype=complex)
        for fld, wt in zip(fields, wts):
            out -= wt * fld.total(zs)
        return out


def near_field(cell, wave, z, nodes=300, **kw):
    return Scatterer(cell, wave, nodes, **kw).near_field(z)


def interior_field(cell, wave, i, z, nodes=300, **kw):
    return Scatterer(cell, wave, nodes, **kw).interior_field(i, z)


# ----------------------------------------------------------------------
def tuned_eps(cell: UnitCell, dk: float, lam: float) -> np.ndarray:
    """``eps_i = 2 exp(-(pi/2)(1/(|D_i| dk^2) + lam))`` in the scaled frame."""
    sc = cell.scaled()
    area = np.array([r.area for r in sc.resonators])
    return 2.0 * np.exp(-(math.pi / 2.0) * (1.0 / (area * dk * dk) + lam))


@dataclass(frozen=True)
class TuningResult:
    cell: UnitCell
    eps: np.ndarray  # physical
    lam: float
    eigenvalues: np.ndarray


def tune_apertures(cell: UnitCell, wave: WaveParams, lam=None, index=None, nearest=None,
                   coupling: CouplingData | None = None, nodes=300, **kw) -> TuningResult:
    """Choose apertures so that ``Q = R - lam I`` at the given wavenumber.

    Exactly one of ``lam`` (used as is), ``index`` (position in the
    eigenvalues of ``R`` sorted by real part) or ``nearest`` (the eigenvalue
    whose real part is closest) selects ``lam``. Only the latter two need
    ``R``.
    """
    if sum(x is not None for x in (lam, index, nearest)) != 1:
        raise ValueError("give exactly one of lam, index, nearest")
    ev = np.array([])
    if lam is None:
        if coupling is None:
            coupling = CouplingSolver(cell, wave, nodes, **kw).assemble()
        ev = coupling.eigenvalues()
        if index is not None:
            if not -len(ev) <= index < len(ev):
                raise IndexError(f"eigenvalue index {index} out of range for {len(ev)} eigenvalues")
            lam = float(ev[index].real)
        else:
            lam = float(ev[np.argmin(np.abs(ev.real - nearest))].real)
    dk = wave.k * cell.delta
    eps_s = tuned_eps(cell, dk, lam)
    sc = cell.scaled()
    for i, (e, r) in enumerate(zip(eps_s, sc.resonators)):
        if e >= r.l / 2:
            raise TuningError(f"tuned aperture of resonator {i} ({e * cell.delta:.3g}) "
                              f"exceeds the ceiling half-length {r.l * cell.delta / 2:.3g}")
    if np.any(eps_s < TINY_APERTURE):
        warnings.warn(f"tuned apertures below {TINY_APERTURE:g}: {eps_s.min():.3g} "
                      "(kept; physically meaningless but admissible for the model)",
                      RuntimeWarning, stacklevel=2)
    eps = eps_s * cell.delta
    return TuningResult(cell.with_apertures(eps), eps, lam, ev)


def seek_multiplicity(cell: UnitCell, theta: float, ks, nodes=300, **kw):
    """Wavenumber in ``ks`` where two eigenvalues of ``R`` have the closest real parts."""
    best = (np.inf, None, None)
    for k in ks:
        ev = CouplingSolver(cell, WaveParams(float(k), theta), nodes, **kw).assemble().eigenvalues()
        re = np.sort(ev.real)
        gap = float(np.min(np.diff(re))) if len(re) > 1 else np.inf
        if gap < best[0]:
            best = (gap, float(k), ev)
    return best[1], best[0], best[2]


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class SweepPoint:
    k: float
    theta: float
    Is: complex
    sigma_min: float
    eig_R: np.ndarray = field(repr=False, default=None)

    @property
    def amplitude(self) -> float:
        return abs(self.Is)

    @property
    def phase(self) -> float:
        return principal_phase(self.Is)


def _sweep_point(args):
    cell, k, theta, I0, nodes, kw = args
    wave = WaveParams(k, theta, I0)
    coup = CouplingSolver(cell, wave, nodes, **kw).assemble()
    Q = assemble_Q(cell, wave, coup)
    smin = float(linalg.svdvals(Q)[-1])
    try:
        Is = solve_Is(cell, wave, coup).Is
    except ResonanceError:
        Is = complex("nan+nanj")
    return SweepPoint(k, theta, Is, smin, coup.eigenvalues())


def worker_count(default=1) -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(n, 1)


def sweep(cell: UnitCell, ks, thetas, I0=1.0, nodes=300, workers=None, **kw):
    """``I_s`` and ``sigma_min(Q)`` on the grid ``thetas x ks`` (theta outer, k inner).

    ``workers`` defaults to the ``HELMRES_WORKERS`` environment variable
    (serial when unset). Output order is independent of the worker count.
    """
    jobs = [(cell, float(k), float(t), I0, nodes, kw) for t in thetas for k in ks]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_sweep_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


def batch_Is(cell: UnitCell, theta: float, ks, interp: CouplingInterpolant, I0=1.0):
    """``I_s`` and ``sigma_min(Q)`` at many ``ks`` from interpolated coupling data."""
    ks = np.asarray(ks, dtype=float)
    R, r, rd, rex = interp.arrays(ks)
    sc = cell.scaled()
    d = cell.delta
    xi = np.array([q.xi for q in sc.resonators])
    h = np.array([q.h for q in sc.resonators])
    area = np.array([q.area for q in sc.resonators])
    eps = np.array([q.eps for q in sc.resonators])
    dk = ks * d
    k1 = -dk * math.cos(theta)
    k2 = -dk * math.sin(theta)
    diag = 1.0 / (dk[:, None] ** 2 * area) + (2.0 / math.pi) * np.log(eps / 2.0)
    Q = R + np.einsum("kn,nm->knm", diag, np.eye(len(xi)))
    ph = np.exp(-1j * k1[:, None] * xi)
    f = 2j * k2[:, None] * I0 * ph * (2 * np.sin(k2[:, None] * h) / k2[:, None] - rd)
    w = np.linalg.solve(Q, f[..., None])[..., 0]
    v = np.conj(ph) * (r - np.sin(k2[:, None] * h) / k2[:, None])
    Is = np.einsum("kn,kn->k", v, w) - I0 * (1 - 2j * k2 * rex)
    smin = np.linalg.svd(Q, compute_uv=False)[:, -1]
    return Is, smin


def fine_sweep(cell: UnitCell, ks, thetas, I0=1.0, nodes=300, order=11, **kw):
    """:func:`sweep` on a dense ``k`` grid through :class:`CouplingInterpolant` (one per ``theta``)."""
    ks = np.asarray(ks, dtype=float)
    out = []
    for t in thetas:
        interp = CouplingInterpolant(cell, float(t), (ks.min(), ks.max()), order, nodes, I0, **kw)
        Is, smin = batch_Is(cell, float(t), ks, interp, I0)
        out += [SweepPoint(float(k), float(t), complex(v), float(s)) for k, v, s in zip(ks, Is, smin)]
    return out


def unwrap_phase(Is) -> np.ndarray:
    return np.unwrap(np.angle(np.asarray(Is)))


@dataclass(frozen=True)
class Dip:
    """Refined local minimum of ``|I_s|`` along ``k`` at one angle."""

    theta: float
    k: float
    Is: complex
    sigma_min: float


def _grid_minima(v):
    v = np.asarray(v)
    return [j for j in range(1, len(v) - 1) if v[j] < v[j - 1] and v[j] <= v[j + 1]]


def absorption_dips(cell: UnitCell, theta: float, ks, interp, I0=1.0, xtol=1e-13):
    """Local minima of ``|I_s(k)|`` at one angle, refined below the grid spacing.

    Candidates are grid minima of ``|I_s|`` and of ``sigma_min(Q)``; the
    latter stay visible even when a dip is far narrower than the grid. Each
    candidate is refined by bounded minimization of ``|I_s|`` over its two
    neighbouring grid cells.
    """
    ks = np.asarray(ks, dtype=float)
    Is, smin = batch_Is(cell, theta, ks, interp, I0)
    cand = sorted(set(_grid_minima(np.abs(Is))) | set(_grid_minima(smin)))
    out = []
    for j in cand:
        lo, hi = ks[j - 1], ks[j + 1]
        opt = minimize_scalar(lambda k: abs(batch_Is(cell, theta, [k], interp, I0)[0][0]),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": xtol * ks[j], "maxiter": 500})
        k = float(opt.x) if opt.fun < abs(Is[j]) else float(ks[j])
        v, sm = batch_Is(cell, theta, [k], interp, I0)
        out.append(Dip(float(theta), k, complex(v[0]), float(sm[0])))
    return out


def transition_profile(cell: UnitCell, theta: float, k_star: float, k_other: float, interp,
                       I0=1.0, points=400):
    """``k``, ``|I_s|`` and unwrapped phase from ``k_star`` to ``k_other``.

    Samples are graded geometrically away from ``k_star`` (down to ``1e-12``
    relative) so that phase jumps across narrow resonances are resolved.
    """
    span = k_other - k_star
    t = np.concatenate([[0.0], np.geomspace(1e-12, 1.0, points)])
    ks = k_star + span * t
    Is, _ = batch_Is(cell, theta, ks, interp, I0)
    return ks, np.abs(Is), unwrap_phase(Is)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Resonance:
    k: float
    theta: float
    sigma_min: float
    branch: int
    kind: str
    density_norm: float


@dataclass(frozen=True)
class BranchInfo:
    theta: float
    index: int
    values: np.ndarray  # eigenvalue along the k grid
    variation: float  # (max Re - min Re) / mean |Re|
    kind: str


@dataclass
class ResonanceReport:
    ks: np.ndarray
    thetas: np.ndarray
    sigma_min: np.ndarray  # (len(thetas), len(ks))
    resonances: list
    branches: list

    def counts(self) -> dict:
        out = {}
        for b in self.branches:
            out[b.kind] = out.get(b.kind, 0) + 1
        return out

    def format(self) -> str:
        lines = []
        for b in self.branches:
            lines.append(f"theta={b.theta:.4f} branch {b.index}: Re-variation {b.variation:.3%} -> {b.kind}")
        for r in self.resonances:
            lines.append(f"resonance k={r.k:.6f} theta={r.theta:.4f} sigma_min={r.sigma_min:.3e} "
                         f"branch {r.branch} ({r.kind}) |w|={r.density_norm:.3g}")
        if not self.resonances:
            lines.append("no sigma_min minima below the threshold")
        return "\n".join(lines)


def classify_variation(v, stationary=STATIONARY_VARIATION, dispersive=DISPERSIVE_VARIATION) -> str:
    if v > dispersive:
        return "dispersive"
    if v < stationary:
        return "stationary"
    return "intermediate"


def branch_variation(values) -> float:
    re = np.real(values)
    return float((re.max() - re.min()) / max(np.mean(np.abs(re)), 1e-300))


def find_resonances(cell: UnitCell, ks, thetas, I0=1.0, nodes=300, ratio=RESONANCE_RATIO,
                    refine=True, xtol=1e-5, **kw) -> ResonanceReport:
    """Local minima of ``sigma_min(Q(k))`` below ``ratio * median`` at each ``theta``.

    Every interior grid minimum is refined by golden-section search before the
    threshold is applied. Eigenvalue branches of ``R``
    along ``ks`` are tracked and classified by their relative real-part
    variation; each resonance is attributed to the branch whose eigenvector
    overlaps most with the near-null vector of ``Q``.
    """
    ks = np.asarray(ks, dtype=float)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    smin_all = np.zeros((len(thetas), len(ks)))
    resonances, branches = [], []

    def evaluate(k, theta):
        wave = WaveParams(float(k), float(theta), I0)
        coup = CouplingSolver(cell, wave, nodes, **kw).assemble()
        Q = assemble_Q(cell, wave, coup)
        return coup, Q, float(linalg.svdvals(Q)[-1])

    for a, theta in enumerate(thetas):
        eigs = []
        for j, k in enumerate(ks):
            coup, Q, s = evaluate(k, theta)
            smin_all[a, j] = s
            eigs.append(coup.eigenvalues())
        tracked = track_eigenvalues(eigs)
        kinds = []
        for b in range(tracked.shape[1]):
            v = branch_variation(tracked[:, b])
            kinds.append(classify_variation(v))
            branches.append(BranchInfo(float(theta), b, tracked[:, b], v, kinds[-1]))
        s = smin_all[a]
        med = float(np.median(s))
        for j in range(1, len(ks) - 1):
            if not (s[j] < s[j - 1] and s[j] <= s[j + 1]):
                continue
            kk, sm = ks[j], s[j]
            # sigma_min is V-shaped at a resonance, so the threshold applies after refinement
            if refine:
                opt = minimize_scalar(lambda x: evaluate(x, theta)[2], method="golden",
                                      bracket=(ks[j - 1], ks[j], ks[j + 1]),
                                      options={"xtol": xtol, "maxiter": 40})
                if ks[j - 1] < opt.x < ks[j + 1] and opt.fun <= sm:
                    kk, sm = float(opt.x), float(opt.fun)
            if sm >= ratio * med:
                continue
            coup, Q, _ = evaluate(kk, theta)
            _, _, vh = linalg.svd(Q)
            null = vh[-1].conj()
            ev, vec = np.linalg.eig(coup.R)
            overlap = np.abs(vec.conj().T @ null) / np.linalg.norm(vec, axis=0)
            b = int(np.argmax(overlap))
            # map the eigenvalue to a tracked branch at the nearest grid sample
            row = tracked[int(np.argmin(np.abs(ks - kk)))]
            bi = int(np.argmin(np.abs(row - ev[b])))
            wave = WaveParams(float(kk), float(theta), I0)
            try:
                wn = float(np.linalg.norm(solve_Is(cell, wave, coup).w))
            except ResonanceError:
                wn = float("inf")
            resonances.append(Resonance(float(kk), float(theta), sm, bi, kinds[bi], wn))
    return ResonanceReport(ks, thetas, smin_all, resonances, branches)
