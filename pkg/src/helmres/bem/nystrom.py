"""Nyström solvers for the interior and exterior remainder functions.

All quantities live in the scaled frame (period 1). Notation: ``S`` is the
single layer ``int G(y, x) f(y) ds_y`` and ``D`` the double layer
``int R(y) d/dnu_y G(y, x) ds_y``, with ``nu`` pointing out of the cavity.
On the boundary ``D`` denotes its principal value ``K``.

Exterior, source ``z`` on an aperture or in the field (``c = 2`` or ``1``)::

    R + 2 K R = -2 c S[dGamma+(z, .)/dnu]         on the walls
    R(x) = -D R(x) - c S[dGamma+(z, .)/dnu](x)    off the walls

Interior (free-space kernel), source ``z`` on the aperture::

    R - 2 K R = 4 S[dGamma(z, .)/dnu]
    R(x) = D R(x) + 2 S[dGamma(z, .)/dnu](x)

The ground line carries no unknowns: both the kernel and the remainder
vanish there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .. import qpgreen
from ..geometry import (SIDE_BOTTOM, SIDE_LEFT, SIDE_RIGHT, SIDE_TOP, Resonator,
                        ResonatorMesh, mesh_resonator)
from .quadrature import Segment, SegmentQuadrature

TWO_PI = 2 * math.pi
COND_LIMIT = 1e12
EXTERIOR_SIDES = (SIDE_RIGHT, SIDE_TOP, SIDE_LEFT)
INTERIOR_SIDES = (SIDE_BOTTOM, SIDE_RIGHT, SIDE_TOP, SIDE_LEFT)
STANDOFF_SPACINGS = 3.0


class SolverError(RuntimeError):
    """Nyström solve refused (ill-conditioning, source too close to the boundary, ...)."""


# ----------------------------------------------------------------------
class HalfPlaneKernel:
    """``G(y, x) = GammaPlus(y, x)``; Laplace part ``(log|y - x| - log|y - xbar|) / 2 pi``."""

    mirror = True

    def __init__(self, green: qpgreen.QuasiPeriodicGreen, method="auto"):
        self.green = green
        self.method = method

    def regular(self, y, x):
        """Smooth remainder and its gradient in ``y``."""
        v, gy, _ = self.green.gradients(y, x, regular="full", method=self.method)
        return v, gy

    def full_grad_second(self, z, y):
        """``GammaPlus(z, y)`` and its gradient in ``y`` (Laplace parts included)."""
        v, _, gy = self.green.gradients(z, y, regular="full", method=self.method)
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        zb = z * np.array([1.0, -1.0])
        d1 = y - z
        d2 = y - zb
        r1 = np.einsum("...i,...i->...", d1, d1)
        r2 = np.einsum("...i,...i->...", d2, d2)
        with np.errstate(divide="ignore", invalid="ignore"):
            g1 = d1 / (TWO_PI * r1[..., None])
            v = v + (np.log(r1) - np.log(r2)) / (2 * TWO_PI)
        # the direct term has no normal component along a flat wall through z;
        # the image term stays
        g1 = np.where((r1 == 0)[..., None], 0.0, g1)
        return v, gy + g1 - d2 / (TWO_PI * r2[..., None])


class FreeSpaceKernel:
    """``G(y, x) = -(i/4) H0(k |y - x|)``; Laplace part ``log|y - x| / 2 pi``."""

    mirror = False

    def __init__(self, k):
        self.k = k

    def regular(self, y, x):
        y, x = np.broadcast_arrays(np.asarray(y, float), np.asarray(x, float))
        return (qpgreen.gamma_free_regular(y, x, self.k),
                qpgreen.gamma_free_grad(y, x, self.k, regular=True))

    def full_grad_second(self, z, y):
        z, y = np.broadcast_arrays(np.asarray(z, float), np.asarray(y, float))
        g = qpgreen.gamma_free_grad(y, z, self.k, regular=True)
        d = y - z
        r2 = np.einsum("...i,...i->...", d, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = d / (TWO_PI * r2[..., None])
        lap = np.where((r2 == 0)[..., None], 0.0, lap)
        return None, g + lap


# ----------------------------------------------------------------------
@dataclass
class Boundary:
    """Flattened nodes of several resonator meshes plus their straight segments."""

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    owner: np.ndarray  # resonator index per node
    segments: list
    quads: list = field(repr=False, default_factory=list)
    smooth: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_meshes(cls, meshes, sides):
        pts, nrm, wts, own, segs = [], [], [], [], []
        offset = 0
        for i, m in enumerate(meshes):
            sub = m.select(sides)
            for s in sides:
                sel = sub.side == s
                n = int(sel.sum())
                idx = offset + np.arange(n)
                segs.append(Segment(m.corners[s], m.side_direction(s), sub.normals[sel][0],
                                    float(m.side_lengths[s]), sub.t[sel], idx, (i, s)))
                pts.append(sub.points[sel])
                nrm.append(sub.normals[sel])
                wts.append(sub.weights[sel])
                own.append(np.full(n, i))
                offset += n
        b = cls(np.vstack(pts), np.vstack(nrm), np.concatenate(wts), np.concatenate(own), segs)
        b.quads = [SegmentQuadrature(s) for s in segs]
        # interpolatory weights of the same local cubic model used for the singular parts
        b.smooth = np.zeros(b.m)
        for seg, q in zip(segs, b.quads):
            b.smooth[seg.index] += q.w @ q.card
        return b

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def spacing(self) -> float:
        return float(self.weights.max())

    def distance(self, x):
        """Distance from points ``(T, 2)`` to the union of segments."""
        x = np.atleast_2d(x)
        best = np.full(len(x), np.inf)
        for s in self.segments:
            rel = x - s.start
            t = np.clip(rel @ s.direction, 0.0, s.length)
            foot = s.start + t[:, None] * s.direction
            best = np.minimum(best, np.linalg.norm(x - foot, axis=1))
        return best

    def laplace(self, x, mirror):
        """Product-integrated Laplace single/double layer rows at targets ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        SL = np.zeros((len(x), self.m))
        DL = np.zeros((len(x), self.m))
        targets = [(x, 1.0)]
        if mirror:
            targets.append((x * np.array([1.0, -1.0]), -1.0))
        for seg, q in zip(self.segments, self.quads):
            for xt, sign in targets:
                s_, d_ = q.integrals(xt)
                SL[:, seg.index] += sign * s_
                DL[:, seg.index] += sign * d_
        return SL / TWO_PI, DL / TWO_PI


class LayerOperators:
    """Single- and double-layer matrices for one kernel on one boundary."""

    def __init__(self, boundary: Boundary, kernel):
        self.b = boundary
        self.kernel = kernel

    def rows(self, x):
        """``(S, D)`` of shape ``(T, M)`` mapping node data to values at ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        SL, DL = self.b.laplace(x, self.kernel.mirror)
        v, gy = self.kernel.regular(self.b.points[None, :, :], x[:, None, :])
        w = self.b.smooth[None, :]
        S = SL + v * w
        D = DL + np.einsum("tmi,mi->tm", gy, self.b.normals) * w
        return S, D

    def source_data(self, z):
        """``d/dnu_y G(z, y)`` at the nodes (the Neumann data of the singular part)."""
        _, g = self.kernel.full_grad_second(np.asarray(z, dtype=float)[None, :], self.b.points)
        return np.einsum("mi,mi->m", g, self.b.normals)


@dataclass
class NystromSystem:
    """Dense system ``(I + sign * 2 K) R = rhs`` with a cached LU factorization."""

    matrix: np.ndarray
    sign: int
    boundary: Boundary
    S: np.ndarray
    D: np.ndarray
    cond: float
    lu: tuple = field(repr=False, default=None)

    @classmethod
    def assemble(cls, ops: LayerOperators, sign: int):
        S, D = ops.rows(ops.b.points)
        A = np.eye(ops.b.m) + sign * 2.0 * D
        cond = float(np.linalg.cond(A))
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SolverError(f"Nyström matrix ill-conditioned (cond = {cond:.3g})")
        return cls(A, sign, ops.b, S, D, cond, linalg.lu_factor(A))

    def solve(self, rhs):
        x = linalg.lu_solve(self.lu, rhs)
        res = np.linalg.norm(self.matrix @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if res > 1e-10:
            raise SolverError(f"linear solve residual {res:.3g}")
        return x


# ----------------------------------------------------------------------
@dataclass
class RemainderField:
    """Boundary values of a remainder function and an evaluator off the nodes.

    ``kind`` is one of ``'interior'``, ``'exterior_boundary'`` or
    ``'exterior'``; ``z`` is the source point (scaled frame).
    """

    kind: str
    z: np.ndarray
    values: np.ndarray
    data: np.ndarray  # Neumann data dG(z, y)/dnu at nodes
    problem: object
    c: float

    def __call__(self, x):
        """Remainder at points ``x``; boundary points use the boundary equation."""
        return self.problem.evaluate(self, x)

    def total(self, x):
        """The full function: ``c * G(z, x) + R(x)``."""
        return self.problem.singular(self.z, x) * self.c + self(x)


class ExteriorProblem:
    """Exterior Neumann problem on the resonator walls for one ``(k, k1)`` in the scaled frame."""

    def __init__(self, meshes, green: qpgreen.QuasiPeriodicGreen, method="auto"):
        self.green = green
        self.meshes = tuple(meshes)
        self.boundary = Boundary.from_meshes(self.meshes, EXTERIOR_SIDES)
        self.ops = LayerOperators(self.boundary, HalfPlaneKernel(green, method))
        self.system = NystromSystem.assemble(self.ops, +1)

    def singular(self, z, x):
        return self.green.value(np.asarray(z, float), np.atleast_2d(x))

    def _solve(self, z, c, kind):
        z = np.asarray(z, dtype=float)
        f = self.ops.source_data(z)
        rhs = -2.0 * c * (self.system.S @ f)
        R = self.system.solve(rhs)
        return RemainderField(kind, z, R, f, self, c)

    def solve_boundary_source(self, z):
        """``R_{+,d}`` for a source on an aperture (``N = 2 GammaPlus + R``)."""
        if self.boundary.distance(np.atleast_2d(z))[0] > 1e-12:
            raise SolverError("boundary-source remainder needs z on a resonator wall")
        return self._solve(z, 2.0, "exterior_boundary")

    def solve_field_source(self, z, standoff=None):
        """``R_+`` for a source in the exterior domain (``N = GammaPlus + R``)."""
        z = np.asarray(z, dtype=float)
        limit = STANDOFF_SPACINGS * self.boundary.spacing if standoff is None else standoff
        dist = self.boundary.distance(z[None])[0]
        if dist < limit:
            raise SolverError(
                f"source point is {dist:.3g} from the boundary, below the standoff {limit:.3g}; "
                "the representation is unstable that close"
            )
        if np.any([m.resonator.contains(z) for m in self.meshes]) or z[1] <= 0:
            raise SolverError("source point must lie in the exterior domain")
        return self._solve(z, 1.0, "exterior")

    def evaluate(self, field_, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        S, D = self.ops.rows(x)
        on = self.boundary.distance(x) < 1e-12
        out = -(D @ field_.values) - field_.c * (S @ field_.data)
        out[on] = -2.0 * (D[on] @ field_.values) - 2.0 * field_.c * (S[on] @ field_.data)
        return out

    def field_source_at(self, z, x):
        """``R_+(z, x)`` for many sources ``z`` at fixed targets ``x`` (shape ``(Z, T)``)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        S, D = self.ops.rows(x)
        on = self.boundary.distance(x) < 1e-12
        fac = np.where(on, 2.0, 1.0)[:, None]
        _, g = self.ops.kernel.full_grad_second(z[:, None, :], self.boundary.points[None, :, :])
        F = np.einsum("zmi,mi->zm", g, self.boundary.normals)  # (Z, M)
        R = linalg.lu_solve(self.system.lu, (-2.0 * (self.system.S @ F.T)))  # (M, Z)
        return (-(fac * D) @ R - (fac * S) @ F.T).T


class InteriorProblem:
    """Interior Neumann problem of one rectangle with the free-space kernel."""

    def __init__(self, resonator: Resonator, k: float, mesh: ResonatorMesh):
        lam = resonator.neumann_eigenvalues()
        gap = np.min(np.abs(k * k - lam)) / (k * k)
        if gap < 1e-3:
            raise SolverError(f"k^2 = {k * k:.6g} is within the Neumann-eigenvalue band")
        self.resonator = resonator
        self.k = k
        self.boundary = Boundary.from_meshes([mesh], INTERIOR_SIDES)
        self.ops = LayerOperators(self.boundary, FreeSpaceKernel(k))
        self.system = NystromSystem.assemble(self.ops, -1)

    def singular(self, z, x):
        return qpgreen.gamma_free(np.asarray(z, float), np.atleast_2d(x), self.k)

    def solve(self, z):
        z = np.asarray(z, dtype=float)
        f = self.ops.source_data(z)
        R = self.system.solve(4.0 * (self.system.S @ f))
        return RemainderField("interior", z, R, f, self, 2.0)

    def evaluate(self, field_, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        S, D = self.ops.rows(x)
        on = self.boundary.distance(x) < 1e-12
        out = D @ field_.values + 2.0 * (S @ field_.data)
        out[on] = 2.0 * (D[on] @ field_.values) + 4.0 * (S[on] @ field_.data)
        return out

    def r_del(self, field_, x):
        """``R_{i,d}(z, x) = N(z, x) - log|z - x| / pi - 1 / (k^2 |D|)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        zz = np.broadcast_to(field_.z, x.shape)
        return (self.evaluate(field_, x) + 2.0 * qpgreen.gamma_free_regular(zz, x, self.k)
                - 1.0 / (self.k ** 2 * self.resonator.area))


# ----------------------------------------------------------------------
def stable_window(res: Resonator):
    """Wavenumber interval where the interior solve is well conditioned."""
    top = min(math.pi / res.l, math.pi / res.h)
    return 0.25 * top, 0.75 * top


def solve_interior_remainder(resonator: Resonator, k: float, z=None, nodes=None, mesh=None,
                             x=None):
    """``R_{i,d}(z, x)`` for a source on the aperture of one (scaled) resonator.

    Returns ``(field, values)`` where ``values`` are ``R_{i,d}`` at ``x``
    (defaults to ``z``).
    """
    if mesh is None:
        mesh = mesh_resonator(resonator, nodes or 120)
    z = resonator.aperture_center if z is None else np.asarray(z, dtype=float)
    prob = InteriorProblem(resonator, k, mesh)
    f = prob.solve(z)
    x = z[None] if x is None else np.atleast_2d(x)
    return f, prob.r_del(f, x)


@dataclass(frozen=True)
class K0Fit:
    """Degree-2 least-squares fit of ``R_{i,d}`` in ``k`` over the stable window."""

    ks: np.ndarray
    values: np.ndarray
    coeffs: np.ndarray  # (3, T) highest power first
    residual: float

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return np.tensordot(np.vander(np.atleast_1d(k), 3), self.coeffs, axes=1).squeeze()


def extrapolate_k0(resonator: Resonator, z=None, x=None, nodes=None, samples=5, tol=1e-3,
                   mesh=None, window=None) -> K0Fit:
    """Fit ``R_{i,d}(z, x)`` on ``samples`` wavenumbers in the stable window.

    Raises :class:`SolverError` if the relative least-squares residual
    exceeds ``tol``.
    """
    if samples < 3:
        raise ValueError("need at least 3 samples for a degree-2 fit")
    if mesh is None:
        mesh = mesh_resonator(resonator, nodes or 120)
    lo, hi = stable_window(resonator) if window is None else window
    ks = np.linspace(lo, hi, samples)
    z = resonator.aperture_center if z is None else np.asarray(z, dtype=float)
    x = z[None] if x is None else np.atleast_2d(x)
    vals = []
    for k in ks:
        prob = InteriorProblem(resonator, float(k), mesh)
        vals.append(prob.r_del(prob.solve(z), x))
    vals = np.array(vals)
    V = np.vander(ks, 3)
    coeffs, *_ = np.linalg.lstsq(V, vals, rcond=None)
    resid = float(np.max(np.abs(V @ coeffs - vals)) / max(np.max(np.abs(vals)), 1e-300))
    if samples > 3 and resid > tol:
        raise SolverError(f"k -> 0 extrapolation fit residual {resid:.3g} exceeds {tol:g}")
    return K0Fit(ks, vals, coeffs, resid)
