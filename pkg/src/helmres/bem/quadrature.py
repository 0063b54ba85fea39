"""Singular and near-singular quadrature on straight boundary segments.

The Nyström operators split every kernel into its Laplace singular part
(``log r`` or the Poisson kernel ``(y - x).nu / r^2``, handled here) and a
smooth remainder integrated with the plain node weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

GAUSS_ORDER = 8
NEAR_ORDER = 16
_GL = {}


def gauss_legendre(n):
    """Nodes and weights on (0, 1)."""
    if n not in _GL:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL[n] = ((x + 1) / 2, w / 2)
    return _GL[n]


def graded_rule(a, b, s, d, order=GAUSS_ORDER, ratio=0.2):
    """Composite Gauss rule on ``[a, b]`` refined geometrically toward ``s``.

    ``d`` is the distance from the singular point to the segment line; the
    refinement stops at that scale (or at ``1e-15`` of the length when
    ``d == 0``). Returns nodes, weights and the offsets ``nodes - s``
    computed without rounding so kernels can be evaluated at tiny distances.
    """
    x0, w0 = gauss_legendre(order)
    pts, wts = [], []
    s = min(max(s, a), b)
    floor = max(d * 0.5, 1e-15 * (b - a))
    for lo, hi, sign in ((s, b, 1.0), (s, a, -1.0)):
        length = abs(hi - lo)
        if length <= 0:
            continue
        edges = [0.0]
        e = length
        while e > floor:
            edges.append(e)
            e *= ratio
        edges = np.array(sorted(edges))
        if len(edges) < 2:
            edges = np.array([0.0, length])
        left, right = edges[:-1], edges[1:]
        h = right - left
        p = (left[:, None] + h[:, None] * x0[None, :]).ravel()
        w = (h[:, None] * w0[None, :]).ravel()
        pts.append(sign * p)
        wts.append(w)
    rel = np.concatenate(pts)
    return s + rel, np.concatenate(wts), rel


def lagrange_basis(nodes, x):
    """Cardinal polynomials through ``nodes`` evaluated at ``x``; shape ``(len(x), len(nodes))``."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    out = np.ones((len(x), n))
    for m in range(n):
        for j in range(n):
            if j != m:
                out[:, m] *= (x - nodes[j]) / (nodes[m] - nodes[j])
    return out


def log_kernel_integral(t, phi, a=None, b=None):
    """``int_a^b phi(t) log|t| dt`` from samples of a smooth ``phi``.

    Integration by parts with ``Phi(t) = int_0^t phi``::

        [log|t| Phi(t)]_a^b - int_a^b Phi(t) / t dt

    ``Phi`` is the antiderivative of a cubic-spline model of ``phi``, and
    ``Phi(t)/t`` is smooth, so the remaining integral uses Gauss-Legendre.
    ``a < 0 < b`` default to the first and last sample.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi)
    if t.size < 4:
        raise ValueError("log_kernel_integral needs at least 4 samples")
    order = np.argsort(t)
    t, phi = t[order], phi[order]
    a = t[0] if a is None else a
    b = t[-1] if b is None else b
    if not a < 0 < b:
        raise ValueError("integration interval must contain the singularity at t = 0")
    if np.iscomplexobj(phi):
        return (log_kernel_integral(t, phi.real, a, b)
                + 1j * log_kernel_integral(t, phi.imag, a, b))
    spline = CubicSpline(t, phi, extrapolate=True)
    anti = spline.antiderivative()
    phi0 = float(anti(0.0))

    def Phi(x):
        return anti(x) - phi0

    x, w = gauss_legendre(24)
    total = 0.0
    for lo, hi in ((a, 0.0), (0.0, b)):
        # split into pieces between samples to keep the polynomial model exact
        knots = np.concatenate([[lo], t[(t > min(lo, hi)) & (t < max(lo, hi))], [hi]])
        knots = np.sort(knots)
        for p, q in zip(knots[:-1], knots[1:]):
            xx = p + (q - p) * x
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(xx != 0, Phi(xx) / np.where(xx != 0, xx, 1.0), spline(0.0))
            total -= (q - p) * np.dot(w, ratio)
    total += math.log(abs(b)) * Phi(b) - math.log(abs(a)) * Phi(a)
    return float(total)


def poisson_kernel_integral(phi, T, m, order=20, ratio=4.0):
    """``int_0^T phi(t) (1/m) / (t^2 + 1/m^2) dt`` via ``t = tan(u) / m``.

    The substitution turns the peaked kernel into the flat measure ``du``.
    The ``t``-range is cut at ``1/m`` and then geometrically (factor
    ``ratio``) up to ``T``; each piece gets a Gauss rule in ``u``, so ``phi``
    is resolved on every scale.
    """
    if not (T > 0 and m > 0):
        raise ValueError("T and m must be positive")
    cuts = [0.0]
    t = min(1.0 / m, T)
    while t < T:
        cuts.append(t)
        t *= ratio
    cuts.append(T)
    u = np.arctan(m * np.asarray(cuts))
    x, w = gauss_legendre(order)
    total = 0.0
    for lo, hi in zip(u[:-1], u[1:]):
        uu = lo + (hi - lo) * x
        total = total + (hi - lo) * np.dot(w, phi(np.tan(uu) / m))
    return total


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Segment:
    """Straight side with nodes at arc-length positions ``t`` (ascending)."""

    start: np.ndarray
    direction: np.ndarray
    normal: np.ndarray
    length: float
    t: np.ndarray
    index: np.ndarray  # global node indices
    tag: tuple = ()

    def point(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.start + tau[..., None] * self.direction

    def pieces(self):
        """Breakpoints ``[0, t_1, ..., t_n, L]`` and the cubic stencil of each piece."""
        br = np.concatenate([[0.0], self.t, [self.length]])
        n = len(self.t)
        deg = min(3, n - 1)
        stencils = []
        for p in range(n + 1):
            # piece p lies between node p-1 and node p (1-based breakpoints)
            lo = p - 1 - (deg - 1) // 2 if deg > 0 else 0
            lo = min(max(lo, 0), n - deg - 1)
            stencils.append(np.arange(lo, lo + deg + 1))
        return br, stencils


class SegmentQuadrature:
    """Product-integration weights of the Laplace kernels against a local cubic density model."""

    def __init__(self, segment: Segment, order=GAUSS_ORDER, near_factor=2.0):
        self.seg = segment
        self.order = order
        self.near_factor = near_factor
        br, stencils = segment.pieces()
        self.breaks = br
        self.stencils = stencils
        x0, w0 = gauss_legendre(order)
        taus, wts, cards, owner = [], [], [], []
        n = len(segment.t)
        for p in range(len(br) - 1):
            a, b = br[p], br[p + 1]
            tau = a + (b - a) * x0
            taus.append(tau)
            wts.append((b - a) * w0)
            c = np.zeros((order, n))
            c[:, stencils[p]] = lagrange_basis(segment.t[stencils[p]], tau)
            cards.append(c)
            owner.append(np.full(order, p))
        self.tau = np.concatenate(taus)
        self.w = np.concatenate(wts)
        self.card = np.vstack(cards)
        self.owner = np.concatenate(owner)
        self.plen = np.diff(br)

    def _kernels(self, x, tau, dn):
        y = self.seg.start + tau[..., None] * self.seg.direction
        diff = y - x[..., None, :] if x.ndim == 2 else y - x
        r2 = np.einsum("...i,...i->...", diff, diff)
        with np.errstate(divide="ignore"):
            lg = 0.5 * np.log(r2)
            pk = (dn[..., None] if np.ndim(dn) else dn) / r2
        return lg, pk

    def integrals(self, x, on_line=None):
        """Rows ``int log|y - x| L_j(y) ds`` and ``int (y - x).nu / |y - x|^2 L_j(y) ds``.

        ``x`` has shape ``(T, 2)``; ``on_line`` marks targets lying on this
        segment's line, for which the Poisson kernel vanishes identically.
        """
        seg = self.seg
        x = np.atleast_2d(np.asarray(x, dtype=float))
        T = len(x)
        rel = x - seg.start
        foot = rel @ seg.direction
        dn = -(rel @ seg.normal)  # (y - x).nu, constant along the segment
        if on_line is None:
            on_line = np.abs(dn) <= 1e-13 * max(seg.length, 1.0)
        dn = np.where(on_line, 0.0, dn)
        dperp = np.abs(dn)

        lg, pk = self._kernels(x, self.tau, dn)
        # near pieces: distance from target to piece below near_factor * piece length
        pa, pb = self.breaks[:-1], self.breaks[1:]
        along = np.maximum(np.maximum(pa[None, :] - foot[:, None], foot[:, None] - pb[None, :]), 0.0)
        dist = np.hypot(along, dperp[:, None])
        near = dist < self.near_factor * self.plen[None, :]
        mask = near[:, self.owner]
        lg = np.where(mask, 0.0, lg)
        pk = np.where(mask, 0.0, pk)
        SL = (lg * self.w) @ self.card
        DL = (pk * self.w) @ self.card
        ti, pi_ = np.nonzero(near)
        for i, p in zip(ti, pi_):
            a, b = pa[p], pb[p]
            tau, w, rel = graded_rule(a, b, foot[i], dperp[i], NEAR_ORDER)
            along_t = (min(max(foot[i], a), b) - foot[i]) + rel
            r2 = along_t * along_t + dperp[i] * dperp[i]
            st = self.stencils[p]
            L = lagrange_basis(seg.t[st], tau)
            SL[i, st] += (w * 0.5 * np.log(r2)) @ L
            if dn[i] != 0.0:
                DL[i, st] += (w * dn[i] / r2) @ L
        return SL, DL
