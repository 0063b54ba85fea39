"""Quasi-periodic half-plane Green's function and the free-space kernel.

Conventions
-----------
``GammaPlus(z, x)`` solves ``(Laplace_x + k^2) G = delta_z`` in the upper
half-plane, vanishes on the ground line ``x2 = 0`` and is outgoing upward.
Its propagating part is::

    exp(-i k1 (z1 - x1)) (exp(i k2 |z2 - x2|) - exp(i k2 |z2 + x2|)) / (2 i k2 d)

with ``k2 < 0``; every evanescent order carries the same Bloch factor, so the
function picks up ``exp(-i k1 d)`` when ``z`` moves one period and
``exp(+i k1 d)`` when ``x`` does. Near the source it behaves like
``log|z - x| / (2 pi)``.

Two independent evaluators are provided: the plain spectral (Rayleigh) sum,
exponentially convergent in ``|z2 - x2|``, and the Ewald split, uniformly
convergent. They are cross-checked in the test-suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import specfun

WOOD_BAND = 1e-2
AUTO_SWITCH = 0.25


class GreensFunctionError(ValueError):
    """Raised when a kernel is requested outside its domain of validity."""


class WoodAnomalyError(GreensFunctionError):
    """Wavenumber too close to a Rayleigh (Wood) anomaly."""


@dataclass(frozen=True)
class EwaldParams:
    """Ewald splitting parameter and truncation orders.

    ``None`` entries are chosen automatically so that every neglected term
    is below ``exp(-cutoff)`` relative to unity.
    """

    a: float | None = None
    n_spatial: int | None = None
    n_spectral: int | None = None
    cutoff: float = 40.0

    def __post_init__(self):
        if self.a is not None and not self.a > 0:
            raise ValueError("Ewald splitting parameter must be positive")
        for name in ("n_spatial", "n_spectral"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class SpectralSumParams:
    """Truncation control for the plain spectral series."""

    n_max: int | None = None
    tol: float = 1e-15
    n_limit: int = 1_000_000

    def __post_init__(self):
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be >= 1")


def _subtract_log(X, Y, out, grad):
    r2 = X * X + Y * Y
    if not grad:
        return out - np.log(r2) / (4 * math.pi)
    v, gx, gy = out
    return v - np.log(r2) / (4 * math.pi), gx - X / (2 * math.pi * r2), gy - Y / (2 * math.pi * r2)


def _merge(mask, a, b, grad):
    if not grad:
        out = np.empty(mask.shape, dtype=complex)
        out[mask], out[~mask] = a, b
        return out
    outs = []
    for u, v in zip(a, b):
        o = np.empty(mask.shape, dtype=complex)
        o[mask], o[~mask] = u, v
        outs.append(o)
    return tuple(outs)


def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of size 2")
    return p


@dataclass(frozen=True)
class QuasiPeriodicGreen:
    """Precomputed workspace for ``GammaPlus`` at one ``(k, k1, period)``.

    Parameters
    ----------
    k : float
        Wavenumber.
    k1 : float
        Horizontal component of the incident wave vector. ``k2`` is derived
        as ``-sqrt(k**2 - k1**2)``.
    period : float
        Period of the lattice along ``x1``.
    """

    k: float
    k1: float
    period: float = 1.0
    ewald: EwaldParams = field(default_factory=EwaldParams)
    wood_band: float = WOOD_BAND

    def __post_init__(self):
        if not (self.k > 0 and self.period > 0):
            raise GreensFunctionError("k and period must be positive")
        if abs(self.k1) >= self.k:
            raise GreensFunctionError("|k1| must be smaller than k (k2 < 0)")
        d = self.period
        nmax = int(math.ceil((self.k + abs(self.k1)) * d / (2 * math.pi))) + 2
        for n in range(-nmax, nmax + 1):
            if n == 0:
                continue
            q = abs(self.k1 + 2 * math.pi * n / d)
            if q <= self.k:
                raise GreensFunctionError(
                    f"diffraction order n={n} propagates (|k1 + 2 pi n/d| = {q:.6g} "
                    f"<= k = {self.k:.6g}); only the single-mode regime is supported"
                )
            if abs(self.k - q) < self.wood_band * self.k:
                raise WoodAnomalyError(
                    f"k = {self.k:.6g} lies within the Wood-anomaly band of order n={n} "
                    f"(|k - |k1 + 2 pi n/d|| = {abs(self.k - q):.3g}); this is the case of "
                    "empty resonance where the lattice sum is unstable"
                )

    # ------------------------------------------------------------------
    @property
    def k2(self) -> float:
        return -math.sqrt(self.k ** 2 - self.k1 ** 2)

    @property
    def a(self) -> float:
        return self.ewald.a if self.ewald.a is not None else math.sqrt(math.pi) / self.period

    @property
    def s1(self) -> float:
        """Slowest evanescent decay rate among the orders ``n != 0``."""
        d = self.period
        q = min(abs(self.k1 + 2 * math.pi / d), abs(self.k1 - 2 * math.pi / d))
        return math.sqrt(q * q - self.k ** 2)

    def conjugate(self) -> "QuasiPeriodicGreen":
        """Workspace for the reflected momentum ``(-k1, k2)``."""
        return QuasiPeriodicGreen(self.k, -self.k1, self.period, self.ewald, self.wood_band)

    def _mode_range(self):
        if self.ewald.n_spectral is not None:
            n = self.ewald.n_spectral
            return np.arange(-n, n + 1)
        a = self.a
        amax = math.sqrt(4 * a * a * self.ewald.cutoff + self.k ** 2)
        d = self.period
        lo = math.floor((-amax - self.k1) * d / (2 * math.pi)) - 1
        hi = math.ceil((amax - self.k1) * d / (2 * math.pi)) + 1
        return np.arange(lo, hi + 1)

    def _image_range(self):
        if self.ewald.n_spatial is not None:
            return self.ewald.n_spatial
        return int(math.ceil(math.sqrt(self.ewald.cutoff) / (self.a * self.period) + 1.5))

    def _q_terms(self):
        ratio2 = (self.k / (2 * self.a)) ** 2
        q = 0
        c = 1.0
        coeffs = [1.0]
        while True:
            q += 1
            c *= ratio2 / q
            coeffs.append(c)
            if c < 1e-18 or q > 200:
                break
        return np.array(coeffs)

    # ------------------------------------------------------------------
    def _lattice_ewald(self, X, Y, regular=False, grad=False):
        """Standard (exp(-i w t)) lattice sum ``-(i/4) sum_m e^{i k1 m d} H0^(1)``.

        Returns value and optionally the gradient w.r.t. ``(X, Y)``. The
        caller conjugates to obtain the half-plane convention.
        """
        d = self.period
        k, alpha, a = self.k, self.k1, self.a
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        # reduce X into [-d/2, d/2) and restore the Bloch phase afterwards
        shift = np.floor(X / d + 0.5)
        X0 = X - shift * d
        bloch = np.exp(1j * alpha * shift * d)
        aY = np.abs(Y)
        sgnY = np.sign(Y)

        val = np.zeros(X.shape, dtype=complex)
        gx = np.zeros(X.shape, dtype=complex)
        gy = np.zeros(X.shape, dtype=complex)

        # spectral (reciprocal-space) part
        for n in self._mode_range():
            an = alpha + 2 * math.pi * n / d
            g2 = an * an - k * k
            gam = math.sqrt(g2) if g2 > 0 else -1j * math.sqrt(-g2)
            if abs(gam) < 1e-12:
                raise WoodAnomalyError("Rayleigh anomaly: vanishing vertical wavenumber")
            w1 = gam / (2 * a) + aY * a
            w2 = gam / (2 * a) - aY * a
            t1 = specfun.exp_erfc(gam * aY, w1)
            t2 = specfun.exp_erfc(-gam * aY, w2)
            ph = np.exp(1j * an * X0)
            val += ph * (t1 + t2) / gam
            if grad:
                gx += 1j * an * ph * (t1 + t2) / gam
                gy += ph * (t1 - t2) * sgnY
        val *= -1.0 / (4 * d)
        if grad:
            gx *= -1.0 / (4 * d)
            gy *= -1.0 / (4 * d)

        # spatial part
        cq = self._q_terms()
        Q = len(cq) - 1
        mmax = self._image_range()
        a2 = a * a
        for m in range(-mmax, mmax + 1):
            Xm = X0 - m * d
            r2 = Xm * Xm + aY * aY
            x = r2 * a2
            ph = np.exp(1j * alpha * m * d)
            if m == 0 and regular:
                xe1 = np.where(x > 0, x * (specfun.ein(x) - np.log(np.where(x > 0, x, 1.0))
                                           - specfun.EULER_GAMMA), 0.0)
                E = np.empty((Q + 1,) + x.shape)
                ex = np.exp(-x)
                with np.errstate(divide="ignore", invalid="ignore"):
                    E[0] = specfun.ein(x) - np.log(x) - specfun.EULER_GAMMA
                E[1] = ex - xe1
                for q in range(2, Q + 1):
                    E[q] = (ex - x * E[q - 1]) / q
                s = -(specfun.ein(x) - specfun.EULER_GAMMA) / (4 * math.pi) + math.log(a) / (2 * math.pi)
                s = s - np.tensordot(cq[1:], E[1:Q + 1], axes=1) / (4 * math.pi)
                val += s
                if grad:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        f0 = np.where(x > 0, np.expm1(-x) / x, -1.0)
                        e_low = np.where(x > 0, E[:Q], 0.0)
                    dr2 = a2 / (4 * math.pi) * (f0 + np.tensordot(cq[1:], e_low, axes=1))
                    gx += 2 * Xm * dr2
                    gy += 2 * Y * dr2
                continue
            with np.errstate(over="ignore"):
                E = specfun.expn_table(Q, x)
            val += ph * (-np.tensordot(cq, E, axes=1) / (4 * math.pi))
            if grad:
                with np.errstate(divide="ignore", invalid="ignore"):
                    e0 = np.exp(-x) / x
                dr2 = a2 / (4 * math.pi) * (cq[0] * e0 + np.tensordot(cq[1:], E[:Q], axes=1))
                gx += ph * 2 * Xm * dr2
                gy += ph * 2 * Y * dr2

        val *= bloch
        if grad:
            return val, gx * bloch, gy * bloch
        return val

    def _lattice_spectral(self, X, Y, params: SpectralSumParams, grad=False):
        """Direct Rayleigh sum in the half-plane (exp(+i w t)) convention."""
        d = self.period
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        aY = np.abs(Y)
        ymin = float(np.min(aY)) if aY.size else 1.0
        if params.n_max is not None:
            N = params.n_max
        else:
            if ymin <= 0.0:
                raise GreensFunctionError(
                    "spectral sum does not converge at equal heights; use the Ewald method"
                )
            N = int(math.ceil((math.log(1.0 / params.tol) / ymin + abs(self.k1) + self.k)
                              * d / (2 * math.pi))) + 1
            if N > params.n_limit:
                raise GreensFunctionError(
                    f"spectral sum needs {N} > {params.n_limit} terms at |dY| = {ymin:.3g}; "
                    "use the Ewald method"
                )
        val = np.zeros(X.shape, dtype=complex)
        gx = np.zeros(X.shape, dtype=complex)
        gy = np.zeros(X.shape, dtype=complex)
        sg = np.sign(Y)
        for n in range(-N, N + 1):
            qn = self.k1 + 2 * math.pi * n / d
            b2 = self.k ** 2 - qn * qn
            beta = -math.sqrt(b2) if b2 > 0 else 1j * math.sqrt(-b2)
            term = np.exp(-1j * qn * X + 1j * beta * aY) / (2j * beta * d)
            val += term
            if grad:
                gx += -1j * qn * term
                gy += 1j * beta * sg * term
        if grad:
            return val, gx, gy
        return val

    def _lattice(self, X, Y, regular, grad, method, spectral=None):
        """Single lattice sum ``G(X, Y)`` in the half-plane convention.

        ``method='auto'`` uses the plain spectral series where ``|Y|`` is at
        least ``AUTO_SWITCH * period`` (few terms needed) and Ewald elsewhere.
        """
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if method == "ewald":
            inner = np.floor(X / self.period + 0.5) == 0
            if regular and not np.all(inner):
                # the singular image sits in another period: plain subtraction is safe
                return _merge(inner,
                              self._lattice(X[inner], Y[inner], True, grad, "ewald"),
                              _subtract_log(X[~inner], Y[~inner],
                                            self._lattice(X[~inner], Y[~inner], False, grad, "ewald"),
                                            grad),
                              grad)
            out = self._lattice_ewald(X, Y, regular=regular, grad=grad)
            return tuple(np.conj(t) for t in out) if grad else np.conj(out)
        if method == "spectral":
            out = self._lattice_spectral(X, Y, spectral or SpectralSumParams(), grad=grad)
            if regular:
                out = _subtract_log(X, Y, out, grad)
            return out
        if method != "auto":
            raise ValueError(f"unknown method {method!r}")
        far = np.abs(Y) >= AUTO_SWITCH * self.period
        if np.all(far) or not np.any(far):
            return self._lattice(X, Y, regular, grad, "spectral" if np.all(far) else "ewald")
        res_f = self._lattice(X[far], Y[far], regular, grad, "spectral")
        res_n = self._lattice(X[~far], Y[~far], regular, grad, "ewald")
        return _merge(far, res_f, res_n, grad)

    def _halfplane(self, z, x, method, regular=False, grad=False, spectral=None):
        """Direct minus image lattice sums.

        ``regular`` is ``False``, ``True`` (remove ``log|z - x| / 2 pi``) or
        ``'full'`` (also remove the mirror term ``-log|z - xbar| / 2 pi``).
        """
        z = _as_points(z)
        x = _as_points(x)
        z, x = np.broadcast_arrays(z, x)
        X = z[..., 0] - x[..., 0]
        Yd = z[..., 1] - x[..., 1]
        Yi = z[..., 1] + x[..., 1]
        if method == "spectral" and regular:
            raise GreensFunctionError("regular part is only available via Ewald")
        d_ = self._lattice(X, Yd, bool(regular), grad, method, spectral)
        i_ = self._lattice(X, Yi, regular == "full", grad, method, spectral)
        if not grad:
            return d_ - i_
        # gradients: with respect to z (first) and x (second variable)
        gz = np.stack([d_[1] - i_[1], d_[2] - i_[2]], axis=-1)
        gx = np.stack([-d_[1] + i_[1], -d_[2] - i_[2]], axis=-1)
        return d_[0] - i_[0], gz, gx

    # ------------------------------------------------------------------
    def value(self, z, x, method="ewald", spectral=None):
        """``GammaPlus(z, x)``; broadcasts over leading dimensions."""
        z = _as_points(z)
        x = _as_points(x)
        if np.any(np.all(z == x, axis=-1)):
            raise GreensFunctionError("GammaPlus is logarithmically singular at z = x")
        out = self._halfplane(z, x, method, spectral=spectral)
        return out[()] if out.ndim == 0 else out

    def regular(self, z, x, full=False, method="ewald"):
        """``GammaPlus(z, x) - log|z - x| / (2 pi)``, finite at ``z = x``.

        With ``full=True`` the mirror singularity ``-log|z - xbar| / (2 pi)``
        is removed as well, leaving a function smooth up to the ground line.
        """
        out = self._halfplane(z, x, method, regular="full" if full else True)
        return out[()] if out.ndim == 0 else out

    def gradients(self, z, x, regular=False, method="ewald"):
        """Value and gradients with respect to ``z`` and ``x``.

        With ``regular=True`` the log singularity of the direct term and its
        gradient ``(z - x) / (2 pi |z - x|^2)`` are removed; ``'full'`` also
        removes the mirror singularity.
        """
        return self._halfplane(z, x, method, regular=regular, grad=True)

    def far_coefficient(self, x, height_margin=None, z2=None):
        """Coefficient of ``exp(-i k1 z1) exp(i k2 z2)`` in ``GammaPlus(z, x)`` as ``z2 -> inf``.

        Equals ``exp(i k1 x1) (exp(-i k2 x2) - exp(i k2 x2)) / (2 i k2 d)``.
        If ``z2`` is given, it must exceed ``x2`` by ``height_margin``
        (defaults to ``2 / s1``) so the evanescent tail is controlled.
        """
        x = _as_points(x)
        if z2 is not None:
            margin = 2.0 / self.s1 if height_margin is None else height_margin
            if np.any(z2 - x[..., 1] < margin):
                raise GreensFunctionError(
                    f"z2 must exceed x2 by at least {margin:.3g} for the far-field expansion"
                )
        k1, k2 = self.k1, self.k2
        out = (np.exp(1j * k1 * x[..., 0])
               * (np.exp(-1j * k2 * x[..., 1]) - np.exp(1j * k2 * x[..., 1]))
               / (2j * k2 * self.period))
        return out[()] if out.ndim == 0 else out

    def far_coefficient_grad(self, x):
        """Gradient of :meth:`far_coefficient` with respect to ``x``."""
        x = _as_points(x)
        k1, k2 = self.k1, self.k2
        e = np.exp(1j * k1 * x[..., 0]) / (2j * k2 * self.period)
        em, ep = np.exp(-1j * k2 * x[..., 1]), np.exp(1j * k2 * x[..., 1])
        g1 = 1j * k1 * e * (em - ep)
        g2 = e * (-1j * k2 * em - 1j * k2 * ep)
        return np.stack([g1, g2], axis=-1)


# ----------------------------------------------------------------------
def gamma_plus(z, x, wave, method="ewald", period=1.0):
    """Convenience wrapper: ``GammaPlus(z, x)`` for a ``(k, k1)`` pair or ``WaveParams``."""
    return _workspace(wave, period).value(z, x, method=method)


def gamma_plus_regular(z, x, wave, period=1.0):
    return _workspace(wave, period).regular(z, x)


def gamma_plus_far(z, x, wave, period=1.0, margin=None):
    """Propagating-mode coefficient of ``GammaPlus(z, x)`` for ``z`` high above ``x``."""
    z = _as_points(z)
    return _workspace(wave, period).far_coefficient(x, height_margin=margin, z2=z[..., 1])


def _workspace(wave, period):
    if isinstance(wave, QuasiPeriodicGreen):
        return wave
    if hasattr(wave, "k1"):
        return QuasiPeriodicGreen(wave.k, wave.k1, period)
    k, k1 = wave
    return QuasiPeriodicGreen(k, k1, period)


def gamma_free(z, x, k):
    """Free-space fundamental solution ``-(i/4) H0^(1)(k |z - x|)``."""
    z = _as_points(z)
    x = _as_points(x)
    r = np.hypot(z[..., 0] - x[..., 0], z[..., 1] - x[..., 1])
    if np.any(r == 0):
        raise GreensFunctionError("gamma_free is singular at z = x")
    out = -0.25j * special.hankel1(0, k * r)
    return out[()] if out.ndim == 0 else out


def gamma_free_regular(z, x, k):
    """``gamma_free(z, x) - log|z - x| / (2 pi)``; finite (and continuous) at ``z = x``."""
    z = _as_points(z)
    x = _as_points(x)
    r = np.hypot(z[..., 0] - x[..., 0], z[..., 1] - x[..., 1])
    kr = k * r
    j0 = special.j0(kr)
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)) * (j0 - 1.0), 0.0)
    out = (-0.25j * j0 + math.log(k / 2) * j0 / (2 * math.pi) + logterm / (2 * math.pi)
           + 0.25 * specfun.y0_regular(kr))
    return out[()] if out.ndim == 0 else out


def gamma_free_grad(z, x, k, regular=False):
    """Gradient of ``gamma_free`` with respect to ``z`` (minus that w.r.t. ``x``)."""
    z = _as_points(z)
    x = _as_points(x)
    dz = z - x
    r = np.hypot(dz[..., 0], dz[..., 1])
    kr = k * r
    if not regular:
        coef = 0.25j * k * special.hankel1(1, kr) / r
        return coef[..., None] * dz
    # (ik/4) H1 (kr) / r - 1 / (2 pi r^2)  ->  split Y1 to avoid cancellation
    safe = np.where(kr > 0, kr, 1.0)
    y1s = np.where(kr > 1e-3, special.y1(safe) + 2.0 / (math.pi * safe),
                   (safe / math.pi) * (np.log(safe / 2) + specfun.EULER_GAMMA - 0.5))
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(r > 0, (0.25j * k * special.j1(kr) - 0.25 * k * y1s) / np.where(r > 0, r, 1.0), 0.0)
    return coef[..., None] * dz
