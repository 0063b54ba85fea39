"""Special functions used by the Green's-function kernels.

Thin, validated wrappers around :mod:`scipy.special` (AMOS for Bessel
functions, the Faddeeva package for complex error functions) plus a few
cancellation-free combinations that the kernels need near coincident points.
"""

from __future__ import annotations

import numpy as np
from scipy import special

EULER_GAMMA = float(np.euler_gamma)


def hankel1(order, z):
    """Hankel function of the first kind, order 0 or 1, for real ``z > 0``."""
    if order not in (0, 1):
        raise ValueError(f"only orders 0 and 1 are supported, got {order}")
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(z <= 0.0):
        raise ValueError("hankel1 requires finite z > 0 (branch cut on z <= 0)")
    out = special.hankel1(order, z)
    return out[()] if out.ndim == 0 else out


def erfc_complex(z):
    """Complementary error function of complex argument."""
    z = np.asarray(z, dtype=complex)
    out = special.erfc(z)
    return out[()] if out.ndim == 0 else out


def erfcx_complex(z):
    """Scaled complementary error function ``exp(z**2) * erfc(z)``."""
    z = np.asarray(z, dtype=complex)
    out = special.erfcx(z)
    return out[()] if out.ndim == 0 else out


def exp_erfc(a, w):
    """Evaluate ``exp(a) * erfc(w)`` without overflow.

    When ``Re(w) > 0`` the product is rewritten as
    ``exp(a - w**2) * erfcx(w)``; ``a - w**2`` is bounded in the Ewald
    spectral sum even when both factors separately over/underflow.
    """
    a = np.asarray(a, dtype=complex)
    w = np.asarray(w, dtype=complex)
    a, w = np.broadcast_arrays(a, w)
    out = np.empty(a.shape, dtype=complex)
    pos = w.real > 0.0
    out[pos] = np.exp(a[pos] - w[pos] ** 2) * special.erfcx(w[pos])
    neg = ~pos
    out[neg] = np.exp(a[neg]) * special.erfc(w[neg])
    return out


FORWARD_LIMIT = 5.0


def expn_table(qmax, x):
    """Generalized exponential integrals ``E_1 .. E_{qmax+1}`` at real ``x > 0``.

    Forward recurrence ``E_{n+1} = (exp(-x) - x E_n) / n`` from ``E_1`` for
    ``x <= 5``. For larger ``x`` one order ``n0 ~ x`` is evaluated directly;
    orders below it use the backward recurrence
    ``E_n = (exp(-x) - n E_{n+1}) / x`` and orders above it the forward one.
    Returns an array of shape ``(qmax + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    out = np.empty((qmax + 1, flat.size))
    small = flat <= FORWARD_LIMIT
    xs = flat[small]
    ex = np.exp(-xs)
    cur = special.exp1(xs)
    out[0, small] = cur
    for n in range(1, qmax + 1):
        cur = (ex - xs * cur) / n
        out[n, small] = cur
    xl = flat[~small]
    if xl.size:
        # pivot order n0 ~ x: both recurrences contract away from it
        n0 = np.minimum(np.floor(xl), qmax + 1).astype(int)
        ex = np.exp(-xl)
        piv = special.expn(n0, xl)
        sub = np.empty((qmax + 1, xl.size))
        cur = piv.copy()
        for n in range(2, qmax + 2):
            up = n > n0
            cur = np.where(up, (ex - xl * cur) / (n - 1), piv)
            sub[n - 1] = cur
        cur = piv.copy()
        for n in range(qmax, 0, -1):
            down = n < n0
            cur = np.where(down, (ex - n * cur) / xl, piv)
            sub[n - 1] = np.where(down, cur, sub[n - 1])
        sub[n0 - 1, np.arange(xl.size)] = piv
        out[:, ~small] = sub
    return out.reshape((qmax + 1,) + x.shape)


def ein(x):
    """Entire function ``E_1(x) + log(x) + gamma`` (finite at ``x = 0``).

    Equals ``-sum_{j>=1} (-x)**j / (j * j!)``; the power series is used for
    ``x < 2`` where the direct combination cancels.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 2.0
    xs = x[small]
    term = -xs  # j = 1 term of (-x)^j / j!
    acc = term.copy()
    for j in range(2, 40):
        term = term * (-xs) / j
        acc += term / j
    out[small] = -acc
    xl = x[~small]
    out[~small] = special.exp1(xl) + np.log(xl) + EULER_GAMMA
    return out


def y0_regular(x):
    """``Y_0(x) - (2/pi) * log(x/2) * J_0(x)`` evaluated without cancellation."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 4.0
    xs = x[small]
    q = (xs * xs) / 4.0
    # (2/pi) [gamma J0 + sum_{m>=1} (-1)^{m+1} H_m q^m / (m!)^2]
    term = np.ones_like(xs)
    harmonic = 0.0
    acc = np.zeros_like(xs)
    for m in range(1, 40):
        term = term * q / (m * m)
        harmonic += 1.0 / m
        acc += (-1) ** (m + 1) * harmonic * term
    out[small] = (2.0 / np.pi) * (EULER_GAMMA * special.j0(xs) + acc)
    xl = x[~small]
    out[~small] = special.y0(xl) - (2.0 / np.pi) * np.log(xl / 2.0) * special.j0(xl)
    return out
