import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from helmres.bem.quadrature import (
    Segment,
    SegmentQuadrature,
    graded_rule,
    lagrange_basis,
    log_kernel_integral,
    poisson_kernel_integral,
)


def quad_log(f, a, b):
    left = integrate.quad(lambda t: f(t) * math.log(-t), a, 0, limit=200)[0]
    right = integrate.quad(lambda t: f(t) * math.log(t), 0, b, limit=200)[0]
    return left + right


@pytest.mark.parametrize("f", [np.cos, lambda t: np.exp(0.7 * t), lambda t: 1 + t ** 3])
def test_log_kernel_integral_matches_adaptive_quadrature(f):
    t = np.linspace(-0.3, 0.5, 81)
    got = log_kernel_integral(t, f(t))
    assert abs(got - quad_log(f, -0.3, 0.5)) < 1e-8


def test_log_kernel_integral_complex_and_refusals():
    t = np.linspace(-1, 1, 41)
    f = np.exp(1j * t)
    ref = quad_log(np.cos, -1, 1) + 1j * quad_log(np.sin, -1, 1)
    assert abs(log_kernel_integral(t, f) - ref) < 1e-7
    with pytest.raises(ValueError):
        log_kernel_integral(np.linspace(0.1, 1, 10), np.ones(10))
    with pytest.raises(ValueError):
        log_kernel_integral(np.array([-1, 0.5, 1.0]), np.ones(3))


@pytest.mark.parametrize("m", [1.0, 1e3, 1e8, 1e14])
def test_poisson_kernel_integral_peaked(m):
    got = poisson_kernel_integral(np.cos, 0.4, m)
    c = 1 / mp.mpf(m)
    pts = [0] + [c * 10 ** j for j in range(20) if c * 10 ** j < 0.4] + [0.4]
    ref = mp.quad(lambda t: mp.cos(t) * c / (t * t + c * c), pts)
    assert abs(got - float(ref)) < 1e-13


@pytest.mark.parametrize("s,d", [(0.3, 0.0), (0.0, 1e-6), (1.0, 0.01), (0.5, 1e-9)])
def test_graded_rule_integrates_near_log(s, d):
    tau, w, rel = graded_rule(0.0, 1.0, s, d, order=16)
    got = np.dot(w, 0.5 * np.log(rel ** 2 + d ** 2))
    pts = sorted({0.0, s, 1.0})
    ref = mp.quad(lambda t: 0.5 * mp.log((t - s) ** 2 + d ** 2), pts)
    assert abs(got - float(ref)) < 1e-13
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(tau - s, rel, atol=1e-16)


def test_lagrange_basis_is_cardinal():
    nodes = np.array([0.0, 0.3, 0.7, 1.0])
    np.testing.assert_allclose(lagrange_basis(nodes, nodes), np.eye(4), atol=1e-15)
    x = np.linspace(0, 1, 7)
    np.testing.assert_allclose(lagrange_basis(nodes, x).sum(axis=1), 1.0, atol=1e-14)


@pytest.fixture
def segment():
    t = (np.arange(20) + 0.5) / 20 * 0.4
    return Segment(start=np.array([0.1, 0.2]), direction=np.array([1.0, 0.0]),
                   normal=np.array([0.0, 1.0]), length=0.4, t=t, index=np.arange(20))


@pytest.mark.parametrize("d", [0.1, 1e-2, 1e-4, 1e-6, -1e-3])
def test_segment_quadrature_reproduces_cubic_density(segment, d):
    q = SegmentQuadrature(segment)
    phi = 1 + 2 * segment.t - 3 * segment.t ** 3
    x = np.array([0.3, 0.2 + d])
    sl, dl = q.integrals(x[None])

    def dens(t):
        return 1 + 2 * t - 3 * t ** 3
    foot = 0.2
    w = abs(d)
    pts = [0, foot - 100 * w, foot - w, foot, foot + w, foot + 100 * w, 0.4]
    pts = sorted(p for p in set(pts) if 0 <= p <= 0.4)
    ref_s = mp.quad(lambda t: dens(t) * 0.5 * mp.log((t - foot) ** 2 + d * d), pts)
    ref_d = mp.quad(lambda t: dens(t) * (-d) / ((t - foot) ** 2 + d * d), pts)
    assert abs(sl[0] @ phi - float(ref_s)) < 1e-12
    assert abs(dl[0] @ phi - float(ref_d)) < 1e-12


def test_segment_quadrature_target_beyond_end(segment):
    q = SegmentQuadrature(segment)
    phi = 1 + 2 * segment.t - 3 * segment.t ** 3
    x = np.array([0.505, 0.199])
    sl, _ = q.integrals(x[None])
    ref = mp.quad(lambda t: (1 + 2 * t - 3 * t ** 3) * 0.5 * mp.log((t - 0.405) ** 2 + 1e-6), [0, 0.4])
    assert abs(sl[0] @ phi - float(ref)) < 1e-12


def test_poisson_row_vanishes_on_own_line(segment):
    q = SegmentQuadrature(segment)
    _, dl = q.integrals(np.array([[0.3, 0.2], [0.9, 0.2]]))
    assert np.all(dl == 0)
