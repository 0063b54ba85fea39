import math

import numpy as np
import pytest

from helmres.geometry import WaveParams
from helmres.qpgreen import (
    EwaldParams,
    GreensFunctionError,
    QuasiPeriodicGreen,
    WoodAnomalyError,
    gamma_free,
    gamma_plus,
)

K = 1.663
THETA = 1.1
E1 = np.array([1.0, 0.0])


@pytest.fixture(scope="module")
def green():
    return QuasiPeriodicGreen(K, -K * math.cos(THETA))


def random_pairs(rng, n, min_gap=0.05):
    z = np.column_stack([rng.uniform(-0.5, 0.5, n), rng.uniform(0.02, 1.0, n)])
    x = np.column_stack([rng.uniform(-0.5, 0.5, n), rng.uniform(0.02, 1.0, n)])
    gap = np.abs(z[:, 1] - x[:, 1])
    keep = gap > min_gap
    return z[keep], x[keep]


def test_ewald_matches_spectral_series(green, rng):
    z, x = random_pairs(rng, 80)
    a = green.value(z, x)
    b = green.value(z, x, method="spectral")
    assert np.max(np.abs(a - b) / np.abs(b)) < 1e-10


@pytest.mark.parametrize("split", [0.8, 1.77, 3.0])
def test_ewald_independent_of_splitting(green, split):
    z = np.array([[0.13, 0.41], [0.4, 0.05], [-0.45, 0.9]])
    x = np.array([[-0.2, 0.27], [0.38, 0.06], [0.45, 0.3]])
    ref = green.value(z, x)
    alt = QuasiPeriodicGreen(K, green.k1, ewald=EwaldParams(a=split)).value(z, x)
    assert np.max(np.abs(alt - ref)) < 1e-11 * np.max(np.abs(ref))


def test_vanishes_on_ground(green, rng):
    x = np.column_stack([rng.uniform(-0.5, 0.5, 10), rng.uniform(0.05, 1.0, 10)])
    z = np.column_stack([rng.uniform(-0.5, 0.5, 10), np.zeros(10)])
    assert np.max(np.abs(green.value(z, x))) == 0.0


def test_bloch_factor_in_both_arguments(green):
    z = np.array([0.13, 0.41])
    x = np.array([-0.2, 0.27])
    g0 = green.value(z, x)
    np.testing.assert_allclose(green.value(z + E1, x), np.exp(-1j * green.k1) * g0, rtol=1e-11)
    np.testing.assert_allclose(green.value(z, x + E1), np.exp(1j * green.k1) * g0, rtol=1e-11)


def test_reciprocity_with_reflected_momentum(green):
    z = np.array([0.13, 0.41])
    x = np.array([-0.2, 0.27])
    np.testing.assert_allclose(green.value(z, x), green.conjugate().value(x, z), rtol=1e-12)


def test_solves_helmholtz_away_from_source(green):
    x = np.array([0.05, 0.3])
    z = np.array([-0.25, 0.6])
    h = 1e-2
    # fourth-order five-point second differences in each direction
    c = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])
    offs = np.arange(-2, 3) * h
    lap = sum(c[j] * green.value(z + [offs[j], 0], x) for j in range(5)) / h ** 2
    lap += sum(c[j] * green.value(z + [0, offs[j]], x) for j in range(5)) / h ** 2
    res = lap + K ** 2 * green.value(z, x)
    assert abs(res) < 1e-6


def test_gradients_match_finite_differences(green):
    z = np.array([0.13, 0.41])
    x = np.array([-0.2, 0.27])
    v, gz, gx = green.gradients(z, x)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd_z = (green.value(z + e, x) - green.value(z - e, x)) / (2 * h)
        fd_x = (green.value(z, x + e) - green.value(z, x - e)) / (2 * h)
        assert abs(gz[j] - fd_z) < 1e-7
        assert abs(gx[j] - fd_x) < 1e-7
    assert abs(v - green.value(z, x)) < 1e-14


def test_regular_part_is_continuous_at_source(green):
    x = np.array([0.1, 0.35])
    r0 = green.regular(x, x)
    for d in (1e-3, 1e-4, 1e-5):
        z = x + d * np.array([0.6, 0.8])
        r = green.regular(z, x)
        assert abs(r - r0) < 5 * d
    full = green.value(x + [1e-3, 0], x) - math.log(1e-3) / (2 * math.pi)
    assert abs(full - green.regular(x + [1e-3, 0], x)) < 1e-12


def test_full_regular_part_removes_image(green):
    x = np.array([0.1, 1e-3])
    z = np.array([0.1, 2e-3])
    img = np.array([0.1, -1e-3])
    expect = (green.value(z, x) - math.log(np.linalg.norm(z - x)) / (2 * math.pi)
              + math.log(np.linalg.norm(z - img)) / (2 * math.pi))
    assert abs(green.regular(z, x, full=True) - expect) < 1e-10


def test_far_field_coefficient_matches_value_high_up(green):
    x = np.array([-0.2, 0.27])
    z = np.array([0.13, 6.0])
    far = green.far_coefficient(x) * np.exp(-1j * green.k1 * z[0] + 1j * green.k2 * z[1])
    tail = math.exp(-green.s1 * (z[1] - x[1]))
    assert abs(green.value(z, x) - far) < 10 * tail


def test_far_coefficient_requires_height_margin(green):
    with pytest.raises(GreensFunctionError):
        green.far_coefficient(np.array([0.0, 0.3]), z2=0.4)


def test_near_source_matches_free_space_difference(green):
    x = np.array([0.0, 0.5])
    z1 = x + [1e-4, 0]
    z2 = x + [2e-4, 0]
    d_qp = green.value(z1, x) - green.value(z2, x)
    d_free = gamma_free(z1, x, K) - gamma_free(z2, x, K)
    # a wrong log coefficient would leave about log(2) / (2 pi) here
    assert abs(d_qp - d_free) < 1e-3


def test_refuses_singular_point(green):
    x = np.array([0.1, 0.2])
    with pytest.raises(GreensFunctionError):
        green.value(x, x)


def test_refuses_wood_anomaly():
    k1 = -1.0
    k = abs(k1 + 2 * math.pi) * (1 - 1e-4)
    with pytest.raises(WoodAnomalyError):
        QuasiPeriodicGreen(k, k1)


def test_refuses_second_propagating_order():
    with pytest.raises(GreensFunctionError):
        QuasiPeriodicGreen(4.0, -3.5)


def test_wrapper_accepts_wave_params():
    w = WaveParams(K, THETA)
    z, x = np.array([0.13, 0.41]), np.array([-0.2, 0.27])
    assert gamma_plus(z, x, w) == QuasiPeriodicGreen(K, w.k1).value(z, x)
