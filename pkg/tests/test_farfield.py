import json
import math

import numpy as np
import pytest

from helmres.farfield import (
    CouplingInterpolant,
    CouplingSolver,
    assemble_R,
    chebyshev_points,
    track_eigenvalues,
)
from helmres.geometry import AssumptionError, WaveParams, reference_cell
from helmres.selftest import doubling_pair, doubling_quantities

K = 1.663


@pytest.fixture(scope="module")
def cell():
    return reference_cell(0.01)


@pytest.fixture(scope="module")
def pair(cell):
    a = CouplingSolver(cell, WaveParams(K, 1.1), 300)
    b = CouplingSolver(cell, WaveParams(K, math.pi - 1.1), 300)
    return a, a.assemble(), b.assemble()


def test_coupling_matrix_symmetric_at_normal_incidence(cell):
    asym = []
    for m in (300, 600):
        d = assemble_R(cell, WaveParams(K, math.pi / 2), m)
        asym.append(np.max(np.abs(d.R - d.R.T)) / np.max(np.abs(d.R)))
    assert asym[1] < asym[0] / 4
    assert asym[0] < 1e-3


def test_reflected_incidence_transposes_coupling(pair):
    _, a, b = pair
    assert np.max(np.abs(a.R - b.R.T)) / np.max(np.abs(a.R)) < 1e-3
    assert abs(a.r_ex - b.r_ex) < 1e-5 * abs(a.r_ex)


def test_projection_agrees_with_two_height_extraction(pair):
    solver, data, _ = pair
    h = solver.height_diagnostics()
    assert h["tail_bound"] < 1e-12
    assert np.max(np.abs(h["ri_height"] - data.r)) < 1e-12
    assert abs(h["rex_height"] - data.r_ex) < 1e-6
    assert np.max(np.abs(h["rdel_height"] - data.r_del)) < 1e-4
    assert h["ri_height_spread"] < 1e-12


def test_coupling_data_serializes(pair):
    _, a, _ = pair
    d = json.loads(json.dumps(a.to_dict()))
    assert len(d["R"]["re"]) == 4
    assert d["eigenvalues"]["re"] == sorted(d["eigenvalues"]["re"])


def test_period_doubling_invariants():
    q = doubling_quantities(*doubling_pair(k=K, theta=1.1, nodes=150))
    assert set(q) == {"R", "r", "r_del", "r_ex", "I_s"}
    assert max(q.values()) < 1e-5


def test_chebyshev_points_are_inside_and_sorted():
    x = chebyshev_points(1.0, 2.0, 7)
    assert np.all(np.diff(x) > 0)
    assert x[0] > 1.0 and x[-1] < 2.0


@pytest.fixture(scope="module")
def interpolant(cell):
    return CouplingInterpolant(cell, 1.1, (1.6, 1.7), order=9, nodes=150)


def test_interpolant_reproduces_direct_solve(cell, interpolant):
    k = 1.6437
    direct = assemble_R(cell, WaveParams(k, 1.1), 150)
    got = interpolant(k)
    assert np.max(np.abs(got.R - direct.R)) < 1e-9
    assert np.max(np.abs(got.r - direct.r)) < 1e-9
    assert np.max(np.abs(got.r_del - direct.r_del)) < 1e-9
    assert abs(got.r_ex - direct.r_ex) < 1e-9
    assert got.dk == pytest.approx(direct.dk)


def test_interpolant_refuses_extrapolation(interpolant):
    with pytest.raises(ValueError, match="only valid"):
        interpolant.arrays([1.75])


def test_interpolant_validates_endpoints(cell):
    with pytest.raises(AssumptionError):
        CouplingInterpolant(cell, 1.1, (1.6, 40.0), order=3, nodes=60)


def test_track_eigenvalues_follows_crossing_branches():
    t = np.linspace(-1, 1, 21)
    a, b = t + 0.01j, -t - 0.01j
    shuffled = [np.array([x, y]) if j % 2 else np.array([y, x]) for j, (x, y) in enumerate(zip(a, b))]
    out = track_eigenvalues(shuffled)
    first = out[0, 0]
    col = 0 if np.isclose(first, a[0]) else 1
    np.testing.assert_allclose(out[:, col], a if col == 0 else b)
