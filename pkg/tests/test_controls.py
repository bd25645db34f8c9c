import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oqcontrol.controls import (ControlGrid, CrabBounds, CrabParams, crab_evaluate, l2_norm_sq,
                                project_box, sample_to_grid)

MU, NMAX = 50.0, 10.0
triples = st.tuples(st.floats(-200, 200), st.floats(-50, 50), st.floats(-50, 50))


def _crab(**kw):
    base = dict(h_u=0.5, A=(1.0, -2.0, 0.5), B=(0.3, 0.0, -1.0), C=(1.0, 2.0), h_n=(0.3, 0.7),
                T=1.5)
    base.update(kw)
    return CrabParams(**base)


def test_project_box_examples():
    np.testing.assert_array_equal(project_box((1, 2, 3), MU, NMAX), (1, 2, 3))
    np.testing.assert_array_equal(project_box((60, 5, 5), MU, NMAX), (50, 5, 5))
    np.testing.assert_array_equal(project_box((0, -1, 11), MU, NMAX), (0, 0, 10))


@given(triples, triples)
def test_project_box_idempotent_nonexpansive(a, b):
    pa, pb = project_box(a, MU, NMAX), project_box(b, MU, NMAX)
    np.testing.assert_array_equal(project_box(pa, MU, NMAX), pa)
    # firm nonexpansiveness
    d = pa - pb
    assert d @ d <= d @ (np.asarray(a) - np.asarray(b)) + 1e-9


@given(triples, triples)
def test_projection_never_farther_from_box_points(a, q):
    q = project_box(q, MU, NMAX)
    pa = project_box(a, MU, NMAX)
    assert np.linalg.norm(pa - q) <= np.linalg.norm(np.asarray(a) - q) + 1e-9


def test_grid_validation():
    with pytest.raises(ValueError):
        ControlGrid(1.0, np.array([[60.0, 0, 0]]), MU, NMAX)
    with pytest.raises(ValueError):
        ControlGrid(1.0, np.array([[0.0, -1, 0]]), MU, NMAX)
    with pytest.raises(ValueError):
        ControlGrid(0.0, np.zeros((2, 3)), MU, NMAX)
    with pytest.raises(ValueError):
        ControlGrid(1.0, np.zeros((0, 3)), MU, NMAX)
    g = ControlGrid.constant(2.0, 4, (1, 2, 3), MU, NMAX)
    assert g.N == 4 and g.dt == 0.5
    np.testing.assert_allclose(g.midpoints, [0.25, 0.75, 1.25, 1.75])
    with pytest.raises(ValueError):
        g.values[0, 0] = 5.0


def test_crab_examples():
    p = _crab(A=(0, 0, 0), B=(0, 0, 0))
    assert np.all(crab_evaluate(p, np.linspace(0, p.T, 11))[:, 0] == 0)
    q = _crab(h_n=(0.0, 0.7))
    np.testing.assert_allclose(crab_evaluate(q, np.linspace(0, q.T, 7))[:, 1], q.C[0])
    r = _crab()
    half = r.T / 2
    expected = sum(a * np.sin(nu * half) + b * np.cos(nu * half) for a, b, nu in zip(r.A, r.B, r.nu))
    assert crab_evaluate(r, half)[0] == pytest.approx(expected)


def test_crab_validation():
    with pytest.raises(ValueError):
        _crab(C=(-1.0, 0.0))
    with pytest.raises(ValueError):
        _crab(A=(1.0,))
    with pytest.raises(ValueError):
        CrabBounds(C=(-1.0, 2.0))
    p = _crab()
    assert CrabParams.from_vector(p.to_vector()) == p
    assert p.in_bounds()
    assert not _crab(T=5.0).in_bounds()


def test_sample_to_grid_examples():
    flat = _crab(A=(0, 0, 0), B=(0, 0, 0), h_n=(0, 0))
    g = sample_to_grid(flat, 20, MU, NMAX)
    assert np.all(g.values == g.values[0])
    big = _crab(A=(0, 0, 0), B=(100.0, 0, 0), h_u=0.0)
    g = sample_to_grid(big, 10, MU, NMAX)
    assert np.all(g.values[:, 0] == MU)
    one = sample_to_grid(_crab(), 1, MU, NMAX)
    np.testing.assert_allclose(one.values[0], crab_evaluate(_crab(), _crab().T / 2))
    with pytest.raises(ValueError):
        sample_to_grid(_crab(), 0, MU, NMAX)


@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.floats(0, 5), st.floats(0, 5),
       st.floats(0.5, 2.0), st.integers(1, 300))
def test_sample_to_grid_admissible(ab, c1, c2, T, N):
    p = _crab(A=ab[:3], B=ab[3:], C=(c1, c2), T=T)
    v = sample_to_grid(p, N, 5.0, 1.0).values
    assert np.all(np.abs(v[:, 0]) <= 5.0) and np.all(v[:, 1:] >= 0) and np.all(v[:, 1:] <= 1.0)


def test_l2_examples():
    assert l2_norm_sq(ControlGrid.zeros(3.0, 10, MU, NMAX)) == 0
    g = ControlGrid.constant(3.0, 10, (MU, 0, 0), MU, NMAX)
    assert l2_norm_sq(g) == pytest.approx(MU ** 2 * 3.0)
    assert l2_norm_sq(g, g, s=1) == 0
    with pytest.raises(ValueError):
        l2_norm_sq(g, ControlGrid.zeros(3.0, 11, MU, NMAX), s=1)


def test_l2_quadrature_convergence():
    p = _crab(h_u=0.3, C=(1.0, 0.5))
    t = np.linspace(0, p.T, 200001)
    vals = crab_evaluate(p, t)
    exact = np.trapezoid(np.sum(vals ** 2, axis=1), t) if hasattr(np, "trapezoid") else \
        np.trapz(np.sum(vals ** 2, axis=1), t)
    errs = [abs(l2_norm_sq(sample_to_grid(p, n, MU, NMAX)) - exact) for n in (20, 40, 80)]
    assert errs[1] < errs[0] / 3 and errs[2] < errs[1] / 3


def test_channel_norms_and_csv(tmp_path):
    g = ControlGrid.constant(4.0, 8, (1.0, 2.0, 0.0), MU, NMAX)
    np.testing.assert_allclose(g.channel_norms(), [2.0, 4.0, 0.0])
    path = tmp_path / "c.csv"
    g.write_csv(path)
    rows = list(csv.reader(open(path, encoding="utf-8")))
    assert rows[0] == ["t", "u", "n1", "n2"]
    assert len(rows) == 9 and float(rows[1][0]) == 0.25
