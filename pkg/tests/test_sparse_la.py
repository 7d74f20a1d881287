import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_icar, dense_logdet
from poisson_inla.errors import DimensionMismatch, NotPositiveDefinite, ValidationError
from poisson_inla.gmrf import GridGraph, IcarHyper, build_icar_precision, grid_logdet
from poisson_inla.sparse_la import (
    ORDERINGS,
    SparseSymMatrix,
    factorize,
    log_det,
    selected_inverse,
    solve,
)

TWO = np.array([[2.0, -1.0], [-1.0, 2.0]])


def test_scalar_factor():
    f = factorize(SparseSymMatrix.from_dense([[4.0]]))
    assert f.lower_dense()[0, 0] == pytest.approx(2.0)
    assert solve(f, [8.0])[0] == pytest.approx(2.0)
    assert log_det(f) == pytest.approx(math.log(4.0), abs=1e-12)
    assert selected_inverse(f).diagonal()[0] == pytest.approx(0.25)


def test_two_by_two_by_hand():
    f = factorize(SparseSymMatrix.from_dense(TWO))
    expect = np.array([[math.sqrt(2), 0], [-1 / math.sqrt(2), math.sqrt(1.5)]])
    np.testing.assert_allclose(f.lower_dense(), expect, atol=1e-14)
    np.testing.assert_allclose(solve(f, [1.0, 1.0]), [1.0, 1.0], atol=1e-14)
    assert log_det(f) == pytest.approx(math.log(3.0), abs=1e-12)
    inv = selected_inverse(f).to_dense()
    np.testing.assert_allclose(inv, np.array([[2, 1], [1, 2]]) / 3, atol=1e-14)


@pytest.mark.parametrize("ordering", ORDERINGS)
def test_icar_8x8_reconstruction(ordering):
    q = build_icar_precision(GridGraph(8, 8), IcarHyper(1.0, 0.5))
    f = factorize(q, ordering)
    l = f.lower_dense()
    p = f.ordering
    dense = q.to_dense()[np.ix_(p, p)]
    assert np.max(np.abs(l @ l.T - dense)) <= 1e-10
    assert np.all(np.diag(l) > 0)


def test_solve_matches_dense_on_6x6(rng):
    q = build_icar_precision(GridGraph(6, 6), IcarHyper(0.7, 0.2))
    b = rng.normal(size=q.n)
    z = factorize(q).solve(b)
    np.testing.assert_allclose(z, np.linalg.solve(q.to_dense(), b), rtol=1e-8, atol=1e-10)
    resid = np.max(np.abs(q.matvec(z) - b)) / np.max(np.abs(b))
    assert resid <= 1e-8


def test_logdet_matches_closed_form_8x8():
    g, h = GridGraph(8, 8), IcarHyper(1.0, 1.0)
    assert log_det(factorize(build_icar_precision(g, h))) == pytest.approx(grid_logdet(g, h), abs=1e-9)


@pytest.mark.parametrize("ordering", ORDERINGS)
def test_selected_inverse_6x6(ordering):
    q = build_icar_precision(GridGraph(6, 6), IcarHyper(0.5, 0.3))
    f = factorize(q, ordering)
    dense_inv = np.linalg.inv(q.to_dense())
    np.testing.assert_allclose(f.inverse_diagonal(), np.diag(dense_inv), rtol=0, atol=1e-8)
    s = selected_inverse(f)
    # Every stored entry is an entry of the true inverse.
    full = s.to_dense()
    mask = full != 0
    np.testing.assert_allclose(full[mask], dense_inv[mask], atol=1e-8)
    assert np.all(s.diagonal() > 0)


def test_orderings_agree(rng):
    q = build_icar_precision(GridGraph(5, 7), IcarHyper(2.0, 0.1))
    b = rng.normal(size=q.n)
    a, c = factorize(q, "natural"), factorize(q, "band-reducing")
    assert a.log_det() == pytest.approx(c.log_det(), abs=1e-10)
    np.testing.assert_allclose(a.solve(b), c.solve(b), atol=1e-10)
    np.testing.assert_allclose(a.inverse_diagonal(), c.inverse_diagonal(), atol=1e-12)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        factorize(SparseSymMatrix.from_dense([[1.0, 2.0], [2.0, 1.0]]))
    # The improper ICAR (d = 0) on one pixel is exactly zero.
    with pytest.raises(NotPositiveDefinite) as err:
        factorize(build_icar_precision(GridGraph(1, 1), sigma2=1.0, d=0.0))
    assert err.value.column == 0


def test_solve_dimension_mismatch():
    f = factorize(SparseSymMatrix.from_dense(TWO))
    with pytest.raises(DimensionMismatch):
        f.solve([1.0, 2.0, 3.0])


def test_structure_validation():
    with pytest.raises(ValidationError):
        SparseSymMatrix(2, np.array([0, 1, 2]), np.array([1, 1]), np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        SparseSymMatrix(0, np.array([0]), np.array([], dtype=int), np.array([]))


def test_factorize_is_deterministic():
    q = build_icar_precision(GridGraph(9, 4), IcarHyper(3.0, 0.05))
    a, b = factorize(q), factorize(q)
    assert np.array_equal(a.lx, b.lx)
    assert a.log_det() == b.log_det()


@st.composite
def spd_matrices(draw):
    n = draw(st.integers(1, 12))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    a = r.normal(size=(n, n))
    mask = r.random((n, n)) < 0.3
    a = a * (mask | mask.T)
    m = a @ a.T + n * np.eye(n)
    return m, r.normal(size=n)


@settings(max_examples=60, deadline=None)
@given(spd_matrices())
def test_round_trip_random_spd(case):
    m, x = case
    q = SparseSymMatrix.from_dense(m)
    for ordering in ORDERINGS:
        f = factorize(q, ordering)
        np.testing.assert_allclose(f.solve(m @ x), x, atol=1e-8)
        assert f.log_det() == pytest.approx(dense_logdet(m), abs=1e-9)
        np.testing.assert_allclose(f.inverse_diagonal(), np.diag(np.linalg.inv(m)), atol=1e-8)


def test_from_coo_sums_duplicates():
    q = SparseSymMatrix.from_coo(2, [0, 0, 1, 1], [0, 0, 1, 0], [1.0, 1.0, 3.0, -1.0])
    np.testing.assert_allclose(q.to_dense(), [[2.0, -1.0], [-1.0, 3.0]])


def test_dense_oracle_helper_matches_builder():
    q = build_icar_precision(GridGraph(4, 3), IcarHyper(1.5, 0.25)).to_dense()
    np.testing.assert_allclose(q, dense_icar(4, 3, 1.5, 0.25), atol=1e-15)
