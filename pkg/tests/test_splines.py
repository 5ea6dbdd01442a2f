import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline

from ivquant.errors import DegenerateCovariate, DomainError, SchemaError
from ivquant.splines import (SplineTerm, basis_matrix, basis_row, design_matrix, knot_rule,
                             make_knots, penalty_matrix)


def cox_de_boor(i, m, t, x):
    """Textbook recursion, written independently of the package."""
    if m == 0:
        last = t[-1]
        if t[i] <= x < t[i + 1] or (x == last and t[i] < t[i + 1] == last):
            return 1.0
        return 0.0
    out = 0.0
    if t[i + m] > t[i]:
        out += (x - t[i]) / (t[i + m] - t[i]) * cox_de_boor(i, m - 1, t, x)
    if t[i + m + 1] > t[i + 1]:
        out += (t[i + m + 1] - x) / (t[i + m + 1] - t[i + 1]) * cox_de_boor(i + 1, m - 1, t, x)
    return out


def test_knots_unit_interval_linear():
    kv = make_knots([0.0, 0.3, 1.0], 3, 1)
    assert np.allclose(kv.knots, [0, 0, 1 / 3, 2 / 3, 1, 1])
    assert len(kv.knots) == 2 * 1 + 3 + 1
    assert kv.n_basis == 4


def test_knots_cubic_spacing():
    kv = make_knots([-2.0, 0.0, 2.0], 5, 3)
    assert len(kv.knots) == 12
    inner = np.unique(kv.knots)
    assert np.allclose(np.diff(inner), 0.8)
    assert np.allclose(kv.knots[:4], -2) and np.allclose(kv.knots[-4:], 2)


def test_knot_rule():
    assert knot_rule(100) == 25
    assert knot_rule(1000) == 40
    assert knot_rule(200) == 40


def test_knot_errors():
    with pytest.raises(DegenerateCovariate):
        make_knots(np.ones(5), 4, 3)
    with pytest.raises(DomainError):
        make_knots([0, 1], 1, 3)


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_partition_of_unity_and_support(degree):
    kv = make_knots([-1.5, 2.5], 7, degree)
    x = np.random.default_rng(degree).uniform(-1.5, 2.5, 1000)
    x[:2] = [-1.5, 2.5]
    b, clamped = basis_matrix(x, kv)
    assert clamped == 0
    assert np.allclose(b.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((b > 0).sum(axis=1) <= degree + 1)
    assert np.all(b >= -1e-15)


def test_degree_zero_indicator():
    kv = make_knots([0.0, 1.0], 4, 0)
    row = basis_row(0.6, kv)
    assert np.array_equal(row, [0, 0, 1, 0])


def test_cubic_row_matches_textbook():
    kv = make_knots([0.0, 1.0], 3, 3)
    row = basis_row(0.5, kv)
    oracle = [cox_de_boor(i, 3, kv.knots, 0.5) for i in range(kv.n_basis)]
    assert np.allclose(row, oracle, atol=1e-12, rtol=0)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_matches_scipy_bspline(degree):
    kv = make_knots([0.0, 4.0], 9, degree)
    x = np.linspace(0, 4, 301)[:-1]
    ref = BSpline.design_matrix(x, kv.knots, degree).toarray()
    assert np.allclose(basis_matrix(x, kv)[0], ref, atol=1e-12)
    textbook = np.array([[cox_de_boor(i, degree, kv.knots, v) for i in range(kv.n_basis)]
                         for v in x[::37]])
    assert np.allclose(basis_matrix(x[::37], kv)[0], textbook, atol=1e-12)


def test_right_endpoint_included():
    kv = make_knots([0.0, 1.0], 3, 3)
    row = basis_row(1.0, kv)
    assert row[-1] == pytest.approx(1.0)


def test_clamping_warns():
    kv = make_knots([0.0, 1.0], 3, 3)
    with pytest.warns(UserWarning, match="clamped"):
        row = basis_row(1.5, kv)
    assert np.allclose(row, basis_row(1.0, kv))
    term = SplineTerm.fit("x", np.linspace(0, 1, 20), 3)
    with pytest.warns(UserWarning):
        term.evaluate([-1.0, 0.5, 2.0])
    assert term.clamp_count == 2


def test_toy_centered_design():
    x = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    term = SplineTerm.fit("x", x, 2, degree=1)
    raw = np.array([[1.0, 0.0, 0.0], [0.6, 0.4, 0.0], [0.2, 0.8, 0.0],
                    [0.0, 0.8, 0.2], [0.0, 0.4, 0.6], [0.0, 0.0, 1.0]])
    expected = raw - np.array([0.3, 0.4, 0.3])
    assert np.allclose(design_matrix({"x": x}, term), expected, atol=1e-14)


def test_training_columns_sum_to_zero():
    x = np.random.default_rng(1).gamma(2.0, size=300)
    term = SplineTerm.fit("x", x, 12)
    assert np.all(np.abs(design_matrix({"x": x}, term).sum(axis=0)) < 1e-10)


def test_dummy_interaction():
    x = np.linspace(0, 1, 30)
    term = SplineTerm.fit("x", x, 5, by="D")
    assert np.array_equal(design_matrix({"x": x, "D": np.zeros(30)}, term), np.zeros((30, 8)))
    dummy = (np.arange(30) % 2).astype(float)
    full = design_matrix({"x": x, "D": np.ones(30)}, term)
    assert np.allclose(design_matrix({"x": x, "D": dummy}, term), full * dummy[:, None])
    with pytest.raises(SchemaError):
        design_matrix({"x": x}, term)


def test_missing_label():
    term = SplineTerm.fit("x", np.linspace(0, 1, 10), 2)
    with pytest.raises(SchemaError):
        design_matrix({"w": np.zeros(3)}, term)


def test_penalty_stencil():
    D = np.array([[1, -2, 1, 0], [0, 1, -2, 1]], dtype=float)
    assert np.array_equal(penalty_matrix(4, 2), D.T @ D)


def test_penalty_null_space_and_rank():
    P = penalty_matrix(10, 2)
    assert np.allclose(P @ np.ones(10), 0)
    assert np.allclose(P @ np.arange(10.0), 0)
    assert np.linalg.matrix_rank(P) == 8
    for order in (1, 2, 3):
        eig = np.linalg.eigvalsh(penalty_matrix(12, order))
        assert np.sum(eig < 1e-9) == order
    with pytest.raises(DomainError):
        penalty_matrix(3, 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=8, max_size=8), st.integers(1, 3))
def test_penalty_quadratic_form(coef, order):
    c = np.array(coef)
    assert c @ penalty_matrix(8, order) @ c == pytest.approx(np.sum(np.diff(c, n=order) ** 2),
                                                             rel=1e-12, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 10), st.integers(2, 15), st.integers(0, 3),
       st.floats(0, 1))
def test_partition_of_unity_property(lo, width, k, degree, frac):
    kv = make_knots([lo, lo + width], k, degree)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        row = basis_row(lo + frac * width, kv)
    assert abs(row.sum() - 1.0) < 1e-12
    assert (row != 0).sum() <= degree + 1
