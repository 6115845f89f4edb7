import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracle as O
from dyadic_bloom.grid import make_grid
from dyadic_bloom.haar import StepFunction, analyze, haar_function, random_step
from dyadic_bloom.operators import (
    commutator,
    identity_map,
    lambda_map,
    lambda_op,
    maximal,
    multiplication_map,
    paraproduct,
    paraproduct_map,
    product_decomposition_check,
    shifted_square_function,
    square_function,
)

rng = np.random.default_rng(2024)


def rand(g):
    return random_step(g, rng)


# -- maximal and square functions ---------------------------------------------------

def test_maximal_examples():
    g = make_grid(1, 2)
    assert np.all(maximal(StepFunction.constant(g, -2.0)).values == 2.0)
    f = StepFunction(g, [1.0, 1.0, 0.0, 0.0])
    assert maximal(f).values.tolist() == [1.0, 1.0, 0.5, 0.5]


@given(arrays(float, (4, 4), elements=st.floats(-10, 10)))
@settings(max_examples=30, deadline=None)
def test_maximal_dominates_and_matches_oracle(v):
    g = make_grid(2, 2)
    m = maximal(StepFunction(g, v)).values
    assert np.all(m >= np.abs(v) - 1e-12)
    assert np.allclose(m, O.maximal(v, 2, 2), atol=1e-12)


def test_square_function():
    g = make_grid(2, 3)
    assert square_function(StepFunction.constant(g, 4.0)).max_abs() == 0
    f = rand(g)
    s = square_function(f)
    assert s.inner(s) == pytest.approx(analyze(f).energy(), abs=1e-12)
    assert np.allclose(s.values, O.square(f.values, 2, 3), atol=1e-12)
    Q = g.cube(1, (1, 0))
    s = square_function(haar_function(Q, (0, 1)))
    assert np.allclose(s.values, StepFunction.indicator(Q).values * Q.volume**-0.5)


def test_shifted_square_function():
    g = make_grid(1, 4)
    f = rand(g)
    assert (shifted_square_function(f, 0, 0) - square_function(f)).max_abs() <= 1e-12
    assert shifted_square_function(StepFunction.constant(g, 1.0), 1, 2).max_abs() == 0
    for i, j in [(1, 1), (0, 2), (2, 0), (2, 1)]:
        s = shifted_square_function(f, i, j)
        assert np.allclose(s.values, O.shifted_square(f.values, 1, 4, i, j), atol=1e-12)
    with pytest.raises(ValueError):
        shifted_square_function(f, -1, 0)


def test_shifted_square_frozen():
    # brute-force oracle value, K=3, (i,j)=(1,1)
    g = make_grid(1, 3)
    f = StepFunction(g, [1, 0, 0, 0, 0, 0, 0, 2])
    s = shifted_square_function(f, 1, 1).values
    assert np.allclose(s[:4], 0.90138782, atol=1e-8)
    assert np.allclose(s[4:], 1.25, atol=1e-14)


def test_shifted_square_n2_matches_oracle():
    g = make_grid(2, 3)
    f = rand(g)
    s = shifted_square_function(f, 1, 1)
    assert np.allclose(s.values, O.shifted_square(f.values, 2, 3, 1, 1), atol=1e-12)


# -- paraproducts ---------------------------------------------------------------------

def test_paraproduct_frozen_values():
    g = make_grid(1, 2)
    b = StepFunction(g, [1.0, 0, 0, 0])
    f = StepFunction(g, [0.0, 1, 2, 3])
    assert np.allclose(paraproduct("Pi", b, f).values, [0.625, 0.125, -0.375, -0.375], atol=1e-15)
    assert np.allclose(paraproduct("PiStar", b, f).values, [-0.5, -0.5, -0.25, -0.25], atol=1e-15)
    g2 = make_grid(2, 1)
    b2 = StepFunction(g2, [[1.0, 0], [0, 0]])
    f2 = StepFunction(g2, [[0.0, 1], [2, 3]])
    assert np.allclose(paraproduct("Gamma", b2, f2).values, [[-0.75, 0.5], [0.25, 0.0]], atol=1e-15)


@pytest.mark.parametrize("n,K", [(1, 3), (2, 2)])
def test_paraproducts_match_oracle(n, K):
    g = make_grid(n, K)
    b, f = rand(g), rand(g)
    for kind, fn in (("Pi", O.pi), ("PiStar", O.pistar), ("Gamma", O.gamma)):
        assert np.allclose(paraproduct(kind, b, f).values, fn(b.values, f.values, n, K), atol=1e-12)


def test_paraproducts_vanish_for_constant_symbol():
    g = make_grid(2, 3)
    f = rand(g)
    for kind in ("Pi", "PiStar", "Gamma"):
        assert paraproduct(kind, StepFunction.constant(g, 3.0), f).max_abs() < 1e-13
    with pytest.raises(ValueError):
        paraproduct("Pix", f, f)


def test_gamma_vanishes_in_one_dimension():
    g = make_grid(1, 5)
    for _ in range(10):
        assert paraproduct("Gamma", rand(g), rand(g)).max_abs() == 0.0


@pytest.mark.parametrize("n,K", [(1, 5), (2, 4), (3, 2)])
def test_adjointness(n, K):
    g = make_grid(n, K)
    b, f, h = rand(g), rand(g), rand(g)
    assert paraproduct("Pi", b, f).inner(h) == pytest.approx(f.inner(paraproduct("PiStar", b, h)), abs=1e-12)
    assert paraproduct("Gamma", b, f).inner(h) == pytest.approx(f.inner(paraproduct("Gamma", b, h)), abs=1e-12)
    A = paraproduct_map("Pi", b)
    assert np.allclose(A.matrix().T, A.adjoint.matrix(), atol=1e-13)


@pytest.mark.parametrize("n,K", [(1, 4), (2, 4)])
def test_product_decomposition(n, K):
    g = make_grid(n, K)
    b, f = rand(g), rand(g)
    assert product_decomposition_check(b, f) <= 1e-12
    assert product_decomposition_check(b.centered(), f.centered(), literal=True) <= 1e-12
    c = StepFunction.constant(g, 2.5)
    assert product_decomposition_check(c, f) <= 1e-12
    assert product_decomposition_check(b, c) <= 1e-12


# -- Λ operators ---------------------------------------------------------------------

def test_lambda_frozen_and_oracle():
    g = make_grid(1, 2)
    a = StepFunction(g, [1.0, 0, 0, 0])
    b = StepFunction(g, [0.0, 1, 0, 0])
    f = StepFunction(g, [0.0, 1, 2, 3])
    assert np.allclose(lambda_op("Lambda", a, b, f).values, [0.09375, -0.15625, 0.03125, 0.03125], atol=1e-15)
    g = make_grid(2, 2)
    a, b, f = rand(g), rand(g), rand(g)
    assert np.allclose(lambda_op("Lambda", a, b, f).values, O.lam(a.values, b.values, f.values, 2, 2), atol=1e-12)


def test_lambda_adjoint_and_constant():
    g = make_grid(2, 3)
    a, b, f, h = rand(g), rand(g), rand(g), rand(g)
    lhs = lambda_op("Lambda", a, b, f).inner(h)
    assert lhs == pytest.approx(f.inner(lambda_op("LambdaStar", a, b, h)), abs=1e-12)
    assert lambda_op("Lambda", StepFunction.constant(g, 1.0), b, f).max_abs() < 1e-13
    L, Ls = lambda_map("Lambda", a, b), lambda_map("LambdaStar", a, b)
    assert np.allclose(Ls.adjoint.matrix(), L.matrix(), atol=1e-13)


# -- commutators and linear maps -----------------------------------------------------

def test_commutator_basics():
    g = make_grid(1, 3)
    T = paraproduct_map("Pi", rand(g))
    f = rand(g)
    assert commutator(StepFunction.constant(g, 2.0), T, f).max_abs() < 1e-13
    b1, b2 = rand(g), rand(g)
    lhs = commutator(b1 + b2, T, f)
    assert (lhs - commutator(b1, T, f) - commutator(b2, T, f)).max_abs() < 1e-12


def test_commutator_rank_one_hand_expansion():
    # S f = a fhat(P,eps) h_Q^eta, so [b,S]f = a fhat(P) b h_Q - a <bf, h_P> h_Q
    from dyadic_bloom.shifts import single_entry_shift

    g = make_grid(1, 3)
    R = g.base
    P, Q = g.cube(1, (0,)), g.cube(1, (1,))
    S = single_entry_shift(R, P, Q, (0,), (0,), value=0.3)
    b, f = rand(g), rand(g)
    hP, hQ = haar_function(P, (0,)), haar_function(Q, (0,))
    expected = b * hQ * (0.3 * f.inner(hP)) - hQ * (0.3 * (b * f).inner(hP))
    assert (commutator(b, S, f) - expected).max_abs() < 1e-13


def test_linear_map_algebra():
    g = make_grid(1, 3)
    m = rand(g)
    M, I = multiplication_map(m), identity_map(g)
    f = rand(g)
    assert ((M + I)(f) - (m * f + f)).max_abs() < 1e-14
    assert ((M - I).scaled(2.0)(f) - (m * f - f) * 2.0).max_abs() < 1e-14
    assert (M.compose(M)(f) - m * m * f).max_abs() < 1e-14
    assert np.allclose(M.matrix(), np.diag(m.tree))
