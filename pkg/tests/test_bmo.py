import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as O
from dyadic_bloom.bmo import (
    EQUIVALENCE_KEYS,
    b1,
    b2,
    bmo_equivalence_report,
    bmo_norm,
    bmo_q_norm,
    cm1_norm,
    duality_check,
    h1_norm,
)
from dyadic_bloom.experiments import random_symbol
from dyadic_bloom.grid import make_grid
from dyadic_bloom.haar import StepFunction, haar_function, random_step
from dyadic_bloom.weights import Weight, bloom, gen_cascade_weight

rng = np.random.default_rng(99)


def sign_pattern(K):
    g = make_grid(1, K)
    return StepFunction.from_callable(g, lambda x: 1.0 if x < 0.5 else -1.0)


def test_sign_pattern_has_unit_bmo():
    for K in (1, 3, 6):
        rep = bmo_norm(sign_pattern(K))
        assert rep.value == 1.0
        assert rep.witness == rep.witness.grid.base


def test_bmo_frozen_example():
    g = make_grid(1, 2)
    rep = bmo_norm(StepFunction(g, [0.0, 0, 0, 4]))
    assert rep.value == 2.0
    assert (rep.witness.level, rep.witness.index) == (1, (1,))
    assert rep.local_value(g.base) == 1.5
    assert json.loads(json.dumps(rep.to_dict()))["witness"] == {"level": 1, "index": [1]}


@pytest.mark.parametrize("n,K", [(1, 4), (2, 2)])
def test_functionals_match_oracle(n, K):
    g = make_grid(n, K)
    b = random_step(g, rng)
    w = gen_cascade_weight(g, 2.5, 5)
    lam = gen_cascade_weight(g, 2.5, 6)
    val, arg = O.bmo(b.values, n, K, w.values)
    rep = bmo_norm(b, w)
    assert rep.value == pytest.approx(val, rel=1e-12)
    assert (rep.witness.level, rep.witness.index) == arg
    assert bmo_q_norm(b, w, 2).value == pytest.approx(
        O.bmo(b.values, n, K, w.values, 2, 1 / w.values)[0], rel=1e-12)
    assert bmo_q_norm(b, w, 1.5).value == pytest.approx(
        O.bmo(b.values, n, K, w.values, 1.5, w.values ** -0.5)[0], rel=1e-12)
    assert b1(b, w, lam, 3.0).value == pytest.approx(
        O.bmo(b.values, n, K, w.values, 3.0, lam.values)[0], rel=1e-12)
    assert b2(b, w, lam, 1.5).value == pytest.approx(
        O.bmo(b.values, n, K, lam.values, 1.5, w.values)[0], rel=1e-12)
    assert cm1_norm(b, w).value == pytest.approx(O.cm1(b.values, w.values, n, K), rel=1e-12)


def test_cm1_frozen_and_single_haar():
    g = make_grid(1, 2)
    rep = cm1_norm(StepFunction(g, [1.0, 0, 0, 0]), Weight(g, [1.0, 2, 3, 4]))
    assert rep.value == pytest.approx(1 / 3, rel=1e-14)
    g = make_grid(2, 3)
    assert cm1_norm(haar_function(g.base, (0, 1))).value == pytest.approx(1.0, rel=1e-14)


def test_functionals_vanish_on_constants():
    g = make_grid(2, 3)
    c = StepFunction.constant(g, -3.0)
    w, lam = gen_cascade_weight(g, 2.0, 1), gen_cascade_weight(g, 2.0, 2)
    assert bmo_norm(c, w).value == 0
    for q in (1, 1.5, 2, 3):
        assert bmo_q_norm(c, w, q).value == 0
    assert b1(c, w, lam, 2.0).value == 0 and b2(c, w, lam, 2.0).value == 0
    assert cm1_norm(c, w).value < 1e-14
    assert h1_norm(c, w) < 1e-14


@given(st.floats(-50, 50), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_homogeneity(alpha, seed):
    g = make_grid(1, 4)
    r = np.random.default_rng(seed)
    b = random_step(g, r)
    w = gen_cascade_weight(g, 2.0, seed)
    lam = gen_cascade_weight(g, 2.0, seed + 1)
    a = abs(alpha)
    tol = dict(rel=1e-10, abs=1e-12)
    assert bmo_norm(b * alpha, w).value == pytest.approx(a * bmo_norm(b, w).value, **tol)
    assert bmo_q_norm(b * alpha, w, 2).value == pytest.approx(a * bmo_q_norm(b, w, 2).value, **tol)
    assert b1(b * alpha, w, lam, 1.5).value == pytest.approx(a * b1(b, w, lam, 1.5).value, **tol)
    assert cm1_norm(b * alpha, w).value == pytest.approx(a * cm1_norm(b, w).value, **tol)


def test_q1_unweighted_equals_bmo_and_q2_dominates():
    g = make_grid(1, 5)
    for _ in range(100):
        b = random_step(g, rng)
        assert bmo_q_norm(b, None, 1).value == pytest.approx(bmo_norm(b).value, rel=1e-14)
        assert bmo_q_norm(b, None, 2).value >= bmo_norm(b).value * (1 - 1e-14)


def test_b1_unweighted_is_bmo2():
    g = make_grid(2, 3)
    b = random_step(g, rng)
    one = Weight.ones(g)
    assert b1(b, one, one, 2.0).value == pytest.approx(bmo_q_norm(b, None, 2).value, rel=1e-14)


def test_monotone_in_depth():
    vals = []
    for K in range(2, 7):
        g = make_grid(1, K)
        b = random_symbol(g, np.random.default_rng(5))
        vals.append(bmo_norm(b, gen_cascade_weight(g, 2.0, 5)).value)
    assert all(y >= x - 1e-14 for x, y in zip(vals, vals[1:]))


def test_cm1_controlled_by_bmo2_weighted():
    # record the constant in ||b||_CM1(w) <= C ||b||_BMO2(w) over cascades
    g = make_grid(1, 5)
    ratios = []
    for t in range(100):
        w = gen_cascade_weight(g, 2.0, t)
        b = random_symbol(g, np.random.default_rng(t))
        ratios.append(cm1_norm(b, w).value / bmo_q_norm(b, w, 2).value)
    assert np.isfinite(ratios).all() and max(ratios) < 10


def test_duality_examples():
    g = make_grid(1, 3)
    h = haar_function(g.base, (0,))
    rep = duality_check(h, h)
    assert (rep.pairing, rep.cm1, rep.h1, rep.ratio) == pytest.approx((1, 1, 1, 1))
    assert rep.passed
    rep = duality_check(h, StepFunction.constant(g, 0.0))
    assert rep.vacuous and rep.passed and rep.h1 == 0


def test_duality_random(caplog):
    g = make_grid(1, 4)
    worst = 0.0
    with caplog.at_level(logging.WARNING):
        for t in range(500):
            w = gen_cascade_weight(g, 3.0, t)
            rep = duality_check(random_step(g, rng), random_step(g, rng), w)
            worst = max(worst, rep.ratio)
    assert worst <= 1 + 1e-9
    assert not caplog.records


def test_equivalence_report():
    g = make_grid(1, 4)
    one = Weight.ones(g)
    rep = bmo_equivalence_report(sign_pattern(4), one, one, 2.0)
    assert rep["quantities"]["bmo_nu"] == 1.0
    assert all(np.isfinite(v) for v in rep["quantities"].values())
    rep = bmo_equivalence_report(StepFunction.constant(g, 2.0), one, one, 2.0)
    assert all(abs(v) < 1e-12 for v in rep["quantities"].values())
    mu, lam = gen_cascade_weight(g, 2.0, 1), gen_cascade_weight(g, 2.0, 2)
    b = random_symbol(g, np.random.default_rng(0))
    rep = bmo_equivalence_report(b, mu, lam, 1.5)
    assert all(np.isfinite(v) for v in rep["ratios"].values())
    assert len(rep["ratios"]) == len(EQUIVALENCE_KEYS) * (len(EQUIVALENCE_KEYS) - 1)
    q = rep["quantities"]
    assert q["bmo_nu"] <= q["b1"] * (1 + 1e-12)
    assert q["para_l2_nu"] == max(q["pi_l2_nu"], q["pistar_l2_nu"])


def test_b1_controlled_by_bmo2_nu_stable_in_depth():
    # record C in B1 <= C ||b||_BMO2(nu) at K = 3, 4, 5
    C = []
    for K in (3, 4, 5):
        g = make_grid(1, K)
        r = []
        for t in range(100):
            mu, lam = gen_cascade_weight(g, 2.0, [t, 0]), gen_cascade_weight(g, 2.0, [t, 1])
            b = random_symbol(g, np.random.default_rng(t))
            r.append(b1(b, mu, lam, 1.5).value / bmo_q_norm(b, bloom(mu, lam, 1.5), 2).value)
        C.append(max(r))
    assert max(C) / min(C) <= 2
