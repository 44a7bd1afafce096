from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_cs.cochains import CochainContext
from spectral_cs.forms import (
    Form,
    alpha_beta_sum,
    chern_simons,
    curvature,
    curvature_power,
    curvature_t,
    enumerate_index_sets,
    generator,
    index_word_sum,
    one,
    opaque,
    t_var,
    two_by_two_expansion,
    unitary_relations,
)
from spectral_cs.functions import gaussian
from spectral_cs.integrals import CochainEvaluator

from conftest import ginibre, make_triple

A = opaque()
dA = A.d()
a, b, c = generator("a"), generator("b"), generator("c")
GENS = (a, b, c)


def W(*tokens) -> Form:
    """A single opaque word, e.g. W("A", "dA", "A")."""
    return Form({(tuple((t, "A") for t in tokens), 0): 1}, normalized=True)


def test_leibniz_rewrite():
    assert a.d() * b == (a * b).d() - a * b.d()


def test_d_squared_vanishes():
    assert a.d().d().is_zero()
    assert (a * b.d() + c).d().d().is_zero()


def test_square_of_generator_one_form():
    x = a * b.d()
    assert x * x == a * (b * a).d() * b.d() - a * b * a.d() * b.d()


def test_unit_and_scalars():
    assert one().d().is_zero()
    assert (2 * a - a - a).is_zero()
    assert (Fraction(1, 3) * a * 3) == a
    assert one() * a == a == a * one()


def test_chern_simons_printed_formulas():
    assert chern_simons(A, 1) == A
    assert chern_simons(A, 2) == Fraction(1, 2) * (W("A", "dA") + Fraction(2, 3) * W("A", "A", "A"))
    cs5 = Fraction(1, 3) * (W("A", "dA", "dA") + Fraction(3, 4) * W("A", "dA", "A", "A")
                            + Fraction(3, 4) * W("A", "A", "A", "dA") + Fraction(3, 5) * W(*"AAAAA"))
    assert chern_simons(A, 3) == cs5


def test_chern_simons_coefficients_are_exact():
    for k in (2, 3, 4):
        assert all(isinstance(v, Fraction) for v in chern_simons(A, k).terms.values())


def test_pretty_printer():
    assert str(chern_simons(A, 2)) == "1/2 A dA + 1/3 A^3"
    assert str(a.d() * b) == "d(ab) - a db"
    assert str(Form({}, normalized=True)) == "0"


def test_curvature_powers():
    assert curvature_power(A, 1) == dA + A * A
    assert curvature_power(A, 2) == W("dA", "dA") + W("dA", "A", "A") + W("A", "A", "dA") + W(*"AAAA")


def test_curvature_of_pure_gauge_vanishes():
    rel = unitary_relations("u", "u^*")
    u, us = generator("u", rel), generator("u^*", rel)
    assert curvature(us * u.d()).is_zero()


def test_two_by_two_examples():
    assert two_by_two_expansion(A, 1) == A
    assert two_by_two_expansion(A, 2) == A * A + A * dA
    n4 = (W(*"AAAA") + W("A", "A", "A", "dA") + W("A", "dA", "A", "A") + W("A", "dA", "dA", "A")
          + W("A", "dA", "dA", "dA"))
    assert two_by_two_expansion(A, 4) == n4


def test_two_by_two_regrouped_expansion():
    # sum_n 1/n (2x2 term) regrouped into CS, YM and the corrections beyond first order
    total = sum((Fraction(1, n) * two_by_two_expansion(A, n) for n in range(1, 5)), Form({}, normalized=True))
    grouped = (A + Fraction(1, 2) * (A * A + A * dA)
               + Fraction(1, 3) * (W(*"AAA") + W("A", "dA", "A") + W("A", "dA", "dA"))
               + Fraction(1, 4) * two_by_two_expansion(A, 4))
    assert total == grouped
    assert total.homogeneous_part(2) == Fraction(1, 2) * A * A
    assert total.homogeneous_part(3) == Fraction(1, 2) * A * dA + Fraction(1, 3) * W(*"AAA")


def test_index_sets_first_order():
    S, P, T = enumerate_index_sets(1)
    assert len(T) == 1
    (x,) = T
    assert x.m == 0 and x.p == 1 and x.coefficient == Fraction(1, 2)
    assert x.form() == A * A


def test_index_set_cardinality():
    for K in range(1, 9):
        S, P, T = enumerate_index_sets(K)
        assert len(T) <= 2 ** (K + 1)
        assert set(T) == set(S) - set(P)
        assert len(set(S)) == len(S)


def test_index_set_predicates():
    for K in range(1, 6):
        S, P, T = enumerate_index_sets(K)
        for x in T:
            sv, sw = sum(x.v), sum(x.w)
            assert sv + sw + x.p // 2 < K <= 2 * sv + sw + x.p
            assert all(vi >= 1 for vi in x.v[1:]) and all(wi >= 1 for wi in x.w)


@pytest.mark.parametrize("K", range(1, 6))
def test_alpha_beta_expansion_is_P_word_sum(K):
    P = enumerate_index_sets(K)[1]
    assert alpha_beta_sum(A, 2 * K).homogeneous_part(0) == one()
    lhs = sum((index_word_sum([x]) for x in P), Form({}, normalized=True))
    # words of P_K have weight < K; the brute force sum is truncated at the same weight
    brute = alpha_beta_sum(A, 2 * K)
    brute = Form({k: v for k, v in brute.terms.items() if _weight(k[0]) < K}, normalized=True)
    assert lhs == brute


def _weight(word):
    return sum(1 for t in word)


def test_bianchi_identity_symbolic():
    t = t_var()
    At = t * A
    Ft = curvature_t(A)
    assert (Ft.d() + At * Ft - Ft * At).is_zero()
    for k in range(2, 5):
        Fk = Ft ** (k - 1)
        assert (Fk.d() + At * Fk - Fk * At).is_zero()


def test_t_calculus():
    t = t_var()
    assert (t * t * A).integrate_t() == Fraction(1, 3) * A
    assert (t * t * A).t_derivative() == 2 * t * A
    assert curvature_t(A).at_t(1) == curvature(A)
    assert not curvature_t(A).t_free


@st.composite
def forms(draw, max_degree=3):
    """Random generator-level forms h_0 d h_1 ... d h_n with small integer coefficients."""
    total = Form({}, normalized=True)
    for _ in range(draw(st.integers(1, 3))):
        n = draw(st.integers(0, max_degree))
        w = draw(st.sampled_from(GENS + (one(),)))
        for _ in range(n):
            w = w * draw(st.sampled_from(GENS)).d()
        total = total + draw(st.integers(-3, 3)) * w
    return total


@given(forms(), forms())
def test_d_is_graded_derivation(x, y):
    for p in sorted(x.degrees):
        xp = x.homogeneous_part(p)
        assert (xp * y).d() == xp.d() * y + (-1) ** p * xp * y.d()


@given(forms())
def test_normalization_idempotent_and_degree_preserving(x):
    again = Form(dict(x.terms), x.relations)
    assert again == x
    for (w, _), _c in x.terms.items():
        assert sum(1 for tok in w if tok[0] == "d") in x.degrees


# -- numeric rules under int_phi --------------------------------------------------


@pytest.fixture(scope="module")
def ev():
    rng = np.random.default_rng(42)
    T = make_triple(rng, 3)
    mats = {n: ginibre(rng, 3, 0.8) for n in "abc"}
    ctx = CochainContext(T, gaussian(1.0), 14)
    return CochainEvaluator(ctx, mats, {"A": a * b.d() + c * a.d()})


def _odd(x: Form) -> int:
    (p,) = x.degrees
    return p % 2


def _homogeneous(x: Form):
    return [x.homogeneous_part(p) for p in sorted(x.degrees)]


@given(forms(), forms())
def test_near_tracial_proposition(ev, x, y):
    for xp in _homogeneous(x):
        for yp in _homogeneous(y):
            lhs = ev.integrate_phi(xp * yp - yp * xp)
            rhs = _odd(yp) * ev.integrate_phi(yp * xp.d()) - _odd(xp) * ev.integrate_phi(xp * yp.d())
            assert abs(lhs - rhs) < 1e-8


@given(forms(), forms())
def test_near_tracial_rules(ev, x, y):
    Ag = ev.one_forms["A"]
    for xp in _homogeneous(x):
        if _odd(xp):
            assert abs(ev.integrate_phi(Ag * xp - xp * Ag) - ev.integrate_phi((Ag * xp).d())) < 1e-8
        else:
            lhs = ev.integrate_phi(xp * Ag - Ag * xp)
            rhs = ev.integrate_phi(xp.d() * Ag) + ev.integrate_phi(Ag.d() * xp.d())
            assert abs(lhs - rhs) < 1e-8
            for yp in _homogeneous(y):
                if not _odd(yp):
                    assert abs(ev.integrate_phi(xp * yp) - ev.integrate_phi(yp * xp)) < 1e-8


@pytest.mark.parametrize("m", [0, 1, 2])
def test_exact_top_forms_vanish(ev, m):
    # d(A_t^2 F_t^m) at t = 1 and at an interior t
    t = t_var()
    At = t * A
    form = (At * At * curvature_t(A) ** m).d()
    for value in (1, Fraction(2, 5)):
        assert abs(ev.integrate_phi(form.at_t(value))) < 1e-8


@pytest.mark.parametrize("k", [1, 2, 3])
def test_t_removal_for_yang_mills(ev, k):
    t = t_var()
    integrand = ((Fraction(1, 2) * dA + t * A * A) * curvature_t(A) ** (k - 1)).integrate_t()
    lhs = ev.integrate_phi(integrand)
    rhs = ev.integrate_phi(curvature_power(A, k)) / (2 * k)
    assert abs(lhs - rhs) < 1e-8
