from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_cs.divided import divided_difference
from spectral_cs.functions import gaussian, rational
from spectral_cs.moi import (
    GuardError,
    MoiProblem,
    check_cost,
    moi_eigenbasis,
    moi_quadrature,
    moi_trace,
    moi_trace_naive,
    path_cost,
    taylor_remainder,
    taylor_term,
    verify_added_weights,
    verify_commutation_identities,
    verify_trace_bound,
)
from spectral_cs.operators import (
    DimensionError,
    HermitianOperator,
    SpectralTriple,
    random_hermitian,
)

from conftest import ginibre, make_triple

G = gaussian(1.0)
D2 = HermitianOperator(np.diag([1.0, -1.0]))
X = np.array([[0.0, 1.0], [1.0, 0.0]])


def _fn(D, f):
    return D.apply_function(lambda w: f.eval(w))


def _brute_force(bases, Vs, f):
    """Sum over index tuples with explicit eigenprojections."""
    d = bases[0].dim
    out = np.zeros((d, d), dtype=complex)
    proj = [[np.outer(b.eigenvectors[:, i], b.eigenvectors[:, i].conj()) for i in range(d)] for b in bases]
    for idx in itertools.product(range(d), repeat=len(bases)):
        w = divided_difference(f, [b.eigenvalues[i] for b, i in zip(bases, idx)])
        term = proj[0][idx[0]]
        for k, V in enumerate(Vs):
            term = term @ V @ proj[k + 1][idx[k + 1]]
        out += w * term
    return out


def test_order_zero_is_functional_calculus(rng):
    D = HermitianOperator(random_hermitian(rng, 4))
    assert np.allclose(moi_eigenbasis(MoiProblem([D], [], G)), _fn(D, G), atol=1e-14)


def test_square_first_order():
    sq = rational([0.0, 0.0, 1.0], [1.0])
    D = D2.matrix
    V = np.array([[0.3, 1.0 - 2j], [1.0 + 2j, -0.7]])
    T = moi_eigenbasis(MoiProblem.single(D2, [V], sq))
    assert np.allclose(T, D @ V + V @ D, atol=1e-13)
    # coefficient of t in (D + tV)^2
    h = 1e-3
    sym = ((D + h * V) @ (D + h * V) - (D - h * V) @ (D - h * V)) / (2 * h)
    assert np.allclose(T, sym, atol=1e-10)


def test_multibase_against_projections(rng):
    bases = [HermitianOperator(random_hermitian(rng, 3)) for _ in range(3)]
    Vs = [ginibre(rng, 3) for _ in range(2)]
    assert np.allclose(moi_eigenbasis(MoiProblem(bases, Vs, G)), _brute_force(bases, Vs, G), atol=1e-12)


def test_degenerate_base_against_projections(rng):
    D = HermitianOperator(np.diag([0.5, 0.5, -1.0]))
    Vs = [ginibre(rng, 3) for _ in range(3)]
    assert np.allclose(moi_eigenbasis(MoiProblem.single(D, Vs, G)), _brute_force([D] * 4, Vs, G), atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 3), st.complex_numbers(max_magnitude=3))
def test_multilinear(seed, n, c):
    rng = np.random.default_rng(seed)
    D = HermitianOperator(random_hermitian(rng, 3))
    Vs = [ginibre(rng, 3) for _ in range(n)]
    W = ginibre(rng, 3)
    k = int(rng.integers(n))
    mixed = list(Vs)
    mixed[k] = Vs[k] + c * W
    other = list(Vs)
    other[k] = W
    T = lambda args: moi_eigenbasis(MoiProblem.single(D, args, G))  # noqa: E731
    assert np.allclose(T(mixed), T(Vs) + c * T(other), atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        MoiProblem.single(D2, [np.eye(3)], G)
    with pytest.raises(ValueError):
        MoiProblem([D2], [X], G)


def test_quadrature_order_zero(rng):
    D = HermitianOperator(random_hermitian(rng, 3))
    q = moi_quadrature(MoiProblem([D], [], G))
    assert np.max(np.abs(q.matrix - _fn(D, G))) < 1e-6


def test_quadrature_first_order_hand_case():
    p = MoiProblem.single(D2, [X], G)
    assert np.max(np.abs(moi_quadrature(p).matrix - moi_eigenbasis(p))) < 1e-6


def test_quadrature_zero_argument():
    q = moi_quadrature(MoiProblem.single(D2, [np.zeros((2, 2))] * 2, G))
    assert np.all(q.matrix == 0)


@pytest.mark.parametrize("n", [1, 2])
def test_quadrature_agrees_within_error(rng, n):
    D = HermitianOperator(random_hermitian(rng, 3))
    p = MoiProblem.single(D, [ginibre(rng, 3) for _ in range(n)], G)
    q = moi_quadrature(p)
    dev = np.max(np.abs(q.matrix - moi_eigenbasis(p)))
    assert dev < 1e-6
    assert dev <= max(10 * q.error, 1e-12)


def test_quadrature_limits():
    with pytest.raises(GuardError):
        moi_quadrature(MoiProblem.single(D2, [X] * 4, G))
    with pytest.raises(ValueError):
        moi_quadrature(MoiProblem.single(D2, [X], rational([1.0], [1.0, 0.0, 1.0])))


def test_trace_first_order(rng):
    D = HermitianOperator(random_hermitian(rng, 4))
    V = ginibre(rng, 4)
    fprime = D.apply_function(lambda w: G.eval(w, 1))
    assert abs(moi_trace(MoiProblem.single(D, [V], G)) - np.trace(fprime @ V)) < 1e-12


def test_trace_second_order_vs_operator(rng):
    D = HermitianOperator(random_hermitian(rng, 2))
    p = MoiProblem.single(D, [ginibre(rng, 2), ginibre(rng, 2)], G)
    assert abs(moi_trace(p) - np.trace(moi_eigenbasis(p))) < 1e-10


def test_trace_derivative_finite_difference(rng):
    D = random_hermitian(rng, 3)
    V = random_hermitian(rng, 3)
    h = 1e-4
    tr = lambda M: np.sum(G.eval(np.linalg.eigvalsh(M)))  # noqa: E731
    fd = (tr(D + h * V) - tr(D - h * V)) / (2 * h)
    assert abs(moi_trace(MoiProblem.single(D, [V], G)) - fd) < 1e-6


def test_taylor_term_second_derivative(rng):
    D = random_hermitian(rng, 3)
    V = random_hermitian(rng, 3)
    h = 1e-3
    tr = lambda M: np.sum(G.eval(np.linalg.eigvalsh(M)))  # noqa: E731
    fd2 = (tr(D + h * V) - 2 * tr(D) + tr(D - h * V)) / h**2
    # the order-n coefficient is the n-th derivative over n!
    assert abs(taylor_term(D, V, G, 2) - fd2 / 2) < 1e-5


def test_trace_matches_naive(rng):
    D = HermitianOperator(random_hermitian(rng, 3))
    p = MoiProblem.single(D, [ginibre(rng, 3) for _ in range(6)], G)
    assert abs(moi_trace(p) - moi_trace_naive(p)) < 1e-11


def test_trace_remainder_form_vs_eigenbasis(rng):
    T = make_triple(rng, 3)
    V = random_hermitian(rng, 3, 0.3)
    DV = HermitianOperator(T.D.matrix + V)
    p = MoiProblem([DV, T.D, T.D], [V, V], G)
    assert abs(moi_trace(p) - np.trace(moi_eigenbasis(p))) < 1e-12


def _lhs(T, V):
    return np.sum(G.eval(np.linalg.eigvalsh(T.D.matrix + V))) - np.sum(G.eval(T.D.eigenvalues))


def test_taylor_remainder_examples(rng):
    T = make_triple(rng, 3)
    assert taylor_remainder(T, np.zeros((3, 3)), G, 2) == 0
    V = random_hermitian(rng, 3, 0.3)
    assert abs(taylor_remainder(T, V, G, 0) - _lhs(T, V)) < 1e-9
    direct = _lhs(T, V) - sum(taylor_term(T, V, G, n) for n in (1, 2))
    assert abs(taylor_remainder(T, V, G, 2) - direct) < 1e-9


@given(st.integers(0, 10_000), st.integers(2, 4), st.integers(0, 5))
def test_taylor_closure(seed, dim, K):
    rng = np.random.default_rng(seed)
    T = make_triple(rng, dim)
    V = random_hermitian(rng, dim, 0.5)
    total = sum(taylor_term(T, V, G, n) for n in range(1, K + 1)) + taylor_remainder(T, V, G, K)
    assert abs(total - _lhs(T, V)) < 1e-9


def test_taylor_remainder_requires_hermitian(rng):
    T = make_triple(rng, 2)
    with pytest.raises(ValueError):
        taylor_remainder(T, ginibre(rng, 2), G, 1)


def test_cost_guard():
    assert path_cost(4, 10) < 1e8
    with pytest.raises(GuardError):
        check_cost(12, 14)
    D = HermitianOperator(np.diag(np.arange(12.0)))
    with pytest.raises(GuardError):
        moi_trace(MoiProblem.single(D, [np.eye(12)] * 14, G))


def test_added_weights():
    rng = np.random.default_rng(11)
    D = HermitianOperator(random_hermitian(rng, 2))
    p = MoiProblem.single(D, [ginibre(rng, 2)], G)
    assert verify_added_weights(p, 0)["deviation"] < 1e-15
    assert verify_added_weights(p, 1)["deviation"] <= 1e-8
    D3 = HermitianOperator(random_hermitian(rng, 3))
    p3 = MoiProblem.single(D3, [ginibre(rng, 3), ginibre(rng, 3)], G)
    assert verify_added_weights(p3, 2)["deviation"] <= 1e-7


def test_added_weights_multibase(rng):
    bases = [HermitianOperator(random_hermitian(rng, 3)) for _ in range(3)]
    p = MoiProblem(bases, [ginibre(rng, 3), ginibre(rng, 3)], G)
    for s in (1, 2, 3):
        assert verify_added_weights(p, s)["deviation"] <= 1e-7


def test_commutation_identities(rng):
    for n in (1, 2, 3):
        D = random_hermitian(rng, 3)
        res = verify_commutation_identities(D, [ginibre(rng, 3) for _ in range(n)], ginibre(rng, 3), G)
        assert res["max"] <= 1e-9
        assert len(res["inner"]) == n - 1


def test_trace_bound_examples(rng):
    T = SpectralTriple(D2, {}, 1)
    zero = verify_trace_bound(T, MoiProblem.single(D2, [np.zeros((2, 2))], G))
    assert zero["trace_norm"] == 0 and zero["holds"]
    # f even: f^[1](1, -1) = 0, so the off-diagonal V gives exactly zero
    assert verify_trace_bound(T, MoiProblem.single(D2, [X], G))["ratio"] == 0
    res = verify_trace_bound(T, MoiProblem.single(D2, [X + np.diag([0.5, 0.2])], G))
    assert res["holds"] and 0 < res["ratio"] <= 1
    T3 = make_triple(rng, 3)
    pert = verify_trace_bound(T3, MoiProblem.single(T3.D, [ginibre(rng, 3)] * 2, G), random_hermitian(rng, 3, 0.3))
    assert pert["holds"] and pert["perturbed"]
