from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_cs.operators import (
    DimensionError,
    HermitianOperator,
    SpectralTriple,
    as_matrix,
    commutator,
    load_matrix,
    matrix_to_json,
    random_hermitian,
    random_unitary,
    represent_one_form,
    resolvent_power_norm,
    save_matrix,
    schatten_norm,
)

from conftest import ginibre

D2 = np.diag([1.0, -1.0])
X = np.array([[0, 1], [1, 0]])


def test_commutator_identity_vanishes():
    assert np.all(commutator(D2, np.eye(2)) == 0)


def test_commutator_2x2():
    assert np.array_equal(commutator(D2, X), np.array([[0, 2], [-2, 0]]))


def test_commutator_antisymmetry(rng):
    D = random_hermitian(rng, 4)
    a = ginibre(rng, 4)
    brute = np.array([[sum(D[i, k] * a[k, j] - a[i, k] * D[k, j] for k in range(4)) for j in range(4)]
                      for i in range(4)])
    assert np.allclose(commutator(D, a), brute, atol=1e-14)
    assert np.allclose(commutator(D, a), -(a @ D - D @ a), atol=0)


def test_commutator_dimension_mismatch():
    with pytest.raises(DimensionError):
        commutator(D2, np.eye(3))


def test_as_matrix_rejects_nan():
    with pytest.raises(ValueError):
        as_matrix([[np.nan, 0], [0, 1]])


def test_schatten_examples(rng):
    assert schatten_norm(np.eye(3), 1) == pytest.approx(3.0)
    assert schatten_norm(np.diag([3.0, -4.0]), 2) == pytest.approx(5.0)
    m = ginibre(rng, 5)
    sv = np.linalg.svd(m, compute_uv=False)
    assert abs(schatten_norm(m, 1) - sv.sum()) < 1e-10
    assert schatten_norm(m, np.inf) == pytest.approx(sv.max())
    with pytest.raises(ValueError):
        schatten_norm(m, 0.5)


@given(st.integers(0, 10_000), st.floats(1, 6), st.floats(1, 6))
def test_schatten_monotone_on_unit_ball(seed, p, q):
    rng = np.random.default_rng(seed)
    m = ginibre(rng, 4)
    m = m / np.linalg.norm(m, 2)
    p, q = min(p, q), max(p, q)
    assert schatten_norm(m, p) >= schatten_norm(m, q) - 1e-12


def test_resolvent_power_norm_examples(rng):
    assert resolvent_power_norm(SpectralTriple(np.zeros((2, 2)), {}, 1)) == pytest.approx(2.0)
    assert resolvent_power_norm(SpectralTriple(D2, {}, 2)) == pytest.approx(1.0)
    D = random_hermitian(rng, 4)
    T = SpectralTriple(D, {}, 3)
    inv = np.linalg.inv(D - 1j * np.eye(4))
    assert abs(resolvent_power_norm(T) - schatten_norm(inv, 3) ** 3) < 1e-10


def test_eigendecomposition_many(rng):
    for _ in range(1000):
        dim = int(rng.integers(2, 13))
        H = HermitianOperator(random_hermitian(rng, dim))
        w, U = H.eigenvalues, H.eigenvectors
        assert np.all(np.diff(w) >= 0)
        tol = 1e-12 * dim * max(1.0, np.linalg.norm(H.matrix, 2))
        assert np.max(np.abs(H.matrix @ U - U * w)) <= tol
        assert np.max(np.abs(U.conj().T @ U - np.eye(dim))) <= 1e-12 * dim


def test_hermitian_symmetrizes_drift_and_rejects_misuse(rng):
    h = random_hermitian(rng, 3)
    drift = h + 1e-13 * ginibre(rng, 3)
    H = HermitianOperator(drift)
    assert np.array_equal(H.matrix, H.matrix.conj().T)
    with pytest.raises(ValueError):
        HermitianOperator(h + 1e-3 * np.triu(np.ones((3, 3)), 1))


def test_eigen_cache_is_reused(rng):
    H = HermitianOperator(random_hermitian(rng, 3))
    assert H.eigenvectors is H.eigenvectors
    with pytest.raises(ValueError):
        H.eigenvalues[0] = 1.0


def test_degenerate_spectrum_kept():
    H = HermitianOperator(np.diag([1.0, 1.0, 2.0]))
    assert list(H.eigenvalues) == [1.0, 1.0, 2.0]


def test_triple_checks_generators():
    with pytest.raises(DimensionError):
        SpectralTriple(D2, {"a": np.eye(3)})
    with pytest.raises(ValueError):
        SpectralTriple(D2, {}, 0)
    T = SpectralTriple(D2, {"a": X})
    assert np.array_equal(T.identity, np.eye(2))


def test_one_form_examples(rng):
    T = SpectralTriple(HermitianOperator(np.diag([0.3, -1.2, 2.0])), {})
    assert np.all(represent_one_form(T, [(np.eye(3), np.eye(3))]).V == 0)
    a, b = ginibre(rng, 3), ginibre(rng, 3)
    lam = np.diag(T.D.matrix).real
    expected = a @ ((lam[:, None] - lam[None, :]) * b)
    assert np.allclose(represent_one_form(T, [(a, b)]).V, expected, atol=1e-14)


def test_one_form_pure_gauge(rng):
    D = random_hermitian(rng, 4)
    T = SpectralTriple(D, {})
    u = random_unitary(rng, 4)
    rep = represent_one_form(T, [(u.conj().T, u)])
    assert np.allclose(D + rep.V, u.conj().T @ D @ u, atol=1e-12)
    assert rep.is_selfadjoint(1e-10)


@given(st.integers(0, 10_000))
def test_one_form_linear(seed):
    rng = np.random.default_rng(seed)
    T = SpectralTriple(random_hermitian(rng, 3), {})
    t1 = [(ginibre(rng, 3), ginibre(rng, 3)) for _ in range(2)]
    t2 = [(ginibre(rng, 3), ginibre(rng, 3))]
    V = represent_one_form(T, t1 + t2).V
    assert np.allclose(V, represent_one_form(T, t1).V + represent_one_form(T, t2).V, atol=1e-13)


def test_one_form_dimension_mismatch():
    with pytest.raises(DimensionError):
        represent_one_form(SpectralTriple(D2, {}), [(np.eye(3), np.eye(3))])


def test_matrix_file_roundtrip(tmp_path, rng):
    m = ginibre(rng, 3)
    p = tmp_path / "m.json"
    save_matrix(p, m)
    obj = json.loads(p.read_text())
    assert obj["dim"] == 3 and obj == matrix_to_json(m)
    assert np.array_equal(load_matrix(p), m)


def test_amplify_replicates_spectrum(rng):
    T = SpectralTriple(random_hermitian(rng, 2), {"a": ginibre(rng, 2)})
    T2 = T.amplify(2)
    assert T2.dim == 4
    assert np.allclose(np.sort(T2.D.eigenvalues), np.sort(np.repeat(T.D.eigenvalues, 2)))
