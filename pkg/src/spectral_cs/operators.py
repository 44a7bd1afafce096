"""Dense operators on a finite-dimensional Hilbert space.

Everything downstream (divided differences, multiple operator integrals,
cochains) reads eigendecompositions from :class:`HermitianOperator`, so the
decomposition is computed once and cached.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-10


class DimensionError(ValueError):
    pass


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a square complex array, rejecting NaN/Inf."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def op_norm(m) -> float:
    return float(np.linalg.norm(np.asarray(m), 2)) if np.size(m) else 0.0


class HermitianOperator:
    """A self-adjoint matrix with a lazily computed, cached eigendecomposition.

    Input that deviates from Hermitian by at most ``HERMITIAN_TOL`` (relative
    to its norm) is symmetrized; anything further off raises ``ValueError``.
    """

    def __init__(self, matrix):
        a = as_matrix(matrix)
        scale = max(1.0, op_norm(a))
        dev = op_norm(a - a.conj().T)
        if dev > HERMITIAN_TOL * scale:
            raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
        self._matrix = 0.5 * (a + a.conj().T)
        self._matrix.setflags(write=False)
        self._eig = None
        self._lock = threading.Lock()

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    def _decompose(self):
        if self._eig is None:
            with self._lock:
                if self._eig is None:
                    w, u = np.linalg.eigh(self._matrix)
                    w.setflags(write=False)
                    u.setflags(write=False)
                    self._eig = (w, u)
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._decompose()[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._decompose()[1]

    def norm(self) -> float:
        w = self.eigenvalues
        return float(np.max(np.abs(w))) if w.size else 0.0

    def apply_function(self, fn) -> np.ndarray:
        """``fn(self)`` by functional calculus; ``fn`` acts on an eigenvalue array."""
        w, u = self._decompose()
        return (u * np.asarray(fn(w))) @ u.conj().T

    def __add__(self, other) -> "HermitianOperator":
        other = other.matrix if isinstance(other, HermitianOperator) else other
        return HermitianOperator(self._matrix + as_matrix(other))

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


def commutator(D, a) -> np.ndarray:
    """Return ``[D, a] = D a - a D``."""
    dm = D.matrix if isinstance(D, HermitianOperator) else as_matrix(D)
    am = as_matrix(a)
    if dm.shape != am.shape:
        raise DimensionError(f"dimension mismatch {dm.shape} vs {am.shape}")
    return dm @ am - am @ dm


def schatten_norm(m, p) -> float:
    """Schatten p-norm, i.e. the l^p norm of the singular values (p >= 1 or inf)."""
    if p != np.inf and p < 1:
        raise ValueError(f"Schatten exponent must be >= 1, got {p}")
    sv = np.linalg.svd(as_matrix(m), compute_uv=False)
    if p == np.inf:
        return float(sv.max()) if sv.size else 0.0
    return float(np.sum(sv**p) ** (1.0 / p))


@dataclass
class SpectralTriple:
    """Finite spectral triple ``(A, C^dim, D)``.

    The algebra is unital and is taken to be generated by ``generators``
    (a name -> matrix mapping); the identity is always available.
    """

    D: HermitianOperator
    generators: dict = field(default_factory=dict)
    s: int = 1

    def __post_init__(self):
        if not isinstance(self.D, HermitianOperator):
            self.D = HermitianOperator(self.D)
        gens = {}
        for name, g in self.generators.items():
            g = as_matrix(g)
            if g.shape != (self.dim, self.dim):
                raise DimensionError(f"generator {name!r} has shape {g.shape}")
            gens[name] = g
        self.generators = gens
        if int(self.s) < 1:
            raise ValueError("summability s must be a positive integer")

    @property
    def dim(self) -> int:
        return self.D.dim

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def commutator(self, a) -> np.ndarray:
        return commutator(self.D, a)

    def amplify(self, q: int) -> "SpectralTriple":
        """The triple ``(M_q(A), C^q (x) H, I_q (x) D)``."""
        Dq = np.kron(np.eye(q), self.D.matrix)
        gens = {name: np.kron(np.eye(q), g) for name, g in self.generators.items()}
        return SpectralTriple(HermitianOperator(Dq), gens, self.s)


def resolvent_power_norm(T: SpectralTriple, s: int | None = None) -> float:
    """``||(D - i)^{-1}||_s^s = sum_i (lambda_i^2 + 1)^{-s/2}``."""
    s = T.s if s is None else s
    lam = T.D.eigenvalues
    return float(np.sum((lam**2 + 1.0) ** (-s / 2.0)))


@dataclass
class OneFormRep:
    """Matrix data of a one-form ``A = sum_j a_j db_j`` and ``V = pi_D(A)``."""

    terms: list
    V: np.ndarray

    def is_selfadjoint(self, tol: float = 1e-12) -> bool:
        return op_norm(self.V - self.V.conj().T) <= tol * max(op_norm(self.V), 1e-300)


def represent_one_form(T: SpectralTriple, terms: Sequence) -> OneFormRep:
    """Represent ``A = sum_j a_j db_j`` as ``V = sum_j a_j [D, b_j]``."""
    clean = []
    V = np.zeros((T.dim, T.dim), dtype=complex)
    for a, b in terms:
        a, b = as_matrix(a), as_matrix(b)
        if a.shape != (T.dim, T.dim) or b.shape != (T.dim, T.dim):
            raise DimensionError("one-form term has the wrong dimension")
        clean.append((a, b))
        V = V + a @ T.commutator(b)
    return OneFormRep(clean, V)


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    """GUE-type sample normalized so that off-diagonal entries have variance ``scale^2 / (2 dim)``."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (z + z.conj().T) / 2.0
    return h * (scale / np.sqrt(2.0 * dim))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# -- matrix file format ---------------------------------------------------------


def matrix_to_json(m) -> dict:
    m = as_matrix(m)
    return {
        "dim": int(m.shape[0]),
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in m],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    try:
        n = int(obj["dim"])
        rows = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix object: {exc}") from None
    m = np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
    if m.shape != (n, n):
        raise DimensionError(f"matrix entries have shape {m.shape}, header says dim={n}")
    return as_matrix(m)


def load_matrix(path) -> np.ndarray:
    return matrix_from_json(json.loads(Path(path).read_text()))


def save_matrix(path, m) -> None:
    Path(path).write_text(json.dumps(matrix_to_json(m)))
