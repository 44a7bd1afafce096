"""Multiple operator integrals ``T^{D_0..D_n}_{f^[n]}(V_1..V_n)`` on finite spaces.

In finite dimensions the operator integral reduces to

    T = sum over index paths  f^[n](lam^0_{i0}, ..., lam^n_{in}) P^0_{i0} V_1 P^1_{i1} ... V_n P^n_{in},

and that eigenbasis form is what we evaluate.  Paths are never enumerated one by
one: a dynamic program propagates, for every multiset of visited eigenvalues,
the matrix of partial products indexed by (start index, current index).  The
divided difference depends on the path only through that multiset, so each
kernel value is looked up once per multiset.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass

import numpy as np

from .divided import get_cache
from .functions import ScalarFunction, bound_constant
from .operators import (
    DimensionError,
    HermitianOperator,
    SpectralTriple,
    as_matrix,
    op_norm,
    resolvent_power_norm,
    schatten_norm,
)

__all__ = [
    "COST_GUARD",
    "path_cost",
    "check_cost",
    "check_naive_cost",
    "GuardError",
    "MoiProblem",
    "PathLayout",
    "propagate",
    "PathStates",
    "MultisetLevels",
    "multiset_levels",
    "kernel_vector",
    "initial_states",
    "moi_eigenbasis",
    "moi_trace",
    "moi_trace_naive",
    "moi_quadrature",
    "QuadratureResult",
    "taylor_term",
    "taylor_remainder",
    "verify_added_weights",
    "verify_commutation_identities",
    "verify_trace_bound",
]

COST_GUARD = 1e8


class GuardError(RuntimeError):
    """A requested computation exceeds the configured cost guard."""


def _as_hermitian(D) -> HermitianOperator:
    return D if isinstance(D, HermitianOperator) else HermitianOperator(D)


@dataclass
class MoiProblem:
    bases: list
    arguments: list
    f: ScalarFunction

    def __post_init__(self):
        self.bases = [_as_hermitian(b) for b in self.bases]
        self.arguments = [as_matrix(v) for v in self.arguments]
        if len(self.bases) != len(self.arguments) + 1:
            raise ValueError("need exactly one more base than arguments")
        d = self.bases[0].dim
        if any(b.dim != d for b in self.bases) or any(v.shape != (d, d) for v in self.arguments):
            raise DimensionError("all operators must share one dimension")

    @property
    def n(self) -> int:
        return len(self.arguments)

    @property
    def dim(self) -> int:
        return self.bases[0].dim

    @classmethod
    def single(cls, D, arguments, f) -> "MoiProblem":
        D = _as_hermitian(D)
        return cls([D] * (len(arguments) + 1), list(arguments), f)


def path_cost(dim: int, n: int, width: int | None = None) -> float:
    """Work estimate of the multiset path sum: steps x multisets x matrix entries."""
    w = dim if width is None else width
    return float(n) * math.comb(w + n, n) * dim * dim


def check_cost(dim: int, n: int, width: int | None = None) -> None:
    cost = path_cost(dim, n, width)
    if cost > COST_GUARD:
        raise GuardError(f"path-sum cost {cost:.2e} (dim {dim}, order {n}) exceeds the cost guard {COST_GUARD:.0e}")


def check_naive_cost(dim: int, n: int) -> None:
    if float(dim) ** n > COST_GUARD:
        raise GuardError(f"naive path count {dim}^{n} exceeds the cost guard {COST_GUARD:.0e}")


class PathLayout:
    """Eigen-data of the distinct bases of a problem and the shared kernel cache.

    Distinct bases get consecutive blocks of a combined spectrum; identical
    bases share a block, so multisets over them merge.
    """

    def __init__(self, bases, f: ScalarFunction):
        self.f = f
        self.blocks: list = []
        self.slot_block: list = []
        for b in bases:
            for k, known in enumerate(self.blocks):
                if known is b or (known.dim == b.dim and np.array_equal(known.matrix, b.matrix)):
                    self.slot_block.append(k)
                    break
            else:
                self.blocks.append(b)
                self.slot_block.append(len(self.blocks) - 1)
        self.offsets = np.cumsum([0] + [b.dim for b in self.blocks])[:-1]
        spectrum = np.concatenate([b.eigenvalues for b in self.blocks])
        self.cache = get_cache(f, spectrum)
        # raw combined index -> distinct-value index
        self.maps = [self.cache.index_map[off:off + b.dim] for off, b in zip(self.offsets, self.blocks)]
        self.width = len(self.cache.values)

    def basis(self, slot: int) -> np.ndarray:
        return self.blocks[self.slot_block[slot]].eigenvectors

    def imap(self, slot: int) -> np.ndarray:
        return self.maps[self.slot_block[slot]]

    def transformed(self, arguments) -> list:
        """Arguments in the eigenbases of the neighbouring slots."""
        return [self.basis(k).conj().T @ v @ self.basis(k + 1) for k, v in enumerate(arguments)]

    def closure(self, last_slot: int) -> np.ndarray:
        return self.basis(last_slot).conj().T @ self.basis(0)


class MultisetLevels:
    """Enumeration of all multisets over ``width`` values, level by level.

    Level ``L`` lists the count vectors of size ``L``; ``succ(L)[m, v]`` is the
    index in level ``L+1`` of multiset ``m`` plus one copy of value ``v``.
    """

    def __init__(self, width: int):
        self.width = width
        self._keys = [None, [tuple(int(v == u) for u in range(width)) for v in range(width)]]
        self._ids = [None, {k: i for i, k in enumerate(self._keys[1])}]
        self._succ: list = [None]
        self._lock = threading.Lock()

    def _grow(self, L: int) -> None:
        with self._lock:
            while len(self._keys) <= L:
                prev = self._keys[-1]
                keys, ids = [], {}
                succ = np.empty((len(prev), self.width), dtype=np.intp)
                for m, key in enumerate(prev):
                    for v in range(self.width):
                        nk = key[:v] + (key[v] + 1,) + key[v + 1:]
                        idx = ids.get(nk)
                        if idx is None:
                            idx = ids[nk] = len(keys)
                            keys.append(nk)
                        succ[m, v] = idx
                self._succ.append(succ)
                self._keys.append(keys)
                self._ids.append(ids)

    def keys(self, L: int) -> list:
        self._grow(L)
        return self._keys[L]

    def index(self, key: tuple) -> int:
        L = sum(key)
        self._grow(L)
        return self._ids[L][key]

    def succ(self, L: int) -> np.ndarray:
        self._grow(L + 1)
        return self._succ[L]

    def count(self, L: int) -> int:
        return len(self.keys(L))


_LEVELS: dict = {}
_LEVELS_LOCK = threading.Lock()


def multiset_levels(width: int) -> MultisetLevels:
    with _LEVELS_LOCK:
        lv = _LEVELS.get(width)
        if lv is None:
            lv = _LEVELS[width] = MultisetLevels(width)
    return lv


@dataclass
class PathStates:
    """``data[m, i0, j]``: summed products over paths from start index ``i0`` to
    current index ``j`` whose visited eigenvalues form multiset ``m`` of the level."""

    levels: MultisetLevels
    level: int
    data: np.ndarray

    def items(self):
        """``(count vector, matrix)`` pairs with a nonzero matrix."""
        keys = self.levels.keys(self.level)
        nz = np.flatnonzero(np.abs(self.data).reshape(len(keys), -1).max(axis=1))
        for m in nz:
            yield keys[m], self.data[m]

    def zeros_like_next(self, ncol: int) -> "PathStates":
        n = self.levels.count(self.level + 1)
        return PathStates(self.levels, self.level + 1,
                          np.zeros((n, self.data.shape[1], ncol), dtype=complex))


def initial_states(imap, width: int) -> PathStates:
    """One state per start index: the multiset holding just that eigenvalue."""
    levels = multiset_levels(width)
    d = len(imap)
    data = np.zeros((width, d, d), dtype=complex)
    for i in range(d):
        data[imap[i], i, i] = 1.0
    return PathStates(levels, 1, data)


def propagate(states: PathStates, X: np.ndarray, imap, out: PathStates | None = None,
              coeff=1.0) -> PathStates:
    """Extend every path by one step with transition matrix ``X``.

    ``imap`` maps the new column index to its distinct-value index.  Results are
    accumulated (times ``coeff``) into ``out``.
    """
    ncol = X.shape[1]
    if out is None:
        out = states.zeros_like_next(ncol)
    elif out.level != states.level + 1:
        raise ValueError("accumulator is at the wrong level")
    P = states.data @ X
    if coeff != 1.0:
        P *= coeff
    succ = states.levels.succ(states.level)
    for j in range(ncol):
        out.data[succ[:, imap[j]], :, j] += P[:, :, j]
    return out


def kernel_vector(cache, levels: MultisetLevels, L: int) -> np.ndarray:
    """``f^[L-1]`` at every multiset of level ``L``."""
    store = cache.__dict__.setdefault("_level_vectors", {})
    vec = store.get(L)
    if vec is None:
        vec = store[L] = np.array([cache(k) for k in levels.keys(L)], dtype=complex)
    return vec


def _run_paths(p: MoiProblem):
    check_cost(p.dim, p.n)
    lay = PathLayout(p.bases, p.f)
    states = initial_states(lay.imap(0), lay.width)
    for k, X in enumerate(lay.transformed(p.arguments)):
        states = propagate(states, X, lay.imap(k + 1))
    return lay, states


def moi_eigenbasis(p: MoiProblem) -> np.ndarray:
    """The full operator ``T^{D_0..D_n}_{f^[n]}(V_1..V_n)``."""
    lay, states = _run_paths(p)
    kv = kernel_vector(lay.cache, states.levels, states.level)
    R = np.tensordot(kv, states.data, axes=1)
    return lay.basis(0) @ R @ lay.basis(p.n).conj().T


def moi_trace(p: MoiProblem) -> complex:
    """``tr T`` by closed-path contraction, without forming the operator."""
    lay, states = _run_paths(p)
    C = lay.closure(p.n)
    kv = kernel_vector(lay.cache, states.levels, states.level)
    w = np.einsum("mij,ji->m", states.data, C)
    return complex(kv @ w)


def moi_trace_naive(p: MoiProblem, chunk: int = 1 << 16) -> complex:
    """Reference trace: every closed path separately, kernel recomputed per path.

    Divided differences use the plain Newton recursion (vectorized over paths)
    with no memoization; this is the baseline the cached contraction is timed
    against.
    """
    if any(b is not p.bases[0] and not np.array_equal(b.matrix, p.bases[0].matrix) for b in p.bases):
        raise ValueError("the naive evaluator supports a single base only")
    check_naive_cost(p.dim, p.n)
    D = p.bases[0]
    lam, U = D.eigenvalues, D.eigenvectors
    Vt = [U.conj().T @ v @ U for v in p.arguments]
    d, n = p.dim, p.n
    deriv = np.array([[p.f.eval(x, k) / math.factorial(k) for k in range(n + 1)] for x in lam])
    total = 0.0 + 0.0j
    paths = itertools.product(range(d), repeat=n)
    while True:
        block = np.array(list(itertools.islice(paths, chunk)), dtype=int)
        if block.size == 0:
            break
        idx = np.concatenate([block, block[:, :1]], axis=1)  # i_0 .. i_{n-1}, i_0
        weight = np.ones(len(block), dtype=complex)
        for k in range(n):
            weight *= Vt[k][idx[:, k], idx[:, k + 1]]
        order = np.argsort(lam[idx], axis=1)
        sidx = np.take_along_axis(idx, order, axis=1)
        x = lam[sidx]
        col = deriv[sidx, 0].astype(complex)
        for L in range(1, n + 1):
            num = col[:, 1:] - col[:, :-1]
            den = x[:, L:] - x[:, :-L]
            conf = den == 0
            safe = np.where(conf, 1.0, den)
            col = np.where(conf, deriv[sidx[:, :-L], L], num / safe)
        total += np.sum(weight * col[:, 0])
    return complex(total)


# -- quadrature of the defining integral -------------------------------------------


@dataclass
class QuadratureResult:
    matrix: np.ndarray
    error: float
    nodes: int = 0


def _fourier_cutoff(f: ScalarFunction, rel: float = 1e-14) -> float:
    peak = max(abs(f.fourier(t)) for t in np.linspace(0.0, 4.0 / f.scale, 41))
    t = 1.0 / f.scale
    while abs(f.fourier(t)) > rel * peak or abs(f.fourier(1.1 * t)) > rel * peak:
        t *= 1.1
    return t


def _simplex_rule(n: int, q: int):
    """Collapsed-coordinate Gauss-Legendre rule on the simplex; mass ``1/n!``."""
    if n == 0:
        return np.ones((1, 1)), np.ones(1)
    x, w = np.polynomial.legendre.leggauss(q)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    pts, wts = [], []
    for combo in itertools.product(range(q), repeat=n):
        u = x[list(combo)]
        wt = np.prod(w[list(combo)])
        s, rest = [], 1.0
        for k in range(n):
            s.append(rest * u[k])
            wt *= rest  # Jacobian factor (1-u_1)...(1-u_{k-1})
            rest *= 1.0 - u[k]
        pts.append([rest] + s)
        wts.append(wt)
    return np.array(pts), np.array(wts)


def _time_rule(T: float, panels: int, order: int = 16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-T, T, panels + 1)
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        ts.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(ts), np.concatenate(ws)


def _quadrature_once(p: MoiProblem, lay: PathLayout, q: int, panels: int, T: float):
    n = p.n
    ts, wt = _time_rule(T, panels)
    ghat = (1j * ts) ** n * np.asarray(p.f.fourier(ts), dtype=complex) * wt
    Vt = lay.transformed(p.arguments)
    lams = [lay.blocks[lay.slot_block[k]].eigenvalues for k in range(n + 1)]
    spts, swts = _simplex_rule(n, q)
    R = np.zeros((p.dim, p.dim), dtype=complex)
    for s, ws in zip(spts, swts):
        A = np.exp(1j * np.outer(ts * s[0], lams[0]))[:, :, None] * np.eye(p.dim)[None]
        for k in range(n):
            A = (A @ Vt[k]) * np.exp(1j * np.outer(ts * s[k + 1], lams[k + 1]))[:, None, :]
        R += ws * np.tensordot(ghat, A, axes=(0, 0))
    return lay.basis(0) @ R @ lay.basis(n).conj().T, len(spts) * len(ts)


def moi_quadrature(p: MoiProblem, q: int = 10, panels: int | None = None) -> QuadratureResult:
    """The defining simplex-times-line integral, evaluated by quadrature.

    Gauss-Legendre in collapsed simplex coordinates and composite Gauss-Legendre
    in ``t`` on the range where the Fourier transform exceeds ``1e-14`` of its
    peak.  The error estimate is the change under a finer rule.  Only the
    Gaussian kinds, whose transforms are available in closed form, are
    supported; ``n <= 3``.
    """
    if p.n > 3:
        raise GuardError("simplex quadrature is limited to n <= 3")
    if not p.f.is_gaussian_kind:
        raise ValueError("quadrature needs a closed-form Fourier transform (Gaussian kinds)")
    if not any(np.any(v) for v in p.arguments) and p.n:
        return QuadratureResult(np.zeros((p.dim, p.dim), dtype=complex), 0.0, 0)
    lay = PathLayout(p.bases, p.f)
    T = _fourier_cutoff(p.f)
    lam_max = max(float(np.max(np.abs(b.eigenvalues))) for b in lay.blocks)
    if panels is None:
        panels = max(8, int(math.ceil(T * (lam_max + 1.0) / 1.5)))
    coarse, _ = _quadrature_once(p, lay, q, panels, T)
    fine, nodes = _quadrature_once(p, lay, q + 6, int(math.ceil(1.5 * panels)), T)
    return QuadratureResult(fine, float(np.max(np.abs(fine - coarse))), nodes)


# -- Taylor expansion of the spectral action ------------------------------------------


def taylor_term(D, V, f: ScalarFunction, n: int) -> complex:
    """``tr T^D_{f^[n]}(V, ..., V)``, the order-``n`` Taylor coefficient."""
    D = _as_hermitian(D.D if isinstance(D, SpectralTriple) else D)
    if n == 0:
        return complex(np.sum(f.eval(D.eigenvalues)))
    return moi_trace(MoiProblem.single(D, [V] * n, f))


def taylor_remainder(T: SpectralTriple, V, f: ScalarFunction, K: int) -> complex:
    """``tr T^{D+V, D, ..., D}_{f^[K+1]}(V, ..., V)``."""
    V = as_matrix(V)
    if op_norm(V - V.conj().T) > 1e-10 * max(1.0, op_norm(V)):
        raise ValueError("V must be Hermitian")
    DV = HermitianOperator(T.D.matrix + V)
    return moi_trace(MoiProblem([DV] + [T.D] * (K + 1), [V] * (K + 1), f))


def verify_commutation_identities(D, arguments, a, f: ScalarFunction) -> dict:
    """Residuals of moving an algebra element ``a`` through ``T^D_{f^[n]}(V_1..V_n)``.

    ``inner[j]``: ``T(..V_j, a V_{j+1}..) - T(..V_j a, V_{j+1}..) - T_{f^[n+1]}(..V_j, [D,a], V_{j+1}..)``;
    ``left``: ``T(a V_1, ..) - a T(..) - T_{f^[n+1]}([D,a], V_1, ..)``;
    ``right``: ``T(..) a - T(.., V_n a) - T_{f^[n+1]}(.., V_n, [D,a])``.
    """
    D = _as_hermitian(D)
    Vs = [as_matrix(v) for v in arguments]
    a = as_matrix(a)
    ca = D.matrix @ a - a @ D.matrix
    n = len(Vs)

    def T(args):
        return moi_eigenbasis(MoiProblem.single(D, args, f))

    base = T(Vs)
    inner = []
    for j in range(1, n):
        lhs = T(Vs[:j] + [a @ Vs[j]] + Vs[j + 1:]) - T(Vs[:j - 1] + [Vs[j - 1] @ a] + Vs[j:])
        rhs = T(Vs[:j] + [ca] + Vs[j:])
        inner.append(float(np.max(np.abs(lhs - rhs))))
    left = T([a @ Vs[0]] + Vs[1:]) - a @ base - T([ca] + Vs)
    right = base @ a - T(Vs[:-1] + [Vs[-1] @ a]) - T(Vs + [ca])
    return {
        "n": n,
        "inner": inner,
        "left": float(np.max(np.abs(left))),
        "right": float(np.max(np.abs(right))),
        "max": max(inner + [float(np.max(np.abs(left))), float(np.max(np.abs(right)))]),
    }


# -- the added-weights identity and the trace-class bound ------------------------------


def _resolvent(D: HermitianOperator, j: int) -> np.ndarray:
    if j == 0:
        return np.eye(D.dim, dtype=complex)
    return D.apply_function(lambda x: (x - 1j) ** (-j))


def _compositions(total: int, parts: int):
    """Tuples ``(j_0, ..., j_k)`` with ``j_0 >= 0``, the rest ``>= 1``, summing to ``total``."""
    for j0 in range(total + 1):
        rest = total - j0
        if parts == 0:
            if rest == 0:
                yield (j0,)
            continue
        for cuts in itertools.combinations(range(1, rest), parts - 1):
            bounds = (0,) + cuts + (rest,)
            if rest >= parts:
                yield (j0,) + tuple(b - a for a, b in zip(bounds[:-1], bounds[1:]))


def added_weights_rhs(p: MoiProblem, s: int) -> np.ndarray:
    """Right-hand side of the weighted re-expansion of ``T_{f^[n]}``."""
    n = p.n
    out = np.zeros((p.dim, p.dim), dtype=complex)
    for k in range(min(s, n) + 1):
        head = MoiProblem(p.bases[: n - k + 1], p.arguments[: n - k], p.f.times_u(s - k))
        Th = moi_eigenbasis(head)
        for js in _compositions(s, k):
            term = Th @ _resolvent(p.bases[n - k], js[0])
            for idx, j in enumerate(js[1:]):
                slot = n - k + 1 + idx
                term = term @ p.arguments[slot - 1] @ _resolvent(p.bases[slot], j)
            out += (-1) ** k * term
    return out


def verify_added_weights(p: MoiProblem, s: int) -> dict:
    lhs = moi_eigenbasis(p)
    rhs = added_weights_rhs(p, s)
    return {
        "n": p.n,
        "s": s,
        "deviation": float(np.max(np.abs(lhs - rhs))),
        "scale": float(np.max(np.abs(lhs))),
    }


def verify_trace_bound(T: SpectralTriple, p: MoiProblem, V=None) -> dict:
    """Compare ``||T_{f^[n]}(V_1..V_n)||_1`` with the trace-class bound.

    Without ``V`` the problem is evaluated with every base equal to ``D``; with
    ``V`` the first base is ``D + V`` and the bound acquires ``(1+||V||)^(2s)``.
    """
    s, n = T.s, p.n
    if V is None:
        prob = MoiProblem.single(T.D, p.arguments, p.f)
        extra = 1.0
    else:
        V = as_matrix(V)
        DV = HermitianOperator(T.D.matrix + V)
        prob = MoiProblem([DV] + [T.D] * n, p.arguments, p.f)
        extra = (1.0 + op_norm(V)) ** (2 * s)
    norms = [op_norm(v) for v in p.arguments]
    lhs = schatten_norm(moi_eigenbasis(prob), 1)
    c = bound_constant(p.f, s, n)
    bound = c * float(np.prod(norms)) * resolvent_power_norm(T) * extra
    return {
        "n": n,
        "s": s,
        "perturbed": V is not None,
        "trace_norm": lhs,
        "bound": bound,
        "c_sn": c,
        "ratio": lhs / bound if bound > 0 else (0.0 if lhs == 0 else math.inf),
        "holds": lhs <= bound * (1.0 + 1e-12) + 1e-300,
    }
