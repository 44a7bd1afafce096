"""The bracket, the Hochschild cochains phi_n, psi_{2k-1}, and the operators b, B, B_0.

Cochains are evaluated on demand at tuples of matrices.  ``b``, ``B`` and
``B_0`` act on any :class:`Cochain`, so every identity between them is
checked with one implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .functions import ScalarFunction
from .moi import PathLayout, PathStates, check_cost, initial_states, multiset_levels, propagate
from .operators import SpectralTriple, as_matrix, op_norm

__all__ = [
    "CochainContext",
    "Cochain",
    "Phi",
    "Combination",
    "hochschild_b",
    "connes_B",
    "B0",
    "bracket",
    "phi",
    "psi",
    "psi_tilde",
    "psi_cochain",
    "psi_tilde_scale",
    "identity_tolerance",
    "psi_tilde_growth",
]


@dataclass
class CochainContext:
    """A triple, a function and the largest cochain order that will be used."""

    triple: SpectralTriple
    f: ScalarFunction
    N: int = 14
    _layout: PathLayout | None = field(default=None, init=False, repr=False)
    _weights: dict = field(default_factory=dict, init=False, repr=False)
    _closing: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def D(self):
        return self.triple.D

    @property
    def dim(self) -> int:
        return self.triple.dim

    @property
    def layout(self) -> PathLayout:
        if self._layout is None:
            self._layout = PathLayout([self.D], self.f)
        return self._layout

    def to_eigenbasis(self, X) -> np.ndarray:
        U = self.D.eigenvectors
        return U.conj().T @ as_matrix(X) @ U

    def start(self) -> PathStates:
        lay = self.layout
        return initial_states(lay.imap(0), lay.width)

    def step(self, states: PathStates, Xt, out=None, coeff=1.0) -> PathStates:
        """Propagate by an eigenbasis matrix ``Xt``."""
        return propagate(states, Xt, self.layout.imap(0), out, coeff)

    def cyclic_weight(self, multiset: tuple):
        """``G(M) = sum_v M(v) f^[|M|](M + e_v)``: the kernel of the cyclic sum."""
        g = self._weights.get(multiset)
        if g is None:
            cache = self.layout.cache
            g = 0.0
            for v, m in enumerate(multiset):
                if m:
                    key = list(multiset)
                    key[v] += 1
                    g = g + m * cache(tuple(key))
            self._weights[multiset] = g
        return g

    def closing_weights(self, L: int) -> np.ndarray:
        """``W[m, i0] = G(m - e_{i0})`` over the multisets ``m`` of level ``L``."""
        W = self._closing.get(L)
        if W is None:
            imap = self.layout.imap(0)
            keys = multiset_levels(self.layout.width).keys(L)
            W = np.zeros((len(keys), len(imap)), dtype=complex)
            for m, key in enumerate(keys):
                for i0, v in enumerate(imap):
                    if key[v]:
                        ms = list(key)
                        ms[v] -= 1
                        W[m, i0] = self.cyclic_weight(tuple(ms))
            self._closing[L] = W
        return W

    def close(self, states: PathStates) -> complex:
        """Sum the closed paths in ``states`` against the cyclic kernel."""
        if states.level < 2:
            return 0.0 + 0.0j  # zero-length chains carry no bracket
        W = self.closing_weights(states.level)
        diag = np.diagonal(states.data, axis1=1, axis2=2)
        return complex(np.sum(diag * W))


def bracket(ctx: CochainContext, *Vs) -> complex:
    """``<V_1, ..., V_n> = sum_j tr T^D_{f^[n]}(V_j, ..., V_n, V_1, ..., V_{j-1})``."""
    if not Vs:
        raise ValueError("the bracket needs at least one argument")
    if len(Vs) > ctx.N + 1:
        raise ValueError(f"bracket order {len(Vs)} exceeds the context order {ctx.N}")
    check_cost(ctx.dim, len(Vs), ctx.layout.width)
    states = ctx.start()
    for V in Vs:
        Vm = as_matrix(V)
        if Vm.shape != (ctx.dim, ctx.dim):
            raise ValueError("bracket argument has the wrong dimension")
        states = ctx.step(states, ctx.to_eigenbasis(Vm))
    return ctx.close(states)


def phi(ctx: CochainContext, n: int, *args) -> complex:
    """``phi_n(a_0..a_n) = <a_0 [D,a_1], [D,a_2], ..., [D,a_n]>``; ``phi_0 = 0``."""
    if len(args) != n + 1:
        raise ValueError(f"phi_{n} takes {n + 1} arguments, got {len(args)}")
    if n == 0:
        return 0.0 + 0.0j
    T = ctx.triple
    mats = [as_matrix(a) for a in args]
    first = mats[0] @ T.commutator(mats[1])
    return bracket(ctx, first, *[T.commutator(a) for a in mats[2:]])


# -- cochains as evaluators ------------------------------------------------------------


class Cochain:
    """An ``(order+1)``-linear functional evaluated on matrix tuples."""

    order: int
    ctx: CochainContext

    def __call__(self, *args) -> complex:
        if len(args) != self.order + 1:
            raise ValueError(f"cochain of order {self.order} takes {self.order + 1} arguments")
        return self.evaluate([as_matrix(a) for a in args])

    def evaluate(self, args) -> complex:  # pragma: no cover - abstract
        raise NotImplementedError

    def __add__(self, other):
        return Combination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return Combination([(1.0, self), (-1.0, other)])

    def __rmul__(self, c):
        return Combination([(c, self)])


class Phi(Cochain):
    def __init__(self, ctx: CochainContext, n: int):
        self.ctx, self.order = ctx, n

    def evaluate(self, args):
        return phi(self.ctx, self.order, *args)

    def __repr__(self):
        return f"phi_{self.order}"


class Combination(Cochain):
    def __init__(self, terms):
        terms = list(terms)
        orders = {c.order for _, c in terms}
        if len(orders) != 1:
            raise ValueError(f"cannot combine cochains of orders {sorted(orders)}")
        self.terms = terms
        self.order = orders.pop()
        self.ctx = terms[0][1].ctx

    def evaluate(self, args):
        return sum(c * ch.evaluate(args) for c, ch in self.terms)


class _B0(Cochain):
    def __init__(self, inner: Cochain):
        self.inner, self.ctx, self.order = inner, inner.ctx, inner.order - 1

    def evaluate(self, args):
        return self.inner.evaluate([self.ctx.triple.identity] + list(args))


class _B(Cochain):
    def __init__(self, inner: Cochain):
        self.inner, self.ctx, self.order = inner, inner.ctx, inner.order - 1

    def evaluate(self, args):
        n = self.order
        one = self.ctx.triple.identity
        total = 0.0 + 0.0j
        for j in range(n + 1):
            rot = list(args[j:]) + list(args[:j])
            total += (-1) ** (n * j) * self.inner.evaluate([one] + rot)
        return total


class _Hochschild(Cochain):
    def __init__(self, inner: Cochain):
        self.inner, self.ctx, self.order = inner, inner.ctx, inner.order + 1

    def evaluate(self, args):
        n = self.inner.order
        total = 0.0 + 0.0j
        for j in range(n + 1):
            merged = list(args[:j]) + [args[j] @ args[j + 1]] + list(args[j + 2:])
            total += (-1) ** j * self.inner.evaluate(merged)
        total += (-1) ** (n + 1) * self.inner.evaluate([args[n + 1] @ args[0]] + list(args[1:n + 1]))
        return total


def B0(c: Cochain) -> Cochain:
    """``B_0 c(a_0..a_{n-1}) = c(1, a_0, ..., a_{n-1})``."""
    if c.order < 1:
        raise ValueError("B_0 needs a cochain of order >= 1")
    return _B0(c)


def connes_B(c: Cochain) -> Cochain:
    """``B c(a_0..a_n) = sum_j (-1)^{nj} c(1, a_j, ..., a_{j-1})`` for ``c`` of order ``n+1``."""
    if c.order < 1:
        raise ValueError("B needs a cochain of order >= 1")
    return _B(c)


def hochschild_b(c: Cochain) -> Cochain:
    """Hochschild coboundary, raising the order by one."""
    return _Hochschild(c)


def psi_cochain(ctx: CochainContext, k: int) -> Cochain:
    """``psi_{2k-1} = phi_{2k-1} - 1/2 B_0 phi_{2k}``."""
    if k < 1:
        raise ValueError("psi is defined for k >= 1")
    return Combination([(1.0, Phi(ctx, 2 * k - 1)), (-0.5, B0(Phi(ctx, 2 * k)))])


def psi_tilde_scale(k: int) -> float:
    """``(-1)^{k-1} (k-1)! / (2k-1)!``."""
    return (-1) ** (k - 1) * math.factorial(k - 1) / math.factorial(2 * k - 1)


def psi(ctx: CochainContext, k: int, *args) -> complex:
    return psi_cochain(ctx, k)(*args)


def psi_tilde(ctx: CochainContext, k: int, *args) -> complex:
    return psi_tilde_scale(k) * psi(ctx, k, *args)


def identity_tolerance(ctx: CochainContext, n: int, args, base: float = 1e-12) -> float:
    """Absolute tolerance for an identity between order-``n`` cochain values.

    Scales ``base`` by ``n * dim * max||a_j|| * max||[D, a_j]||`` because the
    alternating sums add that many rounding contributions.
    """
    mats = [as_matrix(a) for a in args]
    a_max = max(op_norm(a) for a in mats)
    c_max = max(op_norm(ctx.triple.commutator(a)) for a in mats)
    return base * max(n, 1) * ctx.dim * max(a_max, 1.0) * max(c_max, 1.0)


def psi_tilde_growth(ctx: CochainContext, tuples_by_k: dict) -> dict:
    """``k! |psi~_{2k+1}(a_0..a_{2k+1})|`` per ``k``; bounded by ``C_Sigma`` when the
    cocycle grows as an entire one.  ``tuples_by_k[k]`` is a list of argument lists."""
    out = {}
    for k, tuples in sorted(tuples_by_k.items()):
        vals = [math.factorial(k) * abs(psi_tilde(ctx, k + 1, *args)) for args in tuples]
        out[k] = vals
    return out
