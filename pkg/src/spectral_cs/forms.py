"""Exact universal differential forms over named generators.

A word is a tuple of tokens:

* ``("m", mono)``   an algebra element, ``mono`` a tuple of generator names;
* ``("d", mono)``   its differential;
* ``("A", name)``   an opaque one-form (a connection);
* ``("dA", name)``  the differential of an opaque one-form.

A :class:`Form` maps ``(word, t_exponent)`` to an exact ``Fraction``.  Words are
kept in left-normal form: adjacent algebra elements are merged and an algebra
element never follows a ``d`` token, using ``d(p) q = d(pq) - p dq``.  Products
under a single ``d`` are kept as one letter (``d(ab)`` is atomic), which is the
shape ``a_0 da_1 ... da_n`` that cochains are evaluated on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

__all__ = [
    "Form",
    "generator",
    "one",
    "opaque",
    "t_var",
    "unitary_relations",
    "chern_simons",
    "curvature",
    "curvature_power",
    "two_by_two_expansion",
    "alpha_beta_sum",
    "IndexTriple",
    "enumerate_index_sets",
    "index_word_sum",
    "token_degree",
    "word_degree",
]

_DEG = {"m": 0, "d": 1, "A": 1, "dA": 2}


def token_degree(tok) -> int:
    return _DEG[tok[0]]


def word_degree(word) -> int:
    return sum(_DEG[t[0]] for t in word)


def _reduce_mono(mono: tuple, relations: frozenset) -> tuple:
    if not relations:
        return mono
    out: list = []
    for g in mono:
        if out and (out[-1], g) in relations:
            out.pop()
        else:
            out.append(g)
    return tuple(out)


@lru_cache(maxsize=200_000)
def _normalize_word(word: tuple, relations: frozenset) -> tuple:
    """Left-normal form of one word, as a tuple of ``(word, integer coeff)``."""
    result: dict = {}
    work = [(word, 1)]
    while work:
        w, c = work.pop()
        w = list(w)
        i = 0
        while i < len(w):
            kind, val = w[i]
            if kind in ("m", "d"):
                red = _reduce_mono(val, relations)
                if red != val:
                    w[i] = (kind, red)
                    val = red
                if not val:
                    if kind == "d":
                        w = None  # d(1) = 0
                        break
                    del w[i]
                    continue
            if kind == "m" and i > 0:
                pk, pv = w[i - 1]
                if pk == "m":
                    w[i - 1:i + 1] = [("m", pv + val)]
                    i -= 1
                    continue
                if pk == "d":
                    # d(p) q = d(pq) - p dq
                    a = w[:i - 1] + [("d", pv + val)] + w[i + 1:]
                    b = w[:i - 1] + [("m", pv), ("d", val)] + w[i + 1:]
                    work.append((tuple(a), c))
                    work.append((tuple(b), -c))
                    w = None
                    break
            i += 1
        if w is None:
            continue
        key = tuple(w)
        result[key] = result.get(key, 0) + c
    return tuple((k, v) for k, v in result.items() if v)


def _d_token(tok):
    kind, val = tok
    if kind == "m":
        return ("d", val)
    if kind == "A":
        return ("dA", val)
    return None


class Form:
    """An exact linear combination of normalized words with polynomial-in-t coefficients."""

    __slots__ = ("terms", "relations")

    def __init__(self, terms=None, relations=frozenset(), *, normalized=False):
        self.relations = frozenset(relations)
        if normalized:
            self.terms = {k: Fraction(v) for k, v in (terms or {}).items()}
            return
        acc: dict = {}
        for (word, e), c in (terms or {}).items():
            c = Fraction(c)
            if c == 0:
                continue
            for nw, nc in _normalize_word(tuple(word), self.relations):
                k = (nw, e)
                acc[k] = acc.get(k, 0) + c * nc
        self.terms = {k: v for k, v in acc.items() if v != 0}

    # -- algebra --------------------------------------------------------------------

    def _rel(self, other) -> frozenset:
        return self.relations | other.relations

    def __add__(self, other):
        other = _lift(other)
        rel = self._rel(other)
        acc = dict(self.terms)
        for k, v in other.terms.items():
            acc[k] = acc.get(k, 0) + v
        if rel != self.relations or rel != other.relations:
            return Form(acc, rel)
        return Form({k: v for k, v in acc.items() if v != 0}, rel, normalized=True)

    __radd__ = __add__

    def __neg__(self):
        return Form({k: -v for k, v in self.terms.items()}, self.relations, normalized=True)

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                return Form({}, self.relations, normalized=True)
            return Form({k: v * other for k, v in self.terms.items()}, self.relations, normalized=True)
        other = _lift(other)
        rel = self._rel(other)
        acc: dict = {}
        for (w1, e1), c1 in self.terms.items():
            for (w2, e2), c2 in other.terms.items():
                for nw, nc in _normalize_word(w1 + w2, rel):
                    k = (nw, e1 + e2)
                    acc[k] = acc.get(k, 0) + c1 * c2 * nc
        return Form({k: v for k, v in acc.items() if v != 0}, rel, normalized=True)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self * other
        return _lift(other) * self

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not defined")
        out = one(self.relations)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = _lift(other)
        return isinstance(other, Form) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def d(self) -> "Form":
        """The graded derivation ``d`` with ``d^2 = 0``."""
        acc: dict = {}
        for (w, e), c in self.terms.items():
            sign = 1
            for i, tok in enumerate(w):
                dt = _d_token(tok)
                if dt is not None:
                    nw = w[:i] + (dt,) + w[i + 1:]
                    for kw, kc in _normalize_word(nw, self.relations):
                        k = (kw, e)
                        acc[k] = acc.get(k, 0) + sign * c * kc
                if _DEG[tok[0]] % 2:
                    sign = -sign
        return Form({k: v for k, v in acc.items() if v != 0}, self.relations, normalized=True)

    # -- t handling -------------------------------------------------------------------

    def integrate_t(self) -> "Form":
        """Exact ``int_0^1 dt`` of the polynomial coefficients."""
        acc: dict = {}
        for (w, e), c in self.terms.items():
            acc[(w, 0)] = acc.get((w, 0), 0) + Fraction(c) / (e + 1)
        return Form({k: v for k, v in acc.items() if v != 0}, self.relations, normalized=True)

    def at_t(self, value=1) -> "Form":
        value = Fraction(value)
        acc: dict = {}
        for (w, e), c in self.terms.items():
            acc[(w, 0)] = acc.get((w, 0), 0) + c * value**e
        return Form({k: v for k, v in acc.items() if v != 0}, self.relations, normalized=True)

    def t_derivative(self) -> "Form":
        acc: dict = {}
        for (w, e), c in self.terms.items():
            if e:
                acc[(w, e - 1)] = acc.get((w, e - 1), 0) + c * e
        return Form(acc, self.relations, normalized=True)

    @property
    def t_free(self) -> bool:
        return all(e == 0 for (_, e) in self.terms)

    # -- structure -----------------------------------------------------------------------

    @property
    def degrees(self) -> set:
        return {word_degree(w) for (w, _) in self.terms}

    @property
    def degree(self) -> int:
        degs = self.degrees
        if len(degs) > 1:
            raise ValueError(f"form is not homogeneous (degrees {sorted(degs)})")
        return degs.pop() if degs else 0

    def homogeneous_part(self, n: int) -> "Form":
        return Form({k: v for k, v in self.terms.items() if word_degree(k[0]) == n},
                    self.relations, normalized=True)

    def words(self):
        return sorted(self.terms.items(), key=lambda kv: _sort_key(kv[0]))

    def substitute(self, mapping: dict) -> "Form":
        """Replace opaque one-forms by forms, e.g. ``A -> sum_j a_j db_j``."""
        relations = self.relations.union(*[m.relations for m in mapping.values()])
        total = Form({}, relations, normalized=True)
        dcache = {}
        for (w, e), c in self.terms.items():
            piece = Form({((), e): c}, relations)
            for tok in w:
                kind, val = tok
                if kind == "A" and val in mapping:
                    piece = piece * mapping[val]
                elif kind == "dA" and val in mapping:
                    if val not in dcache:
                        dcache[val] = mapping[val].d()
                    piece = piece * dcache[val]
                else:
                    piece = piece * Form({((tok,), 0): 1}, relations)
            total = total + piece
        return total

    def with_relations(self, relations) -> "Form":
        return Form(self.terms, self.relations | frozenset(relations))

    # -- printing ----------------------------------------------------------------------

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for (w, e), c in self.words():
            body = _word_str(w)
            if e:
                body = ("t" if e == 1 else f"t^{e}") + ("" if body == "1" else " " + body)
            mag = abs(c)
            if mag == 1 and body != "1":
                text = body
            else:
                text = f"{mag}" if body == "1" else f"{mag} {body}"
            parts.append(("- " if c < 0 else "+ ") + text)
        s = " ".join(parts)
        return s[2:] if s.startswith("+ ") else "-" + s[1:]

    __repr__ = __str__


def _sort_key(key):
    w, e = key
    return (word_degree(w), len(w), e, _word_str(w))


def _mono_str(mono: tuple) -> str:
    if all(len(g) == 1 for g in mono):
        return "".join(mono)
    return "*".join(mono)


def _tok_str(tok) -> str:
    kind, val = tok
    if kind == "m":
        return _mono_str(val)
    if kind == "d":
        inner = _mono_str(val)
        return f"d{inner}" if len(val) == 1 else f"d({inner})"
    if kind == "A":
        return val
    return f"d{val}"


def _word_str(w) -> str:
    if not w:
        return "1"
    out = []
    for tok, grp in itertools.groupby(w):
        n = len(list(grp))
        s = _tok_str(tok)
        if n == 1:
            out.append(s)
        elif tok[0] == "A":
            out.append(f"{s}^{n}")
        else:
            out.append(f"({s})^{n}")
    return " ".join(out)


def _lift(x) -> Form:
    if isinstance(x, Form):
        return x
    if isinstance(x, (int, Fraction)):
        return Form({((), 0): x}) if x else Form({}, normalized=True)
    raise TypeError(f"cannot use {type(x).__name__} as a form")


def generator(name, relations=frozenset()) -> Form:
    """The degree-0 form of a generator, or of a product when ``name`` is a tuple."""
    mono = tuple(name) if isinstance(name, tuple) else (name,)
    return Form({((("m", mono),), 0): 1}, relations)


def one(relations=frozenset()) -> Form:
    return Form({((), 0): 1}, relations, normalized=True)


def opaque(name: str = "A") -> Form:
    """A symbolic one-form with no internal structure."""
    return Form({((("A", name),), 0): 1}, normalized=True)


def t_var(relations=frozenset()) -> Form:
    return Form({((), 1): 1}, relations, normalized=True)


def unitary_relations(u: str, u_star: str) -> frozenset:
    """Relations ``u u* = u* u = 1``."""
    return frozenset({(u, u_star), (u_star, u)})


# -- Chern-Simons and curvature ----------------------------------------------------------


def curvature(A: Form) -> Form:
    return A.d() + A * A


def curvature_power(A: Form, k: int) -> Form:
    """``(dA + A^2)^k``."""
    return curvature(A) ** k


def curvature_t(A: Form) -> Form:
    """``F_t = t dA + t^2 A^2``."""
    t = t_var(A.relations)
    return t * A.d() + t * t * (A * A)


def chern_simons(A: Form, k: int) -> Form:
    """``cs_{2k-1}(A) = int_0^1 A F_t^{k-1} dt``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not A.t_free:
        raise ValueError("A must not depend on t")
    return (A * curvature_t(A) ** (k - 1)).integrate_t()


# -- the 2x2 matrix expansion ---------------------------------------------------------------


def two_by_two_expansion(A: Form, n: int) -> Form:
    """``(A 0) M^{n-1} e_1`` with ``M = [[A + dA, -A], [dA, -A]]``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    dA = A.d()
    r1, r2 = A, Form({}, A.relations, normalized=True)
    for _ in range(n - 1):
        r1, r2 = r1 * (A + dA) + r2 * dA, -(r1 * A) - r2 * A
    return r1


_ALPHA = ((Fraction(1), Fraction(-1)), (Fraction(0), Fraction(-1)))
_BETA = ((Fraction(1), Fraction(0)), (Fraction(1), Fraction(0)))


def _matmul2(x, y):
    return tuple(tuple(sum(x[i][k] * y[k][j] for k in range(2)) for j in range(2)) for i in range(2))


def alpha_beta_sum(A: Form, K: int) -> Form:
    """``sum_{n=1}^K e_1^t (alpha A + beta dA)^{n-1} e_1`` by brute-force expansion."""
    dA = A.d()
    total = Form({}, A.relations, normalized=True)
    for n in range(1, K + 1):
        for letters in itertools.product((0, 1), repeat=n - 1):
            m = ((Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
            for b in letters:
                m = _matmul2(m, _BETA if b else _ALPHA)
            coeff = m[0][0]
            if coeff == 0:
                continue
            w = one(A.relations)
            for b in letters:
                w = w * (dA if b else A)
            total = total + coeff * w
    return total


@dataclass(frozen=True)
class IndexTriple:
    """``(v, w, p)`` indexing the word ``A A^{2 v_1} (dA)^{w_1} ... A^{2 v_m} (dA)^{w_m} A^p``."""

    v: tuple
    w: tuple
    p: int

    @property
    def m(self) -> int:
        return len(self.w)

    @property
    def weight(self) -> int:
        return 2 * sum(self.v) + sum(self.w) + self.p

    @property
    def coefficient(self) -> Fraction:
        return Fraction(1, self.weight + 1)

    def tail_word(self, name: str = "A") -> tuple:
        """The word without its leading ``A``."""
        out = []
        for vi, wi in zip(self.v, self.w):
            out += [("A", name)] * (2 * vi) + [("dA", name)] * wi
        out += [("A", name)] * self.p
        return tuple(out)

    def word(self, name: str = "A") -> tuple:
        return (("A", name),) + self.tail_word(name)

    def form(self, name: str = "A") -> Form:
        return Form({(self.word(name), 0): 1}, normalized=True)


def _triples(limit_fn, bound):
    """All triples with ``limit_fn(|v|, |w|, p) < bound``; the cost is monotone in each part."""
    out = []

    def rec(v, w):
        sv, sw = sum(v), sum(w)
        p = 0
        while limit_fn(sv, sw, p) < bound:
            out.append(IndexTriple(tuple(v), tuple(w), p))
            p += 1
        # extend by one more (v_i, w_i) block
        vmin = 0 if not v else 1
        vi = vmin
        while limit_fn(sv + vi, sw + 1, 0) < bound:
            wi = 1
            while limit_fn(sv + vi, sw + wi, 0) < bound:
                rec(v + [vi], w + [wi])
                wi += 1
            vi += 1

    rec([], [])
    return out


def enumerate_index_sets(K: int):
    """``(S_K, P_K, T_K)`` with ``T_K = S_K minus P_K``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    S = _triples(lambda v, w, p: v + w + p // 2, K)
    P = _triples(lambda v, w, p: 2 * v + w + p, K)
    pset = set(P)
    T = [x for x in S if x not in pset]
    return S, P, T


def index_word_sum(triples, name: str = "A", leading: bool = False, weighted: bool = False) -> Form:
    """Sum of the index words (optionally with the leading ``A`` and ``1/(weight+1)``)."""
    acc: dict = {}
    for x in triples:
        w = x.word(name) if leading else x.tail_word(name)
        c = x.coefficient if weighted else Fraction(1)
        acc[(w, 0)] = acc.get((w, 0), 0) + c
    return Form({k: v for k, v in acc.items() if v != 0}, normalized=True)
