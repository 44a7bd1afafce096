"""Evaluation of ``int_phi`` and ``int_psi`` on universal forms bound to matrices.

Two independent routes are provided.

``words``: substitute every opaque one-form by its generator expression,
normalize, and evaluate each word ``a_0 da_1 ... da_n`` as ``phi_n``.

``letters``: for words built only from ``A`` and ``dA`` letters the word is never
expanded.  Right-multiplying a word ``Y`` by a letter changes the bracket
arguments by the rule

    Y A  ->  (args of Y, V)  -  odd(Y) * sum_j (args of Y, [D,a_j], [D,b_j])
    Y dA ->  sum_j (args of Y, [D,a_j], [D,b_j])

with ``V = sum_j a_j [D,b_j]`` and ``odd(Y)`` the parity of the degree of
``Y`` (equivalently of its number of ``A`` letters).  Words of a form are stored
in a prefix trie so common prefixes share one path-sum state.
"""

from __future__ import annotations

import numpy as np

from .cochains import CochainContext, phi
from .forms import Form, word_degree
from .moi import check_cost
from .operators import as_matrix

__all__ = ["CochainEvaluator", "UnboundGeneratorError", "integrate_phi", "integrate_psi"]


class UnboundGeneratorError(KeyError):
    pass


def _is_opaque_word(word) -> bool:
    return all(tok[0] in ("A", "dA") for tok in word)


def _build_trie(items):
    root = {"c": 0, "k": {}}
    for word, coeff in items:
        node = root
        for tok in word:
            node = node["k"].setdefault(tok, {"c": 0, "k": {}})
        node["c"] += coeff
    return root


class CochainEvaluator:
    """Binds generator names (and opaque one-forms) to matrices for one context.

    ``generators`` maps names to matrices.  ``one_forms`` maps an opaque name to
    either a generator-level :class:`Form` of degree one, or a list of matrix
    pairs ``(a_j, b_j)`` for ``A = sum a_j db_j`` (letter route only).
    """

    def __init__(self, ctx: CochainContext, generators=None, one_forms=None):
        self.ctx = ctx
        self.generators = {k: as_matrix(v) for k, v in (generators or {}).items()}
        for k, v in self.generators.items():
            if v.shape != (ctx.dim, ctx.dim):
                raise ValueError(f"generator {k!r} has the wrong dimension")
        self.one_forms = dict(one_forms or {})
        self._mono_cache: dict = {}
        self._letter_cache: dict = {}

    # -- matrices --------------------------------------------------------------------

    def mono(self, mono: tuple) -> np.ndarray:
        m = self._mono_cache.get(mono)
        if m is None:
            m = self.ctx.triple.identity.astype(complex)
            for g in mono:
                if g not in self.generators:
                    raise UnboundGeneratorError(g)
                m = m @ self.generators[g]
            self._mono_cache[mono] = m
        return m

    def matrix_terms(self, name: str):
        """``[(a_j, b_j)]`` matrix pairs for the opaque one-form ``name``."""
        if name not in self.one_forms:
            raise UnboundGeneratorError(name)
        spec = self.one_forms[name]
        if not isinstance(spec, Form):
            return [(as_matrix(a), as_matrix(b)) for a, b in spec]
        out = []
        for (w, e), c in spec.terms.items():
            if e or word_degree(w) != 1 or not all(t[0] in ("m", "d") for t in w):
                raise ValueError(f"binding for {name!r} must be a t-free generator one-form")
            head = w[0][1] if w[0][0] == "m" else ()
            out.append((complex(c) * self.mono(head), self.mono(w[-1][1])))
        return out

    def _letters(self, name: str):
        """Eigenbasis ``V`` and the list of nonzero ``([D,a_j], [D,b_j])`` for a letter."""
        hit = self._letter_cache.get(name)
        if hit is None:
            T, eb = self.ctx.triple, self.ctx.to_eigenbasis
            V = np.zeros((self.ctx.dim, self.ctx.dim), dtype=complex)
            W = []
            for a, b in self.matrix_terms(name):
                cb = T.commutator(b)
                V += a @ cb
                ca = T.commutator(a)
                if np.any(ca) and np.any(cb):
                    W.append((eb(ca), eb(cb)))
            hit = self._letter_cache[name] = (eb(V), W)
        return hit

    def V(self, name: str = "A") -> np.ndarray:
        """``pi_D`` of the opaque one-form, in the original basis."""
        return sum(a @ self.ctx.triple.commutator(b) for a, b in self.matrix_terms(name))

    # -- evaluation ------------------------------------------------------------------------

    # States are bundles {level: PathStates}: a W step adds two path steps and a
    # V step one, so words of one degree mix chain lengths.

    def _step(self, bundle: dict, X, out: dict | None = None, coeff=1.0) -> dict:
        out = {} if out is None else out
        for L, st in bundle.items():
            out[L + 1] = self.ctx.step(st, X, out.get(L + 1), coeff)
        return out

    def _close(self, bundle: dict) -> complex:
        return sum((self.ctx.close(st) for st in bundle.values()), 0.0 + 0.0j)

    def _run(self, trie, apply) -> complex:
        total = 0.0 + 0.0j
        stack = [(trie, {1: self.ctx.start()}, 0)]
        while stack:
            node, state, parity = stack.pop()
            for tok, child in node["k"].items():
                new = apply(tok, state, parity)
                if child["c"]:
                    total += complex(child["c"]) * self._close(new)
                if child["k"]:
                    stack.append((child, new, parity ^ (tok[0] == "A")))
        return total

    def _apply_letter(self, tok, state, parity):
        kind, name = tok
        V, W = self._letters(name)
        out: dict = {}
        if kind == "A":
            self._step(state, V, out)
            if not parity:
                return out
            coeff = -1.0
        else:
            coeff = 1.0
        for X, Y in W:
            self._step(self._step(state, X), Y, out, coeff)
        return out

    def _apply_generator(self, tok, state, parity):
        kind = tok[0]
        eb, T = self.ctx.to_eigenbasis, self.ctx.triple
        if kind == "h":
            X = self.mono(tok[1]) @ T.commutator(self.mono(tok[2]))
        else:
            X = T.commutator(self.mono(tok[1]))
        return self._step(state, eb(X))

    def _check(self, form: Form):
        if not form.t_free:
            raise ValueError("integration needs a t-free form")
        top = max((word_degree(w) for (w, _) in form.terms), default=0)
        if top > self.ctx.N:
            raise ValueError(f"word degree {top} exceeds the cap {self.ctx.N}")
        check_cost(self.ctx.dim, top, self.ctx.layout.width)

    def integrate_phi(self, form: Form, route: str = "auto") -> complex:
        """``int_phi form``: each homogeneous word of degree ``n`` against ``phi_n``."""
        if route not in ("auto", "letters", "words"):
            raise ValueError(f"unknown route {route!r}")
        self._check(form)
        letter_items, rest = [], {}
        for (w, e), c in form.terms.items():
            if route != "words" and _is_opaque_word(w):
                letter_items.append((w, c))
            elif route == "letters":
                raise ValueError("the letter route needs words in opaque one-forms only")
            else:
                rest[(w, e)] = c
        total = 0.0 + 0.0j
        if letter_items:
            total += self._run(_build_trie(letter_items), self._apply_letter)
        if rest:
            total += self._integrate_words(Form(rest, form.relations, normalized=True))
        return total

    def _integrate_words(self, form: Form) -> complex:
        subs = {}
        for (w, _) in form.terms:
            for kind, val in w:
                if kind in ("A", "dA") and val not in subs:
                    spec = self.one_forms.get(val)
                    if not isinstance(spec, Form):
                        raise UnboundGeneratorError(val)
                    subs[val] = spec
        expanded = form.substitute(subs) if subs else form
        items = []
        for (w, _), c in expanded.terms.items():
            if not w or (len(w) == 1 and w[0][0] == "m"):
                continue  # degree 0: phi_0 = 0
            head, rest = ((), w) if w[0][0] == "d" else (w[0][1], w[1:])
            if any(t[0] != "d" for t in rest):
                raise ValueError(f"word {w} is not of the form a_0 da_1 ... da_n")
            seq = (("h", head, rest[0][1]),) + tuple(("c", t[1]) for t in rest[1:])
            items.append((seq, c))
        for seq, _ in items:
            for tok in seq:
                for mono in tok[1:]:
                    self.mono(mono)  # raises on unbound names up front
        return self._run(_build_trie(items), self._apply_generator)

    def integrate_psi(self, form: Form, route: str = "auto") -> complex:
        """``int_psi w = int_phi w - 1/2 int_phi dw``."""
        return self.integrate_phi(form, route) - 0.5 * self.integrate_phi(form.d(), route)

    def phi(self, n: int, *names) -> complex:
        """``phi_n`` at bound generators given by name (or monomial tuples)."""
        mats = [self.mono(x if isinstance(x, tuple) else (x,)) for x in names]
        return phi(self.ctx, n, *mats)


def integrate_phi(ctx: CochainContext, bindings, form: Form, one_forms=None, route: str = "auto") -> complex:
    return CochainEvaluator(ctx, bindings, one_forms).integrate_phi(form, route)


def integrate_psi(ctx: CochainContext, bindings, form: Form, one_forms=None, route: str = "auto") -> complex:
    return CochainEvaluator(ctx, bindings, one_forms).integrate_psi(form, route)
