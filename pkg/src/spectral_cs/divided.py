"""Confluent divided differences ``f^[n]`` and their memoized evaluation.

The primary algorithm is a Parlett-style recurrence for ``f`` applied to the
upper-bidiagonal matrix with the points on the diagonal (the top-right entry of
that matrix function is ``f^[n]``).  Sub-ranges whose points spread less than
a cluster width are evaluated from a Taylor expansion about their center,

    f^[n](x_0..x_n) = sum_{m >= n} f^(m)(c)/m! * h_{m-n}(x_0 - c, ..., x_n - c),

with ``h_j`` the complete homogeneous symmetric polynomials; wider ranges use
the difference quotient of the two sub-ranges dropping an endpoint.  This avoids
the catastrophic cancellation of the plain recursion on clustered points.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from itertools import combinations

import numpy as np

from .functions import ScalarFunction

__all__ = [
    "CONFLUENT_RTOL",
    "divided_difference",
    "divided_difference_naive",
    "opitz_matrix",
    "DividedDifferenceCache",
    "cached_divided_difference",
    "get_cache",
    "clear_caches",
]

CONFLUENT_RTOL = 1e-9
_TAYLOR_EXTRA = 80


def _cluster_width(f: ScalarFunction) -> float:
    if f.is_gaussian_kind:
        return 0.5 * f.scale
    if f.poles.size == 0:
        return math.inf  # polynomial: the Taylor formula is exact and finite
    return 0.25 * float(np.min(np.abs(f.poles.imag)))


class _Kernel:
    """Shared machinery: Taylor data per center and the cluster formula."""

    def __init__(self, f: ScalarFunction):
        self.f = f
        self.width = _cluster_width(f)
        self._taylor: dict = {}

    def taylor(self, c: float, order: int) -> np.ndarray:
        t = self._taylor.get(c)
        if t is None or len(t) <= order:
            t = self.f.taylor(c, max(order, 24))
            self._taylor[c] = t
        return t

    def confluent(self, x: float, n: int):
        return self.taylor(x, n)[n]

    def cluster(self, pts, n: int):
        """Taylor-series value of ``f^[n]`` for points of small spread."""
        lo, hi = min(pts), max(pts)
        c = 0.5 * (lo + hi)
        ys = [p - c for p in pts]
        rad = 0.5 * (hi - lo)
        jmax = _TAYLOR_EXTRA if rad > 0 else 0
        a = self.taylor(c, n + jmax)
        # h_j(ys) via the generating function prod_i 1/(1 - y_i z)
        h = np.zeros(jmax + 1)
        h[0] = 1.0
        for y in ys:
            if y == 0.0:
                continue
            for j in range(1, jmax + 1):
                h[j] += y * h[j - 1]
        total = a[n]
        scale = abs(total)
        quiet = 0
        for j in range(1, jmax + 1):
            total = total + a[n + j] * h[j]
            scale = max(scale, abs(total))
            # |h_j| <= C(n+j, n) rad^j bounds the size of every remaining term
            if abs(a[n + j]) * math.comb(n + j, n) * rad**j <= 1e-17 * scale:
                quiet += 1
                if quiet >= 2:
                    break
            else:
                quiet = 0
        return total


def _snap(points):
    """Sort and merge points within ``CONFLUENT_RTOL * (1 + |x|)``."""
    xs = sorted(float(p) for p in points)
    out = []
    for x in xs:
        if out and abs(x - out[-1]) <= CONFLUENT_RTOL * (1.0 + abs(x)):
            out.append(out[-1])
        else:
            out.append(x)
    return out


def divided_difference(f: ScalarFunction, points) -> float | complex:
    """``f^[n](x_0, ..., x_n)`` for ``n + 1`` real points, confluent ones allowed."""
    xs = _snap(points)
    if not xs:
        raise ValueError("need at least one point")
    ker = _Kernel(f)
    n = len(xs) - 1
    # table[i][j] holds f^[j-i] on xs[i..j]
    table = [[None] * (n + 1) for _ in range(n + 1)]
    for length in range(n + 1):
        for i in range(n + 1 - length):
            j = i + length
            if xs[j] == xs[i]:
                table[i][j] = ker.confluent(xs[i], length)
            elif xs[j] - xs[i] < ker.width:
                table[i][j] = ker.cluster(xs[i:j + 1], length)
            else:
                table[i][j] = (table[i + 1][j] - table[i][j - 1]) / (xs[j] - xs[i])
    v = table[0][n]
    return v.real if isinstance(v, complex) and v.imag == 0 else v


def opitz_matrix(points) -> np.ndarray:
    """The upper-bidiagonal matrix whose ``f`` has ``f^[n]`` in its top-right entry."""
    xs = [float(p) for p in points]
    m = np.diag(xs)
    for i in range(len(xs) - 1):
        m[i, i + 1] = 1.0
    return m


def divided_difference_naive(f: ScalarFunction, points):
    """Plain recursive definition; exponential cost, kept as a test oracle."""
    xs = tuple(float(p) for p in points)

    def rec(pts):
        if all(p == pts[0] for p in pts):
            return f.eval(pts[0], len(pts) - 1) / math.factorial(len(pts) - 1)
        # symmetry lets us move two distinct points to the end
        i, j = next((i, j) for i, j in combinations(range(len(pts)), 2) if pts[i] != pts[j])
        rest = [p for k, p in enumerate(pts) if k not in (i, j)]
        a = rec(tuple(rest + [pts[i]]))
        b = rec(tuple(rest + [pts[j]]))
        return (a - b) / (pts[i] - pts[j])

    return rec(xs)


class DividedDifferenceCache:
    """Memoized ``f^[n]`` over multisets of points drawn from a fixed spectrum.

    Keys are count vectors over the distinct (snapped) spectral values, so any
    permutation of the same points hits a single entry.  Each multiset is
    computed from its two sub-multisets dropping the smallest or the largest
    point, which are themselves cached; clustered multisets use the Taylor
    formula.  Inserts are idempotent, so concurrent readers are safe.
    """

    def __init__(self, f: ScalarFunction, spectrum):
        self.f = f
        spectrum = np.asarray(spectrum, dtype=float).ravel()
        order = np.argsort(spectrum, kind="stable")
        values, index_map = [], np.empty(len(spectrum), dtype=int)
        for idx in order:
            x = float(spectrum[idx])
            if values and abs(x - values[-1]) <= CONFLUENT_RTOL * (1.0 + abs(x)):
                index_map[idx] = len(values) - 1
            else:
                values.append(x)
                index_map[idx] = len(values) - 1
        self.values = values
        self.index_map = index_map
        self._ker = _Kernel(f)
        self._store: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def size(self) -> int:
        return len(self._store)

    def key_from_indices(self, indices) -> tuple:
        counts = [0] * len(self.values)
        for i in indices:
            counts[self.index_map[i]] += 1
        return tuple(counts)

    def __call__(self, key: tuple):
        v = self._store.get(key)
        if v is not None:
            self.hits += 1
            return v
        self.misses += 1
        v = self._compute(key)
        with self._lock:
            self._store.setdefault(key, v)
        return v

    def lookup_indices(self, indices):
        """``f^[n]`` at the spectral values indexed by ``indices`` (raw indices)."""
        return self(self.key_from_indices(indices))

    def _compute(self, key: tuple):
        nz = [i for i, c in enumerate(key) if c]
        n = sum(key) - 1
        if n < 0:
            raise ValueError("empty multiset")
        lo, hi = nz[0], nz[-1]
        xlo, xhi = self.values[lo], self.values[hi]
        if lo == hi:
            return self._ker.confluent(xlo, n)
        if xhi - xlo < self._ker.width:
            pts = [self.values[i] for i in nz for _ in range(key[i])]
            return self._ker.cluster(pts, n)
        drop_hi = list(key)
        drop_hi[hi] -= 1
        drop_lo = list(key)
        drop_lo[lo] -= 1
        return (self(tuple(drop_lo)) - self(tuple(drop_hi))) / (xhi - xlo)


_REGISTRY: OrderedDict = OrderedDict()
_REGISTRY_LOCK = threading.Lock()
_REGISTRY_SIZE = 64


def get_cache(f: ScalarFunction, spectrum) -> DividedDifferenceCache:
    """The shared cache for ``(f, spectrum)``."""
    spec = tuple(float(x) for x in np.asarray(spectrum, dtype=float).ravel())
    key = (f.key(), spec)
    with _REGISTRY_LOCK:
        cache = _REGISTRY.get(key)
        if cache is None:
            cache = _REGISTRY[key] = DividedDifferenceCache(f, spec)
            while len(_REGISTRY) > _REGISTRY_SIZE:
                _REGISTRY.popitem(last=False)
        else:
            _REGISTRY.move_to_end(key)
    return cache


def clear_caches() -> None:
    with _REGISTRY_LOCK:
        _REGISTRY.clear()


def cached_divided_difference(f: ScalarFunction, spectrum, key) -> float | complex:
    """``f^[n]`` at a multiset of spectral points.

    ``key`` maps eigenvalue index to multiplicity (a dict or ``(index, mult)``
    pairs); the multiplicities sum to ``n + 1``.
    """
    cache = get_cache(f, spectrum)
    pairs = key.items() if isinstance(key, dict) else key
    indices = []
    for idx, mult in pairs:
        if mult < 0 or not 0 <= idx < len(cache.index_map):
            raise ValueError(f"invalid key entry ({idx}, {mult})")
        indices.extend([idx] * mult)
    return cache.lookup_indices(indices)
