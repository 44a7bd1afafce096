"""Models of the scalar function ``f`` in the spectral action ``tr f(D)``.

Two families are supported:

* ``poly_gaussian``: ``p(x) exp(-(x/scale)^2)`` with a (complex) polynomial
  ``p``; the plain Gaussian is ``p = 1``.
* ``rational``: ``num(x) / den(x)`` with ``den`` free of real roots.

Polynomial coefficients are stored in ascending order of powers.  The
Fourier convention is ``fhat(xi) = int f(y) exp(-i y xi) dy / (2 pi)``, so that
``f(x) = int fhat(xi) exp(i x xi) dxi``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import cached_property
from math import comb, factorial

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, special

__all__ = [
    "ScalarFunction",
    "FourierProfile",
    "GridError",
    "gaussian",
    "poly_gaussian",
    "rational",
    "function_from_spec",
    "fourier_weight_norm",
    "bound_constant",
    "growth_constant",
]

DEFAULT_HALF_WIDTH = 40.0
DEFAULT_STEP = 1.0 / 128.0


class GridError(RuntimeError):
    """Raised when the Fourier grid misses too much mass and must be widened."""


def _trim(c) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    nz = np.nonzero(c)[0]
    return c[: nz[-1] + 1] if nz.size else np.zeros(1, dtype=complex)


def _shift_taylor(c, x, order: int) -> np.ndarray:
    """Taylor coefficients of the polynomial ``c`` at ``x``, padded to ``order + 1``."""
    out = np.zeros(order + 1, dtype=complex)
    d = np.asarray(c, dtype=complex)
    for k in range(min(order, len(d) - 1) + 1):
        out[k] = P.polyval(x, d) / factorial(k)
        d = P.polyder(d) if len(d) > 1 else np.zeros(1, dtype=complex)
    return out


def _maybe_real(v):
    v = np.asarray(v)
    if np.iscomplexobj(v) and np.all(v.imag == 0):
        return v.real
    return v


class ScalarFunction:
    """A scalar test function with exact derivatives and Fourier data."""

    def __init__(self, kind: str, *, poly=(1.0,), scale: float = 1.0, num=None, den=None,
                 claimed_class: tuple | None = None):
        self.kind = kind
        self.claimed_class = claimed_class
        if kind == "poly_gaussian":
            if not scale > 0:
                raise ValueError("gaussian scale must be positive")
            self.scale = float(scale)
            self.poly = _trim(poly)
        elif kind == "rational":
            self.num = _trim(num if num is not None else (1.0,))
            self.den = _trim(den if den is not None else (1.0,))
            roots = np.roots(self.den[::-1]) if len(self.den) > 1 else np.array([])
            if np.any(np.abs(roots.imag) < 1e-12):
                raise ValueError("rational function has a real pole")
            self.poles = roots
        else:
            raise ValueError(f"unknown function kind {kind!r}")
        self._lock = threading.Lock()
        self._profiles: dict = {}

    # -- constructors and identity --------------------------------------------

    @property
    def is_gaussian_kind(self) -> bool:
        return self.kind == "poly_gaussian"

    def key(self) -> tuple:
        """Hashable identity, used to key caches."""
        if self.is_gaussian_kind:
            return ("poly_gaussian", self.scale, tuple(self.poly.tolist()))
        return ("rational", tuple(self.num.tolist()), tuple(self.den.tolist()))

    def __eq__(self, other):
        return isinstance(other, ScalarFunction) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        if self.is_gaussian_kind:
            if len(self.poly) == 1 and self.poly[0] == 1:
                return f"gaussian(scale={self.scale})"
            return f"poly_gaussian(poly={list(self.poly)}, scale={self.scale})"
        return f"rational(num={list(self.num)}, den={list(self.den)})"

    def times_u(self, m: int) -> "ScalarFunction":
        """The function ``x -> f(x) (x - i)^m``."""
        if m == 0:
            return self
        um = P.polypow(np.array([-1j, 1.0]), m)
        if self.is_gaussian_kind:
            return ScalarFunction("poly_gaussian", poly=P.polymul(self.poly, um), scale=self.scale)
        return ScalarFunction("rational", num=P.polymul(self.num, um), den=self.den)

    @property
    def is_real(self) -> bool:
        c = self.poly if self.is_gaussian_kind else np.concatenate([self.num, self.den])
        return bool(np.all(c.imag == 0))

    # -- pointwise values --------------------------------------------------------

    @cached_property
    def _gauss_a(self) -> float:
        return 1.0 / self.scale**2

    def _derivative_numerators(self, k: int):
        # poly_gaussian: f^(k) = Q_k exp(-a x^2), Q_{k+1} = Q_k' - 2 a x Q_k
        # rational:      f^(k) = N_k / den^(k+1), N_{k+1} = N_k' den - (k+1) N_k den'
        if self.is_gaussian_kind:
            q = self.poly
            for _ in range(k):
                q = P.polysub(P.polyder(q) if len(q) > 1 else [0.0],
                              P.polymul([0.0, 2.0 * self._gauss_a], q))
            return q
        n = self.num
        dd = P.polyder(self.den) if len(self.den) > 1 else np.zeros(1)
        for j in range(k):
            dn = P.polyder(n) if len(n) > 1 else np.zeros(1)
            n = P.polysub(P.polymul(dn, self.den), (j + 1) * P.polymul(n, dd))
        return n

    def eval(self, x, derivative_order: int = 0):
        """Exact ``f^(k)(x)`` from the closed-form derivative recursion."""
        if derivative_order < 0:
            raise ValueError("derivative order must be >= 0")
        x = np.asarray(x, dtype=float)
        q = self._derivative_numerators(derivative_order)
        if self.is_gaussian_kind:
            v = P.polyval(x, q) * np.exp(-self._gauss_a * x**2)
        else:
            v = P.polyval(x, q) / P.polyval(x, self.den) ** (derivative_order + 1)
        v = _maybe_real(v)
        return v.item() if v.ndim == 0 else v

    __call__ = eval

    def taylor(self, x: float, order: int) -> np.ndarray:
        """Normalized derivatives ``f^(k)(x) / k!`` for ``k = 0..order``."""
        x = float(x)
        if self.is_gaussian_kind:
            a = self._gauss_a
            g = np.zeros(order + 1)
            g[0] = math.exp(-a * x * x)
            if order >= 1:
                g[1] = -2.0 * a * x * g[0]
            for k in range(1, order):
                g[k + 1] = -2.0 * a * (x * g[k] + g[k - 1]) / (k + 1)
            pc = _shift_taylor(self.poly, x, order)
            out = np.convolve(pc, g)[: order + 1]
        else:
            n = _shift_taylor(self.num, x, order)
            d = _shift_taylor(self.den, x, order)
            out = np.zeros(order + 1, dtype=complex)
            for k in range(order + 1):
                out[k] = (n[k] - np.dot(d[1:k + 1], out[k - 1::-1][:k])) / d[0]
        return _maybe_real(out)

    # -- Fourier data ------------------------------------------------------------

    def _gaussian_fourier_poly(self):
        # FT of x^j exp(-a x^2) is Q_j(xi) E(xi), E = exp(-xi^2 / (4a)),
        # Q_0 = 1 / (2 sqrt(pi a)), Q_{j+1} = i (Q_j' - xi Q_j / (2a)).
        a = self._gauss_a
        qj = np.array([1.0 / (2.0 * math.sqrt(math.pi * a))], dtype=complex)
        total = np.zeros(1, dtype=complex)
        for j, pj in enumerate(self.poly):
            if j:
                dq = P.polyder(qj) if len(qj) > 1 else np.zeros(1, dtype=complex)
                qj = 1j * P.polysub(dq, P.polymul([0.0, 1.0 / (2.0 * a)], qj))
            total = P.polyadd(total, pj * qj)
        return _trim(total)

    def fourier(self, xi):
        """``fhat(xi)``; closed form for Gaussian kinds, quadrature for rationals."""
        xi = np.asarray(xi, dtype=float)
        if self.is_gaussian_kind:
            q = self._gaussian_fourier_poly()
            v = P.polyval(xi, q) * np.exp(-(xi**2) / (4.0 * self._gauss_a))
        else:
            v = np.vectorize(self._rational_fourier_point, otypes=[complex])(xi)
        return v.item() if np.ndim(v) == 0 else v

    def _decay_degree(self) -> int:
        return len(self.den) - len(self.num)

    def _rational_fourier_pair(self, w: float):
        """Transforms at ``+w`` and ``-w`` from one set of half-line integrals."""
        if self._decay_degree() < 1:
            raise ValueError("rational function does not decay; its Fourier transform is not a function")

        def g(x):
            return P.polyval(x, self.num) / P.polyval(x, self.den)

        cs = []
        for comp in (np.real, np.imag):
            ev = lambda x: comp(g(x) + g(-x))
            od = lambda x: comp(g(x) - g(-x))
            if w > 1e-12:
                c = integrate.quad(ev, 0.0, np.inf, weight="cos", wvar=w, limlst=200)[0]
                s = integrate.quad(od, 0.0, np.inf, weight="sin", wvar=w, limlst=200)[0]
            else:
                # principal value at 0; only the even part survives
                c = integrate.quad(ev, 0.0, np.inf, limit=400)[0]
                s = 0.0
            cs.append((c, s))
        (cr, sr), (ci, si) = cs
        plus = ((cr - 1j * sr) + 1j * (ci - 1j * si)) / (2.0 * math.pi)
        minus = ((cr + 1j * sr) + 1j * (ci + 1j * si)) / (2.0 * math.pi)
        return plus, minus

    def _rational_fourier_point(self, xi: float) -> complex:
        plus, minus = self._rational_fourier_pair(abs(xi))
        return plus if xi >= 0 else minus

    def profile(self, m: int = 0, half_width: float | None = None,
                step: float | None = None) -> "FourierProfile":
        """Samples of the Fourier transform of ``f u^m`` (lazily computed, cached)."""
        key = (m, half_width, step)
        prof = self._profiles.get(key)
        if prof is None:
            prof = FourierProfile.build(self.times_u(m), half_width, step)
            with self._lock:
                prof = self._profiles.setdefault(key, prof)
        return prof


def gaussian(scale: float = 1.0) -> ScalarFunction:
    """``exp(-(x/scale)^2)``; belongs to every class E^{s,1/2}."""
    return ScalarFunction("poly_gaussian", poly=(1.0,), scale=scale, claimed_class=("E", None, 0.5))


def poly_gaussian(poly, scale: float = 1.0) -> ScalarFunction:
    return ScalarFunction("poly_gaussian", poly=poly, scale=scale, claimed_class=("E", None, 0.5))


def rational(num, den) -> ScalarFunction:
    f = ScalarFunction("rational", num=num, den=den)
    if f._decay_degree() >= 1:
        f.claimed_class = ("E", f._decay_degree() - 1, 1.0)
    return f


def function_from_spec(spec: dict | str) -> ScalarFunction:
    """Build a function from its CLI/config description."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    if kind == "gaussian":
        return gaussian(float(spec.get("scale", 1.0)))
    if kind in ("poly_gaussian", "poly_times_gaussian"):
        return poly_gaussian(spec.get("poly", [1.0]), float(spec.get("scale", 1.0)))
    if kind == "rational":
        return rational(spec["num"], spec["den"])
    raise ValueError(f"unknown function spec {spec!r}")


# -- norms driving the bounds ----------------------------------------------------


@dataclass
class FourierProfile:
    """Fourier samples of a function on a symmetric grid, plus tail data.

    For Gaussian kinds the samples come from the closed form and the tail is
    bounded analytically; for rationals they come from quadrature and the tail
    is an exponential-decay estimate.
    """

    fn: ScalarFunction
    grid: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    half_width: float

    @classmethod
    def build(cls, fn: ScalarFunction, half_width=None, step=None) -> "FourierProfile":
        if fn.is_gaussian_kind:
            W = (half_width or DEFAULT_HALF_WIDTH) / fn.scale
            h = (step or DEFAULT_STEP) / fn.scale
            npts = 2 * int(math.ceil(W / h)) + 1
            grid = np.linspace(-W, W, npts)
            h = grid[1] - grid[0]
            wts = np.full(npts, 2.0)
            wts[1::2] = 4.0
            wts[0] = wts[-1] = 1.0
            wts *= h / 3.0
            values = fn.fourier(grid)
        else:
            c = float(np.min(np.abs(fn.poles.imag)))
            W = half_width or 30.0 / c
            nodes, w = np.polynomial.legendre.leggauss(10)
            panels = np.linspace(0.0, W, 16)
            pos, pw = [], []
            for lo, hi in zip(panels[:-1], panels[1:]):
                pos.append(0.5 * (hi - lo) * nodes + 0.5 * (hi + lo))
                pw.append(0.5 * (hi - lo) * w)
            pos, pw = np.concatenate(pos), np.concatenate(pw)
            pairs = [fn._rational_fourier_pair(x) for x in pos]
            plus = np.array([p[0] for p in pairs])
            minus = np.array([p[1] for p in pairs])
            grid = np.concatenate([-pos[::-1], pos])
            wts = np.concatenate([pw[::-1], pw])
            values = np.concatenate([minus[::-1], plus])
        return cls(fn, grid, wts, np.asarray(values, dtype=complex), W)

    def weighted_mass(self, k: int) -> float:
        return float(np.sum(self.weights * np.abs(self.grid) ** k * np.abs(self.values)))

    def tail_bound(self, k: int) -> float:
        W = self.half_width
        if self.fn.is_gaussian_kind:
            q = self.fn._gaussian_fourier_poly()
            c = 1.0 / (4.0 * self.fn._gauss_a)
            total = 0.0
            for j, qj in enumerate(q):
                if qj == 0:
                    continue
                nexp = j + k
                a = (nexp + 1) / 2.0
                # int_W^inf x^n exp(-c x^2) dx = Gamma(a, c W^2) / (2 c^a)
                total += abs(qj) * special.gammaincc(a, c * W * W) * special.gamma(a) / (2.0 * c**a)
            return 2.0 * total * max(1.0, W ** 0)
        c = float(np.min(np.abs(self.fn.poles.imag)))
        edge = max(abs(self.values[0]), abs(self.values[-1]))
        # |g(xi)| <~ |g(W)| exp(-c (xi - W)) beyond the grid
        gup = special.gammaincc(k + 1, c * W) * special.gamma(k + 1)
        return float(2.0 * edge * math.exp(min(c * W, 700.0)) * gup / c ** (k + 1))


def fourier_weight_norm(f: ScalarFunction, m: int, k: int, *, half_width=None, step=None,
                        check_refinement: bool = False) -> float:
    """Upper estimate of ``|| FT[(f u^m)^(k)] ||_1 = || |xi|^k FT[f u^m] ||_1``."""
    if m < 0 or k < 0:
        raise ValueError("m and k must be non-negative")
    if not f.is_gaussian_kind and f.times_u(m)._decay_degree() < 1:
        raise ValueError(f"f u^{m} does not decay; its Fourier transform is not integrable")
    prof = f.profile(m, half_width, step)
    mass = prof.weighted_mass(k)
    tail = prof.tail_bound(k)
    if tail > 0.01 * max(mass, 1e-300):
        raise GridError(f"tail bound {tail:.3e} exceeds 1% of grid mass {mass:.3e}; widen the grid")
    err = 0.0
    if f.is_gaussian_kind:
        # Simpson error estimate from the half-resolution rule on every other node
        g, v = prof.grid[::2], prof.values[::2]
        if len(g) % 2 == 0:
            g, v = g[:-1], v[:-1]
        if len(g) >= 3:
            h2 = g[1] - g[0]
            w2 = np.full(len(g), 2.0)
            w2[1::2] = 4.0
            w2[0] = w2[-1] = 1.0
            coarse = float(np.sum(w2 * h2 / 3.0 * np.abs(g) ** k * np.abs(v)))
            err = abs(coarse - mass) / 15.0
    if check_refinement:
        finer = f.profile(m, half_width, (step or DEFAULT_STEP) / 2.0).weighted_mass(k)
        err = max(err, abs(finer - mass))
    return mass + tail + err


def bound_constant(f: ScalarFunction, s: int, n: int) -> float:
    """``c_{s,n}(f) = sum_k C(s,k) ||FT[(f u^{s-k})^{(n-k)}]||_1 / (n-k)!``."""
    total = 0.0
    for k in range(min(s, n) + 1):
        total += comb(s, k) * fourier_weight_norm(f, s - k, n - k) / factorial(n - k)
    return total


def growth_constant(f: ScalarFunction, s: int, gamma: float, n_max: int = 20) -> float:
    """Smallest ``C >= 1`` with ``||FT[(f u^m)^(n)]||_1 <= C^(n+1) n!^gamma`` for the
    tested ``m <= s``, ``n <= n_max``.  This is a fitted estimate, not a proof."""
    best = 1.0
    for m in range(s + 1):
        for n in range(n_max + 1):
            val = fourier_weight_norm(f, m, n)
            logc = (math.log(val) - gamma * math.lgamma(n + 1)) / (n + 1)
            best = max(best, math.exp(logc))
    return best
