"""The spectral action expansion in Chern-Simons and Yang-Mills terms.

For ``V = pi_D(A)`` the variation ``tr f(D+V) - tr f(D)`` is compared with

    S_K = sum_{k<=K} ( int_psi cs_{2k-1}(A) + 1/(2k) int_phi F^k ),

each term computed from the universal form through :mod:`integrals`.
"""

from __future__ import annotations

import cmath
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cochains import CochainContext, psi_cochain, psi_tilde_scale
from .forms import (
    Form,
    chern_simons,
    curvature_power,
    enumerate_index_sets,
    generator,
    opaque,
    two_by_two_expansion,
    unitary_relations,
)
from .functions import ScalarFunction
from .integrals import CochainEvaluator
from .moi import taylor_remainder, taylor_term
from .operators import (
    SpectralTriple,
    as_matrix,
    op_norm,
    resolvent_power_norm,
)

__all__ = [
    "SCHEMA",
    "lhs_trace",
    "taylor_partial_sums",
    "expansion_terms",
    "ExpansionTerms",
    "truncation_identity",
    "bound_radius",
    "remainder_envelope",
    "fit_envelope_constant",
    "remainder_bound",
    "scale_terms",
    "small_t_threshold",
    "gauge_transform",
    "GaugeData",
    "ym_gauge_deltas",
    "k1_pairing",
    "PairingResult",
    "ExpansionReport",
    "build_report",
]

SCHEMA = "spectral-cs/expansion/1"
UNITARY_TOL = 1e-12


def lhs_trace(T: SpectralTriple, V, f: ScalarFunction) -> float | complex:
    """``tr f(D+V) - tr f(D)`` from the two spectra."""
    V = as_matrix(V)
    if op_norm(V - V.conj().T) > 1e-12 * max(1.0, op_norm(V)):
        raise ValueError("V must be Hermitian")
    mu = np.linalg.eigvalsh(T.D.matrix + V)
    lam = T.D.eigenvalues
    out = complex(np.sum(f.eval(mu)) - np.sum(f.eval(lam)))
    return out.real if out.imag == 0 else out


def taylor_partial_sums(T: SpectralTriple, V, f: ScalarFunction, K: int) -> list:
    """``[sum_{n<=k} tr T_{f^[n]}(V, ..., V) for k = 1..K]``."""
    out, acc = [], 0.0
    for n in range(1, K + 1):
        acc = acc + taylor_term(T.D, V, f, n)
        out.append(acc)
    return out


@dataclass
class ExpansionTerms:
    cs: list  # int_psi cs_{2k-1}(A), k = 1..K
    ym: list  # 1/(2k) int_phi F^k

    @property
    def K(self) -> int:
        return len(self.cs)

    def partial_sums(self) -> list:
        out, acc = [], 0.0
        for c, y in zip(self.cs, self.ym):
            acc = acc + c + y
            out.append(acc)
        return out


def expansion_terms(ev: CochainEvaluator, K: int, name: str = "A") -> ExpansionTerms:
    """Per-order CS and YM values for the opaque one-form ``name`` bound in ``ev``."""
    if 2 * K > ev.ctx.N:
        raise ValueError(f"K = {K} needs forms of degree {2 * K} above the cap {ev.ctx.N}")
    A = opaque(name)
    cs, ym = [], []
    for k in range(1, K + 1):
        cs.append(ev.integrate_psi(chern_simons(A, k)))
        ym.append(ev.integrate_phi(curvature_power(A, k)) / (2 * k))
    return ExpansionTerms(cs, ym)


def truncation_identity(ev: CochainEvaluator, f: ScalarFunction, K: int, name: str = "A") -> dict:
    """Both sides of the finite-order regrouping at order ``K``.

    ``taylor - csym`` is compared with ``correction = -sum_{T_K} c int_phi word``
    and ``lhs - csym`` with ``correction + taylor_remainder``.  The Taylor side
    is evaluated both as MOI traces and as ``1/n int_phi`` of the 2x2 words.
    """
    T = ev.ctx.triple
    V = ev.V(name)
    A = opaque(name)
    taylor = taylor_partial_sums(T, V, f, K)[-1]
    taylor_forms = sum((1.0 / n) * ev.integrate_phi(two_by_two_expansion(A, n)) for n in range(1, K + 1))
    csym = expansion_terms(ev, K, name).partial_sums()[-1]
    _, _, T_K = enumerate_index_sets(K)
    correction = -sum(float(x.coefficient) * ev.integrate_phi(x.form(name)) for x in T_K)
    lhs = lhs_trace(T, V, f)
    rem = taylor_remainder(T, V, f, K)
    return {
        "K": K,
        "taylor": taylor,
        "taylor_forms": taylor_forms,
        "csym": csym,
        "correction": correction,
        "lhs": lhs,
        "taylor_remainder": rem,
        "residual": abs(taylor - csym - correction),
        "residual_forms": abs(taylor_forms - csym - correction),
        "residual_lhs": abs(lhs - csym - correction - rem),
    }


# -- remainder envelope --------------------------------------------------------------


def bound_radius(T: SpectralTriple, terms) -> float:
    """``R = max_j {||a_j||, ||b_j||, ||[D,a_j]||, ||[D,b_j]||}``."""
    R = 0.0
    for a, b in terms:
        R = max(R, op_norm(a), op_norm(b), op_norm(T.commutator(a)), op_norm(T.commutator(b)))
    return R


def remainder_envelope(R: float, K: int, s: int, gamma: float, trace_res: float) -> float:
    """The bound without its constant: ``max(R^{2K+2}, R^{4K+2+4s}) tr|(D-i)^{-s}| / K!^{1-gamma}``."""
    return max(R ** (2 * K + 2), R ** (4 * K + 2 + 4 * s)) * trace_res / math.factorial(K) ** (1.0 - gamma)


def remainder_bound(R: float, K: int, s: int, gamma: float, trace_res: float, C: float) -> float:
    """``C^{K+1} / K!^{1-gamma} max(R^{2K+2}, R^{4K+2+4s}) tr|(D-i)^{-s}|``."""
    return C ** (K + 1) * remainder_envelope(R, K, s, gamma, trace_res)


def fit_envelope_constant(samples, gamma: float) -> float:
    """Smallest ``C`` with ``|remainder| <= C^{K+1} envelope`` on every sample.

    ``samples`` holds dicts with keys ``K``, ``remainder``, ``R``, ``s`` and
    ``trace_res``.  The value is empirical and only holds on the data it saw.
    """
    C = 0.0
    for smp in samples:
        env = remainder_envelope(smp["R"], smp["K"], smp["s"], gamma, smp["trace_res"])
        if env <= 0:
            continue
        C = max(C, (abs(smp["remainder"]) / env) ** (1.0 / (smp["K"] + 1)))
    return C


def scale_terms(terms, t: float) -> list:
    """A presentation of ``t A``: ``sum_j (sqrt(t) a_j) d(sqrt(t) b_j)``, so ``R`` scales by ``sqrt(t)``."""
    r = math.sqrt(t)
    return [(r * as_matrix(a), r * as_matrix(b)) for a, b in terms]


def small_t_threshold(C: float, R: float) -> float:
    """The ``t`` below which ``t A`` has ``R <= 1/(C+1)`` (with :func:`scale_terms`)."""
    return min(1.0, 1.0 / ((C + 1.0) * R) ** 2)


# -- gauge transformations ---------------------------------------------------------------


def _check_unitary(u: np.ndarray) -> None:
    eye = np.eye(u.shape[0])
    if op_norm(u @ u.conj().T - eye) > UNITARY_TOL or op_norm(u.conj().T @ u - eye) > UNITARY_TOL:
        raise ValueError("u is not unitary to 1e-12")


@dataclass
class GaugeData:
    form: Form | None  # the symbolic A^u over the extended generators, if A was symbolic
    generators: dict  # extended bindings
    terms: list  # matrix pairs (a_j, b_j) of A^u
    V: np.ndarray  # pi_D(A^u)


def gauge_transform(T: SpectralTriple, terms, u, A_form: Form | None = None, generators=None,
                    names=("u", "u^*")) -> GaugeData:
    """``A^u = u du^* + sum_j (u a_j) d(b_j u^*) - (u a_j b_j) du^*``."""
    u = as_matrix(u)
    _check_unitary(u)
    us = u.conj().T
    new_terms = [(u, us)]
    for a, b in terms:
        a, b = as_matrix(a), as_matrix(b)
        new_terms += [(u @ a, b @ us), (-(u @ a @ b), us)]
    V = sum(a @ T.commutator(b) for a, b in new_terms)
    form, gens = None, None
    if A_form is not None:
        rel = unitary_relations(*names)
        gu, gus = generator(names[0], rel), generator(names[1], rel)
        form = gu * gus.d() + gu * A_form.with_relations(rel) * gus
        gens = dict(generators or {})
        gens[names[0]], gens[names[1]] = u, us
    return GaugeData(form, gens if gens is not None else {}, new_terms, V)


def ym_gauge_deltas(ctx: CochainContext, terms, u, kmax: int = 2) -> list:
    """``|int_phi F(A^u)^k - int_phi F(A)^k|`` for ``k = 1..kmax``."""
    g = gauge_transform(ctx.triple, terms, u)
    ev0 = CochainEvaluator(ctx, one_forms={"A": terms})
    ev1 = CochainEvaluator(ctx, one_forms={"A": g.terms})
    A = opaque()
    out = []
    for k in range(1, kmax + 1):
        F = curvature_power(A, k)
        x0, x1 = ev0.integrate_phi(F), ev1.integrate_phi(F)
        out.append({"k": k, "ym": x0, "ym_gauged": x1, "delta": abs(x1 - x0)})
    return out


# -- the K_1 pairing ----------------------------------------------------------------------


@dataclass
class PairingResult:
    value: complex
    terms: list  # (-1)^k k! psi~_{2k+1}(u*, u, ..., u*, u), k = 0..Kmax
    extra_terms: list  # the same for k = Kmax+1, ... (tail estimate only)
    per_k: list  # CS-at-unitary identity data per k
    tolerance: float
    tail_estimate: float
    prefactor: complex
    branch: str = "principal"


def k1_pairing(T: SpectralTriple, u, f: ScalarFunction, Kmax: int, q: int, extra: int = 2,
               N: int = 14) -> PairingResult:
    """``<u, psi~> = (2 pi i)^{-1/2} sum_{k<=Kmax} (-1)^k k! psi~^q_{2k+1}(u*, u, ..., u*, u)``.

    ``u`` is a unitary on ``C^q (x) H`` and the cochains are built on the
    amplified triple ``I_q (x) D``.  ``extra`` further terms are computed to
    estimate the neglected tail from their geometric decay; the tolerance is
    twice that estimate plus a rounding allowance.
    """
    u = as_matrix(u)
    Tq = T.amplify(q)
    if u.shape != (Tq.dim, Tq.dim):
        raise ValueError(f"u must be {Tq.dim}x{Tq.dim} for q = {q}")
    _check_unitary(u)
    us = u.conj().T
    extra = min(extra, max(0, (N - 2 * Kmax - 2) // 2))
    ctx = CochainContext(Tq, f, N)
    rel = unitary_relations("u", "u^*")
    A_form = generator("u^*", rel) * generator("u", rel).d()
    ev = CochainEvaluator(ctx, {"u": u, "u^*": us}, {"A": [(us, u)]})
    A = opaque()
    terms, per_k = [], []
    for k in range(0, Kmax + extra + 1):
        args = [us, u] * (k + 1)
        psi_val = psi_cochain(ctx, k + 1)(*args)
        term = (-1) ** k * math.factorial(k) * psi_tilde_scale(k + 1) * psi_val
        terms.append(term)
        if k <= Kmax:
            cs_letters = ev.integrate_psi(chern_simons(A, k + 1))
            rhs = math.factorial(k) ** 2 / math.factorial(2 * k + 1) * psi_val
            entry = {"k": k, "cs_letters": cs_letters, "rhs": rhs, "residual": abs(cs_letters - rhs)}
            if k <= 2:
                sym = chern_simons(A, k + 1).substitute({"A": A_form})
                entry["cs_words"] = ev.integrate_psi(sym, route="words")
                entry["residual_words"] = abs(entry["cs_words"] - rhs)
            per_k.append(entry)
    main, tail_terms = terms[:Kmax + 1], terms[Kmax + 1:]
    pref = 1.0 / cmath.sqrt(2j * math.pi)
    value = pref * sum(main)
    mags = [abs(t) for t in terms]
    tail = _geometric_tail(mags, Kmax)
    rounding = 1e-12 * max(1.0, sum(mags)) * Tq.dim
    tol = abs(pref) * (2.0 * tail + rounding)
    return PairingResult(value, main, tail_terms, per_k, tol, abs(pref) * tail, pref)


def _geometric_tail(mags, Kmax: int) -> float:
    """``sum_{k > Kmax}`` estimated from the computed extra terms and their decay ratio."""
    known = mags[Kmax + 1:]
    if not known:
        return math.inf
    window = mags[max(0, Kmax - 1):]
    ratios = [b / a for a, b in zip(window, window[1:]) if a > 0]
    r = max(ratios) if ratios else 0.0
    if r >= 1.0:
        return math.inf
    return sum(known) + known[-1] * r / (1.0 - r)


# -- reports ----------------------------------------------------------------------------------


def _num(z):
    z = complex(z)
    return {"re": float(z.real), "im": float(z.imag)}


@dataclass
class ExpansionReport:
    lhs: float
    K: int
    cs: list
    ym: list
    partial_sums: list
    abs_errors: list
    taylor_partial_sums: list
    taylor_remainders: list
    bounds: list
    fitted_C: float
    gauge_deltas: list = field(default_factory=list)
    pairing: complex | None = None

    def __post_init__(self):
        # the partial sums are a re-summation of the per-order values
        acc = 0.0
        for k, (c, y) in enumerate(zip(self.cs, self.ym)):
            acc = acc + c + y
            if abs(acc - self.partial_sums[k]) > 1e-15 * max(1.0, abs(acc)):
                raise ValueError("partial sums do not re-sum the per-order terms")

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "lhs": _num(self.lhs),
            "K": self.K,
            "orders": [
                {
                    "k": k + 1,
                    "cs": _num(self.cs[k]),
                    "ym": _num(self.ym[k]),
                    "partial_sum": _num(self.partial_sums[k]),
                    "abs_error": float(self.abs_errors[k]),
                    "taylor_partial_sum": _num(self.taylor_partial_sums[k]),
                    "taylor_remainder": _num(self.taylor_remainders[k]),
                    "bound": float(self.bounds[k]),
                }
                for k in range(self.K)
            ],
            "fitted_C": float(self.fitted_C),
            "gauge_deltas": [float(x) for x in self.gauge_deltas],
            "pairing": None if self.pairing is None else _num(self.pairing),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["K", "lhs", "partial_sum", "abs_error", "bound"])
        for k in range(self.K):
            w.writerow([k + 1, repr(float(complex(self.lhs).real)), repr(float(complex(self.partial_sums[k]).real)),
                        repr(float(self.abs_errors[k])), repr(float(self.bounds[k]))])
        return buf.getvalue()


def build_report(ev: CochainEvaluator, f: ScalarFunction, K: int, gamma: float = 0.5,
                 C: float | None = None, name: str = "A") -> ExpansionReport:
    """Evaluate everything for one bound one-form; fits ``C`` on this instance if none is given."""
    T = ev.ctx.triple
    V = ev.V(name)
    lhs = lhs_trace(T, V, f)
    terms = expansion_terms(ev, K, name)
    sums = terms.partial_sums()
    errs = [abs(lhs - s_) for s_ in sums]
    tps = taylor_partial_sums(T, V, f, K)
    rems = [taylor_remainder(T, V, f, k) for k in range(1, K + 1)]
    R = bound_radius(T, ev.matrix_terms(name))
    tr = resolvent_power_norm(T)
    if C is None:
        C = fit_envelope_constant(
            [{"K": k + 1, "remainder": errs[k], "R": R, "s": T.s, "trace_res": tr} for k in range(K)], gamma)
    bounds = [remainder_bound(R, k + 1, T.s, gamma, tr, C) for k in range(K)]
    return ExpansionReport(lhs, K, terms.cs, terms.ym, sums, errs, tps, rems, bounds, C)
