"""Seeded random triples and the experiments behind the CLI subcommands.

Every experiment is a pure function of its :class:`ExperimentConfig`; trials
get independent streams from ``SeedSequence(seed).spawn``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .cochains import (
    B0,
    CochainContext,
    Combination,
    Phi,
    connes_B,
    hochschild_b,
    identity_tolerance,
    psi_cochain,
)
from .expansion import (
    SCHEMA,
    build_report,
    expansion_terms,
    bound_radius,
    fit_envelope_constant,
    k1_pairing,
    lhs_trace,
    remainder_bound,
    ym_gauge_deltas,
)
from .forms import Form, generator
from .functions import ScalarFunction, function_from_spec
from .integrals import CochainEvaluator
from .moi import (
    MoiProblem,
    check_cost,
    moi_eigenbasis,
    moi_quadrature,
    moi_trace,
    moi_trace_naive,
    verify_added_weights,
    verify_commutation_identities,
    verify_trace_bound,
)
from .divided import clear_caches
from .operators import (
    HermitianOperator,
    SpectralTriple,
    load_matrix,
    op_norm,
    random_hermitian,
    resolvent_power_norm,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GeneratorSpec",
    "LabInstance",
    "generate_triple",
    "trial_seeds",
    "random_tuple",
    "unitary_near_identity",
    "run_expand",
    "run_cocycle_check",
    "run_bound_check",
    "main_bound_trial",
    "check_main_bound",
    "run_pairing",
    "run_moi_verify",
    "run_bench",
    "RUNNERS",
]


class ConfigError(ValueError):
    """An invalid experiment configuration."""


@dataclass(frozen=True)
class GeneratorSpec:
    """How the algebra generators and the one-form are drawn.

    ``pairs`` generator pairs ``(a_j, b_j)`` are Ginibre samples rescaled to
    operator norm ``norm_cap``.  With ``hermitian`` the one-form is
    ``sum_j a_j db_j + b_j^* d(a_j^*) - d(b_j^* a_j^*)``, whose ``pi_D`` is
    ``W + W^*`` for ``W = sum_j a_j [D, b_j]``.
    """

    pairs: int = 1
    norm_cap: float = 0.4
    d_scale: float = 0.5
    hermitian: bool = True
    s: int = 1
    files: dict | None = None


@dataclass
class LabInstance:
    triple: SpectralTriple
    generators: dict
    one_form: Form
    terms: list
    V: np.ndarray

    def evaluator(self, f: ScalarFunction, N: int = 14) -> CochainEvaluator:
        ctx = CochainContext(self.triple, f, N)
        return CochainEvaluator(ctx, self.generators, {"A": self.one_form})


def trial_seeds(seed: int, n: int) -> list:
    return np.random.SeedSequence(seed).spawn(n)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def _ginibre(rng, dim: int, cap: float) -> np.ndarray:
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return m * (cap / op_norm(m))


def generate_triple(seed, dim: int, spec: GeneratorSpec | None = None) -> LabInstance:
    """A reproducible triple, generators and bound one-form ``A``."""
    spec = spec or GeneratorSpec()
    rng = _rng(seed)
    files = spec.files or {}
    D = load_matrix(files["D"]) if "D" in files else random_hermitian(rng, dim, spec.d_scale)
    dim = D.shape[0]
    gens: dict = {}
    form = Form({}, normalized=True)
    terms = []
    for j in range(1, spec.pairs + 1):
        an, bn = f"a{j}", f"b{j}"
        a = load_matrix(files[an]) if an in files else _ginibre(rng, dim, spec.norm_cap)
        b = load_matrix(files[bn]) if bn in files else _ginibre(rng, dim, spec.norm_cap)
        for name, m in ((an, a), (bn, b)):
            if m.shape != (dim, dim):
                raise ConfigError(f"generator {name} has shape {m.shape}, expected {(dim, dim)}")
            if op_norm(m) > spec.norm_cap * (1 + 1e-12):
                m = m * (spec.norm_cap / op_norm(m))
            gens[name] = m
        a, b = gens[an], gens[bn]
        form = form + generator(an) * generator(bn).d()
        terms.append((a, b))
        if spec.hermitian:
            asn, bsn = an + "^*", bn + "^*"
            gens[asn], gens[bsn] = a.conj().T, b.conj().T
            form = form + generator(bsn) * generator(asn).d() - generator((bsn, asn)).d()
            terms += [(gens[bsn], gens[asn]), (-np.eye(dim), gens[bsn] @ gens[asn])]
    T = SpectralTriple(HermitianOperator(D), {k: v for k, v in gens.items()}, spec.s)
    V = sum(a @ T.commutator(b) for a, b in terms)
    if spec.hermitian:
        V = 0.5 * (V + V.conj().T)  # exact up to rounding already
    return LabInstance(T, gens, form, terms, V)


def random_tuple(rng, T: SpectralTriple, count: int, cap: float = 0.5) -> list:
    return [_ginibre(rng, T.dim, cap) for _ in range(count)]


def unitary_near_identity(rng, dim: int, eps: float) -> np.ndarray:
    """``exp(i eps H)`` for a GUE sample ``H`` of unit scale."""
    H = random_hermitian(rng, dim, 1.0)
    lam, U = np.linalg.eigh(H)
    return (U * np.exp(1j * eps * lam)) @ U.conj().T


# -- configuration ----------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    seed: int = 0
    dim: int = 3
    q: int = 1
    K: int = 4
    Kmax: int = 4
    function: object = "gaussian"
    norm_cap: float = 0.4
    d_scale: float = 0.5
    pairs: int = 1
    trials: int = 10
    orders: int = 4
    n: int = 10
    eps: float = 0.3
    files: dict | None = None
    out: str | None = None
    format: str = "json"
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        ints = ("seed", "dim", "q", "K", "Kmax", "pairs", "trials", "orders", "n", "jobs")
        for name in ints:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for name, lo in (("dim", 1), ("q", 1), ("K", 1), ("Kmax", 0), ("pairs", 1), ("trials", 1),
                         ("orders", 1), ("n", 1), ("jobs", 1)):
            if getattr(self, name) < lo:
                raise ConfigError(f"{name} must be >= {lo}")
        if 2 * self.K > 14:
            raise ConfigError("K must satisfy 2K <= 14 (the degree cap)")
        if 2 * self.Kmax + 2 > 14:
            raise ConfigError("Kmax must satisfy 2 Kmax + 2 <= 14")
        if self.orders > 13:
            raise ConfigError("orders must be <= 13")
        for name in ("norm_cap", "d_scale", "eps"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v <= 0:
                raise ConfigError(f"{name} must be a positive number")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        try:
            self.scalar_function()
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid function spec: {exc}") from exc

    def scalar_function(self) -> ScalarFunction:
        return function_from_spec(self.function)

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(pairs=self.pairs, norm_cap=float(self.norm_cap), d_scale=float(self.d_scale),
                             files=self.files)

    def describe(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")
        return d


def _map(fn, items, jobs: int) -> list:
    """Order-stable map, in a process pool when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _envelope(cfg: ExperimentConfig, *extra) -> dict:
    return {"schema": SCHEMA, "config": cfg.describe(), **dict(extra)}


# -- expand -------------------------------------------------------------------------------------


def run_expand(cfg: ExperimentConfig):
    """One instance: lhs, CS/YM terms, partial sums, remainders and fitted bounds."""
    check_cost(cfg.dim, 2 * cfg.K)
    f = cfg.scalar_function()
    inst = generate_triple(cfg.seed, cfg.dim, cfg.generator_spec())
    ev = inst.evaluator(f)
    report = build_report(ev, f, cfg.K)
    u = unitary_near_identity(_rng(cfg.seed + 1), inst.triple.dim, cfg.eps)
    deltas = ym_gauge_deltas(ev.ctx, inst.terms, u, kmax=min(2, cfg.K))
    report.gauge_deltas = [d["delta"] for d in deltas]
    out = _envelope(cfg, ("report", report.to_dict()))
    return out, report.to_csv(), True


# -- cocycle-check ----------------------------------------------------------------------------


def _identities(ctx: CochainContext, orders: int) -> list:
    """``(name, lhs, rhs, arity, top phi order)`` for the (b, B) identity suite."""
    phi = lambda n: Phi(ctx, n)  # noqa: E731
    zero = lambda c: Combination([(0.0, c)])  # noqa: E731
    b = hochschild_b
    suite = [
        ("b phi1 = phi2", b(phi(1)), phi(2), 3, 2),
        ("b phi3 = phi4", b(phi(3)), phi(4), 5, 4),
        ("b phi2 = 0", b(phi(2)), zero(phi(3)), 4, 2),
        ("b phi4 = 0", b(phi(4)), zero(phi(5)), 6, 4),
        ("B phi2 = 0", connes_B(phi(2)), zero(phi(1)), 2, 2),
        ("B phi4 = 0", connes_B(phi(4)), zero(phi(3)), 4, 4),
        ("b B0 phi2 = 2 phi2 - B0 phi3", b(B0(phi(2))),
         Combination([(2.0, phi(2)), (-1.0, B0(phi(3)))]), 3, 3),
        ("B psi3 = 6 b psi1", connes_B(psi_cochain(ctx, 2)), 6.0 * b(psi_cochain(ctx, 1)), 3, 4),
        ("b b phi1 = 0", b(b(phi(1))), zero(phi(3)), 4, 2),
        ("B psi5 = 10 b psi3", connes_B(psi_cochain(ctx, 3)), 10.0 * b(psi_cochain(ctx, 2)), 5, 6),
    ]
    return [x for x in suite if x[4] <= orders]


def _cocycle_trial(args):
    cfg, seq, dim = args
    rng = _rng(seq)
    f = cfg.scalar_function()
    T = SpectralTriple(HermitianOperator(random_hermitian(rng, dim, 1.0)), {}, 1)
    ctx = CochainContext(T, f, 14)
    rows = []
    for name, lhs, rhs, arity, _ in _identities(ctx, cfg.orders):
        tup = random_tuple(rng, T, arity, 0.5)
        x, y = lhs(*tup), rhs(*tup)
        tol = identity_tolerance(ctx, arity, tup)
        rows.append({"identity": name, "residual": float(abs(x - y)), "scale": float(abs(x) + abs(y)),
                     "tolerance": float(tol)})
    return rows


def run_cocycle_check(cfg: ExperimentConfig, tolerance: float = 1e-8):
    dims = [cfg.dim]
    seqs = trial_seeds(cfg.seed, cfg.trials)
    results = _map(_cocycle_trial, [(cfg, s, dims[i % len(dims)]) for i, s in enumerate(seqs)], cfg.jobs)
    summary: dict = {}
    for rows in results:
        for r in rows:
            e = summary.setdefault(r["identity"], {"max_residual": 0.0, "max_tolerance_ratio": 0.0, "count": 0})
            e["max_residual"] = max(e["max_residual"], r["residual"])
            e["max_tolerance_ratio"] = max(e["max_tolerance_ratio"], r["residual"] / r["tolerance"])
            e["count"] += 1
    for e in summary.values():
        e["pass"] = e["max_residual"] <= tolerance and e["max_tolerance_ratio"] <= 1.0
    ok = all(e["pass"] for e in summary.values())
    out = _envelope(cfg, ("tolerance", tolerance), ("identities", summary), ("pass", ok))
    csv = "identity,max_residual,count\n" + "".join(
        f"{k},{v['max_residual']!r},{v['count']}\n" for k, v in sorted(summary.items()))
    return out, csv, ok


# -- bound-check ----------------------------------------------------------------------------------


def _schatten_trial(args):
    cfg, seq = args
    rng = _rng(seq)
    dim = int(rng.integers(2, 7))
    n = int(rng.integers(1, 4))
    f = cfg.scalar_function()
    T = SpectralTriple(HermitianOperator(random_hermitian(rng, dim, 1.0)), {}, 1)
    Vs = [_ginibre(rng, dim, float(rng.uniform(0.1, 2.0))) for _ in range(n)]
    p = MoiProblem.single(T.D, Vs, f)
    plain = verify_trace_bound(T, p)
    W = rng.standard_normal((dim, dim))
    W = 0.3 * (W + W.T) / op_norm(W + W.T)
    pert = verify_trace_bound(T, p, W)
    return {"dim": dim, "n": n, "ratio": float(plain["ratio"]), "ratio_perturbed": float(pert["ratio"]),
            "holds": bool(plain["holds"] and pert["holds"])}


CALIBRATION_FRACTION = 2 / 3
C_SAFETY = 1.25


def main_bound_trial(cfg: ExperimentConfig, seq, dim: int, K: int = 5, gamma: float = 0.5) -> dict:
    """Measured ``|lhs - S_K|`` with the data entering the remainder envelope."""
    f = cfg.scalar_function()
    inst = generate_triple(seq, dim, cfg.generator_spec())
    ev = inst.evaluator(f)
    T = inst.triple
    lhs = lhs_trace(T, inst.V, f)
    sums = expansion_terms(ev, K).partial_sums()
    errs = [float(abs(lhs - s)) for s in sums]
    R = bound_radius(T, inst.terms)
    tr = resolvent_power_norm(T)
    samples = [{"K": k + 1, "remainder": errs[k], "R": R, "s": T.s, "trace_res": tr} for k in range(K)]
    return {"dim": dim, "R": R, "trace_res": tr, "s": T.s, "errors": errs,
            "C_instance": fit_envelope_constant(samples, gamma)}


def _main_bound_task(args):
    cfg, seq, dim = args
    return main_bound_trial(cfg, seq, dim)


def check_main_bound(trials: list, gamma: float = 0.5) -> dict:
    """Fit ``C`` on the calibration trials, then test every trial against the envelope."""
    n_cal = max(1, int(math.ceil(CALIBRATION_FRACTION * len(trials))))
    C_fit = max(t["C_instance"] for t in trials[:n_cal])
    C = C_SAFETY * C_fit
    violations = []
    for i, t in enumerate(trials):
        t["bounds"] = [remainder_bound(t["R"], k + 1, t["s"], gamma, t["trace_res"], C)
                       for k in range(len(t["errors"]))]
        t["role"] = "calibration" if i < n_cal else "held_out"
        for k, (e, b) in enumerate(zip(t["errors"], t["bounds"])):
            if e > b:
                violations.append({"trial": i, "K": k + 1, "error": e, "bound": b})
    return {"C_fit": C_fit, "C": C, "safety": C_SAFETY, "calibration_trials": n_cal,
            "violations": violations, "pass": not violations}


def run_bound_check(cfg: ExperimentConfig):
    seqs = trial_seeds(cfg.seed, 2)
    sch_seqs = seqs[0].spawn(cfg.trials)
    main_seqs = seqs[1].spawn(cfg.trials)
    sch = _map(_schatten_trial, [(cfg, s) for s in sch_seqs], cfg.jobs)
    main = _map(_main_bound_task, [(cfg, s, 2 + i % 3) for i, s in enumerate(main_seqs)], cfg.jobs)
    ok_s = all(r["holds"] for r in sch)
    fit = check_main_bound(main)
    out = _envelope(
        cfg,
        ("schatten", {"trials": sch, "max_ratio": max(r["ratio"] for r in sch),
                      "max_ratio_perturbed": max(r["ratio_perturbed"] for r in sch), "pass": ok_s}),
        ("main_bound", {"trials": main, **fit,
                        "note": "C is fitted on the calibration trials, not derived"}),
        ("pass", ok_s and fit["pass"]),
    )
    lines = ["trial,K,abs_error,bound"]
    for i, r in enumerate(main):
        for k, (e, b) in enumerate(zip(r["errors"], r["bounds"])):
            lines.append(f"{i},{k + 1},{e!r},{b!r}")
    return out, "\n".join(lines) + "\n", ok_s and fit["pass"]


# -- pairing ----------------------------------------------------------------------------------------


def run_pairing(cfg: ExperimentConfig):
    check_cost(cfg.dim * cfg.q, 2 * cfg.Kmax + 2)
    f = cfg.scalar_function()
    rng = _rng(cfg.seed)
    T = SpectralTriple(HermitianOperator(random_hermitian(rng, cfg.dim, cfg.d_scale)), {}, 1)
    u = unitary_near_identity(rng, cfg.dim * cfg.q, cfg.eps)
    res = k1_pairing(T, u, f, cfg.Kmax, cfg.q)
    ok = abs(res.value) <= res.tolerance and all(e["residual"] <= 1e-8 for e in res.per_k)
    c = lambda z: {"re": float(complex(z).real), "im": float(complex(z).imag)}  # noqa: E731
    out = _envelope(cfg, ("pairing", {
        "value": c(res.value),
        "abs_value": abs(res.value),
        "tolerance": res.tolerance,
        "tail_estimate": res.tail_estimate,
        "prefactor": c(res.prefactor),
        "branch": res.branch,
        "terms": [c(t) for t in res.terms],
        "extra_terms": [c(t) for t in res.extra_terms],
        "per_k": [{k: (c(v) if isinstance(v, complex) else v) for k, v in e.items()} for e in res.per_k],
    }), ("pass", ok))
    csv = "k,term_re,term_im\n" + "".join(
        f"{k},{complex(t).real!r},{complex(t).imag!r}\n" for k, t in enumerate(res.terms))
    return out, csv, ok


# -- moi-verify ---------------------------------------------------------------------------------------


def run_moi_verify(cfg: ExperimentConfig):
    f = cfg.scalar_function()
    rng = _rng(cfg.seed)
    rows = []
    for trial in range(cfg.trials):
        D = HermitianOperator(random_hermitian(rng, cfg.dim, 1.0))
        for n in (1, 2):
            Vs = [_ginibre(rng, cfg.dim, 1.0) for _ in range(n)]
            p = MoiProblem.single(D, Vs, f)
            eig = moi_eigenbasis(p)
            row = {"trial": trial, "n": n}
            if f.is_gaussian_kind:
                quad = moi_quadrature(p)
                row["quadrature_deviation"] = float(np.max(np.abs(eig - quad.matrix)))
                row["quadrature_error_estimate"] = float(quad.error)
            a = _ginibre(rng, cfg.dim, 1.0)
            row["commutation_residual"] = verify_commutation_identities(D, Vs, a, f)["max"]
            for s in (1, 2):
                row[f"added_weights_s{s}"] = verify_added_weights(p, s)["deviation"]
            rows.append(row)
    checks = {
        "quadrature": max((r.get("quadrature_deviation", 0.0) for r in rows), default=0.0) <= 1e-6,
        "commutation": max(r["commutation_residual"] for r in rows) <= 1e-9,
        "added_weights": max(max(r["added_weights_s1"], r["added_weights_s2"]) for r in rows) <= 1e-7,
    }
    ok = all(checks.values())
    out = _envelope(cfg, ("rows", rows), ("checks", checks), ("pass", ok))
    keys = sorted({k for r in rows for k in r})
    csv = ",".join(keys) + "\n" + "".join(",".join(repr(r.get(k, "")) for k in keys) + "\n" for r in rows)
    return out, csv, ok


# -- bench ----------------------------------------------------------------------------------------------


def bench_contraction(seed: int, dim: int = 4, n: int = 10, f: ScalarFunction | None = None,
                      repeats: int = 3) -> dict:
    """Time the memoized path sum against the naive per-path evaluator on one instance."""
    from .functions import gaussian

    f = f or gaussian(1.0)
    rng = _rng(seed)
    D = HermitianOperator(random_hermitian(rng, dim, 1.0))
    Vs = [_ginibre(rng, dim, 1.0) for _ in range(n)]
    p = MoiProblem.single(D, Vs, f)
    fast = []
    for _ in range(repeats):
        clear_caches()
        t0 = time.perf_counter()
        x = moi_trace(p)
        fast.append(time.perf_counter() - t0)
    t0 = time.perf_counter()
    y = moi_trace_naive(p)
    slow = time.perf_counter() - t0
    t_fast = min(fast)
    return {"dim": dim, "n": n, "memoized_seconds": t_fast, "naive_seconds": slow,
            "speedup": slow / t_fast, "value": {"re": x.real, "im": x.imag},
            "agreement": abs(x - y) / max(1.0, abs(y))}


def run_bench(cfg: ExperimentConfig):
    check_cost(cfg.dim, cfg.n)
    res = bench_contraction(cfg.seed, dim=cfg.dim, n=cfg.n, f=cfg.scalar_function())
    ok = res["speedup"] >= 20.0 and res["agreement"] <= 1e-9
    out = _envelope(cfg, ("bench", res), ("pass", ok))
    csv = "dim,n,memoized_seconds,naive_seconds,speedup\n" + (
        f"{res['dim']},{res['n']},{res['memoized_seconds']!r},{res['naive_seconds']!r},{res['speedup']!r}\n")
    return out, csv, ok


RUNNERS = {
    "expand": run_expand,
    "cocycle-check": run_cocycle_check,
    "bound-check": run_bound_check,
    "pairing": run_pairing,
    "moi-verify": run_moi_verify,
    "bench": run_bench,
}
