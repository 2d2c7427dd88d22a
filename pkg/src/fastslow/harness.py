"""Convergence study, lemma-verification suite and report serialisation.

Monte Carlo work is split into fixed-size chunks whose noise streams depend
only on the chunk index, so results do not depend on how many workers run
them.  Reductions happen in chunk order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .averaging import FitFailure, decorrelation_estimate
from .fraccalc import w_1malpha_infty, w_alpha_infty
from .noise import GridPath, SeedSpec, sample_fbm
from .sde import (
    BlowUpError,
    FastSlowConfig,
    HypothesisSet,
    khasminskii_auxiliary,
    sample_noises,
    solve_averaged,
    solve_fast_slow,
    time_shift_scaling_check,
)

__all__ = [
    "REPORT_COLUMNS",
    "ConvergenceRow",
    "ConvergenceReport",
    "StoppingDiagnostics",
    "LemmaCheck",
    "LemmaSuiteReport",
    "resolve_workers",
    "config_for_epsilon",
    "run_convergence_study",
    "stopping_diagnostics",
    "run_lemma_suite",
    "emit_report",
    "read_report",
    "emit_records",
    "build_manifest",
    "write_manifest",
]

REPORT_COLUMNS = (
    "epsilon",
    "delta_used",
    "n_paths",
    "mse_sup",
    "mse_sup_se",
    "mse_alpha",
    "mse_alpha_se",
    "runtime_s",
)


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: explicit request, else ``FASTSLOW_THREADS``, else CPU count."""
    if requested is not None:
        if requested < 1:
            raise ValueError(f"worker count must be positive, got {requested}")
        return int(requested)
    env = os.environ.get("FASTSLOW_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"FASTSLOW_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"FASTSLOW_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    n = v.size
    if n == 0:
        return float("nan"), float("nan")
    m = math.fsum(v) / n
    if n < 2:
        return m, float("nan")
    var = math.fsum((v - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def config_for_epsilon(template: FastSlowConfig, hyp: HypothesisSet, eps: float,
                       step_ratio: float = 0.1, delta: float | None = None) -> FastSlowConfig:
    """Template copy at ``eps`` with ``delta = eps sqrt(-ln eps)`` and the fast step rule."""
    return FastSlowConfig.for_epsilon(
        eps,
        T=template.T,
        n_steps=template.n_steps,
        step_ratio=step_ratio,
        lip_b2=hyp.lip_b2,
        delta=delta,
        x0=template.x0,
        y0=template.y0,
        H=template.H,
        alpha=template.alpha,
        seed=template.seed,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    epsilon: float
    delta_used: float
    n_paths: int
    mse_sup: float
    mse_sup_se: float
    mse_alpha: float
    mse_alpha_se: float
    runtime_s: float
    n_blowups: int = 0
    noise_checksum: str = ""
    sup_component_sq: float = float("nan")

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


def _ci_separated(a: ConvergenceRow, b: ConvergenceRow, attr: str, z: float = 1.96) -> bool:
    ma, sa = getattr(a, attr), getattr(a, attr + "_se")
    mb, sb = getattr(b, attr), getattr(b, attr + "_se")
    return (ma - z * sa) > (mb + z * sb)


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    manifest: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def checks(self) -> dict[str, bool]:
        out = {}
        for attr in ("mse_sup", "mse_alpha"):
            v = self.column(attr)
            out[f"{attr}_strictly_decreasing"] = bool(v.size >= 2 and np.all(np.diff(v) < 0))
            out[f"{attr}_ci_separated"] = bool(
                len(self.rows) >= 2 and _ci_separated(self.rows[0], self.rows[-1], attr)
            )
        out["no_blowups"] = all(r.n_blowups == 0 for r in self.rows)
        return out

    def zero_error(self, tol: float = 1e-20) -> bool:
        return bool(np.all(self.column("mse_sup") <= tol) and np.all(self.column("mse_alpha") <= tol))

    @property
    def passed(self) -> bool:
        return all(self.checks().values())


def _chunk_sizes(n_paths: int, chunk: int) -> list[int]:
    full, rest = divmod(n_paths, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _convergence_chunk(args):
    cfg, hyp, bbar1, size, replica = args
    bH, w = sample_noises(cfg, hyp, n_paths=size, replica=replica)
    # both solvers read the increments of this one array
    digest = hashlib.sha256(np.ascontiguousarray(bH.values).tobytes()).hexdigest()
    try:
        sol = solve_fast_slow(cfg, hyp, bH, w)
        xbar = solve_averaged(cfg, hyp, bbar1, bH)
    except BlowUpError:
        return None, digest
    diff = sol.X.with_values(sol.X.values - xbar.values)
    sup = np.max(np.sqrt(np.sum(diff.values**2, axis=-1)), axis=-1)
    anorm = np.asarray(w_alpha_infty(diff, cfg.alpha), dtype=float)
    return (sup**2, anorm**2), digest


def run_convergence_study(
    cfg_template: FastSlowConfig,
    hyp: HypothesisSet,
    bbar1: Callable,
    eps_list: Iterable[float],
    n_paths: int,
    *,
    workers: int | None = None,
    chunk: int = 50,
    step_ratio: float = 0.1,
    max_paths: int | None = None,
) -> ConvergenceReport:
    """Mean-square sup and alpha-norm errors between ``X^eps`` and ``Xbar`` per ``eps``.

    Each replica drives both solvers with one fBm realisation; the Wiener
    path is independent per replica.  When ``max_paths`` exceeds ``n_paths``
    and the first and last rows have overlapping 95% intervals, every row is
    rerun with twice the paths until the intervals separate or the cap is hit.
    """
    eps_sorted = sorted({float(e) for e in eps_list}, reverse=True)
    if not eps_sorted:
        return ConvergenceReport([], build_manifest(cfg_template, hyp, extra={"eps_list": []}))
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    nw = resolve_workers(workers)
    paths = n_paths
    while True:
        rows = []
        for eps in eps_sorted:
            cfg = config_for_epsilon(cfg_template, hyp, eps, step_ratio)
            t0 = time.perf_counter()
            sizes = _chunk_sizes(paths, chunk)
            tasks = [(cfg, hyp, bbar1, s, i) for i, s in enumerate(sizes)]
            results = _map_ordered(_convergence_chunk, tasks, nw)
            blow = sum(s for (res, _), s in zip(results, sizes) if res is None)
            good = [res for res, _ in results if res is not None]
            checksum = hashlib.sha256("".join(d for _, d in results).encode()).hexdigest()[:16]
            if good:
                s2 = np.concatenate([g[0] for g in good])
                a2 = np.concatenate([g[1] for g in good])
            else:
                s2 = a2 = np.array([])
            if blow:
                ms = mss = ma = mas = float("nan")
            else:
                ms, mss = _mean_se(s2)
                ma, mas = _mean_se(a2)
            rows.append(
                ConvergenceRow(eps, cfg.delta_used, paths, ms, mss, ma, mas,
                               time.perf_counter() - t0, blow, checksum, ms)
            )
        report = ConvergenceReport(
            rows,
            build_manifest(cfg_template, hyp, extra={"eps_list": eps_sorted, "n_paths": paths, "chunk": chunk,
                                                     "step_ratio": step_ratio}),
        )
        c = report.checks()
        separated = c["mse_sup_ci_separated"] and c["mse_alpha_ci_separated"]
        if separated or max_paths is None or paths * 2 > max_paths:
            return report
        paths *= 2


@dataclass(frozen=True)
class StoppingDiagnostics:
    R: float
    empirical_p_tau_lt_T: float
    empirical_se: float
    chebyshev_bound: float
    chebyshev_se: float

    @property
    def holds(self) -> bool:
        return self.empirical_p_tau_lt_T <= self.chebyshev_bound + 3.0 * self.empirical_se


def stopping_diagnostics(H: float, alpha: float, T: float, R_list, n_paths: int, seed: SeedSpec,
                         *, n_steps: int = 128, relative: bool = False, workers: int | None = None,
                         chunk: int = 500) -> list[StoppingDiagnostics]:
    """Exceedance probability of the fBm ``(1-alpha)``-norm against its Chebyshev bound.

    ``tau_R < T`` exactly when the running norm passes ``R`` before ``T``,
    i.e. when the norm over ``[0, T]`` exceeds ``R``.  With ``relative`` the
    entries of ``R_list`` multiply the sample median of the norm.
    """
    nw = resolve_workers(workers)
    sizes = _chunk_sizes(n_paths, chunk)

    def one(args):
        size, i = args
        b = sample_fbm(T, n_steps, H, 1, seed.child(10_000_000 + seed.stream_id * 10_000 + i), n_paths=size)
        return np.asarray(w_1malpha_infty(b, alpha), dtype=float)

    norms = np.concatenate(_map_ordered(one, [(s, i) for i, s in enumerate(sizes)], nw))
    med = float(np.median(norms))
    m2, m2_se = _mean_se(norms**2)
    out = []
    for R in R_list:
        Rv = float(R) * med if relative else float(R)
        if Rv <= 0:
            raise ValueError("R must be positive")
        p = float(np.mean(norms > Rv))
        p_se = math.sqrt(max(p * (1 - p), 0.0) / norms.size)
        out.append(StoppingDiagnostics(Rv, p, p_se, m2 / Rv, m2_se / Rv))
    return out


@dataclass(frozen=True)
class LemmaCheck:
    name: str
    passed: bool
    value: float
    target: str
    detail: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "target": self.target,
                "detail": self.detail}


@dataclass
class LemmaSuiteReport:
    checks: list[LemmaCheck]
    manifest: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name: str) -> LemmaCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _khasminskii_sweep(cfg: FastSlowConfig, hyp, deltas, n_paths: int, chunk: int, nw: int):
    """Per-delta ``sup_t E|Y - Yhat|^2`` and ``E sup_t |X - Xhat|^2`` on shared noises."""
    sizes = _chunk_sizes(n_paths, chunk)

    def one(args):
        size, i = args
        bH, w = sample_noises(cfg, hyp, n_paths=size, replica=i)
        sol = solve_fast_slow(cfg, hyp, bH, w)
        ysq, xsup = [], []
        for d in deltas:
            k = khasminskii_auxiliary(cfg.with_(delta=d), hyp, sol, bH, w)
            ysq.append(np.sum((k.Yhat_fast - sol.Y_fast) ** 2, axis=(-1,)).sum(axis=0))
            xsup.append(np.max(np.sqrt(np.sum((k.Xhat_fast - sol.X_fast) ** 2, axis=-1)), axis=-1) ** 2)
        return ysq, xsup, sol

    res = _map_ordered(one, [(s, i) for i, s in enumerate(sizes)], nw)
    y_err, x_err, x_se = [], [], []
    for j, d in enumerate(deltas):
        ysum = sum(r[0][j] for r in res)
        y_err.append(float(np.max(ysum / n_paths)))
        xs = np.concatenate([r[1][j] for r in res])
        m, se = _mean_se(xs)
        x_err.append(m)
        x_se.append(se)
    return y_err, x_err, x_se


def _guard(name: str, target: str, fn: Callable[[], LemmaCheck]) -> LemmaCheck:
    try:
        return fn()
    except (FitFailure, BlowUpError, ValueError, FloatingPointError) as exc:
        return LemmaCheck(name, False, float("nan"), target, {"error": f"{type(exc).__name__}: {exc}"})


def run_lemma_suite(
    cfg: FastSlowConfig,
    hyp: HypothesisSet,
    bbar1: Callable,
    seed: SeedSpec,
    *,
    n_paths: int = 200,
    eps_list: Sequence[float] = (0.1, 0.05, 0.02, 0.01),
    khas_eps: float = 0.005,
    khas_deltas: Sequence[float] = (0.04, 0.02, 0.01),
    workers: int | None = None,
    chunk: int = 50,
) -> LemmaSuiteReport:
    """Scaling tests for the a priori bounds, Khasminskii estimates and stopping time.

    Failures are recorded per check; the suite itself does not raise for
    them.  A system whose errors vanish identically passes the error checks
    with exponent ``nan``.
    """
    nw = resolve_workers(workers)
    base = cfg.with_(seed=seed)
    checks: list[LemmaCheck] = []

    # a priori bounds, regularity and fast moments across eps
    per_eps: dict[float, dict] = {}

    def eps_stats():
        sizes = _chunk_sizes(n_paths, chunk)
        for eps in sorted(eps_list, reverse=True):
            c = config_for_epsilon(base, hyp, eps)

            def one(args, c=c):
                size, i = args
                bH, w = sample_noises(c, hyp, n_paths=size, replica=i)
                sol = solve_fast_slow(c, hyp, bH, w)
                xb = solve_averaged(c, hyp, bbar1, bH)
                kh = khasminskii_auxiliary(c, hyp, sol, bH, w)
                return sol, xb, kh

            res = _map_ordered(one, [(s, i) for i, s in enumerate(sizes)], nw)
            X = np.concatenate([r[0].X.values for r in res])
            Y = np.concatenate([r[0].Y.values for r in res])
            Xb = np.concatenate([r[1].values for r in res])
            Xh = np.concatenate([r[2].Xhat.values for r in res])
            mk = lambda v: GridPath(c.T, c.n_steps, v)  # noqa: E731
            per_eps[eps] = {
                "X": X,
                "norm_X": _mean_se(np.asarray(w_alpha_infty(mk(X), c.alpha)) ** 2),
                "norm_Xbar": _mean_se(np.asarray(w_alpha_infty(mk(Xb), c.alpha)) ** 2),
                "norm_Xhat": _mean_se(np.asarray(w_alpha_infty(mk(Xh), c.alpha)) ** 2),
                "y2": np.mean(np.sum(Y**2, axis=-1), axis=0),
                "y2_se": np.std(np.sum(Y**2, axis=-1), axis=0, ddof=1) / math.sqrt(Y.shape[0]),
                "x_xbar": _mean_se(np.max(np.sum((X - Xb) ** 2, axis=-1), axis=-1)),
                "xhat_xbar": _mean_se(np.max(np.sum((Xh - Xb) ** 2, axis=-1), axis=-1)),
                "h": c.h_slow,
            }

    try:
        eps_stats()
        eps_ok = True
    except BlowUpError as exc:
        eps_ok = False
        checks.append(LemmaCheck("eps-sweep", False, float("nan"), "no blow-up", {"error": str(exc)}))

    if eps_ok:
        eps_desc = sorted(per_eps, reverse=True)

        def lemb():
            vals = {k: [per_eps[e][k][0] for e in eps_desc] for k in ("norm_X", "norm_Xbar", "norm_Xhat")}
            spread = max(max(v) / min(v) if min(v) > 0 else (1.0 if max(v) == 0 else float("inf"))
                         for v in vals.values())
            finite = all(np.isfinite(x) for v in vals.values() for x in v)
            return LemmaCheck("lemb", bool(finite and spread <= 1.5), float(spread), "finite, max/min <= 1.5",
                              {"eps": eps_desc, **vals})

        def lemregu():
            e = eps_desc[-1]
            X = per_eps[e]["X"]
            h = per_eps[e]["h"]
            lags = np.array([1, 2, 4, 8, 16])
            inc = [float(np.mean(np.sum((X[:, lag:, :] - X[:, :-lag, :]) ** 2, axis=-1))) for lag in lags]
            if max(inc) == 0:
                return LemmaCheck("lemregu", True, float("nan"), f">= {2 - 2 * base.alpha - 0.1:.3f}",
                                  {"note": "identically zero increments"})
            s = _slope(lags * h, inc)
            tgt = 2 - 2 * base.alpha - 0.1
            return LemmaCheck("lemregu", bool(s >= tgt), s, f">= {tgt:.3f}", {"h": (lags * h).tolist(), "mse": inc})

        def ybound():
            sups = [float(np.max(per_eps[e]["y2"])) for e in eps_desc]
            ses = [float(per_eps[e]["y2_se"][int(np.argmax(per_eps[e]["y2"]))]) for e in eps_desc]
            # no upward trend: the smallest-eps value may not exceed the largest-eps one beyond 3 s.e.
            ok = sups[-1] <= sups[0] + 3 * math.hypot(ses[0], ses[-1]) + 1e-300
            return LemmaCheck("ybound", bool(ok), sups[-1] - sups[0], "no upward trend beyond 3 s.e.",
                              {"eps": eps_desc, "sup_E_y2": sups, "se": ses})

        def decreasing(name, key):
            def run():
                v = [per_eps[e][key][0] for e in eps_desc]
                if max(v) == 0:
                    return LemmaCheck(name, True, 0.0, "decreasing in eps", {"note": "identically zero"})
                ok = all(b < a for a, b in zip(v, v[1:]))
                return LemmaCheck(name, bool(ok), v[-1], "decreasing in eps", {"eps": eps_desc, "mse": v})
            return run

        checks.append(_guard("lemb", "finite, max/min <= 1.5", lemb))
        checks.append(_guard("lemregu", "slope", lemregu))
        checks.append(_guard("ybound", "no trend", ybound))
        checks.append(_guard("x-xbar", "decreasing in eps", decreasing("x-xbar", "x_xbar")))
        checks.append(_guard("xbar-xhat", "decreasing in eps", decreasing("xbar-xhat", "xhat_xbar")))

    def khas():
        c = FastSlowConfig.for_epsilon(khas_eps, T=base.T, n_steps=base.n_steps, step_ratio=0.05,
                                       lip_b2=hyp.lip_b2, delta=max(khas_deltas), x0=base.x0, y0=base.y0,
                                       H=base.H, alpha=base.alpha, seed=base.seed)
        y_err, x_err, x_se = _khasminskii_sweep(c, hyp, list(khas_deltas), n_paths, chunk, nw)
        out = []
        for name, err in (("yhat", y_err), ("x-xhat", x_err)):
            if max(err) == 0:
                out.append(LemmaCheck(name, True, float("nan"), "exponent 1 +- 0.25", {"note": "identically zero"}))
                continue
            s = _slope(khas_deltas, err)
            bound_ratio = [e / d for e, d in zip(err, khas_deltas)]
            out.append(LemmaCheck(name, bool(abs(s - 1.0) <= 0.25), s, "exponent 1 +- 0.25",
                                  {"delta": list(khas_deltas), "err": err, "err_over_delta": bound_ratio,
                                   "upper_bound_C_stable": bool(bound_ratio[-1] <= bound_ratio[0] * 1.1)}))
        return out

    try:
        checks.extend(khas())
    except (BlowUpError, ValueError) as exc:
        checks.append(LemmaCheck("yhat", False, float("nan"), "exponent 1 +- 0.25", {"error": str(exc)}))

    def ptau():
        diags = stopping_diagnostics(base.H, base.alpha, base.T, (1.0, 2.0, 10.0), max(n_paths * 5, 1000),
                                     seed.child(seed.stream_id + 31), relative=True, workers=nw)
        bounds = [d.chebyshev_bound for d in diags]
        ok = all(d.holds for d in diags) and all(b > a for a, b in zip(bounds[1:], bounds))
        return LemmaCheck("ptau", bool(ok), diags[0].empirical_p_tau_lt_T, "p <= bound + 3 s.e., bound decreasing",
                          {"diagnostics": [asdict(d) for d in diags]})

    checks.append(_guard("ptau", "Chebyshev", ptau))

    def decor():
        x = base.x0
        bb = np.asarray(bbar1(0.0, x[None, :]))[0]
        fit = decorrelation_estimate(x, base.y0, hyp, lambda y: np.asarray(hyp.b1(0.0, np.broadcast_to(x, y.shape[:-1] + x.shape), y)),
                                     np.arange(5.0, 9.0 + 1e-9, 0.1), seed.child(seed.stream_id + 37),
                                     max(n_paths * 50, 10000), bbar=bb)
        tgt = hyp.beta1 / 2 - 0.2
        if fit.degenerate:
            return LemmaCheck("decorrelation", True, float("nan"), f">= {tgt:.2f}", {"note": "identically zero"})
        return LemmaCheck("decorrelation", bool(fit.rate >= tgt), fit.rate, f">= {tgt:.2f}",
                          {"r_squared": fit.r_squared, "n_points": fit.n_points})

    checks.append(_guard("decorrelation", "rate", decor))

    def shift():
        c = FastSlowConfig.for_epsilon(0.01, T=base.T, n_steps=base.n_steps, step_ratio=0.05, lip_b2=hyp.lip_b2,
                                       x0=base.x0, y0=base.y0, H=base.H, alpha=base.alpha,
                                       seed=seed.child(seed.stream_id + 41))
        good = time_shift_scaling_check(c, hyp, 1, 5000)
        bad = time_shift_scaling_check(c, hyp, 1, 5000, eps_ratio=4.0)
        if good.ks_statistic == 0.0 and bad.ks_statistic == 0.0:
            # deterministic fast block at a fixed point: both laws are the same point mass
            return LemmaCheck("time-shift", True, good.p_value, "p >= 0.01, control p < 0.01",
                              {"ks": 0.0, "control_ks": 0.0, "note": "degenerate fast law"})
        return LemmaCheck("time-shift", bool(good.passed and not bad.passed), good.p_value,
                          "p >= 0.01, control p < 0.01",
                          {"ks": good.ks_statistic, "control_ks": bad.ks_statistic, "control_p": bad.p_value})

    checks.append(_guard("time-shift", "KS", shift))
    return LemmaSuiteReport(checks, build_manifest(base, hyp, extra={"suite": "lemmas", "n_paths": n_paths}))


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def build_manifest(cfg: FastSlowConfig | None, hyp: HypothesisSet | None, extra: dict | None = None) -> dict:
    m: dict = {"package_version": __version__, "build": _git_describe()}
    if cfg is not None:
        m["config"] = cfg.as_dict()
    if hyp is not None:
        m["system"] = {
            "name": hyp.name,
            "dims": list(hyp.dims),
            "beta_holder": hyp.beta_holder,
            "gamma_holder": hyp.gamma_holder,
            "beta1": hyp.beta1,
            "beta2": hyp.beta2,
            "b1_sup_bound": hyp.b1_sup_bound,
            "lipschitz_constants": dict(hyp.lipschitz_constants or {}),
        }
    if extra:
        m.update(extra)
    return m


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def write_manifest(manifest: dict, path) -> Path:
    p = Path(path)
    p.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return p


def _manifest_path(path: Path) -> Path:
    return path.with_name(path.name + ".manifest.json")


def emit_records(records: list[dict], fmt: str, path, columns: Sequence[str] | None = None) -> Path:
    """Write dict records as CSV (fixed column order) or JSON lines."""
    p = Path(path)
    if fmt == "csv":
        cols = list(columns) if columns is not None else (list(records[0]) if records else [])
        with p.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(cols)
            for r in records:
                wr.writerow([_fmt(r[c]) for c in cols])
    elif fmt == "jsonl":
        with p.open("w") as fh:
            for r in records:
                fh.write(json.dumps(_jsonable(r), sort_keys=False) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}; use csv or jsonl")
    return p


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (dict, list)):
        return json.dumps(_jsonable(v))
    return str(v)


def emit_report(report, fmt: str, path) -> Path:
    """Serialise a report deterministically next to a JSON provenance manifest."""
    p = Path(path)
    if isinstance(report, ConvergenceReport):
        emit_records([r.as_record() for r in report.rows], fmt, p, REPORT_COLUMNS)
        manifest = report.manifest
    elif isinstance(report, LemmaSuiteReport):
        emit_records([c.as_record() for c in report.checks], fmt, p, ("name", "passed", "value", "target", "detail"))
        manifest = report.manifest
    elif isinstance(report, list) and all(isinstance(d, StoppingDiagnostics) for d in report):
        recs = [{**asdict(d), "holds": d.holds} for d in report]
        emit_records(recs, fmt, p, ("R", "empirical_p_tau_lt_T", "empirical_se", "chebyshev_bound",
                                    "chebyshev_se", "holds"))
        manifest = {"report": "stopping_diagnostics"}
    else:
        raise TypeError(f"cannot emit {type(report).__name__}")
    write_manifest(manifest, _manifest_path(p))
    return p


def read_report(path, fmt: str | None = None) -> ConvergenceReport:
    """Re-ingest a convergence report written by :func:`emit_report`."""
    p = Path(path)
    fmt = fmt or ("jsonl" if p.suffix == ".jsonl" else "csv")
    if fmt == "csv":
        with p.open(newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != REPORT_COLUMNS:
                raise ValueError(f"unexpected columns {header}")
            recs = [dict(zip(header, row)) for row in rd]
    else:
        recs = [json.loads(line) for line in p.read_text().splitlines() if line.strip()]
    rows = [
        ConvergenceRow(
            float(r["epsilon"]), float(r["delta_used"]), int(r["n_paths"]), float(r["mse_sup"]),
            float(r["mse_sup_se"]), float(r["mse_alpha"]), float(r["mse_alpha_se"]), float(r["runtime_s"]),
        )
        for r in recs
    ]
    mp = _manifest_path(p)
    manifest = json.loads(mp.read_text()) if mp.exists() else {}
    return ConvergenceReport(rows, manifest)
