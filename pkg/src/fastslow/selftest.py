"""Quick oracle checks across all modules, run by ``fastslow selftest``.

Every check is deterministic for a given master seed and independent of
the worker count; records carry no timings so two runs can be diffed
byte for byte.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from . import averaging, fraccalc, harness, noise, sde, systems
from .noise import GridPath, SeedSpec

__all__ = ["SelfCheck", "run_selftest", "CHECKS"]


@dataclass(frozen=True)
class SelfCheck:
    module: str
    name: str
    passed: bool
    value: float

    def as_record(self) -> dict:
        return {"module": self.module, "name": self.name, "passed": self.passed, "value": self.value}


def _pure_noise() -> sde.HypothesisSet:
    return sde.HypothesisSet(
        b1=lambda t, x, y: np.zeros_like(x),
        sigma1=lambda t, x: np.ones(x.shape + (1,)),
        b2=lambda x, y: -(y - x),
        sigma2=lambda x, y: np.full(y.shape + (1,), math.sqrt(2.0)),
        dims=(1, 1, 1, 1),
        beta1=2.0,
        lipschitz_constants={"L6": 1.0},
        name="pure-noise",
    )


def _noise_cov(seed: SeedSpec, workers: int):
    n, P = 8, 20000
    worst = 0.0
    for H in (0.6, 0.75, 0.9):
        b = noise.sample_fbm_davies_harte(1.0, n, H, 1, seed.child(1), n_paths=P).values[:, 1:, 0]
        t = np.arange(1, n + 1) / n
        exact = noise.fbm_covariance(t[:, None], t[None, :], H)
        prod = b[:, :, None] * b[:, None, :]
        se = prod.std(axis=0, ddof=1) / math.sqrt(P)
        worst = max(worst, float(np.max(np.abs(prod.mean(axis=0) - exact) / se)))
    return worst <= 4.0, worst


def _frac_integral(seed, workers):
    f = GridPath.from_function(lambda t: np.ones_like(t), 1.0, 1024)
    v = fraccalc.frac_integral_left(f, 0.5).values[-1, 0]
    err = abs(v - 2 / math.sqrt(math.pi))
    return err < 1e-10, err


def _weyl_constant(seed, workers):
    f = GridPath.from_function(lambda t: 3.0 * np.ones_like(t), 1.0, 512)
    d = fraccalc.weyl_left(f, 0.3).values[1:, 0]
    t = f.times[1:]
    err = float(np.max(np.abs(d - 3.0 * t**-0.3 / special.gamma(0.7))))
    return err < 1e-9, err


def _inversion(seed, workers):
    f = GridPath.from_function(lambda t: np.sin(3 * t) + t**2, 1.0, 4096)
    back = fraccalc.weyl_left(fraccalc.frac_integral_left(f, 0.4), 0.4)
    err = float(np.max(np.abs(back.values[1:, 0] - f.values[1:, 0])))
    return err <= 1e-2 * float(np.max(np.abs(f.values))), err


def _alpha_norm_linear(seed, workers):
    f = GridPath.from_function(lambda t: t, 1.0, 2048)
    v = float(fraccalc.w_alpha_infty(f, 0.4))
    return abs(v - (1 + 1 / 0.6)) <= 1e-3, v


def _rs_vs_young(seed, workers):
    g = noise.sample_fbm(1.0, 4096, 0.75, 1, seed.child(2))
    f = GridPath.from_function(lambda t: np.cos(2 * t) + t, 1.0, 4096)
    a = float(fraccalc.rs_integral_fractional(f, g, 0.3))
    b = float(fraccalc.young_integral_sum(f, g))
    rel = abs(a - b) / (1 + abs(b))
    return rel <= 1e-3, rel


def _young_bound_linear(seed, workers):
    f = GridPath.from_function(lambda t: np.ones_like(t), 1.0, 1024)
    g = GridPath.from_function(lambda t: t, 1.0, 1024)
    r = fraccalc.young_bound_check(f, g, 0.3)
    return bool(r.holds and abs(r.lhs - 1.0) < 1e-12), r.lhs


def _pure_noise_exact(seed, workers):
    hyp = _pure_noise()
    cfg = sde.FastSlowConfig.for_epsilon(0.05, n_steps=100, seed=seed.child(3))
    bH, w = sde.sample_noises(cfg, hyp, n_paths=4)
    sol = sde.solve_fast_slow(cfg, hyp, bH, w)
    err = float(np.max(np.abs(sol.X_fast - (cfg.x0 + bH.values))))
    return err < 1e-12, err


def _y_free_identical(seed, workers):
    hyp = systems.get_system("y-free")
    cfg = sde.FastSlowConfig.for_epsilon(0.05, n_steps=100, seed=seed.child(4))
    bH, w = sde.sample_noises(cfg, hyp, n_paths=4)
    a = sde.solve_fast_slow(cfg, hyp, bH, w).X.values
    b = sde.solve_averaged(cfg, hyp, systems.closed_form_drift("y-free"), bH).values
    d = float(np.max(np.abs(a - b)))
    return d == 0.0, d


def _time_shift(seed, workers):
    hyp = systems.get_system("ou-sin")
    cfg = sde.FastSlowConfig.for_epsilon(0.01, n_steps=100, step_ratio=0.05, seed=seed.child(5))
    good = sde.time_shift_scaling_check(cfg, hyp, 1, 2000)
    bad = sde.time_shift_scaling_check(cfg, hyp, 1, 2000, eps_ratio=4.0)
    return bool(good.passed and not bad.passed), good.p_value


def _invariant_ou(seed, workers):
    hyp = systems.get_system("ou-sin")
    mu = averaging.sample_invariant_measure([1.0], hyp, 5.0, 500.0, 100, seed.child(6), n_chains=8)
    m, s = float(mu.mean()[0]), float(mu.mean_se()[0])
    v = float(mu.var()[0])
    return bool(abs(m - 1.0) <= 3 * s and abs(v - 1.0) <= 0.05), v


def _drift_closed_form(seed, workers):
    hyp = systems.get_system("ou-sin")
    mu = averaging.sample_invariant_measure([1.0], hyp, 5.0, 500.0, 100, seed.child(7), n_chains=8)
    d = averaging.averaged_drift(hyp, mu, 0.0, [1.0])
    z = float(abs(d.value[0] - math.exp(-0.5) * math.sin(1.0)) / d.stderr[0])
    return z <= 3.0, z


def _interpolant(seed, workers):
    hyp = systems.get_system("ou-sin")
    bb = systems.closed_form_drift("ou-sin")
    it = averaging.averaged_drift_interpolant(hyp, np.linspace(-math.pi, math.pi, 64), [0.0],
                                              {"mode": "closed-form", "bbar": bb})
    xs = np.linspace(-3.1, 3.1, 1001)[:, None]
    err = float(np.max(np.abs(it(0.0, xs) - bb(0.0, xs))))
    return err <= 1e-3, err


def _contraction(seed, workers):
    hyp = systems.get_system("ou-sin")
    fit = averaging.contraction_estimate([1.0], [3.0], [-1.0], hyp, 3.0, 100, seed.child(8))
    return bool(1.8 <= fit.rate <= 2.2 and fit.r_squared >= 0.99), fit.rate


def _convergence(seed, workers):
    hyp = systems.get_system("ou-sin")
    cfg = sde.FastSlowConfig.for_epsilon(0.1, n_steps=100, seed=seed.child(9))
    rep = harness.run_convergence_study(cfg, hyp, systems.closed_form_drift("ou-sin"), [0.1, 0.02], 100,
                                        workers=workers, chunk=25)
    c = rep.checks()
    return bool(c["mse_sup_strictly_decreasing"] and c["mse_alpha_strictly_decreasing"]), rep.rows[-1].mse_sup


def _y_free_zero(seed, workers):
    hyp = systems.get_system("y-free")
    cfg = sde.FastSlowConfig.for_epsilon(0.1, n_steps=100, seed=seed.child(10))
    rep = harness.run_convergence_study(cfg, hyp, systems.closed_form_drift("y-free"), [0.1, 0.05], 20,
                                        workers=workers, chunk=10)
    return rep.zero_error(), float(np.max(rep.column("mse_sup")))


def _stopping(seed, workers):
    d = harness.stopping_diagnostics(0.75, 0.3, 1.0, (1.0, 2.0, 10.0), 1000, seed.child(11), relative=True,
                                     workers=workers, chunk=250)
    ok = all(x.holds for x in d) and d[0].chebyshev_bound > d[1].chebyshev_bound > d[2].chebyshev_bound
    return bool(ok), d[0].empirical_p_tau_lt_T


def _report_roundtrip(seed, workers):
    rows = [harness.ConvergenceRow(0.1, 0.15, 10, 0.5, 0.1, 1.5, 0.2, 0.0)]
    rep = harness.ConvergenceReport(rows, {"note": "roundtrip"})
    with tempfile.TemporaryDirectory() as d:
        p = harness.emit_report(rep, "csv", Path(d) / "r.csv")
        back = harness.read_report(p)
    return back.rows == rows, 0.0


CHECKS: list[tuple[str, str, Callable]] = [
    ("noise", "fbm_covariance_8_nodes", _noise_cov),
    ("fraccalc", "rl_integral_of_one", _frac_integral),
    ("fraccalc", "weyl_of_constant", _weyl_constant),
    ("fraccalc", "inversion", _inversion),
    ("fraccalc", "alpha_norm_of_t", _alpha_norm_linear),
    ("fraccalc", "fractional_vs_young", _rs_vs_young),
    ("fraccalc", "young_bound_linear", _young_bound_linear),
    ("sde", "pure_noise_exact", _pure_noise_exact),
    ("sde", "y_free_identical", _y_free_identical),
    ("sde", "time_shift_ks", _time_shift),
    ("averaging", "ou_invariant_moments", _invariant_ou),
    ("averaging", "drift_closed_form", _drift_closed_form),
    ("averaging", "interpolant_error", _interpolant),
    ("averaging", "contraction_rate", _contraction),
    ("harness", "convergence_decreasing", _convergence),
    ("harness", "y_free_zero_error", _y_free_zero),
    ("harness", "stopping_chebyshev", _stopping),
    ("harness", "report_roundtrip", _report_roundtrip),
]


def run_selftest(master_seed: int = 0, workers: int | None = None, only: str | None = None) -> list[SelfCheck]:
    nw = harness.resolve_workers(workers)
    seed = SeedSpec(master_seed, 0)
    out = []
    for module, name, fn in CHECKS:
        if only and only != module:
            continue
        try:
            ok, val = fn(seed, nw)
        except Exception as exc:  # a crashing check is a failed check
            ok, val = False, float("nan")
            name = f"{name} ({type(exc).__name__}: {exc})"
        out.append(SelfCheck(module, name, bool(ok), float(val)))
    return out
