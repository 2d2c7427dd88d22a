"""Command-line entry point.

Exit codes: 0 success, 2 finished with failed checks, 1 execution error,
64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import averaging, fraccalc, harness, noise, sde
from .config import ConfigError, RunConfig, load_config, resolve_bbar
from .noise import GridPath, SeedSpec
from .systems import SYSTEMS, get_system

EXIT_OK, EXIT_ERROR, EXIT_FAILED, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _float_list(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _write_matrix_csv(path: Path, times: np.ndarray, values: np.ndarray, prefix: str, comment: str | None = None):
    """Rows are grid nodes; columns ``t`` then one per (path, component)."""
    if values.ndim == 2:
        cols = [f"{prefix}{d + 1}" for d in range(values.shape[1])]
        mat = values
    else:
        P, n1, d = values.shape
        cols = [f"p{p}_{prefix}{c + 1}" for p in range(P) for c in range(d)]
        mat = values.transpose(1, 0, 2).reshape(n1, P * d)
    header = ",".join(["t"] + cols)
    if comment:
        header = comment + "\n" + header
    np.savetxt(path, np.column_stack([times, mat]), delimiter=",", header=header, comments="", fmt="%.17g")


def _read_grid_csv(path: str) -> GridPath:
    """First column time (uniform grid), remaining columns the path components."""
    try:
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read grid CSV {path}: {exc}") from None
    if data.shape[0] < 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: need a time column and at least one value column over two or more nodes")
    t = data[:, 0]
    dt = np.diff(t)
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
        raise ValueError(f"{path}: time column must be a uniform increasing grid")
    return GridPath(float(t[-1] - t[0]), t.size - 1, data[:, 1:], t0=float(t[0]))


def _cmd_fbm(a) -> int:
    seed = SeedSpec(a.seed, a.stream)
    path = noise.sample_fbm(a.T, a.n, a.H, a.dim, seed, n_paths=a.paths, method=a.method)
    out = Path(a.out)
    _write_matrix_csv(out, path.times, path.values, "x")
    args = {k: v for k, v in vars(a).items() if k != "fn"}
    harness.write_manifest({"command": "fbm", **args, "generator": path.meta.get("method")},
                           out.with_name(out.name + ".manifest.json"))
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_integrate(a) -> int:
    f = _read_grid_csv(a.f)
    g = _read_grid_csv(a.g)
    f1 = f.with_values(f.values[:, :1])
    g1 = g.with_values(g.values[:, :1])
    young = float(fraccalc.young_integral_sum(f1, g1))
    frac = float(fraccalc.rs_integral_fractional(f1, g1, a.alpha))
    chosen = frac if a.method == "fractional" else young
    print(json.dumps({"method": a.method, "value": chosen}))
    print(json.dumps({"fractional": frac, "young": young, "abs_diff": abs(frac - young)}))
    yb = fraccalc.young_bound_check(f1, g1, a.alpha)
    print(json.dumps({"young_bound": {"lhs": yb.lhs, "rhs": yb.rhs, "holds": bool(yb.holds)}}))
    return EXIT_OK


def _load(a) -> RunConfig:
    return load_config(a.config)


def _cmd_simulate(a) -> int:
    rc = _load(a)
    cfg, hyp = rc.cfg, rc.hyp
    n_paths = a.paths if a.paths is not None else 1
    bbar = resolve_bbar(rc)
    bH, w = sde.sample_noises(cfg, hyp, n_paths=None if n_paths == 1 else n_paths)
    sol = sde.solve_fast_slow(cfg, hyp, bH, w)
    kh = sde.khasminskii_auxiliary(cfg, hyp, sol, bH, w)
    xb = sde.solve_averaged(cfg, hyp, bbar, bH)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    t = sol.X.times
    for name, gp in (("X", sol.X), ("Y", sol.Y), ("Xhat", kh.Xhat), ("Yhat", kh.Yhat), ("Xbar", xb)):
        _write_matrix_csv(out / f"{name}.csv", t, gp.values, name)
    man = harness.build_manifest(cfg, hyp, extra={"command": "simulate", "config_file": str(a.config),
                                                  "config": cfg.as_dict(), "raw_config": rc.raw,
                                                  "n_paths": n_paths, "bbar_mode": rc.experiment["bbar_mode"],
                                                  "delta_used": kh.delta_used})
    harness.write_manifest(man, out / "manifest.json")
    print(f"wrote X, Y, Xhat, Yhat, Xbar and manifest to {out} (delta_used = {kh.delta_used:g})")
    return EXIT_OK


def _cmd_frozen(a) -> int:
    hyp = get_system(a.system)
    x = _float_list(a.x)
    thin = a.thin if a.thin is not None else max(1, int(round(2.0 / hyp.beta1 / a.dt)))
    mu = averaging.sample_invariant_measure(x, hyp, a.burn_in, a.horizon, thin, SeedSpec(a.seed, a.stream),
                                            dt=a.dt, n_chains=a.chains)
    out = Path(a.out)
    comment = "# " + json.dumps({**mu.provenance, "system": a.system})
    np.savetxt(out, mu.samples, delimiter=",", header=comment + "\n" + ",".join(f"y{i}" for i in range(hyp.d2)),
               comments="", fmt="%.17g")
    m, se = mu.mean(), mu.mean_se()
    print(json.dumps({"n_samples": mu.n, "mean": m.tolist(), "mean_se": se.tolist(), "var": mu.var().tolist()}))
    return EXIT_OK


def _read_measure(path: str) -> tuple[averaging.EmpiricalMeasure, str | None]:
    p = Path(path)
    try:
        first = p.open().readline()
    except OSError as exc:
        raise ValueError(f"cannot read measure {p}: {exc.strerror}") from None
    prov = json.loads(first[1:]) if first.startswith("#") else {}
    data = np.loadtxt(p, delimiter=",", comments="#", skiprows=2 if prov else 1, ndmin=2)
    return averaging.EmpiricalMeasure(data, prov), prov.get("system")


def _cmd_average(a) -> int:
    mu, sys_name = _read_measure(a.measure)
    hyp = get_system(a.system or sys_name or "ou-sin")
    x = _float_list(a.x) if a.x is not None else mu.x.tolist()
    d = averaging.averaged_drift(hyp, mu, a.t, x, allow_reuse=a.allow_reuse)
    print(json.dumps({"t": a.t, "x": x, "bbar1": d.value.tolist(), "stderr": d.stderr.tolist()}))
    return EXIT_OK


def _cmd_converge(a) -> int:
    rc = _load(a)
    eps = a.eps if a.eps is not None else rc.experiment["eps"]
    paths = a.paths if a.paths is not None else rc.experiment["n_paths"]
    rep = harness.run_convergence_study(rc.cfg, rc.hyp, resolve_bbar(rc), eps, paths,
                                        chunk=rc.experiment["chunk"], step_ratio=rc.step_ratio,
                                        max_paths=rc.experiment.get("max_paths"))
    rep.manifest.update({"command": "converge", "config_file": str(a.config), "raw_config": rc.raw})
    fmt = a.format or rc.experiment["format"]
    harness.emit_report(rep, fmt, a.out)
    print(",".join(harness.REPORT_COLUMNS))
    for r in rep.rows:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in r.as_record().values()))
    checks = rep.checks()
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    return EXIT_OK if all(checks.values()) else EXIT_FAILED


def _cmd_lemmas(a) -> int:
    rc = _load(a)
    ex = rc.experiment
    kw = {}
    if "khas_eps" in ex:
        kw["khas_eps"] = ex["khas_eps"]
    if "khas_deltas" in ex:
        kw["khas_deltas"] = ex["khas_deltas"]
    rep = harness.run_lemma_suite(rc.cfg, rc.hyp, resolve_bbar(rc), rc.cfg.seed,
                                  n_paths=a.paths or ex.get("lemma_paths", 200), eps_list=ex["eps"],
                                  chunk=ex["chunk"], **kw)
    fmt = a.format or ("jsonl" if str(a.out).endswith(".jsonl") else "csv")
    harness.emit_report(rep, fmt, a.out)
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.4g} (target {c.target})")
    return EXIT_OK if rep.passed else EXIT_FAILED


def _cmd_selftest(a) -> int:
    from .selftest import run_selftest

    results = run_selftest(a.seed, only=a.module)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.emit_records([r.as_record() for r in results], "jsonl", out / "selftest.jsonl")
    harness.write_manifest({"command": "selftest", "master_seed": a.seed, "module": a.module},
                           out / "selftest.manifest.json")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.module}.{r.name} ({r.value:.4g})")
    ok = all(r.passed for r in results)
    print("selftest passed" if ok else "selftest FAILED")
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fastslow", description="Averaging experiments for fast-slow systems driven by fBm.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("fbm", help="sample fractional Brownian motion")
    s.add_argument("--hurst", "--H", dest="H", type=float, required=True)
    s.add_argument("--horizon", "--T", dest="T", type=float, default=1.0)
    s.add_argument("--steps", "--n", dest="n", type=int, default=1024)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--paths", type=int, default=None)
    s.add_argument("--method", choices=("cholesky", "davies-harte"), default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--out", default="fbm.csv")
    s.set_defaults(fn=_cmd_fbm)

    s = sub.add_parser("integrate", help="integrate f against g two ways")
    s.add_argument("--f", required=True)
    s.add_argument("--g", required=True)
    s.add_argument("--alpha", type=float, default=0.3)
    s.add_argument("--method", choices=("fractional", "young"), default="fractional")
    s.set_defaults(fn=_cmd_integrate)

    s = sub.add_parser("simulate", help="solve the coupled, Khasminskii and averaged systems")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="simulate_out")
    s.add_argument("--paths", type=int, default=None)
    s.set_defaults(fn=_cmd_simulate)

    s = sub.add_parser("frozen", help="sample the invariant measure of the frozen equation")
    s.add_argument("--x", required=True, help="comma-separated slow state")
    s.add_argument("--burn-in", dest="burn_in", type=float, default=5.0)
    s.add_argument("--horizon", type=float, default=200.0)
    s.add_argument("--thin", type=int, default=None)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--system", default="ou-sin", choices=sorted(SYSTEMS))
    s.add_argument("--out", default="measure.csv")
    s.set_defaults(fn=_cmd_frozen)

    s = sub.add_parser("average", help="averaged drift from a sampled measure")
    s.add_argument("--measure", required=True)
    s.add_argument("--t", type=float, default=0.0)
    s.add_argument("--x", default=None)
    s.add_argument("--system", default=None, choices=sorted(SYSTEMS))
    s.add_argument("--allow-reuse", dest="allow_reuse", action="store_true")
    s.set_defaults(fn=_cmd_average)

    s = sub.add_parser("converge", help="mean-square convergence study over epsilon")
    s.add_argument("--config", required=True)
    s.add_argument("--eps", type=_float_list, default=None)
    s.add_argument("--paths", type=int, default=None)
    s.add_argument("--format", choices=("csv", "jsonl"), default=None)
    s.add_argument("--out", default="report.csv")
    s.set_defaults(fn=_cmd_converge)

    s = sub.add_parser("lemmas", help="scaling checks for the supporting estimates")
    s.add_argument("--config", required=True)
    s.add_argument("--paths", type=int, default=None)
    s.add_argument("--format", choices=("csv", "jsonl"), default=None)
    s.add_argument("--out", default="lemmas.jsonl")
    s.set_defaults(fn=_cmd_lemmas)

    s = sub.add_parser("selftest", help="run the built-in oracle checks")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--module", default=None, choices=("noise", "fraccalc", "sde", "averaging", "harness"))
    s.add_argument("--out", default="selftest_out")
    s.set_defaults(fn=_cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"fastslow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"fastslow: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
