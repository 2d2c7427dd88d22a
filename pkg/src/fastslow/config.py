"""INI-style run configuration with strict key checking.

Sections ``[system]``, ``[grid]``, ``[noise]`` and ``[experiment]``.  Key
lookup is case-insensitive; any key or section not listed in ``SCHEMA`` is
rejected with a :class:`ConfigError` naming it.

    [system]
    name = ou-sin

    [grid]
    T = 1.0
    n_steps = 200
    epsilon = 0.01
    x0 = 1.0
    y0 = 0.0

    [noise]
    H = 0.6
    alpha = 0.45
    master_seed = 2024

    [experiment]
    eps = 0.1, 0.05, 0.02, 0.01
    n_paths = 200
    bbar_mode = closed-form
"""

from __future__ import annotations

import configparser
import importlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .averaging import averaged_drift_interpolant
from .noise import SeedSpec
from .sde import FastSlowConfig, HypothesisSet, delta_schedule, sample_noises, solve_fast_slow
from .systems import closed_form_drift, get_system

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "load_config", "parse_config", "resolve_bbar"]


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(";", ",").split(",") if v.strip()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


HYP_CONSTANTS = ("beta_holder", "gamma_holder", "beta1", "beta2", "b1_sup_bound")
LIP_KEYS = tuple(f"L{i}" for i in range(1, 8))

SCHEMA: dict[str, dict[str, Callable]] = {
    "system": {"name": str, "plugin": str, **{k: float for k in HYP_CONSTANTS + LIP_KEYS}},
    "grid": {
        "T": float,
        "n_steps": int,
        "fast_substeps_per_slow": int,
        "step_ratio": float,
        "epsilon": float,
        "delta": float,
        "x0": _floats,
        "y0": _floats,
    },
    "noise": {"H": float, "alpha": float, "master_seed": int, "stream_id": int},
    "experiment": {
        "eps": _floats,
        "n_paths": int,
        "max_paths": int,
        "chunk": int,
        "bbar_mode": str,
        "format": str,
        "lemma_paths": int,
        "khas_eps": float,
        "khas_deltas": _floats,
    },
}

_CANON = {sec: {k.lower(): k for k in keys} for sec, keys in SCHEMA.items()}


@dataclass
class RunConfig:
    system: str
    hyp: HypothesisSet
    cfg: FastSlowConfig
    experiment: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    plugin_bbar: Callable | None = None

    @property
    def step_ratio(self) -> float:
        return float(self.raw.get("grid", {}).get("step_ratio", 0.1))


def _load_plugin(spec: str):
    mod, _, attr = spec.partition(":")
    if not mod or not attr:
        raise ConfigError("system.plugin", f"expected 'module:factory', got {spec!r}")
    try:
        fn = getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError("system.plugin", f"cannot load {spec!r}: {exc}") from None
    out = fn()
    if isinstance(out, tuple):
        return out[0], out[1]
    return out, None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    raw: dict[str, dict] = {}
    for sec in cp.sections():
        canon_sec = sec.strip().lower()
        if canon_sec not in SCHEMA:
            raise ConfigError(sec, "unknown section")
        dst = raw.setdefault(canon_sec, {})
        for key, val in cp.items(sec):
            ck = _CANON[canon_sec].get(key.strip().lower())
            if ck is None:
                raise ConfigError(f"{sec}.{key}", "unknown key")
            try:
                dst[ck] = SCHEMA[canon_sec][ck](val)
            except ValueError as exc:
                raise ConfigError(f"{sec}.{key}", f"bad value {val!r} ({exc})") from None

    sysd = raw.get("system", {})
    name = sysd.get("name", "ou-sin")
    plugin_bbar = None
    if name == "custom":
        if "plugin" not in sysd:
            raise ConfigError("system.plugin", "required for custom systems")
        missing = [k for k in HYP_CONSTANTS if k not in sysd]
        if missing:
            raise ConfigError(f"system.{missing[0]}", "declared hypothesis constant missing for a custom system")
        hyp, plugin_bbar = _load_plugin(sysd["plugin"])
    else:
        if "plugin" in sysd:
            raise ConfigError("system.plugin", "only valid with name = custom")
        try:
            hyp = get_system(name)
        except KeyError as exc:
            raise ConfigError("system.name", str(exc.args[0])) from None
    over = {k: sysd[k] for k in HYP_CONSTANTS if k in sysd}
    lip = {k: sysd[k] for k in LIP_KEYS if k in sysd}
    try:
        if lip:
            hyp = replace(hyp, lipschitz_constants={**dict(hyp.lipschitz_constants or {}), **lip})
        if over:
            hyp = replace(hyp, **over)
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from None

    g = raw.get("grid", {})
    nz = raw.get("noise", {})
    eps = g.get("epsilon", 0.01)
    seed = SeedSpec(nz.get("master_seed", 0), nz.get("stream_id", 0))
    try:
        cfg = FastSlowConfig.for_epsilon(
            eps,
            T=g.get("T", 1.0),
            n_steps=g.get("n_steps", 200),
            step_ratio=g.get("step_ratio", 0.1),
            lip_b2=hyp.lip_b2,
            delta=g.get("delta"),
            x0=g.get("x0", [1.0] * hyp.d1),
            y0=g.get("y0", [0.0] * hyp.d2),
            H=nz.get("H", 0.6),
            alpha=nz.get("alpha", 0.45),
            seed=seed,
        )
        if "fast_substeps_per_slow" in g:
            cfg = cfg.with_(fast_substeps_per_slow=g["fast_substeps_per_slow"])
            cfg.check_stability(hyp)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    if cfg.x0.size != hyp.d1:
        raise ConfigError("grid.x0", f"expected {hyp.d1} components")
    if cfg.y0.size != hyp.d2:
        raise ConfigError("grid.y0", f"expected {hyp.d2} components")

    ex = dict(raw.get("experiment", {}))
    mode = ex.setdefault("bbar_mode", "closed-form")
    if mode not in ("closed-form", "sampled"):
        raise ConfigError("experiment.bbar_mode", "must be closed-form or sampled")
    fmt = ex.setdefault("format", "csv")
    if fmt not in ("csv", "jsonl"):
        raise ConfigError("experiment.format", "must be csv or jsonl")
    ex.setdefault("eps", [0.1, 0.05, 0.02, 0.01])
    ex.setdefault("n_paths", 200)
    ex.setdefault("chunk", 50)
    if any(not 0 < e < 1 for e in ex["eps"]):
        raise ConfigError("experiment.eps", "every epsilon must lie in (0, 1)")
    return RunConfig(name, hyp, cfg, ex, raw, plugin_bbar)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text)


def resolve_bbar(rc: RunConfig, mode: str | None = None, *, n_x: int = 33, pilot_paths: int = 16):
    """Averaged drift for the configured system.

    ``closed-form`` uses the shipped formula (or the plugin's); ``sampled``
    tabulates Monte Carlo values on an x-grid spanning a pilot run's range
    plus a 20% margin and returns the clamping interpolant.
    """
    mode = mode or rc.experiment.get("bbar_mode", "closed-form")
    if mode == "closed-form":
        fn = rc.plugin_bbar or closed_form_drift(rc.system)
        if fn is None:
            raise ConfigError("experiment.bbar_mode", f"no closed form for system {rc.system!r}; use sampled")
        return fn
    if rc.hyp.d1 != 1:
        raise ConfigError("experiment.bbar_mode", "sampled mode supports one slow dimension")
    pilot = rc.cfg.with_(delta=max(rc.cfg.delta, delta_schedule(rc.cfg.epsilon)))
    bH, w = sample_noises(pilot, rc.hyp, n_paths=pilot_paths, replica=10_000)
    X = solve_fast_slow(pilot, rc.hyp, bH, w).X.values
    lo, hi = float(X.min()), float(X.max())
    pad = 0.2 * max(hi - lo, 1e-3)
    grid = np.linspace(lo - pad, hi + pad, n_x)
    return averaged_drift_interpolant(rc.hyp, grid, [0.0], {"mode": "sampled", "seed": rc.cfg.seed.child(777)})
