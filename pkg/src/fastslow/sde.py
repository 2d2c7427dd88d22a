"""Discretised solvers for the fast-slow system, the frozen fast equation,
the averaged slow equation and the Khasminskii auxiliary processes.

Everything runs on one fast grid of spacing ``h = T / (n_steps * substeps)``:

* slow components take explicit Euler steps with left-point Young increments
  of the fBm (valid for ``H > 1/2``);
* the fast component is stepped as the unit-speed frozen equation with time
  step ``h / eps`` and noise ``dW / sqrt(eps)``, so the two constructions of
  the time-shift identity share one recursion;
* results are reported on the slow grid of ``n_steps`` steps.

Coefficients are vectorised callables; a leading ensemble axis passes
through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy import stats

from .fraccalc import AlphaParam
from .noise import GridPath, HurstParam, SeedSpec, sample_bm, sample_fbm

__all__ = [
    "BlowUpError",
    "HypothesisViolation",
    "HypothesisSet",
    "FastSlowConfig",
    "FastSlowSolution",
    "KhasminskiiSolution",
    "TimeShiftResult",
    "solve_fast_slow",
    "solve_frozen",
    "solve_averaged",
    "khasminskii_auxiliary",
    "time_shift_scaling_check",
    "snap_delta",
    "sample_noises",
    "delta_schedule",
]


class BlowUpError(FloatingPointError):
    """Non-finite state during time stepping."""

    def __init__(self, what: str, index: int, time: float):
        super().__init__(f"{what} became non-finite at step {index} (t = {time:.6g})")
        self.index = index
        self.time = time


class HypothesisViolation(ValueError):
    """A declared hypothesis constant was contradicted by an evaluation."""


def _matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", M, v)


@dataclass(frozen=True)
class HypothesisSet:
    """Coefficients of the fast-slow system plus declared constants.

    Shapes (leading axes broadcast): ``b1(t, x, y) -> (..., d1)``,
    ``sigma1(t, x) -> (..., d1, m)``, ``b2(x, y) -> (..., d2)``,
    ``sigma2(x, y) -> (..., d2, r)``.

    ``sigma1_y``, when set, replaces ``sigma1`` in the coupled system with a
    coefficient that also reads the fast variable; it exists only for the
    negative-control experiment and breaks strong averaging on purpose.
    """

    b1: Callable
    sigma1: Callable
    b2: Callable
    sigma2: Callable
    dims: tuple[int, int, int, int]  # d1, d2, m, r
    beta_holder: float = 1.0
    gamma_holder: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    b1_sup_bound: float = 1.0
    lipschitz_constants: Mapping[str, float] | None = None
    sigma1_y: Callable | None = None
    name: str = "custom"

    def __post_init__(self) -> None:
        for k in ("beta_holder", "gamma_holder"):
            v = getattr(self, k)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{k} must lie in (0, 1], got {v}")
        for k in ("beta1", "beta2", "b1_sup_bound"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive, got {getattr(self, k)}")
        if len(self.dims) != 4 or min(self.dims) < 1:
            raise ValueError(f"dims must be four positive integers (d1, d2, m, r), got {self.dims}")

    @property
    def d1(self) -> int:
        return self.dims[0]

    @property
    def d2(self) -> int:
        return self.dims[1]

    @property
    def lip_b2(self) -> float:
        L = self.lipschitz_constants or {}
        return float(L.get("L6", 1.0))

    def eval_b1(self, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``b1`` with the sup bound enforced."""
        out = np.asarray(self.b1(t, x, y), dtype=float)
        mag = np.sqrt(np.sum(out * out, axis=-1))
        if np.any(mag > self.b1_sup_bound * (1.0 + 1e-12)):
            raise HypothesisViolation(
                f"|b1| = {mag.max():.6g} exceeds the declared sup bound {self.b1_sup_bound}"
            )
        return out

    def spot_check(self, seed: SeedSpec | None = None, n_probes: int = 200, scale: float = 3.0) -> dict:
        """Random finite-difference probes of the declared constants.

        Statistical evidence only.  Checks the ``sigma1`` gradient bound
        (``L1``), Lipschitz constants ``L5``/``L6`` when declared, the ``b1``
        sup bound and the two dissipativity inequalities (the constant ``C``
        of the second one is fitted, not declared).
        """
        rng = (seed or SeedSpec(0, 0)).generator(991)
        d1, d2, _, _ = self.dims
        L = dict(self.lipschitz_constants or {})
        x1 = scale * rng.standard_normal((n_probes, d1))
        x2 = x1 + 0.1 * rng.standard_normal((n_probes, d1))
        y1 = scale * rng.standard_normal((n_probes, d2))
        y2 = y1 + 0.1 * rng.standard_normal((n_probes, d2))
        t = float(rng.uniform())
        nrm = lambda a: np.sqrt(np.sum(np.reshape(a, (a.shape[0], -1)) ** 2, axis=-1))  # noqa: E731
        report: dict[str, dict] = {}

        b1v = np.asarray(self.b1(t, x1, y1))
        report["b1_sup"] = {"observed": float(nrm(b1v).max()), "declared": self.b1_sup_bound}
        report["b1_sup"]["ok"] = report["b1_sup"]["observed"] <= self.b1_sup_bound * (1 + 1e-9)

        if "L1" in L:
            eps = 1e-6
            grads = []
            for k in range(d1):
                e = np.zeros(d1)
                e[k] = eps
                grads.append((np.asarray(self.sigma1(t, x1 + e)) - np.asarray(self.sigma1(t, x1 - e))) / (2 * eps))
            g = np.stack(grads, axis=-1)
            obs = float(nrm(g).max())
            report["L1"] = {"observed": obs, "declared": L["L1"], "ok": obs <= L["L1"] * 1.01 + 1e-9}
        if "L5" in L:
            num = nrm(np.asarray(self.b1(t, x1, y1)) - np.asarray(self.b1(t, x2, y2)))
            den = nrm(x1 - x2) + nrm(y1 - y2)
            obs = float(np.max(num / den))
            report["L5"] = {"observed": obs, "declared": L["L5"], "ok": obs <= L["L5"] * 1.01 + 1e-9}
        if "L6" in L:
            num = nrm(np.asarray(self.b2(x1, y1)) - np.asarray(self.b2(x2, y2))) + nrm(
                np.asarray(self.sigma2(x1, y1)) - np.asarray(self.sigma2(x2, y2))
            )
            den = nrm(x1 - x2) + nrm(y1 - y2)
            obs = float(np.max(num / den))
            report["L6"] = {"observed": obs, "declared": L["L6"], "ok": obs <= L["L6"] * 1.01 + 1e-9}

        dy = y1 - y2
        lhs = 2 * np.sum(dy * (np.asarray(self.b2(x1, y1)) - np.asarray(self.b2(x1, y2))), axis=-1) + nrm(
            np.asarray(self.sigma2(x1, y1)) - np.asarray(self.sigma2(x1, y2))
        ) ** 2
        ok1 = bool(np.all(lhs <= -self.beta1 * np.sum(dy * dy, axis=-1) * (1 - 1e-9) + 1e-12))
        report["dissipativity_beta1"] = {"declared": self.beta1, "ok": ok1}
        lhs2 = 2 * np.sum(y1 * np.asarray(self.b2(x1, y1)), axis=-1) + nrm(np.asarray(self.sigma2(x1, y1))) ** 2
        slack = lhs2 + self.beta2 * np.sum(y1 * y1, axis=-1)
        C_fit = float(np.max(slack / (1.0 + np.sum(x1 * x1, axis=-1))))
        report["dissipativity_beta2"] = {"declared": self.beta2, "fitted_C": C_fit, "ok": np.isfinite(C_fit)}
        report["all_ok"] = all(v.get("ok", True) for v in report.values() if isinstance(v, dict))
        return report


def delta_schedule(eps: float) -> float:
    """Khasminskii block length ``eps * sqrt(-ln eps)``."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {eps}")
    return eps * math.sqrt(-math.log(eps))


def snap_delta(delta: float, h_slow: float) -> tuple[float, int]:
    """Nearest positive multiple of the slow step: ``(delta_used, steps)``."""
    k = max(1, int(round(delta / h_slow)))
    return k * h_slow, k


@dataclass(frozen=True)
class FastSlowConfig:
    epsilon: float
    delta: float
    T: float
    n_steps: int
    fast_substeps_per_slow: int
    x0: np.ndarray
    y0: np.ndarray
    H: float
    alpha: float
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0, 0))

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.epsilon < self.delta < 1.0:
            raise ValueError(f"need epsilon < delta < 1, got epsilon={self.epsilon}, delta={self.delta}")
        if not self.T > 0 or self.n_steps < 1 or self.fast_substeps_per_slow < 1:
            raise ValueError("T, n_steps and fast_substeps_per_slow must be positive")
        HurstParam(self.H)
        AlphaParam(self.alpha)
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=float)))

    @property
    def n_fast(self) -> int:
        return self.n_steps * self.fast_substeps_per_slow

    @property
    def h_slow(self) -> float:
        return self.T / self.n_steps

    @property
    def h_fast(self) -> float:
        return self.T / self.n_fast

    @property
    def delta_used(self) -> float:
        return snap_delta(self.delta, self.h_slow)[0]

    def check_stability(self, hyp: HypothesisSet) -> None:
        limit = 0.1 / max(1.0, hyp.lip_b2)
        ratio = self.h_fast / self.epsilon
        if ratio > limit * (1 + 1e-12):
            raise ValueError(
                f"fast step too large: h_fast/eps = {ratio:.4g} > {limit:.4g}; "
                f"increase fast_substeps_per_slow"
            )

    @classmethod
    def for_epsilon(
        cls,
        epsilon: float,
        *,
        T: float = 1.0,
        n_steps: int = 200,
        step_ratio: float = 0.05,
        lip_b2: float = 1.0,
        delta: float | None = None,
        x0=(1.0,),
        y0=(0.0,),
        H: float = 0.6,
        alpha: float = 0.45,
        seed: SeedSpec | None = None,
    ) -> "FastSlowConfig":
        """Config with ``delta = eps sqrt(-ln eps)`` and ``h_fast <= step_ratio * eps / Lip``."""
        if step_ratio > 0.1:
            raise ValueError("step_ratio above 0.1 violates the fast-step stability rule")
        h_target = step_ratio * epsilon / max(1.0, lip_b2)
        sub = max(1, math.ceil((T / n_steps) / h_target - 1e-9))
        return cls(
            epsilon=epsilon,
            delta=delta_schedule(epsilon) if delta is None else delta,
            T=T,
            n_steps=n_steps,
            fast_substeps_per_slow=sub,
            x0=np.asarray(x0, dtype=float),
            y0=np.asarray(y0, dtype=float),
            H=H,
            alpha=alpha,
            seed=seed or SeedSpec(0, 0),
        )

    def with_(self, **kw) -> "FastSlowConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "delta_used": self.delta_used,
            "T": self.T,
            "n_steps": self.n_steps,
            "fast_substeps_per_slow": self.fast_substeps_per_slow,
            "h_fast": self.h_fast,
            "x0": self.x0.tolist(),
            "y0": self.y0.tolist(),
            "H": self.H,
            "alpha": self.alpha,
            "master_seed": self.seed.master_seed,
            "stream_id": self.seed.stream_id,
        }


def sample_noises(cfg: FastSlowConfig, hyp: HypothesisSet, n_paths: int | None = None,
                  replica: int = 0) -> tuple[GridPath, GridPath]:
    """fBm and Wiener paths on the fast grid from two disjoint sub-streams."""
    _, _, m, r = hyp.dims
    s = cfg.seed
    bH = sample_fbm(cfg.T, cfg.n_fast, cfg.H, m, SeedSpec(s.master_seed, 2 * (s.stream_id + replica)), n_paths)
    w = sample_bm(cfg.T, cfg.n_fast, r, SeedSpec(s.master_seed, 2 * (s.stream_id + replica) + 1), n_paths)
    return bH, w


def _fast_increments(path: GridPath, cfg: FastSlowConfig, what: str) -> np.ndarray:
    if path.n_steps != cfg.n_fast or not math.isclose(path.T, cfg.T):
        raise ValueError(
            f"{what} must be sampled on the fast grid (T={cfg.T}, n={cfg.n_fast}); "
            f"got (T={path.T}, n={path.n_steps})"
        )
    return np.diff(path.values, axis=-2)


def _check_finite(arr: np.ndarray, what: str, k: int, h: float) -> None:
    if not np.all(np.isfinite(arr)):
        raise BlowUpError(what, k, k * h)


def _init_state(v: np.ndarray, batch: tuple) -> np.ndarray:
    return np.broadcast_to(v, batch + v.shape).copy()


@dataclass(frozen=True)
class FastSlowSolution:
    X: GridPath
    Y: GridPath
    X_fast: np.ndarray
    Y_fast: np.ndarray


def solve_fast_slow(
    cfg: FastSlowConfig, hyp: HypothesisSet, bH: GridPath, w: GridPath
) -> FastSlowSolution:
    """Explicit hybrid Euler scheme for the coupled system.

    ``bH`` and ``w`` live on the fast grid (``n_steps * substeps`` steps);
    ensembles are stepped together.  Both components advance on the fast
    grid; the slow-grid output is a subsample.
    """
    cfg.check_stability(hyp)
    dB = _fast_increments(bH, cfg, "bH")
    dW = _fast_increments(w, cfg, "w")
    batch = dB.shape[:-2]
    if dW.shape[:-2] != batch:
        raise ValueError("bH and w must have the same ensemble shape")
    N, h, eps = cfg.n_fast, cfg.h_fast, cfg.epsilon
    tau = h / eps
    rs = 1.0 / math.sqrt(eps)
    X = np.empty(batch + (N + 1, hyp.d1))
    Y = np.empty(batch + (N + 1, hyp.d2))
    X[..., 0, :] = _init_state(cfg.x0, batch)
    Y[..., 0, :] = _init_state(cfg.y0, batch)
    sig1 = hyp.sigma1_y
    for k in range(N):
        t = k * h
        xk = X[..., k, :]
        yk = Y[..., k, :]
        s1 = sig1(t, xk, yk) if sig1 is not None else hyp.sigma1(t, xk)
        X[..., k + 1, :] = xk + hyp.eval_b1(t, xk, yk) * h + _matvec(s1, dB[..., k, :])
        Y[..., k + 1, :] = yk + hyp.b2(xk, yk) * tau + _matvec(hyp.sigma2(xk, yk), dW[..., k, :] * rs)
        if not (np.isfinite(X[..., k + 1, :]).all() and np.isfinite(Y[..., k + 1, :]).all()):
            raise BlowUpError("fast-slow state", k + 1, (k + 1) * h)
    sub = cfg.fast_substeps_per_slow
    meta = {"solver": "fast_slow", "epsilon": eps}
    return FastSlowSolution(
        X=GridPath(cfg.T, cfg.n_steps, X[..., ::sub, :], meta=meta),
        Y=GridPath(cfg.T, cfg.n_steps, Y[..., ::sub, :], meta=meta),
        X_fast=X,
        Y_fast=Y,
    )


def _frozen_euler(x: np.ndarray, y0: np.ndarray, hyp: HypothesisSet, dt: float, dW: np.ndarray) -> np.ndarray:
    """Unit-speed Euler-Maruyama for ``dY = b2(x, Y) dt + sigma2(x, Y) dW``.

    ``dW`` has shape ``(..., N, r)`` and already carries the ``sqrt(dt)``.
    """
    batch = dW.shape[:-2]
    N = dW.shape[-2]
    Y = np.empty(batch + (N + 1, hyp.d2))
    Y[..., 0, :] = np.broadcast_to(y0, batch + (hyp.d2,))
    xb = np.broadcast_to(x, batch + (hyp.d1,))
    for k in range(N):
        yk = Y[..., k, :]
        Y[..., k + 1, :] = yk + hyp.b2(xb, yk) * dt + _matvec(hyp.sigma2(xb, yk), dW[..., k, :])
        if not np.isfinite(Y[..., k + 1, :]).all():
            raise BlowUpError("frozen state", k + 1, (k + 1) * dt)
    return Y


def solve_frozen(
    x,
    y,
    horizon: float,
    n_steps: int,
    hyp: HypothesisSet,
    seed: SeedSpec,
    n_paths: int | None = None,
) -> GridPath:
    """Euler-Maruyama path(s) of the frozen fast equation at unit speed."""
    if not horizon > 0 or n_steps < 1:
        raise ValueError("horizon and n_steps must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    w = sample_bm(horizon, n_steps, hyp.dims[3], seed, n_paths)
    Y = _frozen_euler(x, y, hyp, horizon / n_steps, np.diff(w.values, axis=-2))
    return GridPath(horizon, n_steps, Y, meta={"solver": "frozen", "x": x.tolist()})


def solve_averaged(
    cfg: FastSlowConfig, hyp: HypothesisSet, bbar1: Callable, bH: GridPath, return_fast: bool = False
):
    """Euler scheme for the averaged slow equation on the fast grid.

    Pass the same ``bH`` used for :func:`solve_fast_slow` so the two
    solutions are compared realisation by realisation.
    """
    dB = _fast_increments(bH, cfg, "bH")
    batch = dB.shape[:-2]
    N, h = cfg.n_fast, cfg.h_fast
    X = np.empty(batch + (N + 1, hyp.d1))
    X[..., 0, :] = _init_state(cfg.x0, batch)
    for k in range(N):
        t = k * h
        xk = X[..., k, :]
        X[..., k + 1, :] = xk + np.asarray(bbar1(t, xk)) * h + _matvec(hyp.sigma1(t, xk), dB[..., k, :])
        if not np.isfinite(X[..., k + 1, :]).all():
            raise BlowUpError("averaged state", k + 1, (k + 1) * h)
    out = GridPath(cfg.T, cfg.n_steps, X[..., :: cfg.fast_substeps_per_slow, :], meta={"solver": "averaged"})
    return (out, X) if return_fast else out


@dataclass(frozen=True)
class KhasminskiiSolution:
    Xhat: GridPath
    Yhat: GridPath
    Xhat_fast: np.ndarray
    Yhat_fast: np.ndarray
    delta_used: float


def khasminskii_auxiliary(
    cfg: FastSlowConfig,
    hyp: HypothesisSet,
    X,
    bH: GridPath,
    w: GridPath,
) -> KhasminskiiSolution:
    """Block-frozen auxiliary processes ``(Xhat, Yhat)``.

    ``X`` is the :class:`FastSlowSolution` (or its fast-grid ``X`` array)
    computed from the same noises.  ``delta`` is snapped to a multiple of the
    slow step; the value used is reported.
    """
    Xf = X.X_fast if isinstance(X, FastSlowSolution) else np.asarray(X)
    dB = _fast_increments(bH, cfg, "bH")
    dW = _fast_increments(w, cfg, "w")
    if Xf.shape[-2] != cfg.n_fast + 1:
        raise ValueError("khasminskii_auxiliary needs X on the fast grid")
    delta_used, k_slow = snap_delta(cfg.delta, cfg.h_slow)
    block = k_slow * cfg.fast_substeps_per_slow
    batch = dB.shape[:-2]
    N, h, eps = cfg.n_fast, cfg.h_fast, cfg.epsilon
    tau = h / eps
    rs = 1.0 / math.sqrt(eps)
    Xh = np.empty(batch + (N + 1, hyp.d1))
    Yh = np.empty(batch + (N + 1, hyp.d2))
    Xh[..., 0, :] = _init_state(cfg.x0, batch)
    Yh[..., 0, :] = _init_state(cfg.y0, batch)
    for k in range(N):
        kb = (k // block) * block
        t = k * h
        xs = Xf[..., kb, :]
        xk = Xf[..., k, :]
        yk = Yh[..., k, :]
        Xh[..., k + 1, :] = Xh[..., k, :] + hyp.eval_b1(kb * h, xs, yk) * h + _matvec(
            hyp.sigma1(t, xk), dB[..., k, :]
        )
        Yh[..., k + 1, :] = yk + hyp.b2(xs, yk) * tau + _matvec(hyp.sigma2(xs, yk), dW[..., k, :] * rs)
        if not (np.isfinite(Xh[..., k + 1, :]).all() and np.isfinite(Yh[..., k + 1, :]).all()):
            raise BlowUpError("Khasminskii state", k + 1, (k + 1) * h)
    sub = cfg.fast_substeps_per_slow
    meta = {"solver": "khasminskii", "delta_used": delta_used}
    return KhasminskiiSolution(
        Xhat=GridPath(cfg.T, cfg.n_steps, Xh[..., ::sub, :], meta=meta),
        Yhat=GridPath(cfg.T, cfg.n_steps, Yh[..., ::sub, :], meta=meta),
        Xhat_fast=Xh,
        Yhat_fast=Yh,
        delta_used=delta_used,
    )


@dataclass(frozen=True)
class TimeShiftResult:
    ks_statistic: float
    p_value: float
    passed: bool
    n_paths: int
    s: float

    @property
    def pass_(self) -> bool:
        return self.passed


def time_shift_scaling_check(
    cfg: FastSlowConfig,
    hyp: HypothesisSet,
    k: int,
    n_paths: int,
    *,
    x_frozen=None,
    y_start=None,
    eps_ratio: float = 1.0,
) -> TimeShiftResult:
    """Compare the block-``k`` Khasminskii fast process with the rescaled frozen one.

    Construction A runs the ``1/eps``-speed block equation from ``(x, y)``
    over ``[k delta, k delta + delta/2]`` using the shifted increments of a
    full-length Wiener path.  Construction B runs the unit-speed frozen
    equation to time ``delta / (2 eps')`` with ``eps' = eps * eps_ratio`` on an
    independent Wiener process.  The marginals at the end are compared by a
    two-sample Kolmogorov-Smirnov test; ``passed`` means ``p >= 0.01``.
    ``eps_ratio != 1`` is the designed-to-fail control.
    """
    cfg.check_stability(hyp)
    delta_used, k_slow = snap_delta(cfg.delta, cfg.h_slow)
    block = k_slow * cfg.fast_substeps_per_slow
    if block % 2:
        raise ValueError("delta must span an even number of fast steps")
    half = block // 2
    n_blocks = cfg.n_fast // block
    if not 0 <= k < n_blocks:
        raise ValueError(f"block index k must lie in [0, {n_blocks}), got {k}")
    x = cfg.x0 if x_frozen is None else np.atleast_1d(np.asarray(x_frozen, dtype=float))
    y = cfg.y0 if y_start is None else np.atleast_1d(np.asarray(y_start, dtype=float))
    r = hyp.dims[3]
    tau = cfg.h_fast / cfg.epsilon

    w = sample_bm(cfg.T, cfg.n_fast, r, cfg.seed.child(2 * cfg.seed.stream_id + 101), n_paths)
    dW_shift = np.diff(w.values, axis=-2)[:, k * block : k * block + half, :] / math.sqrt(cfg.epsilon)
    yA = _frozen_euler(x, y, hyp, tau, dW_shift)[:, -1, :]

    tau_b = tau / eps_ratio
    wbar = sample_bm(half * tau_b, half, r, cfg.seed.child(2 * cfg.seed.stream_id + 102), n_paths)
    yB = _frozen_euler(x, y, hyp, tau_b, np.diff(wbar.values, axis=-2))[:, -1, :]

    a, b = yA[:, 0], yB[:, 0]
    if np.array_equal(np.sort(a), np.sort(b)):
        stat, p = 0.0, 1.0
    else:
        res = stats.ks_2samp(a, b)
        stat, p = float(res.statistic), float(res.pvalue)
    return TimeShiftResult(stat, p, bool(p >= 0.01), n_paths, half * cfg.h_fast)
