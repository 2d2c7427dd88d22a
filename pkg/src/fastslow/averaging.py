"""Ergodics of the frozen fast equation.

Invariant-measure sampling by time averaging, the averaged drift, a
tabulated interpolant for the solver, and Monte Carlo estimators for the
exponential decays that drive the averaging argument (synchronous
contraction, sensitivity in the frozen slow argument, relaxation of
expectations, decorrelation of the drift fluctuation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .noise import SeedSpec
from .sde import HypothesisSet, _frozen_euler

__all__ = [
    "FitFailure",
    "EmpiricalMeasure",
    "DecayFit",
    "DriftEstimate",
    "SensitivityResult",
    "DriftInterpolant",
    "sample_invariant_measure",
    "averaged_drift",
    "averaged_drift_interpolant",
    "contraction_estimate",
    "x_sensitivity_estimate",
    "ergodic_convergence_estimate",
    "decorrelation_estimate",
    "batch_means_se",
    "fit_exponential_decay",
]

MIN_SAMPLES = 1000


class FitFailure(RuntimeError):
    """Too few signal-dominated points for an exponential fit."""


def batch_means_se(samples: np.ndarray, n_batches: int = 20) -> np.ndarray:
    """Standard error of the mean along axis 0 by non-overlapping batch means."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    b = min(n_batches, n)
    if b < 2:
        return np.full(samples.shape[1:], np.nan)
    size = n // b
    means = samples[: b * size].reshape((b, size) + samples.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(b)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Thinned samples of the frozen process after burn-in (uniform weights)."""

    samples: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.provenance.get("x"), dtype=float)

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def var(self) -> np.ndarray:
        return self.samples.var(axis=0, ddof=1)

    def mean_se(self) -> np.ndarray:
        return batch_means_se(self.samples)

    def var_se(self) -> np.ndarray:
        c = self.samples - self.mean()
        return batch_means_se(c * c)

    def expect(self, fn: Callable) -> tuple[np.ndarray, np.ndarray]:
        vals = np.asarray(fn(self.samples), dtype=float)
        return vals.mean(axis=0), batch_means_se(vals)


def sample_invariant_measure(
    x,
    hyp: HypothesisSet,
    burn_in: float,
    horizon: float,
    thinning: int,
    seed: SeedSpec,
    *,
    dt: float = 0.01,
    y0=None,
    n_chains: int = 1,
) -> EmpiricalMeasure:
    """Time-average samples of the frozen process with slow argument ``x``.

    One trajectory (or ``n_chains`` independent ones, stepped together)
    runs for ``burn_in + horizon``; every ``thinning``-th Euler state after
    the burn-in is kept.  Samples are stored chain-major so batch means stay
    meaningful.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if burn_in < 5.0 / hyp.beta2 * (1 - 1e-12):
        raise ValueError(f"burn_in must be at least 5/beta2 = {5.0 / hyp.beta2:.4g}, got {burn_in}")
    if horizon < 20.0 / hyp.beta2 * (1 - 1e-12):
        raise ValueError(f"horizon must be at least 20/beta2 = {20.0 / hyp.beta2:.4g}, got {horizon}")
    if thinning < 1 or dt <= 0 or n_chains < 1:
        raise ValueError("thinning, dt and n_chains must be positive")
    n_burn = int(math.ceil(burn_in / dt))
    n_keep = int(math.floor(horizon / dt))
    y = np.zeros(hyp.d2) if y0 is None else np.atleast_1d(np.asarray(y0, dtype=float))
    rng = seed.generator(17)
    r = hyp.dims[3]
    sq = math.sqrt(dt)
    state = np.broadcast_to(y, (n_chains, hyp.d2)).copy()
    # chunked to bound memory on long runs
    kept = []
    chunk = 20000
    done = 0
    total = n_burn + n_keep
    while done < total:
        m = min(chunk, total - done)
        dW = rng.standard_normal((n_chains, m, r)) * sq
        path = _frozen_euler(x, state, hyp, dt, dW)
        idx = np.arange(done + 1, done + m + 1)
        sel = (idx > n_burn) & ((idx - n_burn) % thinning == 0)
        if sel.any():
            kept.append(path[:, 1:, :][:, sel, :])
        state = path[:, -1, :]
        done += m
    if not kept:
        raise ValueError("horizon shorter than one thinning interval")
    samples = np.concatenate(kept, axis=1).reshape(-1, hyp.d2)
    prov = {
        "x": x.tolist(),
        "burn_in": burn_in,
        "thinning": thinning,
        "horizon": horizon,
        "dt": dt,
        "n_chains": n_chains,
        "seed": (seed.master_seed, seed.stream_id),
    }
    return EmpiricalMeasure(samples, prov)


@dataclass(frozen=True)
class DriftEstimate:
    value: np.ndarray
    stderr: np.ndarray


def averaged_drift(
    hyp: HypothesisSet,
    measure: EmpiricalMeasure,
    t: float,
    x,
    *,
    allow_reuse: bool = False,
) -> DriftEstimate:
    """Monte Carlo ``int b1(t, x, y) mu^x(dy)`` with a batch-means standard error."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if measure.n < MIN_SAMPLES:
        raise ValueError(f"measure has {measure.n} samples; at least {MIN_SAMPLES} are needed")
    mx = measure.x
    if mx.shape != x.shape or not np.allclose(mx, x, rtol=0, atol=1e-12):
        if not allow_reuse:
            raise ValueError(f"measure was sampled at x = {mx.tolist()}, not x = {x.tolist()}")
        warnings.warn("averaged_drift: reusing a measure sampled at a different x", stacklevel=2)
    vals = np.asarray(hyp.b1(t, np.broadcast_to(x, (measure.n, x.size)), measure.samples), dtype=float)
    return DriftEstimate(vals.mean(axis=0), batch_means_se(vals))


class DriftInterpolant:
    """Multilinear interpolant of tabulated ``bbar1(t, x)``; clamps out-of-range queries.

    ``last_clamped`` reports whether the most recent call clamped anything
    and ``n_clamped`` counts clamped query points over the object's life.
    """

    def __init__(self, t_grid: np.ndarray, x_grids: Sequence[np.ndarray], table: np.ndarray, meta: dict):
        self.t_grid = t_grid
        self.x_grids = [np.asarray(g, dtype=float) for g in x_grids]
        self.table = table
        self.meta = meta
        self.d1 = table.shape[-1]
        self._time_dependent = t_grid.size > 1
        axes = ([t_grid] if self._time_dependent else []) + self.x_grids
        values = table if self._time_dependent else table[0]
        self._interp = RegularGridInterpolator(tuple(axes), values, method="linear")
        self._lo = np.array([a[0] for a in axes])
        self._hi = np.array([a[-1] for a in axes])
        self.last_clamped = False
        self.n_clamped = 0

    def __call__(self, t, x, return_flag: bool = False):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        pts = x.reshape(-1, x.shape[-1])
        if self._time_dependent:
            tt = np.broadcast_to(np.asarray(t, dtype=float), batch).reshape(-1, 1)
            pts = np.concatenate([tt, pts], axis=1)
        clipped = np.clip(pts, self._lo, self._hi)
        outside = np.any(clipped != pts, axis=1)
        self.last_clamped = bool(outside.any())
        self.n_clamped += int(outside.sum())
        out = self._interp(clipped).reshape(batch + (self.d1,))
        return (out, outside.reshape(batch)) if return_flag else out


def averaged_drift_interpolant(
    hyp: HypothesisSet,
    x_grid,
    t_grid,
    quality: dict | None = None,
) -> DriftInterpolant:
    """Tabulate ``bbar1`` on a tensor grid and return a clamping interpolant.

    ``x_grid`` is a 1-d array (``d1 == 1``) or a sequence of ``d1`` axes.
    ``quality`` keys: ``mode`` (``"sampled"`` or ``"closed-form"``),
    ``bbar`` (callable for closed-form mode), ``burn_in``, ``horizon``,
    ``thinning``, ``dt``, ``n_chains``, ``seed``.
    """
    q = dict(quality or {})
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if hyp.d1 == 1 and np.ndim(x_grid) == 1:
        axes = [np.asarray(x_grid, dtype=float)]
    else:
        axes = [np.asarray(a, dtype=float) for a in x_grid]
    if t_grid.size == 0 or any(a.size == 0 for a in axes):
        raise ValueError("averaged_drift_interpolant needs non-empty grids")
    if len(axes) != hyp.d1:
        raise ValueError(f"expected {hyp.d1} x-axes, got {len(axes)}")
    for a in [t_grid] + axes:
        if a.size > 1 and np.any(np.diff(a) <= 0):
            raise ValueError("grid axes must be strictly increasing")
    mode = q.get("mode", "sampled")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, hyp.d1)
    table = np.empty((t_grid.size, mesh.shape[0], hyp.d1))
    if mode == "closed-form":
        fn = q["bbar"]
        for i, t in enumerate(t_grid):
            table[i] = fn(t, mesh)
    elif mode == "sampled":
        seed = q.get("seed", SeedSpec(0, 0))
        burn_in = q.get("burn_in", 5.0 / hyp.beta2)
        horizon = q.get("horizon", 200.0)
        dt = q.get("dt", 0.01)
        thinning = q.get("thinning", max(1, int(round((2.0 / hyp.beta1) / dt))))
        n_chains = q.get("n_chains", 8)
        for j, x in enumerate(mesh):
            mu = sample_invariant_measure(x, hyp, burn_in, horizon, thinning, seed.child(seed.stream_id * 100003 + j),
                                          dt=dt, n_chains=n_chains)
            for i, t in enumerate(t_grid):
                table[i, j] = averaged_drift(hyp, mu, t, x).value
    else:
        raise ValueError(f"unknown interpolant mode {mode!r}")
    shape = (t_grid.size,) + tuple(a.size for a in axes) + (hyp.d1,)
    # RegularGridInterpolator needs at least two nodes per axis
    if any(a.size < 2 for a in axes):
        raise ValueError("each x-axis needs at least two nodes")
    meta = {k: v for k, v in q.items() if k != "bbar"}
    return DriftInterpolant(t_grid, axes, table.reshape(shape), meta)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    amplitude: float
    r_squared: float
    n_points: int = 0
    degenerate: bool = False
    times: np.ndarray | None = None
    signal: np.ndarray | None = None
    stderr: np.ndarray | None = None


def fit_exponential_decay(t, signal, se, *, snr: float = 10.0, min_points: int = 3) -> DecayFit:
    """Weighted log-domain least squares ``signal ~ A exp(-rate t)``.

    Uses the initial run of points whose signal exceeds ``snr`` standard
    errors.  Weights are ``(signal / se)^2`` (delta method); zero standard
    errors fall back to equal weights.
    """
    t = np.asarray(t, dtype=float)
    m = np.asarray(signal, dtype=float)
    se = np.asarray(se, dtype=float)
    ok = (m > 0) & (m > snr * se)
    bad = np.flatnonzero(~ok)
    n_ok = bad[0] if bad.size else m.size
    if n_ok < min_points:
        raise FitFailure(f"only {n_ok} signal-dominated points (need {min_points})")
    tt, mm, ss = t[:n_ok], m[:n_ok], se[:n_ok]
    y = np.log(mm)
    if np.all(ss > 0):
        w = (mm / ss) ** 2
        w = w / w.max()
    else:
        w = np.ones_like(mm)
    A = np.stack([np.ones_like(tt), -tt], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    pred = A @ coef
    ybar = np.average(y, weights=w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * (y - pred) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(coef[1]), float(math.exp(coef[0])), float(min(1.0, max(0.0, r2))), int(n_ok),
                    False, t, m, se)


def _coupled_paths(starts_x, starts_y, hyp, horizon, n_paths, seed, dt):
    """Synchronously coupled frozen paths: one Wiener path per replica, shared by all starts."""
    N = int(round(horizon / dt))
    if N < 1:
        raise ValueError("horizon shorter than one step")
    dW = seed.generator(29).standard_normal((n_paths, N, hyp.dims[3])) * math.sqrt(dt)
    out = []
    for x, y in zip(starts_x, starts_y):
        out.append(_frozen_euler(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float)),
                                 hyp, dt, dW))
    return np.arange(N + 1) * dt, out


def _mean_and_se(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    P = v.shape[0]
    return v.mean(axis=0), v.std(axis=0, ddof=1) / math.sqrt(P) if P > 1 else np.zeros(v.shape[1:])


def contraction_estimate(x, y1, y2, hyp: HypothesisSet, horizon: float, n_paths: int, seed: SeedSpec,
                         *, dt: float = 0.01) -> DecayFit:
    """Rate of ``E|Y^{x,y1}_t - Y^{x,y2}_t|^2`` under synchronous coupling."""
    t, (Y1, Y2) = _coupled_paths([x, x], [y1, y2], hyp, horizon, n_paths, seed, dt)
    d2 = np.sum((Y1 - Y2) ** 2, axis=-1)
    m, se = _mean_and_se(d2)
    if np.all(m == 0):
        return DecayFit(float("nan"), 0.0, 0.0, 0, True, t, m, se)
    return fit_exponential_decay(t, m, se)


@dataclass(frozen=True)
class SensitivityResult:
    sup_mse: float
    bound: float
    holds: bool
    exponent: float
    constant: float
    times: np.ndarray
    mse: np.ndarray
    mse_se: np.ndarray

    def as_dict(self) -> dict:
        return {"sup_mse": self.sup_mse, "bound": self.bound, "holds": self.holds,
                "exponent": self.exponent, "constant": self.constant}


def x_sensitivity_estimate(x1, x2, y, hyp: HypothesisSet, horizon: float, n_paths: int, seed: SeedSpec,
                           *, dt: float = 0.01, gap_scales: Sequence[float] = (0.25, 0.5, 1.0)) -> SensitivityResult:
    """Sup over time of ``E|Y^{x1,y}_t - Y^{x2,y}_t|^2`` and its scaling in the gap.

    Extra gaps are taken along the segment from ``x1`` towards ``x2``
    (fractions ``gap_scales``); ``holds`` means the regression exponent of
    the sup gap against ``|x1 - x2|`` is ``2 +- 0.2``.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    gap = float(np.linalg.norm(x2 - x1))
    scales = sorted(set(float(s) for s in gap_scales) | {1.0})
    xs = [x1] + [x1 + s * (x2 - x1) for s in scales]
    t, paths = _coupled_paths(xs, [y] * len(xs), hyp, horizon, n_paths, seed, dt)
    mses, ses, sups = [], [], []
    for p in paths[1:]:
        m, se = _mean_and_se(np.sum((p - paths[0]) ** 2, axis=-1))
        mses.append(m)
        ses.append(se)
        sups.append(float(m.max()))
    full = scales.index(1.0)
    if gap == 0.0:
        return SensitivityResult(0.0, 0.0, True, float("nan"), 0.0, t, mses[full], ses[full])
    g = np.array(scales) * gap
    sups_a = np.array(sups)
    if np.any(sups_a <= 0):
        expo = float("nan")
    else:
        expo = float(np.polyfit(np.log(g), np.log(sups_a), 1)[0])
    C = float(np.max(sups_a / g**2))
    holds = bool(np.isfinite(expo) and abs(expo - 2.0) <= 0.2)
    return SensitivityResult(sups[full], C * gap**2, holds, expo, C, t, mses[full], ses[full])


def ergodic_convergence_estimate(x, y, hyp: HypothesisSet, phi: Callable, horizon: float, n_paths: int,
                                 seed: SeedSpec, *, measure: EmpiricalMeasure | None = None,
                                 dt: float = 0.01) -> DecayFit:
    """Rate at which ``E phi(Y^{x,y}_s)`` approaches ``int phi d mu^x``.

    ``phi`` maps ``(..., d2)`` states to scalars.  Without ``measure`` the
    invariant average is sampled here.
    """
    if measure is None:
        measure = sample_invariant_measure(x, hyp, 5.0 / hyp.beta2, max(20.0 / hyp.beta2, 400.0),
                                           max(1, int(round(2.0 / hyp.beta1 / dt))), seed.child(seed.stream_id + 7919),
                                           dt=dt, n_chains=16)
    target = np.asarray(phi(measure.samples), dtype=float)
    mu_phi = float(target.mean())
    mu_se = float(batch_means_se(target))
    t, (Y,) = _coupled_paths([x], [y], hyp, horizon, n_paths, seed, dt)
    vals = np.asarray(phi(Y), dtype=float)
    m, se = _mean_and_se(vals)
    gap = np.abs(m - mu_phi)
    if np.all(np.ptp(vals, axis=0) == 0) and np.all(gap == 0):
        return DecayFit(float("nan"), 0.0, 0.0, 0, True, t, gap, se)
    if mu_se > 0.1 * gap[0]:
        raise FitFailure(f"invariant average s.e. {mu_se:.3g} exceeds 10% of the initial gap {gap[0]:.3g}")
    return fit_exponential_decay(t, gap, np.sqrt(se**2 + mu_se**2))


def decorrelation_estimate(x, y, hyp: HypothesisSet, b1_frozen: Callable, s_grid, seed: SeedSpec, n_paths: int,
                           *, bbar: np.ndarray | float | None = None, zeta: float | None = None,
                           dt: float = 0.01, measure: EmpiricalMeasure | None = None) -> DecayFit:
    """Decay of ``J(s, zeta) = E<b1(Y_s) - bbar, b1(Y_zeta) - bbar>`` in ``s - zeta``.

    ``b1_frozen`` maps ``(..., d2)`` fast states to ``(..., d1)`` with
    ``(t, x)`` already fixed; ``bbar`` is its invariant average (sampled
    when omitted).  ``zeta`` defaults to the first grid value.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.ndim != 1 or s_grid.size < 3 or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be an increasing 1-d array with at least three points")
    z = float(s_grid[0] if zeta is None else zeta)
    if bbar is None:
        if measure is None:
            measure = sample_invariant_measure(x, hyp, 5.0 / hyp.beta2, 400.0, max(1, int(round(2.0 / hyp.beta1 / dt))),
                                               seed.child(seed.stream_id + 104729), dt=dt, n_chains=16)
        bbar = np.asarray(b1_frozen(measure.samples), dtype=float).mean(axis=0)
    bbar = np.atleast_1d(np.asarray(bbar, dtype=float))
    horizon = float(max(s_grid[-1], z))
    t, (Y,) = _coupled_paths([x], [y], hyp, horizon, n_paths, seed, dt)
    idx = np.clip(np.round(s_grid / dt).astype(int), 0, t.size - 1)
    iz = int(np.clip(round(z / dt), 0, t.size - 1))
    fz = np.asarray(b1_frozen(Y[:, iz, :]), dtype=float) - bbar
    fs = np.asarray(b1_frozen(Y[:, idx, :]), dtype=float) - bbar
    prod = np.sum(fs * fz[:, None, :], axis=-1)
    m, se = _mean_and_se(prod)
    keep = s_grid >= z
    if np.all(prod == 0):
        return DecayFit(float("nan"), 0.0, 0.0, 0, True, s_grid[keep] - z, m[keep], se[keep])
    return fit_exponential_decay(s_grid[keep] - z, m[keep], se[keep])
