"""Fractional calculus on uniform grids.

Riemann-Liouville integrals, Weyl derivatives, the generalised
(Zähle) Riemann-Stieltjes integral, the left-point Young sum, and the
function-space norms used to control pathwise integrals against fBm.

All singular integrals use the same discretisation: the path is replaced by
its piecewise-linear interpolant and the power kernel is integrated exactly
on every cell, so no diagonal truncation is needed.  Suprema are taken over
grid nodes only, which makes every sup-type norm a lower-bound estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.signal import fftconvolve

from .noise import GridPath, HurstParam, NumericError, SeedSpec, sample_fbm

__all__ = [
    "AlphaParam",
    "NormReport",
    "YoungBound",
    "FerniqueProbe",
    "frac_integral_left",
    "frac_integral_right",
    "weyl_left",
    "weyl_right",
    "rs_integral_fractional",
    "young_integral_sum",
    "norm_report",
    "young_bound_check",
    "fernique_moment_probe",
    "alpha_profile",
    "w_alpha_infty",
    "w_alpha_1",
    "w_1malpha_infty",
    "lambda_alpha",
    "holder_norm",
]

NORM_BLOWUP = 1e12
# elements per work block in the O(n^2) norm passes
_BLOCK = 2_000_000


@dataclass(frozen=True)
class AlphaParam:
    """Fractional order ``alpha`` in ``(0, 1/2)``.

    When ``H`` is given the averaging window
    ``1 - H < alpha < min(1/2, beta, gamma/2)`` is enforced as well.
    """

    alpha: float
    H: float | None = None
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        a = float(self.alpha)
        if not 0.0 < a < 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2), got {a}")
        if self.H is not None:
            H = float(HurstParam(self.H).H)
            upper = min(0.5, self.beta, self.gamma / 2.0)
            if not 1.0 - H < a < upper:
                raise ValueError(
                    f"alpha={a} outside the admissible window (1-H, min(1/2, beta, gamma/2)) "
                    f"= ({1.0 - H:.4g}, {upper:.4g})"
                )
        object.__setattr__(self, "alpha", a)

    def __float__(self) -> float:
        return self.alpha


def _alpha(alpha, upper: float = 1.0) -> float:
    a = float(alpha.alpha if isinstance(alpha, AlphaParam) else alpha)
    if not 0.0 < a < upper:
        raise ValueError(f"alpha must lie in (0, {upper:g}), got {a}")
    return a


def _vals(f: GridPath) -> np.ndarray:
    if not isinstance(f, GridPath):
        raise TypeError(f"expected GridPath, got {type(f).__name__}")
    return f.values


def _same_grid(f: GridPath, g: GridPath) -> None:
    if f.n_steps != g.n_steps or not math.isclose(f.T, g.T, rel_tol=1e-12) or f.t0 != g.t0:
        raise ValueError(
            f"grids differ: (T={f.T}, n={f.n_steps}) vs (T={g.T}, n={g.n_steps})"
        )


def _conv_causal(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """``out[i] = sum_{j<=i} x[j] kernel[i-j]`` along axis -2."""
    n1 = x.shape[-2]
    k = kernel.reshape((1,) * (x.ndim - 2) + (-1, 1))
    if n1 <= 64:
        out = np.zeros_like(x)
        for i in range(n1):
            out[..., i, :] = np.sum(x[..., : i + 1, :] * k[..., i::-1, :], axis=-2)
        return out
    return fftconvolve(x, k, axes=-2)[..., :n1, :]


# ---------------------------------------------------------------------------
# Riemann-Liouville integrals
# ---------------------------------------------------------------------------


def _rl_left(x: np.ndarray, a: float, h: float) -> np.ndarray:
    # product trapezoidal rule: exact for piecewise-linear integrands
    n = x.shape[-2] - 1
    k = np.arange(n + 1, dtype=float)
    ap1 = a + 1.0
    inner = np.zeros(n + 1)
    inner[0] = 1.0
    if n >= 1:
        kk = k[1:]
        inner[1:] = (kk + 1) ** ap1 - 2.0 * kk**ap1 + (kk - 1) ** ap1
    out = _conv_causal(x, inner)
    # node j=0 has a one-sided hat: replace its interior weight by the end weight
    first = np.zeros(n + 1)
    first[1:] = (k[1:] - 1) ** ap1 - (k[1:] - 1 - a) * k[1:] ** a
    out = out - inner[:, None] * x[..., :1, :] + first[:, None] * x[..., :1, :]
    out[..., 0, :] = 0.0
    return out * h**a / math.gamma(a + 2.0)


def frac_integral_left(f: GridPath, alpha: float) -> GridPath:
    """Left Riemann-Liouville integral ``I^alpha_{0+} f`` at the grid nodes."""
    a = _alpha(alpha)
    return f.with_values(_rl_left(_vals(f), a, f.h), operator="I_left", alpha=a)


def frac_integral_right(f: GridPath, alpha: float) -> GridPath:
    """Right integral ``(1/Gamma(a)) int_x^T f(y) (y-x)^(a-1) dy`` (real kernel, no phase)."""
    a = _alpha(alpha)
    x = _vals(f)[..., ::-1, :]
    return f.with_values(_rl_left(x, a, f.h)[..., ::-1, :], operator="I_right", alpha=a)


# ---------------------------------------------------------------------------
# Weyl derivatives
# ---------------------------------------------------------------------------


def _weyl_left(x: np.ndarray, a: float, h: float) -> np.ndarray:
    """Left Weyl derivative at nodes 1..n; node 0 extrapolated.

    On the cell at distance ``m`` the piecewise-linear difference
    ``f(x_i) - f(y)`` is ``c + s u`` in the lag ``u``, which integrates
    exactly against ``u^(-a-1)``; on the last cell ``c = 0``.
    """
    n = x.shape[-2] - 1
    m = np.arange(n + 1, dtype=float)
    A = np.zeros(n + 1)
    B = np.zeros(n + 1)
    if n >= 2:
        A[2:] = ((m[2:] - 1) ** (-a) - m[2:] ** (-a)) / a
    B[1:] = (m[1:] ** (1 - a) - (m[1:] - 1) ** (1 - a)) / (1 - a)
    C = B - m * A
    C[0] = 0.0
    S_A = np.cumsum(A)
    d = np.zeros_like(x)
    d[..., :-1, :] = np.diff(x, axis=-2)
    # sum_j f_j A_{i-j} and sum_j d_j C_{i-j}; A_0 = C_0 = 0 so j = i drops out
    integral = x * S_A[:, None] - _conv_causal(x, A) + _conv_causal(d, C)
    integral *= h ** (-a)
    out = np.empty_like(x)
    t = h * m[1:, None]
    out[..., 1:, :] = (x[..., 1:, :] / t**a + a * integral[..., 1:, :]) / math.gamma(1 - a)
    if n >= 2:
        out[..., 0, :] = 2.0 * out[..., 1, :] - out[..., 2, :]
    else:
        out[..., 0, :] = out[..., 1, :]
    return out


def weyl_left(f: GridPath, alpha: float) -> GridPath:
    """Weyl derivative ``D^alpha_{0+} f`` at the grid nodes.

    The value at ``t = 0`` is a linear extrapolation and is flagged through
    ``meta['endpoint_extrapolated'] = 0``.
    """
    a = _alpha(alpha)
    vals = _weyl_left(_vals(f), a, f.h)
    return f.with_values(vals, operator="D_left", alpha=a, endpoint_extrapolated=0)


def _weyl_right_bminus(x: np.ndarray, a: float, h: float) -> np.ndarray:
    g = x - x[..., -1:, :]
    return _weyl_left(g[..., ::-1, :], a, h)[..., ::-1, :]


def weyl_right(g: GridPath, alpha: float) -> GridPath:
    """Right Weyl derivative of ``g_{T-} = g - g(T)`` (real kernel, phase dropped).

    The value at ``t = T`` is extrapolated and flagged via
    ``meta['endpoint_extrapolated'] = n_steps``.
    """
    a = _alpha(alpha)
    vals = _weyl_right_bminus(_vals(g), a, g.h)
    return g.with_values(vals, operator="D_right", alpha=a, endpoint_extrapolated=g.n_steps)


# ---------------------------------------------------------------------------
# Integrals
# ---------------------------------------------------------------------------


def young_integral_sum(f: GridPath, g: GridPath):
    """Left-point Riemann-Stieltjes sum ``sum_k <f(t_k), g(t_{k+1}) - g(t_k)>``.

    A one-dimensional ``f`` multiplies every coordinate of ``g``.  Ensembles
    return one value per path.
    """
    _same_grid(f, g)
    fv, gv = _vals(f), _vals(g)
    if fv.shape[-1] != gv.shape[-1] and fv.shape[-1] != 1:
        raise ValueError(f"dimension mismatch: f has {fv.shape[-1]}, g has {gv.shape[-1]}")
    s = np.sum(fv[..., :-1, :] * np.diff(gv, axis=-2), axis=(-2, -1))
    return float(s) if np.ndim(s) == 0 else s


def rs_integral_fractional(f: GridPath, g: GridPath, alpha, check_norms: bool = True):
    """Generalised Riemann-Stieltjes integral via Weyl derivatives.

    Computes ``f(0) (g(T) - g(0)) - int_0^T D^a_{0+} f_{0+} . D^{1-a}_{T-} g_{T-} dx``;
    the minus sign is the product of the two complex phases, which are never
    formed.  The x-quadrature is the trapezoidal rule with both extrapolated
    endpoint values given zero weight.
    """
    _same_grid(f, g)
    a = _alpha(alpha)
    fv, gv = _vals(f), _vals(g)
    if fv.shape[-1] != gv.shape[-1] and fv.shape[-1] != 1:
        raise ValueError(f"dimension mismatch: f has {fv.shape[-1]}, g has {gv.shape[-1]}")
    if check_norms:
        norm = w_1malpha_infty(g, a)
        if np.any(~np.isfinite(norm)) or np.any(np.asarray(norm) > NORM_BLOWUP):
            raise NumericError(f"integrator norm ||g||_(1-alpha,inf,T) = {np.max(norm):.3e} blew up")
    f0 = fv[..., :1, :]
    dl = _weyl_left(fv - f0, a, f.h)
    dr = _weyl_right_bminus(gv, 1.0 - a, g.h)
    prod = np.sum(dl * dr, axis=-1)
    w = np.full(prod.shape[-1], f.h)
    w[0] = 0.0
    w[-1] = 0.0
    frac = -np.sum(prod * w, axis=-1)
    boundary = np.sum(f0[..., 0, :] * (gv[..., -1, :] - gv[..., 0, :]), axis=-1)
    out = frac + boundary
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def _cell_weights(p: float, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact weights of ``int_{m-1}^{m} L(v) v^{-p} dv`` for linear ``L``.

    Returns ``(w_lo, w_hi)`` indexed by ``m = 0..M`` (entry 0 unused) such that
    the cell integral is ``w_lo[m] D_{m-1} + w_hi[m] D_m``.  ``w_lo[1]`` is
    set to zero: it multiplies ``D_0 = 0`` and is infinite for ``p >= 1``.
    """
    m = np.arange(M + 1, dtype=float)
    w_lo = np.zeros(M + 1)
    w_hi = np.zeros(M + 1)
    if M < 1:
        return w_lo, w_hi
    mm = m[1:]

    def prim(q, v):
        # antiderivative of v^(-q)
        if abs(q - 1.0) < 1e-14:
            with np.errstate(divide="ignore"):
                return np.log(v)
        with np.errstate(divide="ignore"):
            return v ** (1.0 - q) / (1.0 - q)

    K1 = prim(p - 1.0, mm) - prim(p - 1.0, mm - 1)
    with np.errstate(invalid="ignore"):
        K0 = prim(p, mm) - prim(p, mm - 1)
        w_lo[1:] = mm * K0 - K1
        w_hi[1:] = K1 - (mm - 1) * K0
    w_hi[1] = K1[0]
    w_lo[1] = 0.0 if p >= 1.0 else K0[0] - K1[0]
    return w_lo, w_hi


def _mag(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1)) if x.shape[-1] > 1 else np.abs(x[..., 0])


def _ensemble(f: GridPath) -> tuple[np.ndarray, bool]:
    v = _vals(f)
    return (v, True) if v.ndim == 3 else (v[None], False)


def _backward_profile(v: np.ndarray, a: float, h: float) -> np.ndarray:
    """``Phi_i = int_0^{t_i} |f(t_i) - f(s)| / (t_i - s)^(a+1) ds`` for all nodes.

    ``v`` has shape ``(P, n+1, d)``; returns ``(P, n+1)``.
    """
    P, n1, _ = v.shape
    n = n1 - 1
    w_lo, w_hi = _cell_weights(a + 1.0, n + 1)
    # weight on D_m inside a row: w_hi[m] + w_lo[m+1]; the row end m = i only gets w_hi[i]
    W = np.zeros(n + 1)
    W[1:] = w_hi[1 : n + 1] + w_lo[2 : n + 2]
    m_idx = np.arange(n + 1)
    out = np.zeros((P, n + 1))
    rows = max(1, min(n + 1, _BLOCK // max(1, P * (n + 1))))
    pchunk = P if P * (n + 1) * rows <= 4 * _BLOCK else max(1, 4 * _BLOCK // ((n + 1) * rows))
    for p0 in range(0, P, pchunk):
        vp = v[p0 : p0 + pchunk]
        for i0 in range(1, n + 1, rows):
            i = np.arange(i0, min(n + 1, i0 + rows))
            lag = i[:, None] - m_idx[None, :]  # j = i - m
            valid = lag >= 0
            j = np.where(valid, lag, 0)
            D = _mag(vp[:, i, None, :] - vp[:, j, :])  # (p, r, n+1) indexed by m
            D = np.where(valid[None], D, 0.0)
            Wrow = np.where(m_idx[None, :] <= i[:, None], W[None, :], 0.0)
            Wrow[np.arange(i.size), i] = w_hi[i]
            out[p0 : p0 + pchunk, i] = np.einsum("prm,rm->pr", D, Wrow)
    return out * h ** (-a)


def _forward_sups(v: np.ndarray, a: float, h: float, signed: bool, absolute: bool):
    """Sup over node pairs ``s < t`` of the (1-alpha)-type functionals.

    ``absolute``: ``|g(t)-g(s)|/(t-s)^(1-a) + int_s^t |g(y)-g(s)|/(y-s)^(2-a) dy``.
    ``signed``: ``| (g(s)-g(t))/(t-s)^(1-a) + (1-a) int_s^t (g(s)-g(y))/(y-s)^(2-a) dy |``.
    Returns ``(P,)`` arrays (or None for a skipped functional).
    """
    P, n1, d = v.shape
    n = n1 - 1
    p = 2.0 - a
    w_lo, w_hi = _cell_weights(p, n)
    m_idx = np.arange(n + 1)
    lag_pow = np.zeros(n + 1)
    lag_pow[1:] = (m_idx[1:] * h) ** (1.0 - a)
    scale = h ** (1.0 - p)
    sup_abs = np.zeros(P) if absolute else None
    sup_sgn = np.zeros(P) if signed else None
    rows = max(1, min(n, _BLOCK // max(1, P * (n + 1) * d)))
    pchunk = P if P * (n + 1) * rows * d <= 4 * _BLOCK else max(1, 4 * _BLOCK // ((n + 1) * rows * d))
    for p0 in range(0, P, pchunk):
        vp = v[p0 : p0 + pchunk]
        pc = vp.shape[0]
        for j0 in range(0, n, rows):
            j = np.arange(j0, min(n, j0 + rows))
            tgt = j[:, None] + m_idx[None, :]
            valid = (tgt <= n) & (m_idx[None, :] >= 1)
            t_ix = np.where(tgt <= n, tgt, n)
            diff = vp[:, t_ix, :] - vp[:, j, None, :]  # g(s+m) - g(s), (p, r, n+1, d)
            diff = np.where((tgt <= n)[None, :, :, None], diff, 0.0)
            prev = np.zeros_like(diff)
            prev[:, :, 1:, :] = diff[:, :, :-1, :]
            with np.errstate(invalid="ignore", divide="ignore"):
                inv_lag = np.where(m_idx > 0, 1.0 / np.where(lag_pow > 0, lag_pow, 1.0), 0.0)
            if absolute:
                D = _mag(diff)
                Dp = _mag(prev)
                cells = w_lo[None, None, :] * Dp + w_hi[None, None, :] * D
                cells[:, :, 0] = 0.0
                val = D * inv_lag + scale * np.cumsum(cells, axis=-1)
                val = np.where(valid[None], val, -np.inf)
                sup_abs[p0 : p0 + pc] = np.maximum(sup_abs[p0 : p0 + pc], val.max(axis=(1, 2)))
            if signed:
                cells = w_lo[None, None, :, None] * prev + w_hi[None, None, :, None] * diff
                cells[:, :, 0, :] = 0.0
                vec = -(diff * inv_lag[None, None, :, None]) - (1.0 - a) * scale * np.cumsum(
                    cells, axis=-2
                )
                val = np.where(valid[None], _mag(vec), -np.inf)
                sup_sgn[p0 : p0 + pc] = np.maximum(sup_sgn[p0 : p0 + pc], val.max(axis=(1, 2)))
    return sup_abs, sup_sgn


def _holder_sup(v: np.ndarray, eta: float, h: float) -> np.ndarray:
    P, n1, _ = v.shape
    n = n1 - 1
    out = np.zeros(P)
    for m in range(1, n + 1):
        inc = _mag(v[:, m:, :] - v[:, :-m, :]).max(axis=-1)
        np.maximum(out, inc / (m * h) ** eta, out=out)
    return out


def _unpack(x: np.ndarray, ens: bool):
    return x if ens else float(x[0])


def alpha_profile(f: GridPath, alpha) -> GridPath:
    """``||f(t)||_alpha = |f(t)| + int_0^t |f(t)-f(s)|/(t-s)^(alpha+1) ds`` per node."""
    a = _alpha(alpha)
    v, ens = _ensemble(f)
    prof = _mag(v) + _backward_profile(v, a, f.h)
    prof = prof if ens else prof[0]
    return GridPath(f.T, f.n_steps, prof[..., None], f.t0, {"operator": "alpha_profile", "alpha": a})


def w_alpha_infty(f: GridPath, alpha):
    """``||f||_{alpha,inf} = sup_t ||f(t)||_alpha`` over grid nodes."""
    a = _alpha(alpha)
    v, ens = _ensemble(f)
    prof = _mag(v) + _backward_profile(v, a, f.h)
    return _unpack(prof.max(axis=-1), ens)


def w_alpha_1(f: GridPath, alpha):
    """``||f||_{alpha,1} = int |f(s)| s^-alpha ds + int int |f(s)-f(y)|/(s-y)^(alpha+1) dy ds``."""
    a = _alpha(alpha)
    v, ens = _ensemble(f)
    h = f.h
    n = f.n_steps
    mag = _mag(v)
    w_lo, w_hi = _cell_weights(a, n)
    weights = np.zeros(n + 1)
    weights[:-1] += w_lo[1:]
    weights[1:] += w_hi[1:]
    first = h ** (1.0 - a) * mag @ weights
    phi = _backward_profile(v, a, h)
    second = h * (phi[:, 1:-1].sum(axis=-1) + 0.5 * phi[:, -1])
    return _unpack(first + second, ens)


def w_1malpha_infty(g: GridPath, alpha):
    """``||g||_{1-alpha,inf,T}`` as a sup over node pairs."""
    a = _alpha(alpha)
    v, ens = _ensemble(g)
    sup_abs, _ = _forward_sups(v, a, g.h, signed=False, absolute=True)
    return _unpack(sup_abs, ens)


def lambda_alpha(g: GridPath, alpha):
    """``Lambda_alpha(g) = sup_{s<t} |D^{1-alpha}_{t-} g_{t-}(s)| / Gamma(1-alpha)``."""
    a = _alpha(alpha)
    v, ens = _ensemble(g)
    _, sup_sgn = _forward_sups(v, a, g.h, signed=True, absolute=False)
    return _unpack(sup_sgn / (math.gamma(1.0 - a) * math.gamma(a)), ens)


def holder_norm(f: GridPath, eta: float):
    """``||f||_eta = sup|f| + sup_{s<t} |f(t)-f(s)| / (t-s)^eta``."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"Hölder exponent must lie in (0, 1], got {eta}")
    v, ens = _ensemble(f)
    return _unpack(_mag(v).max(axis=-1) + _holder_sup(v, eta, f.h), ens)


@dataclass(frozen=True)
class NormReport:
    sup_norm: float
    holder_eta: float
    holder_norm: float
    w_alpha_infty: float
    w_alpha_1: float
    w_1malpha_infty: float
    lambda_alpha: float
    alpha: float
    role: str
    infinite: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def norm_report(
    f: GridPath, alpha, role: str = "integrand", holder_eta: float | None = None
) -> NormReport:
    """Evaluate every norm of a single path.

    ``role`` only selects the default Hölder exponent: ``alpha`` for an
    integrand, ``1 - alpha`` for an integrator.  Infinite values are reported
    as ``inf`` with ``infinite=True``.
    """
    if role not in ("integrand", "integrator"):
        raise ValueError(f"role must be 'integrand' or 'integrator', got {role!r}")
    if f.is_ensemble:
        raise ValueError("norm_report takes a single path; use the norm functions for ensembles")
    a = _alpha(alpha)
    eta = holder_eta if holder_eta is not None else (a if role == "integrand" else 1.0 - a)
    v = f.values[None]
    sup_abs, sup_sgn = _forward_sups(v, a, f.h, signed=True, absolute=True)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = dict(
            sup_norm=float(_mag(v).max()),
            holder_norm=float(holder_norm(f, eta)),
            w_alpha_infty=float(w_alpha_infty(f, a)),
            w_alpha_1=float(w_alpha_1(f, a)),
            w_1malpha_infty=float(sup_abs[0]),
            lambda_alpha=float(sup_sgn[0] / (math.gamma(1.0 - a) * math.gamma(a))),
        )
    bad = {k: (v if np.isfinite(v) else math.inf) for k, v in vals.items()}
    return NormReport(
        holder_eta=float(eta),
        alpha=a,
        role=role,
        infinite=any(math.isinf(x) for x in bad.values()),
        **bad,
    )


@dataclass(frozen=True)
class YoungBound:
    lhs: float
    rhs: float
    holds: bool


def young_bound_check(f: GridPath, g: GridPath, alpha) -> YoungBound:
    """Check ``|int f dg| <= Lambda_alpha(g) ||f||_{alpha,1}`` on one pair."""
    _same_grid(f, g)
    a = _alpha(alpha, upper=0.5)
    lhs = abs(young_integral_sum(f, g))
    rhs = float(lambda_alpha(g, a)) * float(w_alpha_1(f, a))
    holds = lhs <= rhs * (1.0 + 1e-6) + 1e-3 * rhs
    return YoungBound(float(lhs), float(rhs), bool(holds))


@dataclass(frozen=True)
class FerniqueProbe:
    estimate: float
    stderr: float
    n_paths: int
    n_overflow: int


def fernique_moment_probe(
    H,
    alpha,
    theta: float,
    n_paths: int,
    seed: SeedSpec | None = None,
    T: float = 1.0,
    n_steps: int = 128,
) -> FerniqueProbe:
    """Monte Carlo estimate of ``E[exp(Lambda_alpha(B^H)^theta)]``.

    A diagnostic only: the estimate should stabilise as ``n_paths`` doubles.
    Overflowing paths make the estimate ``inf`` and are counted.
    """
    if not 0.0 <= theta < 2.0:
        raise ValueError(f"theta must lie in [0, 2), got {theta}")
    a = _alpha(alpha, upper=0.5)
    seed = seed or SeedSpec(0, 0)
    B = sample_fbm(T, n_steps, H, 1, seed, n_paths=n_paths)
    lam = np.asarray(lambda_alpha(B, a))
    with np.errstate(over="ignore"):
        vals = np.exp(lam**theta)
    n_over = int(np.sum(~np.isfinite(vals)))
    if n_over:
        return FerniqueProbe(math.inf, math.inf, n_paths, n_over)
    se = float(vals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.nan
    return FerniqueProbe(float(vals.mean()), se, n_paths, 0)
