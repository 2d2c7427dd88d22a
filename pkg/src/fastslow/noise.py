"""Exact synthesis of fractional and standard Brownian paths on uniform grids.

Paths are sampled in increment space: fractional Gaussian noise (fGn) is
drawn either by Cholesky factorisation of its Toeplitz covariance or by
circulant embedding (Davies-Harte), then cumulatively summed.  Every draw
comes from a counter-based Philox stream identified by a :class:`SeedSpec`,
so a path depends only on ``(master_seed, stream_id)`` and the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "HurstParam",
    "GridPath",
    "SeedSpec",
    "fbm_covariance",
    "fgn_autocovariance",
    "sample_fbm_cholesky",
    "sample_fbm_davies_harte",
    "sample_fbm",
    "sample_bm",
    "DAVIES_HARTE_THRESHOLD",
    "NumericError",
    "circulant_eigenvalues",
]

DAVIES_HARTE_THRESHOLD = 512
_EIG_TOL = 1e-10


class NumericError(ArithmeticError):
    """Raised when a numerical factorisation or embedding breaks down."""


@dataclass(frozen=True)
class HurstParam:
    """Hurst index of a fractional Brownian motion.

    ``allow_rough`` admits ``H <= 1/2``; the noise self-tests use it (``H = 1/2``
    is standard Brownian motion), the solvers never do.
    """

    H: float
    allow_rough: bool = False

    def __post_init__(self) -> None:
        H = float(self.H)
        if not np.isfinite(H) or not 0.0 < H < 1.0:
            raise ValueError(f"Hurst index must lie in (0, 1), got {self.H!r}")
        if not self.allow_rough and H <= 0.5:
            raise ValueError(
                f"Hurst index must lie in (1/2, 1) for the fast-slow solvers, got {H}"
            )
        object.__setattr__(self, "H", H)

    def __float__(self) -> float:
        return self.H


def _as_hurst(H: HurstParam | float) -> float:
    if isinstance(H, HurstParam):
        return H.H
    return HurstParam(float(H), allow_rough=True).H


@dataclass(frozen=True)
class SeedSpec:
    """Names one deterministic Gaussian stream.

    The stream is a Philox (counter-based) generator keyed by ``master_seed``
    and ``stream_id``; extra integer ``keys`` passed to :meth:`generator`
    address sub-streams without touching the parent.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if int(self.stream_id) < 0:
            raise ValueError(f"stream_id must be non-negative, got {self.stream_id}")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_id", int(self.stream_id))

    def generator(self, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_id, *map(int, keys))
        )
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "SeedSpec":
        """Same master seed, different stream."""
        return SeedSpec(self.master_seed, stream_id)


@dataclass(frozen=True, eq=False)
class GridPath:
    """Uniformly sampled vector-valued function on ``[0, T]``.

    ``values`` has shape ``(n_steps + 1, d)``; a leading ensemble axis
    ``(n_paths, n_steps + 1, d)`` is also accepted so Monte Carlo batches can
    travel through the same API.  ``meta`` carries flags such as
    ``endpoint_extrapolated``.
    """

    T: float
    n_steps: int
    values: np.ndarray
    t0: float = 0.0
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.n_steps) < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim not in (2, 3) or vals.shape[-2] != int(self.n_steps) + 1:
            raise ValueError(
                f"values must have shape (n_steps+1, d) or (n_paths, n_steps+1, d); "
                f"got {vals.shape} for n_steps={self.n_steps}"
            )
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"non-finite entry in GridPath at index {tuple(bad)}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def is_ensemble(self) -> bool:
        return self.values.ndim == 3

    @property
    def n_paths(self) -> int:
        return self.values.shape[0] if self.is_ensemble else 1

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-2)

    def path(self, i: int) -> "GridPath":
        if not self.is_ensemble:
            raise ValueError("path() needs an ensemble GridPath")
        return GridPath(self.T, self.n_steps, self.values[i], self.t0, dict(self.meta))

    def subsample(self, every: int) -> "GridPath":
        """Keep every ``every``-th node; ``n_steps`` must be divisible by it."""
        if every < 1 or self.n_steps % every:
            raise ValueError(f"cannot subsample {self.n_steps} steps by {every}")
        return GridPath(
            self.T, self.n_steps // every, self.values[..., ::every, :], self.t0, dict(self.meta)
        )

    def with_values(self, values: np.ndarray, **meta: Any) -> "GridPath":
        return GridPath(self.T, self.n_steps, values, self.t0, {**self.meta, **meta})

    @classmethod
    def from_function(cls, fn, T: float, n_steps: int) -> "GridPath":
        t = np.linspace(0.0, T, n_steps + 1)
        return cls(T, n_steps, np.asarray(fn(t), dtype=float).reshape(n_steps + 1, -1))


def _check_grid(T: float, n_steps: int, dim: int, n_paths: int | None) -> None:
    if not (np.isfinite(T) and T > 0):
        raise ValueError(f"horizon must be positive, got {T}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")
    if n_paths is not None and (int(n_paths) != n_paths or n_paths < 1):
        raise ValueError(f"n_paths must be a positive integer, got {n_paths}")


def fbm_covariance(t, s, H: HurstParam | float):
    """Covariance ``E[B_t B_s] = (t^2H + s^2H - |t-s|^2H) / 2``; broadcasts."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("fbm_covariance is defined for non-negative times only")
    two_h = 2.0 * _as_hurst(H)
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(n: int, H: HurstParam | float, h: float = 1.0) -> np.ndarray:
    """``rho(k) h^2H`` for lags ``k = 0..n-1`` of fGn on a grid of spacing ``h``."""
    two_h = 2.0 * _as_hurst(H)
    k = np.arange(n, dtype=float)
    rho = 0.5 * (np.abs(k + 1) ** two_h + np.abs(k - 1) ** two_h - 2.0 * k**two_h)
    return rho * h**two_h


def _assemble(increments: np.ndarray, T: float, n_steps: int, squeeze: bool, **meta) -> GridPath:
    # increments: (P, n, d)
    P, n, d = increments.shape
    vals = np.zeros((P, n + 1, d))
    np.cumsum(increments, axis=1, out=vals[:, 1:, :])
    return GridPath(T, n_steps, vals[0] if squeeze else vals, meta=meta)


_CHOL_CACHE: dict[tuple[int, float, float], np.ndarray] = {}


def _fgn_cholesky_factor(n: int, H: float, h: float) -> np.ndarray:
    key = (n, H, h)
    L = _CHOL_CACHE.get(key)
    if L is None:
        from scipy.linalg import toeplitz

        cov = toeplitz(fgn_autocovariance(n, H, h))
        L, info = lapack.dpotrf(cov, lower=1, clean=1)
        if info > 0:
            raise NumericError(
                f"Cholesky factorisation of the fGn covariance failed: leading minor "
                f"of order {info} is not positive definite (pivot {info - 1}, H={H}, n={n})"
            )
        if info < 0:
            raise NumericError(f"dpotrf rejected argument {-info}")
        if len(_CHOL_CACHE) > 16:
            _CHOL_CACHE.clear()
        _CHOL_CACHE[key] = L
    return L


def sample_fbm_cholesky(
    T: float,
    n_steps: int,
    H: HurstParam | float,
    dim: int,
    seed: SeedSpec,
    n_paths: int | None = None,
) -> GridPath:
    """Exact fBm sample via the Cholesky factor of the fGn covariance.

    Reference generator, ``O(n^3)`` setup and ``O(n^2)`` per path. With
    ``n_paths`` set the result is an ensemble; path ``p`` uses the ``p``-th
    block of normals of the stream, so a batch of one equals a single draw.
    """
    _check_grid(T, n_steps, dim, n_paths)
    Hf = _as_hurst(H)
    h = T / n_steps
    L = _fgn_cholesky_factor(n_steps, Hf, h)
    P = 1 if n_paths is None else n_paths
    z = seed.generator().standard_normal((P, dim, n_steps))
    inc = np.einsum("ij,pdj->pid", L, z)
    return _assemble(inc, T, n_steps, n_paths is None, method="cholesky", H=Hf)


_DH_CACHE: dict[tuple[int, float, float], np.ndarray] = {}


def _davies_harte_sqrt_eigs(n: int, H: float, h: float) -> np.ndarray:
    key = (n, H, h)
    lam = _DH_CACHE.get(key)
    if lam is not None:
        return lam
    r = fgn_autocovariance(n + 1, H, h)
    row = np.concatenate([r, r[-2:0:-1]])  # length 2n
    lam = np.fft.fft(row).real
    lam_max = lam.max()
    if lam.min() < -_EIG_TOL * lam_max:
        i = int(np.argmin(lam))
        raise NumericError(
            f"circulant embedding has negative eigenvalue {lam[i]:.3e} at index {i} "
            f"(tolerance {-_EIG_TOL * lam_max:.3e}); H={H}, n={n}"
        )
    lam = np.sqrt(np.clip(lam, 0.0, None) / row.size)
    if len(_DH_CACHE) > 32:
        _DH_CACHE.clear()
    _DH_CACHE[key] = lam
    return lam


def circulant_eigenvalues(n: int, H: HurstParam | float, h: float = 1.0) -> np.ndarray:
    """Eigenvalues of the ``2n`` circulant embedding of the fGn covariance."""
    Hf = _as_hurst(H)
    r = fgn_autocovariance(n + 1, Hf, h)
    return np.fft.fft(np.concatenate([r, r[-2:0:-1]])).real


def sample_fbm_davies_harte(
    T: float,
    n_steps: int,
    H: HurstParam | float,
    dim: int,
    seed: SeedSpec,
    n_paths: int | None = None,
) -> GridPath:
    """Exact fBm sample by circulant embedding, ``O(n log n)`` per path.

    Uses the real part of ``FFT(sqrt(lambda / 2n) * (Z1 + i Z2))``, which has
    exactly the fGn covariance on its first ``n`` entries.
    """
    _check_grid(T, n_steps, dim, n_paths)
    Hf = _as_hurst(H)
    h = T / n_steps
    sq = _davies_harte_sqrt_eigs(n_steps, Hf, h)
    P = 1 if n_paths is None else n_paths
    z = seed.generator().standard_normal((P, dim, 2, 2 * n_steps))
    w = sq * (z[:, :, 0, :] + 1j * z[:, :, 1, :])
    inc = np.fft.fft(w, axis=-1)[..., :n_steps].real
    return _assemble(
        np.swapaxes(inc, 1, 2), T, n_steps, n_paths is None, method="davies-harte", H=Hf
    )


def sample_fbm(
    T: float,
    n_steps: int,
    H: HurstParam | float,
    dim: int,
    seed: SeedSpec,
    n_paths: int | None = None,
    method: str | None = None,
) -> GridPath:
    """Dispatch to Cholesky (``n_steps <= 512``) or Davies-Harte by default."""
    if method is None:
        method = "davies-harte" if n_steps > DAVIES_HARTE_THRESHOLD else "cholesky"
    if method == "cholesky":
        return sample_fbm_cholesky(T, n_steps, H, dim, seed, n_paths)
    if method in ("davies-harte", "davies_harte", "dh"):
        return sample_fbm_davies_harte(T, n_steps, H, dim, seed, n_paths)
    raise ValueError(f"unknown fBm method {method!r}")


def sample_bm(
    T: float, n_steps: int, dim: int, seed: SeedSpec, n_paths: int | None = None
) -> GridPath:
    """Standard Wiener path(s) from i.i.d. ``N(0, h I)`` increments."""
    _check_grid(T, n_steps, dim, n_paths)
    h = T / n_steps
    P = 1 if n_paths is None else n_paths
    inc = np.sqrt(h) * seed.generator().standard_normal((P, n_steps, dim))
    return _assemble(inc, T, n_steps, n_paths is None, method="bm")
