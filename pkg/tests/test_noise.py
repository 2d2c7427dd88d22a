import math

import numpy as np
import pytest
from scipy import stats

from fastslow import noise
from fastslow.noise import GridPath, HurstParam, NumericError, SeedSpec


def _se_of_mean(v, axis=0):
    return v.std(axis=axis, ddof=1) / math.sqrt(v.shape[axis])


class TestCovariance:
    @pytest.mark.parametrize("t,s,H,expected", [
        (1.0, 1.0, 0.75, 1.0),
        (2.0, 1.0, 0.5, 1.0),
        (2.0, 1.0, 0.75, math.sqrt(2.0)),
    ])
    def test_values(self, t, s, H, expected):
        assert noise.fbm_covariance(t, s, H) == pytest.approx(expected, abs=1e-12)

    def test_hand_oracle_for_sqrt2(self):
        # 0.5 * (2**1.5 + 1 - 1) worked by hand
        assert 0.5 * 2**1.5 == pytest.approx(1.4142136, abs=1e-7)

    def test_symmetric(self):
        t = np.linspace(0, 2, 7)
        C = noise.fbm_covariance(t[:, None], t[None, :], 0.7)
        assert np.allclose(C, C.T)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            noise.fbm_covariance(-1.0, 1.0, 0.7)

    def test_fgn_autocovariance_matches_difference_of_covariances(self):
        H, h = 0.8, 0.1
        r = noise.fgn_autocovariance(5, H, h)
        t = h * np.arange(7)
        k = 3
        direct = (noise.fbm_covariance(t[k + 1], t[1], H) - noise.fbm_covariance(t[k], t[1], H)
                  - noise.fbm_covariance(t[k + 1], t[0], H) + noise.fbm_covariance(t[k], t[0], H))
        assert r[k] == pytest.approx(direct, rel=1e-12)


class TestParams:
    @pytest.mark.parametrize("H", [0.0, 1.0, -0.2, 1.5])
    def test_outside_unit_interval(self, H):
        with pytest.raises(ValueError):
            HurstParam(H, allow_rough=True)

    def test_rough_needs_opt_in(self):
        with pytest.raises(ValueError):
            HurstParam(0.5)
        assert HurstParam(0.5, allow_rough=True).H == 0.5

    def test_grid_path_rejects_nan(self):
        with pytest.raises(ValueError, match="non-finite"):
            GridPath(1.0, 2, np.array([0.0, np.nan, 1.0]))

    def test_grid_path_shape(self):
        with pytest.raises(ValueError):
            GridPath(1.0, 3, np.zeros(3))

    def test_seed_streams(self):
        a = SeedSpec(5, 0).generator().standard_normal(4)
        b = SeedSpec(5, 0).generator().standard_normal(4)
        c = SeedSpec(5, 1).generator().standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.allclose(a, c)


class TestCholesky:
    def test_single_step_is_first_normal(self):
        seed = SeedSpec(3, 2)
        p = noise.sample_fbm_cholesky(1.0, 1, 0.7, 1, seed)
        z = seed.generator().standard_normal()
        assert p.values[0, 0] == 0.0
        assert p.values[1, 0] == pytest.approx(z, rel=1e-14)

    def test_increment_variance(self):
        # E|B_t - B_s|^2 = |t - s|^{2H}
        P = 100_000
        p = noise.sample_fbm_cholesky(1.0, 100, 0.75, 1, SeedSpec(1), n_paths=P)
        inc = p.values[:, 51, 0] - p.values[:, 50, 0]
        sq = inc**2
        assert abs(sq.mean() - 0.01**1.5) <= 3 * _se_of_mean(sq)

    def test_bm_increments_uncorrelated(self):
        P = 100_000
        p = noise.sample_fbm_cholesky(1.0, 4, HurstParam(0.5, allow_rough=True), 1, SeedSpec(2), n_paths=P)
        d = np.diff(p.values[..., 0], axis=-1)
        prod = d[:, 0] * d[:, 2]
        assert abs(prod.mean()) <= 3 * _se_of_mean(prod)

    def test_indefinite_covariance_names_pivot(self, monkeypatch):
        noise._CHOL_CACHE.clear()
        monkeypatch.setattr(noise, "fgn_autocovariance", lambda n, H, h=1.0: np.r_[1.0, 2.0, np.zeros(n - 2)])
        with pytest.raises(NumericError, match="pivot"):
            noise.sample_fbm_cholesky(1.0, 5, 0.7, 1, SeedSpec(0))
        noise._CHOL_CACHE.clear()


class TestDaviesHarte:
    def test_covariance_8_nodes(self):
        P, n, H = 200_000, 8, 0.7
        b = noise.sample_fbm_davies_harte(1.0, n, H, 1, SeedSpec(4), n_paths=P).values[:, 1:, 0]
        t = np.arange(1, n + 1) / n
        exact = noise.fbm_covariance(t[:, None], t[None, :], H)
        prod = b[:, :, None] * b[:, None, :]
        z = np.abs(prod.mean(axis=0) - exact) / _se_of_mean(prod)
        assert z.max() <= 3.0

    def test_white_spectrum_at_half(self):
        lam = noise.circulant_eigenvalues(64, HurstParam(0.5, allow_rough=True))
        assert np.allclose(lam, lam[0], atol=1e-12)
        n = 10_000
        p = noise.sample_fbm_davies_harte(1.0, n, HurstParam(0.5, allow_rough=True), 1, SeedSpec(5))
        inc = np.diff(p.values[:, 0]) * math.sqrt(n)
        assert stats.kstest(inc, "norm").pvalue > 0.01

    def test_agrees_with_cholesky(self):
        P, n, H = 50_000, 16, 0.8
        a = noise.sample_fbm_davies_harte(1.0, n, H, 1, SeedSpec(6), n_paths=P).increments()[..., 0]
        b = noise.sample_fbm_cholesky(1.0, n, H, 1, SeedSpec(7), n_paths=P).increments()[..., 0]

        def z(x, y):
            return abs(x.mean() - y.mean()) / math.hypot(_se_of_mean(x), _se_of_mean(y))

        assert z(a[:, 3], b[:, 3]) <= 3
        assert z(a[:, 3] ** 2, b[:, 3] ** 2) <= 3
        assert z(a[:, 3] * a[:, 4], b[:, 3] * b[:, 4]) <= 3

    def test_negative_eigenvalue_is_an_error(self, monkeypatch):
        noise._DH_CACHE.clear()
        monkeypatch.setattr(noise, "fgn_autocovariance", lambda n, H, h=1.0: np.r_[1.0, -2.0, np.zeros(n - 2)])
        with pytest.raises(NumericError, match="negative eigenvalue"):
            noise.sample_fbm_davies_harte(1.0, 8, 0.7, 1, SeedSpec(0))
        noise._DH_CACHE.clear()

    def test_default_method_switch(self):
        assert noise.sample_fbm(1.0, 512, 0.7, 1, SeedSpec(0)).meta["method"] == "cholesky"
        assert noise.sample_fbm(1.0, 513, 0.7, 1, SeedSpec(0)).meta["method"] == "davies-harte"


class TestBm:
    def test_terminal_variance(self):
        P = 100_000
        w = noise.sample_bm(1.0, 10, 1, SeedSpec(8), n_paths=P).values[:, -1, 0]
        sq = w**2
        assert abs(sq.mean() - 1.0) <= 3 * _se_of_mean(sq)

    def test_quadratic_variation(self):
        w = noise.sample_bm(1.0, 10_000, 1, SeedSpec(9))
        qv = float(np.sum(w.increments() ** 2))
        assert abs(qv - 1.0) <= 0.05

    def test_independent_of_fbm_stream(self):
        P = 100_000
        b = noise.sample_fbm(1.0, 4, 0.7, 1, SeedSpec(10, 0), n_paths=P).increments()[:, 1, 0]
        w = noise.sample_bm(1.0, 4, 1, SeedSpec(10, 1), n_paths=P).increments()[:, 1, 0]
        prod = b * w
        assert abs(prod.mean()) <= 3 * _se_of_mean(prod)


@pytest.fixture(scope="module")
def paths():
    return noise.sample_fbm(1.0, 4096, 0.75, 1, SeedSpec(11), n_paths=400).values[..., 0]


class TestProperties:
    H = 0.75

    def test_stationary_increments(self, paths):
        lag = 64
        ref = None
        for t in (0, 800, 1600, 2400, 3200):
            sq = (paths[:, t + lag] - paths[:, t]) ** 2
            if ref is None:
                ref = (lag / 4096) ** (2 * self.H)
            assert abs(sq.mean() - ref) <= 3 * _se_of_mean(sq)

    def test_self_similarity(self):
        P = 100_000
        b = noise.sample_fbm(1.0, 8, self.H, 1, SeedSpec(12), n_paths=P).values[..., 0]
        v1, v2 = b[:, 2] ** 2, b[:, 8] ** 2  # t = 1/4 and c t with c = 4
        ratio = v2.mean() / v1.mean()
        se = ratio * math.hypot(_se_of_mean(v1) / v1.mean(), _se_of_mean(v2) / v2.mean())
        assert abs(ratio - 4 ** (2 * self.H)) <= 3 * se

    def test_loglog_slope(self, paths):
        lags = 2 ** np.arange(0, 9)  # h from T/2^12 to T/2^4
        msq = [np.mean((paths[:, l:] - paths[:, :-l]) ** 2) for l in lags]
        slope = np.polyfit(np.log(lags / 4096), np.log(msq), 1)[0]
        assert slope == pytest.approx(2 * self.H, abs=0.05)

    def test_deterministic(self):
        a = noise.sample_fbm(1.0, 1000, 0.7, 2, SeedSpec(13, 4), n_paths=3).values
        b = noise.sample_fbm(1.0, 1000, 0.7, 2, SeedSpec(13, 4), n_paths=3).values
        assert np.array_equal(a, b)

    def test_coordinates_independent(self):
        b = noise.sample_fbm(1.0, 4, 0.7, 2, SeedSpec(14), n_paths=100_000).values[:, -1, :]
        prod = b[:, 0] * b[:, 1]
        assert abs(prod.mean()) <= 3 * _se_of_mean(prod)
