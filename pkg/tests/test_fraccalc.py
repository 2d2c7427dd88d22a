import math

import numpy as np
import pytest
from scipy import integrate, special

from fastslow import fraccalc
from fastslow.noise import GridPath, NumericError, SeedSpec, sample_fbm


def grid(fn, n=4096, T=1.0):
    return GridPath.from_function(fn, T, n)


def reflect(f: GridPath) -> GridPath:
    return f.with_values(f.values[::-1].copy())


def weyl_left_oracle(fn, x, a):
    """Adaptive quadrature of the defining formula on [0, x]."""
    tail = integrate.quad(lambda y: (fn(x) - fn(y)) / (x - y) ** (a + 1), 0, x, limit=200)[0]
    return (fn(x) / x**a + a * tail) / special.gamma(1 - a)


def weyl_right_oracle(fn, x, a, b=1.0):
    gb = lambda y: fn(y) - fn(b)  # noqa: E731
    tail = integrate.quad(lambda y: (gb(x) - gb(y)) / (y - x) ** (a + 1), x, b, limit=200)[0]
    return (gb(x) / (b - x) ** a + a * tail) / special.gamma(1 - a)


class TestFracIntegral:
    def test_zero(self):
        f = grid(np.zeros_like, 64)
        assert np.all(fraccalc.frac_integral_left(f, 0.3).values == 0)
        assert np.all(fraccalc.frac_integral_right(f, 0.3).values == 0)

    def test_left_of_one(self):
        v = fraccalc.frac_integral_left(grid(np.ones_like, 1024), 0.5).values
        assert v[-1, 0] == pytest.approx(1.1283792, abs=1e-7)
        t = np.linspace(0, 1, 1025)
        assert np.allclose(v[:, 0], t**0.5 / special.gamma(1.5), atol=1e-12)

    def test_left_of_identity(self):
        # oracle: quadrature of the kernel integral, then the power rule
        oracle = integrate.quad(lambda y: y * (1 - y) ** -0.5, 0, 1)[0] / special.gamma(0.5)
        assert oracle == pytest.approx(special.gamma(2) / special.gamma(2.5), rel=1e-9)
        v = fraccalc.frac_integral_left(grid(lambda t: t), 0.5).values[-1, 0]
        assert v == pytest.approx(0.7522528, abs=1e-6)

    def test_right_of_one_at_zero(self):
        v = fraccalc.frac_integral_right(grid(np.ones_like, 1024), 0.5).values[0, 0]
        assert v == pytest.approx(1.1283792, abs=1e-7)

    def test_reflection(self):
        f = grid(lambda t: np.exp(t) * np.cos(4 * t), 512)
        r = fraccalc.frac_integral_right(f, 0.35).values
        l = fraccalc.frac_integral_left(reflect(f), 0.35).values[::-1]
        assert np.allclose(r, l, atol=1e-13)

    @pytest.mark.parametrize("a", [0.0, 1.0, -0.1])
    def test_alpha_range(self, a):
        with pytest.raises(ValueError):
            fraccalc.frac_integral_left(grid(np.ones_like, 8), a)


class TestWeyl:
    def test_constant(self):
        d = fraccalc.weyl_left(grid(lambda t: 2.5 * np.ones_like(t), 512), 0.3)
        t = d.times[1:]
        assert np.allclose(d.values[1:, 0], 2.5 * t**-0.3 / special.gamma(0.7), rtol=1e-10)
        assert d.meta["endpoint_extrapolated"] == 0

    def test_identity_power_rule(self):
        d = fraccalc.weyl_left(grid(lambda t: t), 0.5)
        t = d.times[1:]
        assert np.allclose(d.values[1:, 0], 1.1283792 * t**0.5, rtol=1e-6)
        for x in (0.3, 0.9):
            assert weyl_left_oracle(lambda y: y, x, 0.5) == pytest.approx(1.1283792 * x**0.5, rel=1e-6)

    def test_smooth_function_against_quadrature(self):
        fn = lambda y: np.sin(3 * y) + y**2  # noqa: E731
        d = fraccalc.weyl_left(grid(fn), 0.4)
        for x in (0.25, 0.5, 1.0):
            i = int(round(x * 4096))
            assert d.values[i, 0] == pytest.approx(weyl_left_oracle(fn, x, 0.4), rel=1e-3)

    def test_inversion(self):
        f = grid(lambda t: np.sin(3 * t) + t**2)
        back = fraccalc.weyl_left(fraccalc.frac_integral_left(f, 0.4), 0.4).values
        assert np.max(np.abs(back[1:, 0] - f.values[1:, 0])) <= 1e-2 * np.max(np.abs(f.values))

    def test_right_of_constant_is_zero(self):
        d = fraccalc.weyl_right(grid(lambda t: 7.0 * np.ones_like(t), 64), 0.6)
        assert np.all(d.values == 0)

    def test_right_identity_against_quadrature(self):
        a = 0.4
        d = fraccalc.weyl_right(grid(lambda t: t), a)
        for x in (0.2, 0.5, 0.8):
            i = int(round(x * 4096))
            ref = weyl_right_oracle(lambda y: y, x, a)
            assert ref == pytest.approx(-((1 - x) ** (1 - a)) / special.gamma(2 - a), rel=1e-8)
            assert d.values[i, 0] == pytest.approx(ref, rel=1e-3)
        assert d.meta["endpoint_extrapolated"] == 4096

    def test_right_reflection(self):
        f = grid(lambda t: np.cos(5 * t) + t, 512)
        r = fraccalc.weyl_right(f, 0.3).values
        g = reflect(f)
        g = g.with_values(g.values - f.values[-1])
        l = fraccalc.weyl_left(g, 0.3).values[::-1]
        assert np.allclose(r[:-1], l[:-1], atol=1e-10)


class TestIntegrals:
    def test_rs_constant_integrand(self):
        g = sample_fbm(1.0, 1024, 0.75, 1, SeedSpec(1))
        v = fraccalc.rs_integral_fractional(grid(lambda t: 3 * np.ones_like(t), 1024), g, 0.3)
        assert v == pytest.approx(3 * (g.values[-1, 0] - g.values[0, 0]), abs=1e-12)

    def test_rs_t_dt(self):
        f = grid(lambda t: t)
        assert fraccalc.rs_integral_fractional(f, f, 0.3) == pytest.approx(0.5, abs=1e-3)

    def test_rs_matches_young_on_fbm(self):
        g = sample_fbm(1.0, 4096, 0.75, 1, SeedSpec(2))
        f = grid(lambda t: t)
        a = fraccalc.rs_integral_fractional(f, g, 0.3)
        b = fraccalc.young_integral_sum(f, g)
        assert abs(a - b) <= 1e-3 * (1 + abs(b))

    def test_rs_grid_mismatch(self):
        with pytest.raises(ValueError):
            fraccalc.rs_integral_fractional(grid(lambda t: t, 64), grid(lambda t: t, 128), 0.3)

    def test_rs_blowup(self):
        g = grid(lambda t: t, 64)
        g = g.with_values(g.values * 1e14)
        with pytest.raises(NumericError):
            fraccalc.rs_integral_fractional(grid(lambda t: t, 64), g, 0.3)

    def test_young_constant(self):
        g = sample_fbm(1.0, 256, 0.7, 1, SeedSpec(3))
        v = fraccalc.young_integral_sum(grid(lambda t: -2 * np.ones_like(t), 256), g)
        assert v == pytest.approx(-2 * g.values[-1, 0], abs=1e-12)

    def test_young_arithmetic_series(self):
        f = grid(lambda t: t, 1000)
        assert fraccalc.young_integral_sum(f, f) == pytest.approx(0.4995, abs=1e-12)

    def test_young_refinement(self):
        g = sample_fbm(1.0, 2**14, 0.75, 1, SeedSpec(4))
        fine = np.sin(2 * g.times)
        sums = {}
        for n in (2**10, 2**11, 2**12, 2**13, 2**14):
            k = 2**14 // n
            gs, fs = g.subsample(k), GridPath(1.0, n, fine[::k, None])
            sums[n] = fraccalc.young_integral_sum(fs, gs)
        ns = sorted(sums)
        diffs = [abs(sums[b] - sums[a]) for a, b in zip(ns, ns[1:])]
        assert all(x > y for x, y in zip(diffs, diffs[1:]))


class TestNorms:
    def test_constant(self):
        a, c = 0.4, -1.5
        f = grid(lambda t: c * np.ones_like(t), 1024)
        assert fraccalc.w_alpha_infty(f, a) == pytest.approx(abs(c), rel=1e-12)
        assert fraccalc.w_alpha_1(f, a) == pytest.approx(abs(c) / (1 - a), rel=1e-9)

    def test_alpha_norm_of_t(self):
        v = fraccalc.w_alpha_infty(grid(lambda t: t, 2048), 0.4)
        assert v == pytest.approx(1 + 1 / 0.6, abs=1e-3)
        assert 1 + 1 / 0.6 == pytest.approx(2.6667, abs=1e-4)

    def test_report_entries_nonnegative_and_lambda_bound(self):
        B = sample_fbm(1.0, 256, 0.75, 1, SeedSpec(5), n_paths=20)
        a = 0.3
        for i in range(20):
            r = fraccalc.norm_report(B.path(i), a, role="integrator")
            vals = [r.sup_norm, r.holder_norm, r.w_alpha_infty, r.w_alpha_1, r.w_1malpha_infty, r.lambda_alpha]
            assert min(vals) >= 0 and not r.infinite
            bound = r.w_1malpha_infty / (math.gamma(1 - a) * math.gamma(a))
            assert r.lambda_alpha <= bound * (1 + 1e-9)

    def test_ensemble_matches_single(self):
        B = sample_fbm(1.0, 128, 0.7, 1, SeedSpec(6), n_paths=3)
        ens = fraccalc.lambda_alpha(B, 0.3)
        assert ens[1] == pytest.approx(fraccalc.lambda_alpha(B.path(1), 0.3), rel=1e-12)

    def test_role_validation(self):
        with pytest.raises(ValueError):
            fraccalc.norm_report(grid(lambda t: t, 16), 0.3, role="both")

    def test_holder_norm_of_t(self):
        assert fraccalc.holder_norm(grid(lambda t: t, 256), 1.0) == pytest.approx(2.0, rel=1e-12)

    def test_scaling_homogeneity(self):
        f = grid(lambda t: np.sin(5 * t), 512)
        g = f.with_values(3.0 * f.values)
        for fn in (fraccalc.w_alpha_infty, fraccalc.w_alpha_1, fraccalc.w_1malpha_infty, fraccalc.lambda_alpha):
            assert fn(g, 0.3) == pytest.approx(3.0 * fn(f, 0.3), rel=1e-10)


class TestYoungBound:
    def test_zero_integrand(self):
        g = sample_fbm(1.0, 256, 0.75, 1, SeedSpec(7))
        r = fraccalc.young_bound_check(grid(np.zeros_like, 256), g, 0.3)
        assert r.lhs == 0.0 and r.holds

    def test_linear(self):
        r = fraccalc.young_bound_check(grid(np.ones_like, 1024), grid(lambda t: t, 1024), 0.3)
        assert r.lhs == pytest.approx(1.0, abs=1e-12)
        assert r.rhs >= 1.0 and r.holds

    def test_random_pairs(self):
        rng = np.random.default_rng(8)
        B = sample_fbm(1.0, 256, 0.75, 1, SeedSpec(8), n_paths=100)
        t = B.times
        held = 0
        for i in range(100):
            c = rng.normal(size=3)
            f = GridPath(1.0, 256, (c[0] + c[1] * np.sin(3 * t) + c[2] * t**2)[:, None])
            held += fraccalc.young_bound_check(f, B.path(i), 0.3).holds
        assert held == 100


class TestFernique:
    def test_theta_zero_gives_e(self):
        r = fraccalc.fernique_moment_probe(0.75, 0.3, 0.0, 50, SeedSpec(9))
        assert r.estimate == pytest.approx(math.e, rel=1e-12)

    def test_small_theta_tends_to_e(self):
        vals = [fraccalc.fernique_moment_probe(0.75, 0.3, th, 200, SeedSpec(10)).estimate for th in (0.2, 0.05, 0.01)]
        gaps = [abs(v - math.e) for v in vals]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_stable_under_doubling(self):
        a = fraccalc.fernique_moment_probe(0.75, 0.3, 1.0, 5000, SeedSpec(11), n_steps=64)
        b = fraccalc.fernique_moment_probe(0.75, 0.3, 1.0, 10000, SeedSpec(12), n_steps=64)
        assert math.isfinite(a.estimate) and a.n_overflow == 0
        assert abs(a.estimate - b.estimate) <= 0.1 * b.estimate

    def test_theta_range(self):
        with pytest.raises(ValueError):
            fraccalc.fernique_moment_probe(0.75, 0.3, 2.0, 10)
