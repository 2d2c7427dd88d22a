import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats

from fastslow import averaging, systems
from fastslow.averaging import EmpiricalMeasure, FitFailure
from fastslow.noise import SeedSpec
from fastslow.sde import HypothesisSet

OU = systems.get_system("ou-sin")
BBAR = systems.closed_form_drift("ou-sin")


def _frozen_b1(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return lambda y: np.asarray(OU.b1(0.0, np.broadcast_to(x, y.shape[:-1] + x.shape), y))


@pytest.fixture(scope="module")
def mu1():
    return averaging.sample_invariant_measure([1.0], OU, 5.0, 500.0, 100, SeedSpec(1), n_chains=8)


class TestInvariantMeasure:
    def test_ou_moments(self, mu1):
        assert abs(mu1.mean()[0] - 1.0) <= 3 * mu1.mean_se()[0]
        assert mu1.var()[0] == pytest.approx(1.0, rel=0.05)
        assert mu1.n >= 1000
        assert mu1.x.tolist() == [1.0]

    def test_point_mass_without_noise(self):
        quiet = replace(OU, sigma2=lambda x, y: np.zeros(y.shape + (1,)))
        mu = averaging.sample_invariant_measure([0.5], quiet, 10.0, 20.0, 10, SeedSpec(2), y0=[3.0])
        assert np.allclose(mu.samples, 0.5, atol=1e-2)
        assert mu.var()[0] < 1e-4

    def test_second_moment_bound(self):
        ratios = []
        for x in (0.0, 1.0, 2.0, 4.0):
            mu = averaging.sample_invariant_measure([x], OU, 5.0, 100.0, 50, SeedSpec(3), n_chains=4)
            ratios.append(float(np.mean(mu.samples**2)) / (1 + x * x))
        # E y^2 = 1 + x^2 exactly, so C stays near 1
        assert max(ratios) / min(ratios) <= 1.3

    @pytest.mark.parametrize("burn,hor", [(1.0, 100.0), (10.0, 5.0)])
    def test_minimum_lengths(self, burn, hor):
        with pytest.raises(ValueError):
            averaging.sample_invariant_measure([0.0], OU, burn, hor, 10, SeedSpec(0))

    def test_deterministic(self):
        a = averaging.sample_invariant_measure([1.0], OU, 5.0, 20.0, 10, SeedSpec(4)).samples
        b = averaging.sample_invariant_measure([1.0], OU, 5.0, 20.0, 10, SeedSpec(4)).samples
        assert np.array_equal(a, b)

    def test_batch_means_iid(self):
        z = np.random.default_rng(0).standard_normal(100_000)
        assert averaging.batch_means_se(z) == pytest.approx(1 / math.sqrt(100_000), rel=0.4)


class TestAveragedDrift:
    def test_gaussian_oracle(self):
        # E sin(Z), Z ~ N(1, 1), by quadrature against the density
        q = integrate.quad(lambda z: math.sin(z) * stats.norm.pdf(z, 1.0, 1.0), -12, 14)[0]
        assert q == pytest.approx(math.exp(-0.5) * math.sin(1.0), abs=1e-10)

    def test_benchmark(self, mu1):
        d = averaging.averaged_drift(OU, mu1, 0.0, [1.0])
        assert abs(d.value[0] - math.exp(-0.5) * math.sin(1.0)) <= 3 * d.stderr[0]

    def test_zero_at_origin(self):
        mu = averaging.sample_invariant_measure([0.0], OU, 5.0, 500.0, 100, SeedSpec(6), n_chains=8)
        d = averaging.averaged_drift(OU, mu, 0.0, [0.0])
        assert abs(d.value[0]) <= 3 * d.stderr[0]

    def test_stderr_calibrated(self):
        # z-scores of the exact-zero drift at x = 0 should have unit spread
        z = []
        for s in range(20):
            mu = averaging.sample_invariant_measure([0.0], OU, 5.0, 200.0, 100, SeedSpec(100 + s), n_chains=8)
            d = averaging.averaged_drift(OU, mu, 0.0, [0.0])
            z.append(d.value[0] / d.stderr[0])
        assert 0.6 <= np.std(z) <= 1.5

    def test_y_free_is_exact(self):
        hyp = systems.get_system("y-free")
        mu = averaging.sample_invariant_measure([0.7], hyp, 5.0, 100.0, 10, SeedSpec(6))
        d = averaging.averaged_drift(hyp, mu, 0.0, [0.7])
        assert d.value[0] == pytest.approx(-0.5 * math.sin(0.7), abs=1e-15)
        assert d.stderr[0] == pytest.approx(0.0, abs=1e-15)

    def test_x_mismatch(self, mu1):
        with pytest.raises(ValueError, match="sampled at"):
            averaging.averaged_drift(OU, mu1, 0.0, [2.0])
        with pytest.warns(UserWarning):
            averaging.averaged_drift(OU, mu1, 0.0, [2.0], allow_reuse=True)

    def test_too_few_samples(self):
        mu = EmpiricalMeasure(np.zeros(10), {"x": [0.0]})
        with pytest.raises(ValueError, match="at least"):
            averaging.averaged_drift(OU, mu, 0.0, [0.0])


class TestInterpolant:
    def test_constant_exact(self):
        it = averaging.averaged_drift_interpolant(OU, np.linspace(-1, 1, 5), [0.0],
                                                  {"mode": "closed-form", "bbar": lambda t, x: 0.25 + 0 * x})
        assert np.allclose(it(0.0, np.linspace(-1, 1, 37)[:, None]), 0.25, atol=1e-15)

    def test_benchmark_error(self):
        it = averaging.averaged_drift_interpolant(OU, np.linspace(-math.pi, math.pi, 64), [0.0],
                                                  {"mode": "closed-form", "bbar": BBAR})
        xs = np.linspace(-3.1, 3.1, 997)[:, None]
        assert np.max(np.abs(it(0.0, xs) - BBAR(0.0, xs))) <= 1e-3

    def test_clamping(self):
        it = averaging.averaged_drift_interpolant(OU, np.linspace(0, 2, 9), [0.0],
                                                  {"mode": "closed-form", "bbar": BBAR})
        v, flag = it(0.0, np.array([[4.0], [1.0]]), return_flag=True)
        assert v[0, 0] == pytest.approx(BBAR(0.0, np.array([[2.0]]))[0, 0])
        assert flag.tolist() == [True, False]
        assert it.last_clamped and it.n_clamped == 1

    def test_sampled_mode(self):
        it = averaging.averaged_drift_interpolant(OU, np.linspace(-1, 1, 3), [0.0],
                                                  {"mode": "sampled", "horizon": 200.0, "seed": SeedSpec(7)})
        xs = np.array([[-1.0], [0.0], [1.0]])
        assert np.max(np.abs(it(0.0, xs) - BBAR(0.0, xs))) <= 0.05

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            averaging.averaged_drift_interpolant(OU, [0.0, 0.0, 1.0], [0.0], {"mode": "closed-form", "bbar": BBAR})


class TestDecayFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 2, 21)
        f = averaging.fit_exponential_decay(t, 3 * np.exp(-1.5 * t), np.full(21, 1e-6))
        assert f.rate == pytest.approx(1.5) and f.amplitude == pytest.approx(3.0) and f.r_squared > 0.9999

    def test_noise_floor_stops_fit(self):
        t = np.linspace(0, 10, 101)
        with pytest.raises(FitFailure):
            averaging.fit_exponential_decay(t, np.full(101, 1e-3), np.full(101, 1e-3))


class TestCoupledEstimates:
    def test_contraction_degenerate(self):
        f = averaging.contraction_estimate([1.0], [2.0], [2.0], OU, 1.0, 10, SeedSpec(8))
        assert f.degenerate and f.amplitude == 0.0

    def test_contraction_rate(self):
        f = averaging.contraction_estimate([1.0], [3.0], [-1.0], OU, 3.0, 100, SeedSpec(9))
        assert 1.8 <= f.rate <= 2.2 and f.r_squared >= 0.99

    def test_contraction_amplitude_quadratic(self):
        a = averaging.contraction_estimate([1.0], [1.5], [0.5], OU, 2.0, 100, SeedSpec(10)).amplitude
        b = averaging.contraction_estimate([1.0], [2.0], [0.0], OU, 2.0, 100, SeedSpec(10)).amplitude
        assert b / a == pytest.approx(4.0, rel=0.1)

    def test_sensitivity_zero_gap(self):
        r = averaging.x_sensitivity_estimate([1.0], [1.0], [0.0], OU, 2.0, 50, SeedSpec(11))
        assert r.sup_mse == 0.0 and r.holds

    def test_sensitivity_closed_form(self):
        r = averaging.x_sensitivity_estimate([0.0], [0.4], [0.0], OU, 3.0, 200, SeedSpec(12),
                                             gap_scales=(0.25, 0.5))
        exact = (1 - np.exp(-r.times)) ** 2 * 0.16
        # the Euler gap is (1 - (1-dt)^k)^2 |dx|^2, within O(dt) of the ODE
        assert np.max(np.abs(r.mse - exact)) <= 3 * np.max(r.mse_se) + 0.01 * 0.16
        assert r.exponent == pytest.approx(2.0, abs=0.2) and r.holds

    def test_ergodic_constant_phi(self):
        f = averaging.ergodic_convergence_estimate([1.0], [3.0], OU, lambda y: np.ones(y.shape[:-1]), 2.0, 20,
                                                   SeedSpec(13))
        assert f.degenerate

    def test_ergodic_mean_relaxation(self, mu1):
        f = averaging.ergodic_convergence_estimate([1.0], [4.0], OU, lambda y: y[..., 0], 4.0, 2000,
                                                   SeedSpec(14), measure=mu1)
        assert f.rate == pytest.approx(1.0, abs=0.1)

    def test_ergodic_sin(self, mu1):
        f = averaging.ergodic_convergence_estimate([1.0], [4.0], OU, lambda y: np.sin(y[..., 0]), 4.0, 4000,
                                                   SeedSpec(15), measure=mu1)
        assert f.rate >= 0.8

    def test_decorrelation_rate(self):
        x = 1.0
        f = averaging.decorrelation_estimate([x], [0.0], OU, _frozen_b1(x), np.arange(5.0, 9.0 + 1e-9, 0.1),
                                             SeedSpec(16), 10_000, bbar=math.exp(-0.5) * math.sin(x))
        assert f.rate >= 0.8 and f.r_squared >= 0.95

    def test_decorrelation_diagonal_nonnegative(self):
        x = 1.0
        f = averaging.decorrelation_estimate([x], [0.0], OU, _frozen_b1(x), np.arange(3.0, 4.0 + 1e-9, 0.1),
                                             SeedSpec(17), 5000, bbar=math.exp(-0.5) * math.sin(x))
        assert f.signal[0] >= 0

    def test_decorrelation_amplitude_in_y(self):
        x = 1.0
        amps = []
        for y in (0.0, 2.0, 4.0):
            f = averaging.decorrelation_estimate([x], [y], OU, _frozen_b1(x), np.arange(1.0, 3.0 + 1e-9, 0.1),
                                                 SeedSpec(18), 10_000, bbar=math.exp(-0.5) * math.sin(x))
            amps.append(f.amplitude)
        slope = np.polyfit(np.log(1 + np.array([0.0, 4.0, 16.0])), np.log(amps), 1)[0]
        assert slope <= 2.2

    def test_decorrelation_grid_validation(self):
        with pytest.raises(ValueError):
            averaging.decorrelation_estimate([1.0], [0.0], OU, _frozen_b1(1.0), [1.0, 0.5, 2.0], SeedSpec(0), 10,
                                             bbar=0.0)


def test_custom_hypothesis_drift():
    # b1 = y on an OU block centred at x: bbar1 = x
    hyp = HypothesisSet(b1=lambda t, x, y: np.clip(y, -50, 50), sigma1=OU.sigma1, b2=OU.b2, sigma2=OU.sigma2,
                        dims=(1, 1, 1, 1), b1_sup_bound=50.0, lipschitz_constants={"L6": 1.0})
    mu = averaging.sample_invariant_measure([-0.5], hyp, 5.0, 500.0, 100, SeedSpec(19), n_chains=8)
    d = averaging.averaged_drift(hyp, mu, 0.0, [-0.5])
    assert abs(d.value[0] + 0.5) <= 3 * d.stderr[0]
