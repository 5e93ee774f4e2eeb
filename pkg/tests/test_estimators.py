"""Monte Carlo estimators: oracles, cross-checks, inequality reports."""

import math

import numpy as np
import pytest

from snsverify.bounds import HypothesisError, bound_constants
from snsverify.config import preset_field
from snsverify.dynamics import uniform_noise
from snsverify.estimators import (
    Estimate,
    PseudoMetric,
    SimSettings,
    TestFunction,
    dgamma_distance_bounds,
    entropy_estimate,
    entropy_inequality_check,
    exp_moment_check,
    girsanov_mean_weight,
    gradient_probe,
    mlh_check,
    sample_estimate,
    semigroup_estimate,
    weighted_semigroup_estimate,
    zh_moment_decay,
)
from snsverify.spectral import FourierField, PhysicsParams, make_grid, zero_field

from conftest import random_field_on


@pytest.fixture(scope="module")
def world6():
    grid = make_grid(6)
    params = PhysicsParams(nu=1.6, n_forced=2)
    noise = uniform_noise(grid, 2, 0.2)
    consts = bound_constants(grid, params, noise)
    x0 = preset_field(grid, "gentle", 0.3)
    y0 = x0 + 0.1 * preset_field(grid, "mixed", 1.0)
    return grid, params, noise, consts, x0, y0


@pytest.fixture(scope="module")
def gauss6(world6):
    grid = world6[0]
    return TestFunction(kind="gauss_bump", center=zero_field(grid), scale=1.0,
                        amplitude=1.0, band=2)


SETT = SimSettings(dt=2e-3, n_paths=3000, seed=9)


class TestEstimateType:
    def test_sample_estimate_matches_numpy(self, rng):
        v = rng.standard_normal(500)
        est = sample_estimate(v)
        assert est.mean == pytest.approx(v.mean(), rel=1e-12)
        assert est.stderr == pytest.approx(v.std(ddof=1) / math.sqrt(500), rel=1e-12)
        assert est.ci95[0] <= est.mean <= est.ci95[1]
        assert est.n == 500

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            Estimate(mean=0.0, stderr=-1.0, n=10, ci95=(-1, 1))
        with pytest.raises(ValueError):
            Estimate(mean=5.0, stderr=1.0, n=10, ci95=(-1, 1))
        with pytest.raises(ValueError):
            Estimate(mean=0.0, stderr=0.0, n=1, ci95=(0, 0))
        with pytest.raises(ValueError):
            sample_estimate([1.0])


class TestTestFunction:
    def test_lower_bound_one(self, world6, rng):
        grid = world6[0]
        for kind, center in (("gauss_bump", zero_field(grid)),
                             ("coordinate_sigmoid", preset_field(grid, "low", 1.0))):
            f = TestFunction(kind=kind, center=center, scale=0.7, amplitude=2.0, band=2)
            for _ in range(200):
                u = random_field_on(grid, rng)
                assert f.evaluate(u) >= 1.0
                assert f.evaluate(u) <= f.sup_f + 1e-12

    def test_derivative_matches_finite_difference(self, world6, rng):
        grid = world6[0]
        for kind, center in (("gauss_bump", 0.3 * preset_field(grid, "gentle", 1.0)),
                             ("coordinate_sigmoid", preset_field(grid, "low", 1.0))):
            f = TestFunction(kind=kind, center=center, scale=0.9, amplitude=1.5, band=2)
            u = 0.4 * random_field_on(grid, rng)
            h = random_field_on(grid, rng)
            eps = 1e-6
            fd = (f.evaluate(u + eps * h) - f.evaluate(u - eps * h)) / (2 * eps)
            assert f.derivative_along(u, h) == pytest.approx(fd, rel=1e-5, abs=1e-10)

    def test_derivative_bound_certified(self, world6, rng):
        grid = world6[0]
        f = TestFunction(kind="gauss_bump", center=zero_field(grid), scale=1.3,
                         amplitude=2.0, band=2)
        for _ in range(500):
            u = 2.0 * random_field_on(grid, rng)
            h = random_field_on(grid, rng)
            hn = h.norm()
            assert abs(f.derivative_along(u, h)) <= f.sup_df * hn * (1 + 1e-10)
            assert abs(f.derivative_along(u, h)) / f.evaluate(u) <= f.sup_dlogf * hn * (1 + 1e-10)

    def test_rejects_negative_amplitude(self, world6):
        grid = world6[0]
        with pytest.raises(ValueError):
            TestFunction(kind="gauss_bump", center=zero_field(grid), scale=1.0,
                         amplitude=-0.5, band=2)


class TestSemigroupEstimate:
    def test_time_zero_exact(self, world6, gauss6):
        _, params, noise, _, x0, _ = world6
        est = semigroup_estimate(gauss6, x0, 0.0, SETT, params, noise)
        assert est.mean == gauss6.evaluate(x0)
        assert est.stderr == 0.0

    def test_constant_function_exact(self, world6):
        grid, params, noise, _, x0, _ = world6
        f = TestFunction(kind="gauss_bump", center=zero_field(grid), scale=1.0,
                         amplitude=0.0, band=2)
        est = semigroup_estimate(f, x0, 0.5, SETT, params, noise)
        assert est.mean == 1.0 and est.stderr == 0.0

    def test_linear_regime_gaussian_closed_form(self, world6, gauss6):
        # with the advection switched off each mode is an independent
        # complex autoregressive chain with known Gaussian law; the bump
        # integral has a closed form
        grid, params, noise, _, x0, _ = world6
        sett = SimSettings(dt=2e-3, n_paths=20000, seed=31, nonlinear=False)
        t = 0.5
        est = semigroup_estimate(gauss6, x0, t, sett, params, noise)

        steps = int(round(t / sett.dt))
        decay = np.exp(-params.nu * grid.ksq.astype(float) * sett.dt)
        mean_amp = decay**steps * x0.amps
        var_real = np.zeros(grid.n_modes)
        nf = noise.n_forced
        var_real[:nf] = (noise.q**2 * sett.dt / 2.0) * decay[:nf] ** 2 \
            * (1 - decay[:nf] ** (2 * steps)) / (1 - decay[:nf] ** 2)
        beta = 2.0 / gauss6.scale**2
        prod = 1.0
        for j in range(grid.band_size(gauss6.band)):
            for mu in (mean_amp[j].real, mean_amp[j].imag):
                prod *= math.exp(-beta * mu * mu / (1 + 2 * beta * var_real[j])) \
                    / math.sqrt(1 + 2 * beta * var_real[j])
        closed = 1.0 + gauss6.amplitude * prod
        assert abs(est.mean - closed) <= 3 * est.stderr


class TestWeightedEstimate:
    def test_identical_starts_bitwise_reduction(self, world6, gauss6):
        _, params, noise, _, x0, _ = world6
        sett = SimSettings(dt=2e-3, n_paths=200, seed=5)
        west = weighted_semigroup_estimate(gauss6, x0, x0, 0.4, sett, params, noise)
        dest = semigroup_estimate(gauss6, x0, 0.4, sett, params, noise)
        assert west.estimate.mean == dest.mean
        assert west.estimate.stderr == dest.stderr
        assert west.max_log_weight == 0.0 and west.min_log_weight == 0.0

    def test_martingale_mean_weight(self, world6):
        _, params, noise, _, x0, y0 = world6
        est = girsanov_mean_weight(x0, y0, 1.0, SETT, params, noise)
        assert abs(est.mean - 1.0) <= 3 * est.stderr

    def test_weight_normalization_constant_f(self, world6):
        grid, params, noise, _, x0, y0 = world6
        f_one = TestFunction(kind="gauss_bump", center=zero_field(grid), scale=1.0,
                             amplitude=0.0, band=2)
        west = weighted_semigroup_estimate(f_one, x0, y0, 1.0, SETT, params, noise)
        assert abs(west.estimate.mean - 1.0) <= 3 * west.estimate.stderr

    def test_cross_check_against_direct(self, world6, gauss6):
        _, params, noise, _, x0, y0 = world6
        west = weighted_semigroup_estimate(gauss6, x0, y0, 1.0, SETT, params, noise)
        dest = semigroup_estimate(gauss6, y0, 1.0, SETT, params, noise)
        gap = abs(west.estimate.mean - dest.mean)
        assert gap <= 3 * math.hypot(west.estimate.stderr, dest.stderr)
        assert west.ess > 10


class TestEntropy:
    def test_identical_starts_exact_zero(self, world6):
        _, params, noise, _, x0, _ = world6
        ent = entropy_estimate(x0, x0, 1.0, SETT, params, noise)
        assert ent.primary.mean == 0.0 and ent.cross_check.mean == 0.0

    def test_forms_agree_and_bound_holds(self, world6):
        _, params, noise, consts, x0, y0 = world6
        ent = entropy_estimate(x0, y0, 1.0, SETT, params, noise)
        gap = abs(ent.primary.mean - ent.cross_check.mean)
        assert gap <= 3 * math.hypot(ent.primary.stderr, ent.cross_check.stderr)
        env = consts.entropy_envelope(y0.norm(), (y0 - x0).norm())
        assert ent.primary.mean + 3 * ent.primary.stderr <= env


class TestExpMoment:
    def test_degenerate_point_equality(self, world6):
        grid, params, _, _, _, _ = world6
        tiny = uniform_noise(grid, 2, 1e-8)
        rep = exp_moment_check(zero_field(grid), 0.5,
                               SimSettings(dt=2e-3, n_paths=500, seed=3), params, tiny)
        assert rep.lhs.mean == pytest.approx(1.0, abs=1e-10)
        assert rep.rhs == pytest.approx(1.0, abs=1e-10)
        assert rep.passed

    def test_default_regime_positive_margin(self, world6):
        _, params, noise, _, x0, _ = world6
        rep = exp_moment_check(x0, 1.0, SimSettings(dt=2e-3, n_paths=2000, seed=5),
                               params, noise)
        assert rep.passed and rep.margin > 0

    def test_hypothesis_gate(self, world6):
        grid, _, noise, _, x0, _ = world6
        weak = PhysicsParams(nu=0.5 * noise.tr_qq, n_forced=2)
        with pytest.raises(HypothesisError):
            exp_moment_check(x0, 0.5, SETT, weak, noise)


class TestZhDecay:
    def test_identical_starts_all_zero(self, world6):
        _, params, noise, consts, x0, _ = world6
        sett = SimSettings(dt=2e-3, n_paths=200, seed=4)
        rep = zh_moment_decay(1, x0, x0, [1.2, 1.6, 2.0], sett, params, noise, consts)
        assert all(m.mean == 0.0 for m in rep.moments)
        assert rep.sup_unit.mean == 0.0
        assert math.isnan(rep.fitted_rate)
        assert rep.all_passed

    def test_default_envelopes_and_negative_rate(self, world6):
        _, params, noise, consts, x0, y0 = world6
        sett = SimSettings(dt=2e-3, n_paths=800, seed=10)
        for p in (1, 2):
            rep = zh_moment_decay(p, x0, y0, [1.2, 1.5, 2.0, 2.5], sett, params,
                                  noise, consts)
            assert rep.all_passed
            assert rep.fitted_rate < 0
            assert rep.fitted_rate < rep.envelope_rate  # decays faster than required

    def test_grid_validation(self, world6):
        _, params, noise, consts, x0, y0 = world6
        with pytest.raises(ValueError):
            zh_moment_decay(1, x0, y0, [1.2, 1.5], SETT, params, noise, consts)
        with pytest.raises(ValueError):
            zh_moment_decay(1, x0, y0, [0.5, 1.2, 1.5], SETT, params, noise, consts)

    def test_hypothesis_gate(self, world6):
        grid, _, noise, _, x0, y0 = world6
        weak_params = PhysicsParams(nu=0.9, n_forced=2)
        weak_consts = bound_constants(grid, weak_params, noise)
        with pytest.raises(HypothesisError):
            zh_moment_decay(2, x0, y0, [1.2, 1.5, 2.0], SETT, weak_params, noise,
                            weak_consts)


class TestMlhCheck:
    def test_jensen_at_equal_points(self, world6, gauss6):
        _, params, noise, consts, x0, _ = world6
        rep = mlh_check(gauss6, x0, x0, 1.0, SETT, params, noise, consts)
        assert rep.passed
        # z = 0 collapses the additive constants: the margin is the Jensen gap
        assert rep.rhs == pytest.approx(rep.extra["log_ptf_x"], rel=1e-12)
        assert rep.margin >= -3 * rep.lhs.stderr

    def test_constant_function_cell(self, world6):
        grid, params, noise, consts, x0, y0 = world6
        f = TestFunction(kind="gauss_bump", center=zero_field(grid), scale=1.0,
                         amplitude=0.0, band=2)
        rep = mlh_check(f, x0, y0, 1.0, SETT, params, noise, consts)
        assert rep.lhs.mean == pytest.approx(0.0, abs=1e-12)
        assert rep.rhs > 0 and rep.passed

    def test_default_scenario_passes_with_huge_margin(self, world6, gauss6):
        _, params, noise, consts, x0, y0 = world6
        rep = mlh_check(gauss6, x0, y0, 1.0, SETT, params, noise, consts)
        assert rep.passed
        assert rep.rhs > 1e6  # the assembled constants dominate

    def test_checker_not_vacuous_deterministic(self, world6):
        # a shrink factor large enough to erase the additive constants must
        # produce a failing cell: at t = 0 both sides are exact, and the
        # sigmoid grows along the separation direction
        grid, params, noise, consts, x0, _ = world6
        zdir = preset_field(grid, "low", 1.0)
        y0 = x0 + 0.5 * zdir
        f = TestFunction(kind="coordinate_sigmoid", center=zdir, scale=1.0,
                         amplitude=1.0, band=2)
        rep = mlh_check(f, x0, y0, 0.0, SETT, params, noise, consts, shrink=1e40)
        assert not rep.passed

    def test_checker_not_vacuous_dynamic(self, world6):
        # same shrink at a simulated time: the from-y law genuinely favors
        # the sigmoid at t = 1, beating the baseline by several sigma
        grid, params, noise, consts, x0, _ = world6
        zdir = preset_field(grid, "low", 1.0)
        y0 = x0 + 0.5 * zdir
        f = TestFunction(kind="coordinate_sigmoid", center=zdir, scale=1.0,
                         amplitude=1.0, band=2)
        sett = SimSettings(dt=2e-3, n_paths=4000, seed=9)
        rep = mlh_check(f, x0, y0, 1.0, sett, params, noise, consts, shrink=1e40)
        assert not rep.passed

    def test_hypothesis_gate(self, world6, gauss6):
        grid, _, noise, _, x0, y0 = world6
        weak_params = PhysicsParams(nu=0.3, n_forced=2)
        weak_consts = bound_constants(grid, weak_params, noise)
        with pytest.raises(HypothesisError):
            mlh_check(gauss6, x0, y0, 1.0, SETT, weak_params, noise, weak_consts)


class TestGradientProbe:
    def test_constant_function_all_zero(self, world6):
        grid, params, noise, consts, x0, _ = world6
        f = TestFunction(kind="gauss_bump", center=zero_field(grid), scale=1.0,
                         amplitude=0.0, band=2)
        h = preset_field(grid, "low", 1.0)
        rep = gradient_probe(f, x0, [h], 0.5, [0.1],
                             SimSettings(dt=2e-3, n_paths=300, seed=3),
                             params, noise, consts)
        assert all(r["quotient"]["mean"] == 0.0 for r in rep.rows)
        assert rep.all_passed

    def test_time_zero_quotient_converges_to_derivative(self, world6, gauss6):
        grid, params, noise, consts, x0, _ = world6
        h = preset_field(grid, "gentle", 1.0)
        eps_list = [0.1, 0.01, 0.001]
        rep = gradient_probe(gauss6, x0, [h], 0.0, eps_list, SETT, params, noise, consts)
        exact = abs(gauss6.derivative_along(x0, h))
        errors = [abs(r["quotient"]["mean"] - exact) for r in rep.rows]
        assert errors == sorted(errors, reverse=True)
        # first-order convergence: error ~ eps |D^2 f|
        assert errors[-1] < 3 * eps_list[-1] * max(exact, 1e-12)

    def test_envelope_holds_on_small_run(self, world6, gauss6):
        grid, params, noise, consts, x0, _ = world6
        h = preset_field(grid, "low", 1.0)
        rep = gradient_probe(gauss6, x0, [h], 0.5, [0.1, 0.2],
                             SimSettings(dt=2e-3, n_paths=400, seed=8),
                             params, noise, consts)
        assert rep.all_passed

    def test_bad_eps(self, world6, gauss6):
        grid, params, noise, consts, x0, _ = world6
        with pytest.raises(ValueError):
            gradient_probe(gauss6, x0, [x0], 0.5, [-0.1], SETT, params, noise, consts)


class TestDgammaBounds:
    def test_identical_starts_zero(self, world6):
        _, params, noise, _, x0, _ = world6
        sett = SimSettings(dt=2e-3, n_paths=300, seed=5)
        upper, lower, extra = dgamma_distance_bounds(x0, x0, 0.5, 0.1, sett,
                                                     params, noise)
        assert upper.mean == 0.0
        assert lower.mean <= 3 * lower.stderr + 1e-12
        assert extra["sandwich_ok"]

    def test_metric_collapse_large_gamma(self, world6):
        _, params, noise, _, x0, y0 = world6
        sett = SimSettings(dt=2e-3, n_paths=300, seed=5)
        upper, _, _ = dgamma_distance_bounds(x0, y0, 0.5, 1e6, sett, params, noise)
        assert upper.mean < 1e-5

    def test_duality_sandwich(self, world6):
        _, params, noise, _, x0, y0 = world6
        sett = SimSettings(dt=2e-3, n_paths=1500, seed=6)
        upper, lower, extra = dgamma_distance_bounds(x0, y0, 1.0, 0.1, sett,
                                                     params, noise, dictionary_size=16)
        assert extra["sandwich_ok"]
        assert lower.mean - 3 * lower.stderr <= upper.mean + 3 * upper.stderr
        assert upper.mean > 0

    def test_empty_dictionary_rejected(self, world6):
        _, params, noise, _, x0, y0 = world6
        with pytest.raises(ValueError):
            dgamma_distance_bounds(x0, y0, 0.5, 0.1, SETT, params, noise,
                                   dictionary_size=0)

    def test_metric_properties(self, world6, rng):
        grid = world6[0]
        d = PseudoMetric(0.3)
        u, v, w = (random_field_on(grid, rng) for _ in range(3))
        duv = float(d.of_norm((u - v).norm()))
        dvw = float(d.of_norm((v - w).norm()))
        duw = float(d.of_norm((u - w).norm()))
        assert 0 <= duv <= 1
        assert d.of_norm(0.0) == 0.0
        assert duw <= duv + dvw + 1e-12


class TestEntropyInequality:
    def test_constant_f_reduces_to_jensen(self, rng):
        g = rng.standard_normal(200)
        rep = entropy_inequality_check(np.ones(200), g)
        assert rep.passed
        # equality iff g is constant
        rep_eq = entropy_inequality_check(np.ones(50), np.full(50, 0.7))
        assert rep_eq.passed and abs(rep_eq.margin) < 1e-12

    def test_zero_g_nonnegative_entropy(self, rng):
        f = np.abs(rng.standard_normal(300)) + 0.01
        rep = entropy_inequality_check(f, np.zeros(300))
        assert rep.passed and rep.margin >= -1e-12

    def test_exhaustive_random_certification(self):
        rng = np.random.default_rng(77)
        for _ in range(2000):
            n = int(rng.integers(2, 40))
            f = np.abs(rng.standard_normal(n)) * np.exp(rng.standard_normal(n))
            g = 3.0 * rng.standard_normal(n)
            assert entropy_inequality_check(f, g).passed

    def test_validation_errors(self, rng):
        with pytest.raises(ValueError):
            entropy_inequality_check(np.zeros(10), np.ones(10))
        with pytest.raises(ValueError):
            entropy_inequality_check(np.ones(10), np.ones(9))
        with pytest.raises(ValueError):
            entropy_inequality_check([1.0], [1.0])
        with pytest.raises(ValueError):
            entropy_inequality_check([-1.0, 2.0], [0.0, 0.0])
