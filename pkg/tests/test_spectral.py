"""Field representation, Stokes calculus, projections, serialization."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snsverify.spectral import (
    FourierField,
    GridMismatchError,
    PhysicsParams,
    field_from_csv,
    field_to_csv,
    inner,
    leray_project,
    make_grid,
    random_field,
    sobolev_norm,
    split_low_high,
    stokes_apply,
    velocity_coeffs,
    zero_field,
)

from conftest import random_field_on


class TestGrid:
    def test_half_lattice_excludes_origin_and_conjugates(self, grid8):
        ks = {(int(k1), int(k2)) for k1, k2 in grid8.half_k}
        assert (0, 0) not in ks
        for k1, k2 in ks:
            assert (-k1, -k2) not in ks
            assert k1 * k1 + k2 * k2 <= 64

    def test_full_ball_is_covered(self, grid8):
        ks = {(int(k1), int(k2)) for k1, k2 in grid8.half_k}
        count = sum(
            1
            for a in range(-8, 9)
            for b in range(-8, 9)
            if 0 < a * a + b * b <= 64
        )
        assert 2 * len(ks) == count

    def test_canonical_order(self, grid8):
        keys = [(int(k1) ** 2 + int(k2) ** 2, int(k1), int(k2)) for k1, k2 in grid8.half_k]
        assert keys == sorted(keys)

    def test_band_is_prefix(self, grid8):
        cut = grid8.band_size(2)
        assert np.all(grid8.ksq[:cut] <= 4)
        assert np.all(grid8.ksq[cut:] > 4)

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            make_grid(0)

    def test_params_validation(self, grid4):
        with pytest.raises(ValueError):
            PhysicsParams(nu=-1.0, n_forced=2)
        with pytest.raises(ValueError):
            PhysicsParams(nu=1.0, n_forced=0)
        with pytest.raises(ValueError):
            PhysicsParams(nu=1.0, n_forced=9).validate_against(grid4)


class TestInner:
    def test_zero_field(self, grid4, rng):
        v = random_field_on(grid4, rng)
        assert inner(zero_field(grid4), v) == 0.0

    def test_positivity_and_full_lattice_sum(self, grid4, rng):
        u = random_field_on(grid4, rng)
        # |u|^2 equals the sum of |u_k|^2 over both members of each pair
        coeffs = velocity_coeffs(u)
        full_sum = sum(float(np.sum(np.abs(c) ** 2)) for c in coeffs) * 2.0
        assert inner(u, u) >= 0
        assert math.isclose(inner(u, u), full_sum, rel_tol=1e-12)

    def test_single_mode_brute_force(self, grid4):
        # one unit amplitude on (1,0): the full-lattice sum over the pair
        amps = np.zeros(grid4.n_modes, dtype=np.complex128)
        idx = grid4.mode_index(1, 0)
        amps[idx] = 1.0
        u = FourierField(grid4, amps)
        uk = velocity_coeffs(u)[idx]
        brute = np.sum(np.abs(uk) ** 2) + np.sum(np.abs(np.conj(uk)) ** 2)
        assert math.isclose(inner(u, u), float(brute), rel_tol=1e-14)

    def test_symmetry_and_cauchy_schwarz(self, grid8, rng):
        for _ in range(50):
            u = random_field_on(grid8, rng)
            v = random_field_on(grid8, rng)
            assert math.isclose(inner(u, v), inner(v, u), rel_tol=1e-12)
            assert abs(inner(u, v)) <= u.norm() * v.norm() * (1 + 1e-12)

    def test_bilinearity(self, grid4, rng):
        u, v, w = (random_field_on(grid4, rng) for _ in range(3))
        lhs = inner(2.5 * u + v, w)
        assert math.isclose(lhs, 2.5 * inner(u, w) + inner(v, w), rel_tol=1e-12)

    def test_grid_mismatch(self, grid4, grid8, rng):
        with pytest.raises(GridMismatchError):
            inner(random_field_on(grid4, rng), random_field_on(grid8, rng))


class TestStokes:
    def test_identity_at_zero(self, grid4, rng):
        u = random_field_on(grid4, rng)
        assert stokes_apply(0.0, u) is u

    def test_unit_mode_eigenvalue(self, grid4):
        amps = np.zeros(grid4.n_modes, dtype=np.complex128)
        amps[grid4.mode_index(1, 0)] = 1.0 + 2.0j
        u = FourierField(grid4, amps)
        np.testing.assert_allclose(stokes_apply(1.0, u).amps, u.amps)

    def test_sqrt_on_diagonal_mode(self, grid4):
        amps = np.zeros(grid4.n_modes, dtype=np.complex128)
        i = grid4.mode_index(1, 1)
        amps[i] = 1.0
        out = stokes_apply(0.5, FourierField(grid4, amps))
        assert math.isclose(abs(out.amps[i]), math.sqrt(2.0), rel_tol=1e-14)

    @given(alpha=st.floats(-2, 2), beta=st.floats(-2, 2))
    @settings(max_examples=30, deadline=None)
    def test_composition(self, alpha, beta):
        grid = make_grid(4)
        u = random_field_on(grid, np.random.default_rng(1))
        ab = stokes_apply(alpha, stokes_apply(beta, u))
        direct = stokes_apply(alpha + beta, u)
        np.testing.assert_allclose(ab.amps, direct.amps, rtol=1e-12, atol=1e-15)


class TestSobolevNorm:
    def test_zero_order_is_plain_norm(self, grid8, rng):
        u = random_field_on(grid8, rng)
        assert math.isclose(sobolev_norm(0.0, u), u.norm(), rel_tol=1e-14)

    def test_poincare(self, grid8, rng):
        for _ in range(50):
            u = random_field_on(grid8, rng)
            assert sobolev_norm(0.5, u) >= u.norm() * (1 - 1e-12)

    def test_poincare_equality_on_unit_shell(self, grid8):
        amps = np.zeros(grid8.n_modes, dtype=np.complex128)
        amps[grid8.mode_index(0, 1)] = 0.3 - 1.0j
        u = FourierField(grid8, amps)
        assert math.isclose(sobolev_norm(0.75, u), u.norm(), rel_tol=1e-14)

    def test_single_mode_diagonal_formula(self, grid4):
        amps = np.zeros(grid4.n_modes, dtype=np.complex128)
        amps[grid4.mode_index(2, 0)] = 1.0
        u = FourierField(grid4, amps)
        assert math.isclose(sobolev_norm(1.5, u), 8.0 * u.norm(), rel_tol=1e-14)


class TestSplit:
    def test_low_only(self, grid8, rng):
        cut = grid8.band_size(2)
        amps = np.zeros(grid8.n_modes, dtype=np.complex128)
        amps[:cut] = rng.standard_normal(cut) + 1j * rng.standard_normal(cut)
        u = FourierField(grid8, amps)
        low, high = split_low_high(2, u)
        np.testing.assert_array_equal(low.amps, u.amps)
        assert high.norm() == 0.0

    def test_high_only(self, grid8, rng):
        cut = grid8.band_size(2)
        amps = np.zeros(grid8.n_modes, dtype=np.complex128)
        amps[cut:] = 1.0j
        u = FourierField(grid8, amps)
        low, high = split_low_high(2, u)
        assert low.norm() == 0.0
        np.testing.assert_array_equal(high.amps, u.amps)

    def test_membership_per_mode(self, grid8, rng):
        u = random_field_on(grid8, rng)
        low, high = split_low_high(3, u)
        for i in range(grid8.n_modes):
            if grid8.ksq[i] <= 9:
                assert low.amps[i] == u.amps[i] and high.amps[i] == 0
            else:
                assert high.amps[i] == u.amps[i] and low.amps[i] == 0
        np.testing.assert_array_equal((low + high).amps, u.amps)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 1.5])
    def test_band_inequalities(self, grid8, rng, alpha):
        n0 = 2
        for _ in range(20):
            u = random_field_on(grid8, rng)
            low, high = split_low_high(n0, u)
            assert sobolev_norm(alpha, low) <= n0 ** (2 * alpha) * low.norm() * (1 + 1e-12)
            assert sobolev_norm(alpha, high) >= n0 ** (2 * alpha) * high.norm() * (1 - 1e-12)

    def test_radius_out_of_range(self, grid4, rng):
        with pytest.raises(ValueError):
            split_low_high(5, random_field_on(grid4, rng))


class TestLeray:
    def test_parallel_coefficients_project_to_zero(self, grid4, rng):
        k = grid4.half_k.astype(np.float64)
        coeffs = np.empty((grid4.n_modes, 2), dtype=np.complex128)
        scale = rng.standard_normal(grid4.n_modes) + 1j * rng.standard_normal(grid4.n_modes)
        coeffs[:, 0] = scale * k[:, 0]
        coeffs[:, 1] = scale * k[:, 1]
        assert leray_project(grid4, coeffs).norm() == pytest.approx(0.0, abs=1e-14)

    def test_divergence_free_unchanged(self, grid4, rng):
        u = random_field_on(grid4, rng)
        again = leray_project(grid4, velocity_coeffs(u))
        np.testing.assert_allclose(again.amps, u.amps, rtol=1e-12, atol=1e-15)

    def test_per_mode_orthogonality(self, grid8, rng):
        coeffs = rng.standard_normal((grid8.n_modes, 2)) + 1j * rng.standard_normal((grid8.n_modes, 2))
        out = velocity_coeffs(leray_project(grid8, coeffs))
        k = grid8.half_k.astype(np.float64)
        dots = k[:, 0] * out[:, 0] + k[:, 1] * out[:, 1]
        assert np.max(np.abs(dots)) < 1e-12

    def test_idempotent(self, grid8, rng):
        coeffs = rng.standard_normal((grid8.n_modes, 2)) + 1j * rng.standard_normal((grid8.n_modes, 2))
        once = leray_project(grid8, coeffs)
        twice = leray_project(grid8, velocity_coeffs(once))
        np.testing.assert_allclose(twice.amps, once.amps, rtol=1e-12, atol=1e-15)

    def test_self_adjoint(self, grid4, rng):
        # <P w, u> = <w, P u> for divergence-free u means projecting w
        # before pairing changes nothing
        coeffs = rng.standard_normal((grid4.n_modes, 2)) + 1j * rng.standard_normal((grid4.n_modes, 2))
        u = random_field_on(grid4, rng)
        uc = velocity_coeffs(u)
        pair_raw = 2.0 * float(np.sum((coeffs * np.conj(uc)).real))
        assert math.isclose(inner(leray_project(grid4, coeffs), u), pair_raw, rel_tol=1e-12)

    def test_bad_shape(self, grid4):
        with pytest.raises(ValueError):
            leray_project(grid4, np.zeros((3, 2), dtype=np.complex128))


class TestSerialization:
    def test_round_trip(self, grid8, rng):
        u = random_field_on(grid8, rng)
        again = field_from_csv(field_to_csv(u), grid8)
        np.testing.assert_array_equal(again.amps, u.amps)

    def test_canonical_rows(self, grid4, rng):
        text = field_to_csv(random_field_on(grid4, rng))
        rows = text.strip().split("\n")
        assert rows[0] == "k1,k2,re,im"
        assert len(rows) == grid4.n_modes + 1

    def test_wrong_order_rejected(self, grid4, rng):
        lines = field_to_csv(random_field_on(grid4, rng)).strip().split("\n")
        lines[1], lines[2] = lines[2], lines[1]
        with pytest.raises(ValueError):
            field_from_csv("\n".join(lines), grid4)

    def test_field_immutable(self, grid4, rng):
        u = random_field_on(grid4, rng)
        with pytest.raises(ValueError):
            u.amps[0] = 1.0

    def test_random_field_scale(self, grid8):
        u = random_field(grid8, np.random.default_rng(0), scale=2.0)
        # E|u|^2 = 2 * M * scale^2
        assert 0.3 * 2 * grid8.n_modes * 4 < u.norm() ** 2 < 3 * 2 * grid8.n_modes * 4
