"""The advection bilinear term: identities, estimates, oracle equivalence."""

import math

import numpy as np
import pytest

from snsverify.bilinear import (
    adjoint_first_slot,
    bilinear_b,
    bilinear_b_batch,
    bilinear_b_low,
    bilinear_b_same,
    bilinear_b_tilde,
    bilinear_reference,
    full_amplitudes,
    make_workspace,
)
from snsverify.bounds import constant_c1, constant_c2
from snsverify.spectral import (
    FourierField,
    GridMismatchError,
    inner,
    make_grid,
    sobolev_norm,
    split_low_high,
    zero_field,
)

from conftest import random_field_on


class TestWorkspace:
    def test_tables_cover_only_in_truncation_pairs(self, grid4):
        ws = make_workspace(4)
        full = ws.full_k
        for e in range(ws.out_idx.size):
            k = grid4.half_k[ws.out_idx[e]]
            p = full[ws.p_idx[e]]
            q = full[ws.q_idx[e]]
            assert tuple(p + q) == tuple(k)
            assert 0 < p @ p <= 16 and 0 < q @ q <= 16

    def test_full_amplitude_conjugation(self, grid4, rng):
        u = random_field_on(grid4, rng)
        c = full_amplitudes(u)
        m = grid4.n_modes
        np.testing.assert_array_equal(c[:m], u.amps)
        np.testing.assert_array_equal(c[m:], -np.conj(u.amps))


class TestBilinearBasics:
    def test_zero_arguments(self, grid4, rng):
        v = random_field_on(grid4, rng)
        assert bilinear_b(zero_field(grid4), v).norm() == 0.0
        assert bilinear_b(v, zero_field(grid4)).norm() == 0.0

    def test_bilinearity(self, grid4, rng):
        u, v, w = (random_field_on(grid4, rng) for _ in range(3))
        lhs = bilinear_b(2.0 * u + v, w)
        rhs = 2.0 * bilinear_b(u, w) + bilinear_b(v, w)
        np.testing.assert_allclose(lhs.amps, rhs.amps, rtol=1e-12, atol=1e-14)

    def test_grid_mismatch(self, grid4, grid8, rng):
        with pytest.raises(GridMismatchError):
            bilinear_b(random_field_on(grid4, rng), random_field_on(grid8, rng))

    def test_energy_neutrality_n4(self, grid4, rng):
        for _ in range(200):
            x = random_field_on(grid4, rng)
            y = random_field_on(grid4, rng)
            b = bilinear_b(y, x)
            denom = max(x.norm() * b.norm(), 1e-300)
            assert abs(inner(x, b)) / denom < 1e-10

    def test_skew_symmetry(self, grid4, rng):
        for _ in range(200):
            x, y, z = (random_field_on(grid4, rng) for _ in range(3))
            a = inner(x, bilinear_b(y, z))
            b = inner(z, bilinear_b(y, x))
            assert abs(a + b) <= 1e-10 * max(abs(a) + abs(b), 1e-300)


class TestOracle:
    def test_two_mode_hand_check_n2(self):
        grid = make_grid(2)
        amps_u = np.zeros(grid.n_modes, dtype=np.complex128)
        amps_v = np.zeros(grid.n_modes, dtype=np.complex128)
        amps_u[grid.mode_index(1, 0)] = 1.0 + 0.5j
        amps_v[grid.mode_index(0, 1)] = -0.3 + 2.0j
        u = FourierField(grid, amps_u)
        v = FourierField(grid, amps_v)
        table = bilinear_b(u, v)
        ref = bilinear_reference(u, v)
        np.testing.assert_allclose(table.amps, ref.amps, rtol=1e-12, atol=1e-14)
        assert table.norm() > 0

    def test_brute_force_n4(self, grid4, rng):
        worst = 0.0
        for _ in range(30):
            u = random_field_on(grid4, rng)
            v = random_field_on(grid4, rng)
            t = bilinear_b(u, v)
            r = bilinear_reference(u, v)
            worst = max(worst, np.max(np.abs(t.amps - r.amps)) / np.max(np.abs(r.amps)))
        assert worst < 1e-12

    def test_symmetric_table_matches(self, grid8, rng):
        for _ in range(20):
            u = random_field_on(grid8, rng)
            a = bilinear_b(u, u)
            b = bilinear_b_same(u)
            np.testing.assert_allclose(b.amps, a.amps, rtol=1e-12, atol=1e-13)

    def test_batch_matches_single(self, grid8, rng):
        n = 17
        U = np.stack([random_field_on(grid8, rng).amps for _ in range(n)])
        V = np.stack([random_field_on(grid8, rng).amps for _ in range(n)])
        out = bilinear_b_batch(U, V, 8, chunk=5)
        for i in range(n):
            single = bilinear_b(FourierField(grid8, U[i]), FourierField(grid8, V[i]))
            np.testing.assert_allclose(out[i], single.amps, rtol=1e-12, atol=1e-14)


class TestTildeAndLow:
    def test_tilde_same_argument(self, grid4, rng):
        u = random_field_on(grid4, rng)
        np.testing.assert_allclose(
            bilinear_b_tilde(u, u).amps, 2.0 * bilinear_b(u, u).amps, rtol=1e-13)

    def test_tilde_symmetric(self, grid4, rng):
        u, v = (random_field_on(grid4, rng) for _ in range(2))
        d = bilinear_b_tilde(u, v) - bilinear_b_tilde(v, u)
        assert d.norm() < 1e-12 * bilinear_b_tilde(u, v).norm()

    def test_tilde_is_sum(self, grid4, rng):
        u, v = (random_field_on(grid4, rng) for _ in range(2))
        s = bilinear_b(u, v) + bilinear_b(v, u)
        np.testing.assert_array_equal(bilinear_b_tilde(u, v).amps, s.amps)

    def test_low_composition(self, grid8, rng):
        u, v = (random_field_on(grid8, rng) for _ in range(2))
        low = bilinear_b_low(u, v, 2)
        expected = split_low_high(2, bilinear_b(u, v))[0]
        np.testing.assert_array_equal(low.amps, expected.amps)

    def test_low_vanishes_for_high_output(self, grid8):
        # inputs above the band whose convolution outputs all land above it
        amps_u = np.zeros(98, dtype=np.complex128)
        amps_v = np.zeros(98, dtype=np.complex128)
        amps_u[make_grid(8).mode_index(5, 0)] = 1.0
        amps_v[make_grid(8).mode_index(0, 5)] = 1.0
        u = FourierField(make_grid(8), amps_u)
        v = FourierField(make_grid(8), amps_v)
        assert bilinear_b_low(u, v, 2).norm() == 0.0

    def test_low_band_estimate(self, grid8, rng):
        c1 = constant_c1(8)
        for _ in range(100):
            u, v = (random_field_on(grid8, rng) for _ in range(2))
            bound = c1 * 8.0 * u.norm() * v.norm()
            assert bilinear_b_low(u, v, 2).norm() <= bound


class TestEstimates:
    def test_gradient_sup_estimate(self, grid8, rng):
        c1 = constant_c1(8)
        for _ in range(300):
            x, y, z = (random_field_on(grid8, rng) for _ in range(3))
            lhs = abs(inner(x, bilinear_b(y, z)))
            assert lhs <= c1 * x.norm() * y.norm() * sobolev_norm(1.5, z)

    def test_interpolation_estimate(self, grid8, rng):
        c2 = constant_c2(8)
        for _ in range(300):
            x, y, z = (random_field_on(grid8, rng) for _ in range(3))
            lhs = abs(inner(x, bilinear_b(y, z)))
            den = (
                math.sqrt(x.norm() * sobolev_norm(0.5, x))
                * math.sqrt(y.norm() * sobolev_norm(0.5, y))
                * sobolev_norm(0.5, z)
            )
            assert lhs <= c2 * den


class TestAdjoint:
    def test_first_slot_adjoint_identity(self, grid4, rng):
        for _ in range(30):
            x, z, y = (random_field_on(grid4, rng) for _ in range(3))
            g = adjoint_first_slot(x, z)
            assert math.isclose(inner(g, y), inner(x, bilinear_b(y, z)), rel_tol=1e-10)
