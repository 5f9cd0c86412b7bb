"""Spatial discretization: p-Laplace fluxes, quadratures, tails, set distance."""

import math

import numpy as np
import pytest

from plrds.fields import (EndpointEnsemble, EnsembleTag, Field, Grid,
                          cutoff_rho, field_from_binary, field_from_csv,
                          field_to_binary, field_to_csv, flux_pairing,
                          grad_p_pow, grid_arrays, hausdorff_semidistance,
                          l2_sq, lebesgue_pow, make_field, norms, p_dissipation,
                          p_laplace, tail_mass, zero_field)


def random_field(grid, seed):
    rng = np.random.default_rng(seed)
    # deliberately asymmetric so cancellations can't mask sign errors
    vals = rng.normal(size=grid.shape)
    vals += np.linspace(0.0, 1.0, grid.n).reshape((-1,) + (1,) * (grid.dim - 1))
    return make_field(grid, vals)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(3, 1.0, 65)
        with pytest.raises(ValueError):
            Grid(1, 1.0, 2)
        with pytest.raises(ValueError):
            Grid(1, -1.0, 65)

    def test_dx_and_shape(self):
        g = Grid(1, 8.0, 257)
        assert g.dx == 16.0 / 256.0
        assert g.shape == (257,)
        assert Grid(2, 1.0, 65).shape == (65, 65)

    def test_weights_sum_to_volume(self):
        arrs = grid_arrays(Grid(1, 8.0, 257))
        assert math.isclose(float(arrs.weights.sum()), 16.0, rel_tol=1e-12)
        arrs2 = grid_arrays(Grid(2, 2.0, 33))
        assert math.isclose(float(arrs2.weights.sum()), 16.0, rel_tol=1e-12)

    def test_make_field_zeroes_boundary_and_checks(self):
        g = Grid(1, 1.0, 11)
        u = make_field(g, np.ones(11))
        assert u.values[0] == 0.0 and u.values[-1] == 0.0
        with pytest.raises(ValueError):
            make_field(g, np.ones(12))
        with pytest.raises(ValueError):
            make_field(g, np.full(11, np.nan))


class TestPLaplace:
    def test_quadratic_profile_exact_away_from_origin(self):
        # div(|u'|^{p-2} u') for u = x^2, p = 3 is 8|x|; the face scheme
        # reproduces it to rounding at nodes with both faces on one side.
        g = Grid(1, 2.0, 401)
        x = grid_arrays(g).coords
        u = Field(g, x ** 2)  # keep true boundary values: exactness test
        out = p_laplace(u, 3.0).values
        interior = slice(2, -2)
        mask = np.abs(x[interior]) >= g.dx - 1e-12
        err = np.abs(out[interior] - 8.0 * np.abs(x[interior]))
        # rounding only: truncation error of a first-order scheme would be
        # O(dx) = 1e-2 here, nine orders of magnitude larger than this bound
        assert np.max(err[mask]) < 1e-9

    def test_quadratic_profile_origin_error(self):
        g = Grid(1, 2.0, 401)
        x = grid_arrays(g).coords
        u = Field(g, x ** 2)
        out = p_laplace(u, 3.0).values
        i0 = np.argmin(np.abs(x))
        assert abs(out[i0]) <= 2.0 * g.dx + 1e-12

    def test_p2_reduces_to_three_point_laplacian(self):
        g = Grid(1, 8.0, 129)
        u = random_field(g, 7)
        out = p_laplace(u, 2.0).values
        gx = np.diff(u.values) / g.dx
        expected = np.zeros_like(u.values)
        expected[1:-1] = np.diff(1.0 * gx) / g.dx
        assert np.array_equal(out, expected)

    def test_p2_reduces_to_five_point_laplacian_2d(self):
        g = Grid(2, 2.0, 33)
        u = random_field(g, 11)
        out = p_laplace(u, 2.0).values
        v = u.values
        fx = np.diff(v, axis=0) / g.dx
        fy = np.diff(v, axis=1) / g.dx
        expected = np.zeros_like(v)
        expected[1:-1, :] += (fx[1:, :] - fx[:-1, :]) / g.dx
        expected[:, 1:-1] += (fy[:, 1:] - fy[:, :-1]) / g.dx
        expected[grid_arrays(g).boundary] = 0.0
        assert np.array_equal(out, expected)

    def test_rejects_p_below_2_and_negative_delta(self):
        u = zero_field(Grid(1, 1.0, 11))
        with pytest.raises(ValueError):
            p_laplace(u, 1.5)
        with pytest.raises(ValueError):
            p_laplace(u, 3.0, delta=-0.1)

    def test_delta_regularization_continuous(self):
        g = Grid(1, 8.0, 65)
        u = random_field(g, 3)
        a = p_laplace(u, 3.0, delta=0.0).values
        b = p_laplace(u, 3.0, delta=1e-8).values
        assert np.max(np.abs(a - b)) < 1e-6


class TestSummationByParts:
    @pytest.mark.parametrize("grid,p", [
        (Grid(1, 8.0, 129), 3.0),
        (Grid(1, 8.0, 129), 2.0),
        (Grid(1, 5.0, 97), 4.5),
        (Grid(2, 2.0, 33), 3.0),
    ])
    def test_pairing_matches_operator(self, grid, p):
        u = random_field(grid, 42)
        v = random_field(grid, 43)
        w = grid_arrays(grid).weights
        direct = float(np.sum(w * (-p_laplace(u, p).values) * v.values))
        scale = abs(direct) + 1.0
        assert abs(flux_pairing(u, v, p) - direct) < 1e-10 * scale

    def test_dissipation_is_self_pairing(self):
        g = Grid(1, 8.0, 129)
        u = random_field(g, 5)
        assert p_dissipation(u, 3.0) == flux_pairing(u, u, 3.0)

    def test_dissipation_nonnegative(self):
        g = Grid(1, 8.0, 65)
        for seed in range(20):
            assert p_dissipation(random_field(g, seed), 3.0) >= 0.0

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValueError):
            flux_pairing(zero_field(Grid(1, 1.0, 11)),
                         zero_field(Grid(1, 1.0, 13)), 3.0)


class TestMonotonicity:
    def test_operator_monotone_on_random_pairs(self):
        g = Grid(1, 8.0, 65)
        w = grid_arrays(g).weights
        rng = np.random.default_rng(2024)
        for _ in range(200):
            u = make_field(g, rng.normal(size=g.shape))
            v = make_field(g, rng.normal(size=g.shape))
            du = p_laplace(u, 3.0).values - p_laplace(v, 3.0).values
            pairing = float(np.sum(w * du * (u.values - v.values)))
            assert pairing <= 1e-12


class TestNorms:
    def test_sine_profile_analytic(self):
        # u = sin(pi x / L) on [-L, L]: ||u||_2^2 = L, ||u||_3^3 = 8L/(3 pi),
        # ||u'||_3^3 = (pi/L)^2 * 8/3.
        L, n = 8.0, 1025
        g = Grid(1, L, n)
        x = grid_arrays(g).coords
        u = make_field(g, np.sin(np.pi * x / L))
        assert math.isclose(l2_sq(u), L, rel_tol=1e-4)
        assert math.isclose(lebesgue_pow(u, 3.0), 8.0 * L / (3.0 * np.pi),
                            rel_tol=1e-4)
        assert math.isclose(grad_p_pow(u, 3.0), (np.pi / L) ** 2 * 8.0 / 3.0,
                            rel_tol=1e-3)

    def test_norms_dict_consistency(self):
        g = Grid(1, 8.0, 129)
        u = random_field(g, 9)
        d = norms(u, 3.0, 4.0)
        assert math.isclose(d["l2"], math.sqrt(l2_sq(u)), rel_tol=1e-14)
        assert math.isclose(d["lp"] ** 3, lebesgue_pow(u, 3.0), rel_tol=1e-12)
        assert math.isclose(d["lq"] ** 4, lebesgue_pow(u, 4.0), rel_tol=1e-12)
        assert math.isclose(d["w1p"] ** 3,
                            lebesgue_pow(u, 3.0) + grad_p_pow(u, 3.0),
                            rel_tol=1e-12)
        with pytest.raises(ValueError):
            norms(u, 1.5, 4.0)

    def test_unit_field_mass(self):
        # constant 1 on [-1, 1] with 201 nodes: squared mass within 2% of 2.
        g = Grid(1, 1.0, 201)
        u = make_field(g, np.ones(g.shape))
        assert abs(l2_sq(u) - 2.0) <= 0.04

    def test_interpolation_inequality_random_fields(self):
        # ||u||_p^p <= (q-p)/(q-2) ||u||_2^2 + (p-2)/(q-2) ||u||_q^q
        g = Grid(1, 8.0, 65)
        rng = np.random.default_rng(77)
        for p, q in ((3.0, 4.0), (2.5, 6.0)):
            a = (q - p) / (q - 2.0)
            b = (p - 2.0) / (q - 2.0)
            for _ in range(200):
                u = make_field(g, 3.0 * rng.normal(size=g.shape))
                lhs = lebesgue_pow(u, p)
                rhs = a * l2_sq(u) + b * lebesgue_pow(u, q)
                assert lhs <= rhs * (1.0 + 1e-12)


class TestCutoffAndTails:
    def test_cutoff_values(self):
        assert cutoff_rho(0.0) == 0.0
        assert cutoff_rho(0.5) == 0.0
        assert cutoff_rho(1.0) == 0.0
        assert cutoff_rho(1.5) == 0.5
        assert cutoff_rho(2.0) == 1.0
        assert cutoff_rho(3.0) == 1.0
        with pytest.raises(ValueError):
            cutoff_rho(-0.1)

    def test_cutoff_monotone_and_smooth_range(self):
        s = np.linspace(0.0, 3.0, 301)
        r = cutoff_rho(s)
        assert np.all(np.diff(r) >= 0.0)
        assert np.all((r >= 0.0) & (r <= 1.0))

    def test_unit_field_tail(self):
        g = Grid(1, 1.0, 201)
        u = make_field(g, np.ones(g.shape))
        tm = tail_mass(u, 0.5)
        assert abs(tm.plain - 1.0) <= 0.02
        assert tm.rho_weighted <= tm.plain + 1e-15

    def test_rho_weighted_dominated(self):
        g = Grid(1, 8.0, 129)
        for seed in range(10):
            u = random_field(g, seed)
            tm = tail_mass(u, 3.0)
            assert tm.rho_weighted <= tm.plain + 1e-12
            assert tm.plain <= l2_sq(u) + 1e-12

    def test_tail_decreasing_in_k_for_localized_field(self):
        g = Grid(1, 8.0, 257)
        x = grid_arrays(g).coords
        u = make_field(g, np.exp(-x ** 2))
        masses = [tail_mass(u, k).plain for k in (1.0, 2.0, 3.0, 4.0)]
        assert all(m0 > m1 for m0, m1 in zip(masses, masses[1:]))

    def test_k_bounds(self):
        u = zero_field(Grid(1, 8.0, 65))
        for bad in (0.0, -1.0, 8.0, 9.0):
            with pytest.raises(ValueError):
                tail_mass(u, bad)


class TestHausdorff:
    def test_subset_gives_zero(self):
        g = Grid(1, 8.0, 65)
        a = [random_field(g, 1), random_field(g, 2)]
        b = a + [random_field(g, 3)]
        assert hausdorff_semidistance(a, b) == 0.0

    def test_asymmetry(self):
        g = Grid(1, 8.0, 65)
        near = zero_field(g)
        far = make_field(g, 5.0 * np.ones(g.shape))
        assert hausdorff_semidistance([near], [near, far]) == 0.0
        d = hausdorff_semidistance([near, far], [near])
        assert math.isclose(d, math.sqrt(l2_sq(far)), rel_tol=1e-12)

    def test_empty_sets(self):
        g = Grid(1, 8.0, 65)
        assert hausdorff_semidistance([], [zero_field(g)]) == 0.0
        with pytest.raises(ValueError):
            hausdorff_semidistance([zero_field(g)], [])

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            hausdorff_semidistance([zero_field(Grid(1, 8.0, 65))],
                                   [zero_field(Grid(1, 8.0, 129))])

    def test_accepts_ensembles(self):
        g = Grid(1, 8.0, 65)
        ens = EndpointEnsemble(members=(zero_field(g),),
                               tag=EnsembleTag(tau=0.0))
        assert hausdorff_semidistance(ens, ens) == 0.0


class TestEnsemble:
    def test_spread(self):
        g = Grid(1, 8.0, 65)
        u = random_field(g, 21)
        v = random_field(g, 22)
        ens = EndpointEnsemble(members=(u, v), tag=EnsembleTag(tau=0.0))
        diff = make_field(g, u.values - v.values)
        assert math.isclose(ens.spread(), math.sqrt(l2_sq(diff)),
                            rel_tol=1e-12)
        single = EndpointEnsemble(members=(u,), tag=EnsembleTag(tau=0.0))
        assert single.spread() == 0.0
        assert len(ens) == 2


class TestSerialization:
    @pytest.mark.parametrize("grid", [Grid(1, 8.0, 65), Grid(2, 2.0, 17)])
    def test_csv_round_trip_bitwise(self, grid, tmp_path):
        u = random_field(grid, 31)
        path = tmp_path / "field.csv"
        field_to_csv(u, path)
        back = field_from_csv(path)
        assert back.grid == u.grid
        assert np.array_equal(back.values, u.values)

    @pytest.mark.parametrize("grid", [Grid(1, 8.0, 65), Grid(2, 2.0, 17)])
    def test_binary_round_trip_bitwise(self, grid, tmp_path):
        u = random_field(grid, 33)
        path = tmp_path / "field.bin"
        field_to_binary(u, path)
        back = field_from_binary(path)
        assert back.grid == u.grid
        assert np.array_equal(back.values, u.values)

    def test_binary_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(ValueError, match="not a field dump"):
            field_from_binary(path)

    def test_binary_rejects_truncated_payload(self, tmp_path):
        u = random_field(Grid(1, 8.0, 65), 1)
        path = tmp_path / "trunc.bin"
        field_to_binary(u, path)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError, match="payload"):
            field_from_binary(path)

    def test_csv_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c,d\n")
        with pytest.raises(ValueError):
            field_from_csv(path)
