"""Diagnostics: absorbing radii, energy audit, tail masses, attractor sets."""

import math
import warnings

import numpy as np
import pytest

from plrds.analysis import (absorbing_bound, absorbing_check,
                            absorbing_radius_additive,
                            absorbing_radius_deterministic,
                            absorbing_radius_multiplicative,
                            alpha_solution_distances, energy_audit,
                            estimate_attractor, sample_initial_ball,
                            tail_check, usc_sweep)
from plrds.fields import Grid, l2_sq
from plrds.integrator import StepperConfig, cocycle_apply
from plrds.noise import EtaConfig, TabulatedPath, make_path
from plrds.problem import NonlinearitySpec, ProblemSpec

DT = 2e-3
GRID = Grid(1, 8.0, 65)
CFG = StepperConfig(dt=DT)


def zero_path(back: float = 72.0, forward: float = 8.0,
              dt: float = DT) -> TabulatedPath:
    """All-zero tabulated path covering [-back, forward] plus block padding."""
    n0 = int(round(back / dt))
    n1 = int(round(forward / dt))
    return TabulatedPath(np.zeros(n0 + n1 + 1), dt, first_index=-n0)


def quiet_additive(g_amp: float = 0.0) -> ProblemSpec:
    return ProblemSpec(noise_case="additive", g_amp=g_amp,
                       nonlinearity=NonlinearitySpec(phi_amp=0.0),
                       eta=EtaConfig(kind="constant", mean=0.0))


class TestSampleInitialBall:
    def test_deterministic_and_within_radius(self, grid65):
        a = sample_initial_ball(grid65, 2.0, 5, seed=9)
        b = sample_initial_ball(grid65, 2.0, 5, seed=9)
        c = sample_initial_ball(grid65, 2.0, 5, seed=10)
        assert len(a) == 5
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.values, fb.values)
        assert any(not np.array_equal(fa.values, fc.values)
                   for fa, fc in zip(a, c))
        for f in a:
            assert math.sqrt(l2_sq(f)) <= 2.0 + 1e-12


class TestAbsorbingRadii:
    def test_additive_quiet_model_radius_is_c(self):
        rep = absorbing_radius_additive(0.0, zero_path(), quiet_additive(),
                                        grid=GRID)
        assert rep.radius == 4.0
        assert rep.bound == 8.0
        assert rep.shift_sq == 0.0
        assert rep.converged and rep.growth_finite
        assert rep.parts["noise"] == 0.0
        assert rep.parts["g"] == 0.0
        assert rep.parts["psi"] == 0.0

    def test_g_part_scales_quadratically(self):
        path = zero_path()
        r1 = absorbing_radius_additive(0.0, path, quiet_additive(0.5),
                                       grid=GRID)
        r2 = absorbing_radius_additive(0.0, path, quiet_additive(1.0),
                                       grid=GRID)
        assert math.isclose(r2.parts["g"], 4.0 * r1.parts["g"],
                            rel_tol=1e-12)
        assert r1.parts["g"] > 0.0

    def test_truncation_tolerance_insensitive(self):
        spec = ProblemSpec(noise_case="additive")
        path = make_path(0, DT)
        a = absorbing_radius_additive(0.0, path, spec, quad_tol=1e-10,
                                      grid=GRID)
        b = absorbing_radius_additive(0.0, path, spec, quad_tol=1e-12,
                                      grid=GRID)
        assert abs(a.radius - b.radius) <= 1e-7 * b.radius
        assert b.truncation >= a.truncation

    def test_case_mismatch_rejected(self):
        spec = ProblemSpec(noise_case="multiplicative", alpha=0.1)
        with pytest.raises(ValueError):
            absorbing_radius_additive(0.0, zero_path(), spec, grid=GRID)
        with pytest.raises(ValueError):
            absorbing_radius_multiplicative(0.0, zero_path(),
                                            ProblemSpec(), grid=GRID)

    def test_multiplicative_quiet_model(self):
        spec = ProblemSpec(noise_case="multiplicative", alpha=0.1, g_amp=0.0,
                           nonlinearity=NonlinearitySpec(phi_amp=0.0))
        rep = absorbing_radius_multiplicative(0.0, zero_path(), spec,
                                              grid=GRID)
        assert rep.radius == 4.0
        assert rep.bound == 4.0  # exp(2 alpha z(0)) = 1 on the zero path

    def test_multiplicative_small_alpha_approaches_noise_free(self):
        spec = ProblemSpec(noise_case="multiplicative", alpha=1e-7)
        path = make_path(0, DT)
        rep = absorbing_radius_multiplicative(0.0, path, spec, grid=GRID)
        det = absorbing_radius_deterministic(0.0, spec.with_alpha(
            0.0, "deterministic"), grid=GRID)
        assert abs(rep.radius - det.radius) <= 1e-6 * det.radius

    def test_runaway_weight_flagged_not_converged(self):
        spec = ProblemSpec(noise_case="additive",
                           eta=EtaConfig(kind="constant", mean=50.0))
        with pytest.warns(UserWarning, match="admissible threshold"):
            rep = absorbing_radius_additive(0.0, make_path(1, DT), spec,
                                            grid=GRID)
        assert not rep.converged

    def test_deterministic_radius(self):
        rep = absorbing_radius_deterministic(0.0, ProblemSpec(), grid=GRID)
        assert rep.bound == rep.radius
        assert rep.converged and rep.growth_finite
        assert rep.radius > 4.0  # forcing adds on top of the constant part

    def test_bound_dispatch(self):
        path = zero_path()
        add = quiet_additive()
        mult = ProblemSpec(noise_case="multiplicative", alpha=0.1)
        det = ProblemSpec(noise_case="deterministic", alpha=0.0)
        assert absorbing_bound(0.0, path, add, grid=GRID) == \
            absorbing_radius_additive(0.0, path, add, grid=GRID).bound
        assert absorbing_bound(0.0, path, mult, grid=GRID) == \
            absorbing_radius_multiplicative(0.0, path, mult, grid=GRID).bound
        assert absorbing_bound(0.0, path, det, grid=GRID) == \
            absorbing_radius_deterministic(0.0, det, grid=GRID).bound


class TestAbsorbingCheck:
    def test_smoke_rows_and_entry(self):
        spec = ProblemSpec(noise_case="additive")
        rep = absorbing_check(0.0, spec, horizons=(1.0, 2.0), n_seeds=2,
                              n_initials=1, grid=GRID, cfg=CFG)
        assert len(rep.rows) == 4  # seeds x horizons
        assert all(r[3] > 0.0 for r in rep.rows)
        assert rep.entry_time in (1.0, 2.0, None)
        assert len(rep.per_path) == 2
        assert rep.failures == []
        assert rep.radius_sq == max(r[3] for r in rep.rows)

    def test_larger_ball_enters_no_earlier(self):
        spec = ProblemSpec(noise_case="additive")
        small = absorbing_check(0.0, spec, horizons=(1.0, 2.0, 4.0),
                                n_seeds=2, n_initials=1, grid=GRID, cfg=CFG,
                                ball_radius=1.0)
        big = absorbing_check(0.0, spec, horizons=(1.0, 2.0, 4.0),
                              n_seeds=2, n_initials=1, grid=GRID, cfg=CFG,
                              ball_radius=10.0)
        inf = float("inf")
        t_small = small.entry_time if small.entry_time is not None else inf
        t_big = big.entry_time if big.entry_time is not None else inf
        assert t_small <= t_big


class TestEnergyAudit:
    def test_zero_trajectory_residual_exactly_zero(self, grid65):
        from plrds.fields import zero_field
        spec = quiet_additive()
        u0 = zero_field(grid65)
        _, rec = cocycle_apply(0.2, 0.0, zero_path(), u0, spec, CFG,
                               snapshot_indices=range(0, 101),
                               with_record=True)
        mx, series = energy_audit(rec, spec)
        assert mx == 0.0
        assert np.all(series["residuals"] == 0.0)

    def test_needs_consecutive_triples(self, grid65, gaussian_u0, path_bank):
        spec = ProblemSpec(noise_case="additive")
        u0 = gaussian_u0(grid65)
        path = path_bank(2, DT)
        _, rec = cocycle_apply(0.1, 0.0, path, u0, spec, CFG,
                               snapshot_indices={0, 50},
                               with_record=True)
        with pytest.raises(ValueError):
            energy_audit(rec, spec)
        _, rec2 = cocycle_apply(0.1, 0.0, path, u0, spec, CFG,
                                snapshot_indices={0, 20, 40},
                                with_record=True)
        with pytest.raises(ValueError, match="consecutive"):
            energy_audit(rec2, spec)

    def test_residual_shrinks_under_refinement(self, grid65, gaussian_u0):
        # pooled over two paths, a 4x dt refinement must cut the max
        # residual by clearly more than the sqrt(dt) factor 2 of a rough
        # (midpoint-inconsistent) quadrature; first order gives ~4.
        spec = ProblemSpec(noise_case="additive")
        u0 = gaussian_u0(grid65)
        pooled = {}
        for dt in (2e-3, 5e-4):
            cfg = StepperConfig(dt=dt)
            k0, k1 = round(0.5 / dt), round(1.0 / dt)
            worst = 0.0
            for seed in (0, 3):
                _, rec = cocycle_apply(1.0, 0.0, make_path(seed, dt), u0,
                                       spec, cfg,
                                       snapshot_indices=range(k0, k1 + 1),
                                       with_record=True)
                mx, _ = energy_audit(rec, spec)
                worst = max(worst, mx)
            pooled[dt] = worst
        ratio = pooled[2e-3] / pooled[5e-4]
        assert 2.2 < ratio < 8.0, f"4x refinement ratio {ratio:.3f}"

    def test_multiplicative_margin_never_violated(self, grid65, gaussian_u0,
                                                  path_bank, spec_mult):
        u0 = gaussian_u0(grid65)
        _, rec = cocycle_apply(0.5, 0.0, path_bank(4, DT), u0, spec_mult,
                               CFG, snapshot_indices=range(0, 251),
                               with_record=True)
        mx, _ = energy_audit(rec, spec_mult)
        assert mx == 0.0

    def test_deterministic_residual_small(self, grid65, gaussian_u0,
                                          spec_det):
        u0 = gaussian_u0(grid65)
        _, rec = cocycle_apply(0.5, 0.0, None, u0, spec_det, CFG,
                               snapshot_indices=range(0, 251),
                               with_record=True)
        mx, _ = energy_audit(rec, spec_det)
        assert mx < 0.02


class TestTailCheck:
    def test_smoke_shapes_and_monotonicity(self):
        spec = ProblemSpec(noise_case="additive")
        rep = tail_check(0.0, spec, horizon=2.0, k_list=(2.0, 3.0),
                         n_seeds=2, grid=GRID, cfg=CFG, n_sigma=3)
        assert len(rep.rows) == 2 * 2 * 3
        assert rep.monotone_in_k
        assert set(rep.max_per_k) == {2.0, 3.0}
        assert len(rep.sigmas) == 3
        assert rep.max_per_k[3.0] <= rep.max_per_k[2.0] + 1e-15

    def test_validation(self):
        spec = ProblemSpec(noise_case="additive")
        with pytest.raises(ValueError, match="horizon"):
            tail_check(0.0, spec, horizon=0.5, grid=GRID, cfg=CFG)
        with pytest.raises(ValueError, match="ascending"):
            tail_check(0.0, spec, horizon=2.0, k_list=(3.0, 2.0), grid=GRID,
                       cfg=CFG)
        with pytest.raises(ValueError, match="half_width"):
            tail_check(0.0, spec, horizon=2.0, k_list=(9.0,), grid=GRID,
                       cfg=CFG)

    def test_warns_when_cutoff_leaves_domain(self):
        spec = ProblemSpec(noise_case="additive")
        with pytest.warns(UserWarning, match="plateau"):
            tail_check(0.0, spec, horizon=1.0, k_list=(6.0,), n_seeds=1,
                       grid=GRID, cfg=CFG, n_sigma=2)


class TestEstimateAttractor:
    def test_contracting_model_dedupes_to_one_member(self):
        spec = ProblemSpec(noise_case="deterministic", alpha=0.0,
                           epsilon=0.0, g_amp=0.0,
                           nonlinearity=NonlinearitySpec(phi_amp=0.0))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ens = estimate_attractor(0.0, spec, None, horizon=12.0,
                                     n_initials=3, grid=GRID, cfg=CFG)
        assert len(ens) == 1
        assert math.sqrt(l2_sq(ens.members[0])) < 1e-4

    def test_tag_and_cluster_tol(self):
        spec = ProblemSpec(noise_case="additive")
        path = make_path(5, DT)
        ens = estimate_attractor(0.0, spec, path, horizon=2.0, n_initials=3,
                                 grid=GRID, cfg=CFG, cluster_tol=1e9,
                                 check_contraction=False)
        assert len(ens) == 1  # everything merges under a huge tolerance
        assert ens.tag.seed == 5
        assert ens.tag.alpha == spec.alpha
        assert ens.tag.horizon == 2.0
        fine = estimate_attractor(0.0, spec, path, horizon=2.0, n_initials=3,
                                  grid=GRID, cfg=CFG, cluster_tol=1e-15,
                                  check_contraction=False)
        assert 1 <= len(fine) <= 3


class TestUscSweep:
    def test_smoke_shapes_and_zero_alpha(self):
        spec = ProblemSpec(noise_case="multiplicative", alpha=0.1)
        rep = usc_sweep(0.0, spec, alphas=(0.1, 0.0), n_seeds=2, horizon=2.0,
                        n_initials=1, grid=GRID, cfg=CFG)
        assert rep.distances.shape == (2, 2)
        assert len(rep.medians) == 2
        # alpha = 0 reruns the reference deterministic model: distance 0
        assert np.all(rep.distances[1] == 0.0)
        assert rep.medians[1] == 0.0
        assert np.all(rep.distances >= 0.0)

    def test_repeat_run_bitwise(self):
        spec = ProblemSpec(noise_case="multiplicative", alpha=0.1)
        a = usc_sweep(0.0, spec, alphas=(0.1,), n_seeds=2, horizon=1.0,
                      n_initials=1, grid=GRID, cfg=CFG)
        b = usc_sweep(0.0, spec, alphas=(0.1,), n_seeds=2, horizon=1.0,
                      n_initials=1, grid=GRID, cfg=CFG)
        assert np.array_equal(a.distances, b.distances)

    def test_workers_do_not_change_results(self):
        spec = ProblemSpec(noise_case="multiplicative", alpha=0.1)
        serial = usc_sweep(0.0, spec, alphas=(0.1,), n_seeds=2, horizon=1.0,
                           n_initials=1, grid=GRID, cfg=CFG, workers=1)
        pooled = usc_sweep(0.0, spec, alphas=(0.1,), n_seeds=2, horizon=1.0,
                           n_initials=1, grid=GRID, cfg=CFG, workers=2)
        assert np.array_equal(serial.distances, pooled.distances)

    def test_validation(self):
        spec = ProblemSpec(noise_case="multiplicative", alpha=0.1)
        with pytest.raises(ValueError, match="decreasing"):
            usc_sweep(0.0, spec, alphas=(0.1, 0.2), n_seeds=1, horizon=1.0,
                      grid=GRID, cfg=CFG)
        with pytest.raises(ValueError, match="nonnegative"):
            usc_sweep(0.0, spec, alphas=(0.1, -0.05), n_seeds=1, horizon=1.0,
                      grid=GRID, cfg=CFG)


class TestAlphaSolutionDistances:
    def test_monotone_in_alpha(self, grid65, gaussian_u0, path_bank):
        spec = ProblemSpec(noise_case="multiplicative", alpha=0.4)
        u0 = gaussian_u0(grid65)
        dists = alpha_solution_distances(0.0, u0, path_bank(3, DT), spec,
                                         CFG, alphas=(0.4, 0.2, 0.1))
        assert all(d > 0.0 for d in dists)
        assert dists[0] > dists[1] > dists[2]
