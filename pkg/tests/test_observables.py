import numpy as np
import pytest

from mftasep.core import ModelParams
from mftasep.engine import SimConfig, simulate
from mftasep.observables import (DensityProfile, bernoulli_compare, boundary_positions,
                                 bulk_density, density_profile, dominant_zone,
                                 effective_floor_estimate, on_floor, window_density,
                                 zone_statistics)


def profile_of(states, c):
    return DensityProfile.from_states(np.asarray(states), c)


def test_profile_from_counters_sums():
    res = simulate(ModelParams(0.6, 0.8, 2, 30), SimConfig(duration=2e3))
    prof = density_profile(res.counters)
    np.testing.assert_allclose(prof.level_occupation.sum(axis=1), 1.0)
    assert np.all((prof.rho >= 0) & (prof.rho <= 2))


def test_full_state_held():
    res = simulate(ModelParams(0.01, 0.01, 2, 4),
                   SimConfig(duration=1e-6, burn_in=0, initial_state=(2, 2, 2, 2)))
    prof = density_profile(res.counters)
    np.testing.assert_allclose(prof.rho, 2.0)


def test_single_floor_bulk_density():
    res = simulate(ModelParams(0.2, 1.0, 1, 400), SimConfig(duration=2e5, seed=5))
    prof = density_profile(res.counters)
    assert window_density(prof, (100, 300)) == pytest.approx(0.2, abs=0.01)


def test_profile_from_snapshots_converges_to_counters():
    res = simulate(ModelParams(0.7, 0.9, 2, 5),
                   SimConfig(duration=2e5, burn_in=2e4, snapshot_stride=2.0, seed=8))
    a = density_profile(res.counters)
    b = DensityProfile.from_states(res.trace.after(2e4).states, 2)
    assert np.abs(a.level_occupation - b.level_occupation).max() < 0.01


def test_flipped_view():
    prof = profile_of([[2, 1, 0]], 2)
    flip = prof.flipped()
    np.testing.assert_allclose(flip.rho, [2, 1, 0])
    np.testing.assert_allclose(flip.flipped().rho, prof.rho)


class TestZones:
    def test_single_floor_one_zone(self):
        states = np.random.default_rng(0).integers(0, 2, size=(50, 20))
        z = zone_statistics(states, 1)
        assert z.zone_sizes[0] == pytest.approx(1.0)
        assert z.boundary_sd[0] == 0.0
        assert z.classification(1) == "large stable"

    def test_two_blocks(self):
        row = [2] * 6 + [1] * 4
        z = zone_statistics(np.array([row] * 5), 2)
        assert z.mean_a[1] == pytest.approx(1.0) and z.mean_a[2] == pytest.approx(0.6)
        assert z.zone_sizes.sum() == pytest.approx(1.0)
        assert z.large_stable_floors() == [1, 2] or z.zone_sizes[0] == 0
        row = [2] * 6 + [0] * 4
        z = zone_statistics(np.array([row] * 5), 2)
        np.testing.assert_allclose(z.zone_sizes, [0.4, 0.6])
        assert z.zone_range(2) == (1, 6) and z.zone_range(1) == (7, 10)

    def test_rejects(self):
        with pytest.raises(ValueError):
            zone_statistics(np.zeros((0, 4)), 2)
        with pytest.raises(ValueError):
            zone_statistics(np.array([[0, 2]]), 2)

    def test_boundary_positions(self):
        b = boundary_positions(np.array([[2, 2, 1, 0], [1, 0, 0, 0]]), 2)
        np.testing.assert_array_equal(b, [[4, 3, 2], [4, 1, 0]])

    def test_vanishing_and_unstable(self):
        z = zone_statistics(np.array([[2, 1] + [0] * 98] * 10), 2)
        assert z.classification(2) == "vanishing"
        assert z.classification(1) == "large stable"
        rng = np.random.default_rng(1)
        rows = [[1] * k + [0] * (100 - k) for k in rng.integers(5, 95, size=40)]
        z = zone_statistics(np.array(rows), 2)
        assert z.classification(2) == "large"
        assert z.classification(1) == "large"


class TestEffectiveFloor:
    def test_pinned_synthetic(self):
        for m in (1, 2, 3):
            rng = np.random.default_rng(m)
            states = (m - 1) + rng.integers(0, 2, size=(500, 30))
            est = effective_floor_estimate(profile_of(states, 3), (1, 30))
            assert est.floor == m and est.ok

    def test_all_empty_undefined(self):
        est = effective_floor_estimate(profile_of(np.zeros((10, 8), int), 2), (1, 8))
        assert est.floor is None and not est.ok

    def test_empty_window(self):
        with pytest.raises(ValueError):
            effective_floor_estimate(profile_of(np.zeros((2, 4), int), 1), (5, 3))


class TestBulkDensity:
    def test_synthetic_bernoulli(self):
        rng = np.random.default_rng(2)
        states = 1 + (rng.random((2000, 100)) < 0.37)
        prof = profile_of(states, 2)
        assert bulk_density(prof, 2) == pytest.approx(0.37, abs=0.01)

    def test_full_floor(self):
        prof = profile_of(np.ones((3, 10), int), 1)
        assert bulk_density(prof, 1) == pytest.approx(1.0)

    def test_dominant_zone_and_errors(self):
        prof = profile_of(np.array([[2, 2, 2, 1, 1, 0]]), 2)
        assert dominant_zone(prof, 2) == (1, 3)
        assert dominant_zone(prof, 1) == (4, 6)
        with pytest.raises(ValueError):
            bulk_density(prof, 2, trim=0.1, zone=(3, 2))
        with pytest.raises(ValueError):
            bulk_density(profile_of(np.zeros((2, 3), int), 2), 2)


class TestBernoulli:
    def test_self_check(self):
        rng = np.random.default_rng(4)
        x = (rng.random((20000, 30)) < 0.3).astype(int)
        rep = bernoulli_compare(x, 0.3)
        assert rep.max_marginal_dev < 0.015
        assert rep.max_pair_dev < 0.01

    def test_detects_correlation(self):
        rng = np.random.default_rng(5)
        col = (rng.random((5000, 1)) < 0.5).astype(int)
        rep = bernoulli_compare(np.repeat(col, 4, axis=1), 0.5)
        assert rep.max_pair_dev > 0.2

    def test_single_floor_tasep(self):
        res = simulate(ModelParams(0.3, 1.0, 1, 200),
                       SimConfig(duration=2e5, burn_in=2e4, snapshot_stride=20.0, seed=3))
        x = on_floor(res.trace.after(2e4).states, 1, (60, 140))
        rep = bernoulli_compare(x, 0.3)
        assert np.abs(rep.marginals.mean() - 0.3) < 0.02
        assert np.abs(rep.pair_cov).mean() < 0.01

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            bernoulli_compare(np.zeros(5), 0.5)
