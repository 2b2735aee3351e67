import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mftasep.core import ModelParams, check_reachability_invariant
from mftasep.engine import SimConfig, flux_estimates, simulate
from mftasep.theory import (CASE_A, CASE_B, CASE_NEITHER, FluxTable, FluxValue, ProbeResult,
                            StateSpaceTooLarge, c_alpha, classify_case, closed_form_flux,
                            density_for_flux, estimate_alpha_star, exact_stationary,
                            phi_single_floor, reachable_states, zeta)

# phi(0.3, 2) from the large-N runs; the rest follow from closed forms or saturation
TABLE = {(0.3, 2): 0.2484, (0.45, 2): 0.25, (0.3, 3): 0.25, (0.4, 2): 0.25}


@pytest.fixture
def table():
    return FluxTable(TABLE)


class TestSingleFloor:
    @pytest.mark.parametrize("a,phi", [(0.2, 0.16), (0.5, 0.25), (1.0, 0.25), (0.6, 0.25)])
    def test_values(self, a, phi):
        assert phi_single_floor(a) == pytest.approx(phi)

    @pytest.mark.parametrize("a", [0.0, -0.1, 1.01])
    def test_range(self, a):
        with pytest.raises(ValueError):
            phi_single_floor(a)

    def test_density_inverse(self):
        assert density_for_flux(0.21) == pytest.approx(0.3)
        assert density_for_flux(0.25) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            density_for_flux(0.3)


class TestExact:
    def test_two_sites(self):
        sol = exact_stationary(ModelParams(1, 1, 1, 2))
        expected = {(0, 0): 0.2, (0, 1): 0.2, (1, 0): 0.4, (1, 1): 0.2}
        for s, p in expected.items():
            assert sol.probability(s) == pytest.approx(p, abs=1e-12)
        assert sol.flux == pytest.approx(0.4, abs=1e-12)

    def test_one_site(self):
        sol = exact_stationary(ModelParams(1, 1, 1, 1))
        assert sol.probability((0,)) == pytest.approx(0.5)
        assert sol.flux == pytest.approx(0.5)

    def test_one_site_two_floors(self):
        # birth-death chain 0-1-2 with up-rate 0.7, down-rate 0.9: flux 100.8 / 193
        sol = exact_stationary(ModelParams(0.7, 0.9, 2, 1))
        assert sol.flux == pytest.approx(100.8 / 193, abs=1e-12)

    # exact open-boundary currents from the matrix-product normalization Z_{N-1} / Z_N
    @pytest.mark.parametrize("n,a,b,current", [
        (3, 0.3, 0.7, 0.21),
        (4, 0.5, 1.0, 5 / 18),
        (5, 0.4, 0.6, 0.24),
    ])
    def test_single_floor_currents(self, n, a, b, current):
        assert exact_stationary(ModelParams(a, b, 1, n)).flux == pytest.approx(current, abs=1e-12)

    @given(st.integers(1, 5), st.integers(1, 3), st.floats(0.05, 1), st.floats(0.05, 1))
    def test_self_consistency(self, n, c, a, b):
        sol = exact_stationary(ModelParams(a, b, c, n))
        assert sol.pi.sum() == pytest.approx(1.0)
        assert sol.flux_spread() < 1e-9
        assert all(check_reachability_invariant(s) for s in sol.states)

    def test_cap(self):
        with pytest.raises(StateSpaceTooLarge) as err:
            exact_stationary(ModelParams(1, 1, 2, 8), cap=100)
        assert err.value.count > 100

    def test_state_counts(self):
        assert len(reachable_states(3, 1)) == 8
        assert len(reachable_states(2, 2)) == 8  # all but (0, 2)

    def test_against_simulation(self):
        params = ModelParams(0.7, 0.9, 2, 3)
        exact = exact_stationary(params).flux
        res = simulate(params, SimConfig(duration=2e5, seed=21))
        est = flux_estimates(res.counters, params.alpha)
        assert abs(est.phi_entry - exact) <= 3 * est.stderr


class TestZeta:
    def test_saturated_boundaries(self, table):
        for c in (1, 2, 3, 5):
            z = zeta(1, 1, c, table)
            assert z.zeta == 0.25 and z.l_star == (1, c)

    def test_single_floor(self, table):
        z = zeta(0.3, 0.4, 1, table)
        assert z.zeta == pytest.approx(min(0.21, 0.24))

    def test_beta_limited_example(self, table):
        z = zeta(0.3, 0.4, 2, table)
        assert z.zeta == pytest.approx(0.24) and z.l_star == (1, 1)

    @given(st.floats(0.26, 0.5), st.floats(0.26, 0.5), st.integers(1, 6), st.floats(0.0, 0.02))
    def test_symmetric_and_contiguous(self, a, b, c, slope):
        # any provider monotone in the floor count
        def phi(r, k):
            v = min(0.25, r * (1 - r) + slope * (k - 1))
            return FluxValue(v, 0.0, "synthetic", plateau=v >= 0.25 - 1e-12)
        z1, z2 = zeta(a, b, c, phi), zeta(b, a, c, phi)
        assert z1.zeta == pytest.approx(z2.zeta)
        lo, hi = z1.l_star
        best = [i + 1 for i, t in enumerate(z1.terms) if abs(t - z1.zeta) <= 1e-12]
        assert set(best) <= set(range(lo, hi + 1))


class TestCAlpha:
    @pytest.mark.parametrize("a,expected", [(0.6, 1), (0.45, 2), (0.3, 3), (0.2, math.inf),
                                            (0.25, math.inf)])
    def test_values(self, table, a, expected):
        assert c_alpha(a, table, 5) == expected

    def test_cap_and_errors(self, table):
        assert c_alpha(0.3, table, 2) == math.inf
        with pytest.raises(ValueError):
            c_alpha(0.3, table, 0)

    @given(st.lists(st.floats(0.26, 1.0), min_size=2, max_size=6))
    def test_nonincreasing(self, rates):
        def phi(r, k):
            return FluxValue(0.25, 0, "synthetic", plateau=r * k >= 1.0)
        rates = sorted(rates)
        vals = [c_alpha(r, phi, 10) for r in rates]
        assert all(x >= y for x, y in zip(vals, vals[1:]))


class TestClassify:
    def test_case_a_floor_two(self, table):
        k = classify_case(0.3, 0.4, 3, table)
        assert k.case == CASE_A and k.l_star == (2, 2)
        assert k.predicted_floors == [2]
        assert k.predicted_density[2] == pytest.approx(0.46, abs=0.005)
        assert k.limited_by == "particles"

    def test_case_a_hole_limited(self, table):
        k = classify_case(0.3, 0.4, 2, table)
        assert k.case == CASE_A and k.predicted_density[1] == pytest.approx(0.6)
        assert k.limited_by == "holes"

    def test_case_b(self, table):
        k = classify_case(0.3, 0.4, 5, table)
        assert k.case == CASE_B and k.predicted_floors == [2, 3]
        assert all(s == pytest.approx(0.5) for _, s in k.predicted_zones)
        k = classify_case(0.3, 0.4, 4, table)
        assert k.case == CASE_B and k.predicted_floors == [2]
        k = classify_case(1, 1, 3, table)
        assert k.case == CASE_B and k.predicted_floors == [1, 2, 3]
        assert k.predicted_density == {1: 0.5, 2: 0.5, 3: 0.5}

    def test_neither(self, table):
        k = classify_case(0.4, 0.4, 1, table)
        assert k.case == CASE_NEITHER and not k.predicted_zones

    def test_labelled_conjectural(self, table):
        assert classify_case(1, 1, 2, table).label == "conjectured prediction"

    def test_tie_beyond_error_bars(self):
        t = FluxTable({(0.3, 2): FluxValue(0.2395, 0.001, "simulated", plateau=False), (0.4, 2): 0.25})
        k = classify_case(0.3, 0.4, 2, t)   # 0.2395 +- 0.001 against 0.24: unresolved
        assert k.case == CASE_NEITHER

    def test_provider_failure_propagates(self):
        with pytest.raises(LookupError):
            classify_case(0.3, 1.0, 2, FluxTable())


class TestProviders:
    def test_closed_form(self):
        assert closed_form_flux(0.2, 1).value == pytest.approx(0.16)
        assert closed_form_flux(0.7, 3).is_plateau()
        with pytest.raises(LookupError):
            closed_form_flux(0.3, 2)

    def test_inference_and_fallback(self, table):
        assert table(0.3, 5).is_plateau()           # more floors
        assert table(0.48, 2).is_plateau()          # larger rate
        calls = []

        def fallback(r, k):
            calls.append((r, k))
            return FluxValue(0.24, 0.001, "simulated", plateau=False)
        t = FluxTable(fallback=fallback)
        t(0.35, 2)
        t(0.35, 2)
        assert calls == [(0.35, 2)]

    def test_eps_band_without_flag(self):
        assert FluxValue(0.2460).is_plateau()
        assert not FluxValue(0.2440).is_plateau()

    def test_violations(self):
        t = FluxTable({(0.3, 2): FluxValue(0.249, 0.0001, "s", plateau=False),
                       (0.3, 3): FluxValue(0.240, 0.0001, "s", plateau=False)})
        assert ((0.3, 2), "decreases with floors") in t.violations()
        assert not FluxTable(TABLE).violations()


def test_alpha_star_bisection_with_fake_probe():
    def probe(rate, c, k):
        sat = rate >= 0.37
        return ProbeResult(rate, c, 0.25, 0.0, 0.5 if sat else 0.4, 0.001, 1, sat, True)
    est = estimate_alpha_star(2, tolerance=0.01, probe=probe)
    assert est.lo < 0.37 <= est.hi and est.hi - est.lo <= 0.01
    assert est.determinate and len(est.probes) == 5
    est = estimate_alpha_star(1, tolerance=0.01, probe=lambda r, c, k: ProbeResult(
        r, c, r * (1 - r), 0, r, 0.001, 1, False, True))
    assert est.hi == 0.5
    with pytest.raises(ValueError):
        estimate_alpha_star(0)
