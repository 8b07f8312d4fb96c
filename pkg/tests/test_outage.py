import itertools
import math

import numpy as np
import pytest

from conftest import random_topology
from coopsim.outage import (Cut, IndexOutOfSubsetError, OutageQuery,
                            _capacity_batch, _p_omega, approx_capacity,
                            best_subnetwork, cut_outage_analytic, cut_value,
                            direct_outage, outage_monte_carlo, outage_sweep,
                            outage_upper_bound, p_omega_by_term_expansion,
                            required_snr_db)
from coopsim.rng import named_rng
from coopsim.topology import ChannelRealization, Topology, sample_channel_batch


def real(h_sd2, h2=(), g2=()):
    return ChannelRealization(h_sd2=h_sd2, h2=tuple(h2), g2=tuple(g2))


class TestCutValue:
    def test_hand_evaluation(self):
        # max(log2(4), log2(8) + log2(2)) = max(2, 4) = 4
        c = real(3.0, (7.0, 9.9), (9.9, 1.0))
        assert cut_value(c, Cut({1}), (1, 2)) == pytest.approx(4.0)

    def test_empty_omega_uses_destination_side_only(self):
        c = real(1.0, (0.0,), (3.0,))
        assert cut_value(c, Cut(()), (1,)) == pytest.approx(2.0)

    def test_all_zero_channels(self):
        c = real(0.0, (0.0,), (0.0,))
        assert cut_value(c, Cut({1}), (1,)) == 0.0
        assert cut_value(c, Cut(()), (1,)) == 0.0

    def test_index_out_of_subset(self):
        c = real(1.0, (1.0, 1.0), (1.0, 1.0))
        with pytest.raises(IndexOutOfSubsetError):
            cut_value(c, Cut({2}), (1,))


class TestApproxCapacity:
    def test_single_relay_identity(self, rng):
        # min over the two cuts equals max(C_sd, min(C_sr, C_rd))
        for _ in range(200):
            c = real(*rng.exponential(1.0, 3)[:1],
                     (float(rng.exponential(1.0)),), (float(rng.exponential(1.0)),))
            expected = max(math.log2(1 + c.h_sd2),
                           min(math.log2(1 + c.h2[0]), math.log2(1 + c.g2[0])))
            assert approx_capacity(c, (1,)) == pytest.approx(expected)

    def test_null_relay_leaves_capacity_unchanged(self, rng):
        for _ in range(50):
            h = float(rng.exponential(1.0))
            h1, g1 = float(rng.exponential(1.0)), float(rng.exponential(1.0))
            base = approx_capacity(real(h, (h1,), (g1,)), (1,))
            extended = approx_capacity(real(h, (h1, 0.0), (g1, 0.0)), (1, 2))
            assert extended == pytest.approx(base)

    def test_empty_subset_is_direct_capacity(self):
        assert approx_capacity(real(3.0), ()) == pytest.approx(2.0)

    def test_relay_addition_monotonicity(self, rng):
        for _ in range(100):
            c = real(float(rng.exponential(1.0)),
                     tuple(rng.exponential(1.0, 3)), tuple(rng.exponential(1.0, 3)))
            subsets = [(), (1,), (1, 2), (1, 2, 3), (2,), (2, 3)]
            for s1 in subsets:
                for s2 in subsets:
                    if set(s1) <= set(s2):
                        assert approx_capacity(c, s1) <= approx_capacity(c, s2) + 1e-12

    def test_batch_matches_scalar(self, rng):
        t = random_topology(rng, 3)
        n = 500
        h_sd2, h2, g2 = sample_channel_batch(t, rng, n)
        for subset in [(), (2,), (1, 3), (1, 2, 3)]:
            batch = _capacity_batch(h_sd2, h2, g2, subset)
            for i in range(0, n, 97):
                c = real(float(h_sd2[i]), tuple(h2[i]), tuple(g2[i]))
                assert batch[i] == pytest.approx(approx_capacity(c, subset))


class TestDirectOutage:
    def test_closed_form_values(self):
        assert direct_outage(1.0, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-9)
        assert direct_outage(0.01, 1.0) == pytest.approx(1 - math.exp(-0.01), abs=1e-9)
        assert direct_outage(0.01, 1.0) == pytest.approx(0.00995, abs=1e-5)

    def test_vanishes_at_small_rate(self):
        assert direct_outage(5.0, 1e-12) < 1e-9

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            direct_outage(-1.0, 1.0)
        with pytest.raises(ValueError):
            direct_outage(1.0, 0.0)


class TestCutOutageAnalytic:
    def test_matches_monte_carlo_one_one(self):
        # |omega| = 1 vs |omega^c| = 1, all unit rates, R = 1
        t = Topology.from_snr(1.0, [1.0, 1.0], [1.0, 1.0])
        q = OutageQuery(rate=1.0, subset=(1, 2))
        p = cut_outage_analytic(t, q, Cut({1}))
        rng = np.random.default_rng(5)
        n = 10 ** 6
        x = rng.exponential(1.0, n)
        y = rng.exponential(1.0, n)
        mc = np.mean(np.log2(1 + x) + np.log2(1 + y) < 1.0)
        se = math.sqrt(mc * (1 - mc) / n)
        assert 0.0 <= p <= 1.0
        assert abs(p - mc) <= 3 * se

    def test_empty_omega_closed_form(self):
        t = Topology.from_snr(1.0, [1.0], [1.0])
        q = OutageQuery(rate=1.0, subset=(1,))
        p = cut_outage_analytic(t, q, Cut(()))
        assert p == pytest.approx(1 - math.exp(-1), abs=1e-9)

    def test_empty_complement_closed_form(self):
        t = Topology.from_snr(1.0, [2.0], [1.0])
        q = OutageQuery(rate=1.0, subset=(1,))
        p = cut_outage_analytic(t, q, Cut({1}))
        assert p == pytest.approx(1 - math.exp(-0.5), abs=1e-9)

    def test_small_rate_limit(self):
        t = Topology.from_snr(1.0, [1.0, 1.0], [1.0, 1.0])
        q = OutageQuery(rate=1e-9, subset=(1, 2))
        assert cut_outage_analytic(t, q, Cut({1})) < 1e-6

    def test_quadrature_consistency_under_tolerance_halving(self):
        t = Topology.from_snr(0.8, [1.5, 0.4], [2.0, 0.7])
        for tol in (1e-6, 1e-8):
            q1 = OutageQuery(rate=1.3, subset=(1, 2), quadrature_rel_tol=tol)
            q2 = OutageQuery(rate=1.3, subset=(1, 2), quadrature_rel_tol=tol / 2)
            a = cut_outage_analytic(t, q1, Cut({1, 2}))
            b = cut_outage_analytic(t, q2, Cut({1, 2}))
            assert abs(a - b) <= tol * max(a, b)

    def test_term_expansion_cross_check(self):
        # the signed-exponential expansion must agree for distinct rates
        cases = [((0.7, 1.3), (0.5, 2.0), 1.5),
                 ((1.1,), (0.3, 0.9), 0.8),
                 ((0.25, 2.5, 0.9), (1.7,), 2.0)]
        for lams_l, lams_r, rate in cases:
            direct = _p_omega(lams_l, lams_r, rate, 1e-10)
            expanded = p_omega_by_term_expansion(lams_l, lams_r, rate, 1e-10)
            assert direct == pytest.approx(expanded, rel=1e-6, abs=1e-12)

    def test_boundary_concentrated_density(self):
        # very weak links: the density spikes near zero but mass must be kept
        p = _p_omega((1000.0,), (1000.0,), 1.0, 1e-8)
        rng = np.random.default_rng(11)
        n = 10 ** 6
        x = rng.exponential(1e-3, n)
        y = rng.exponential(1e-3, n)
        mc = np.mean(np.log2(1 + x) + np.log2(1 + y) < 1.0)
        assert p == pytest.approx(mc, abs=3e-3)


class TestUpperBound:
    def test_dominates_monte_carlo_on_random_topologies(self, rng):
        for i in range(10):
            t = random_topology(rng)
            for rate in (0.5, 1.0, 2.0):
                q = OutageQuery(rate=rate, subset=tuple(range(1, t.n_relays + 1)),
                                mc_samples=20_000)
                bound = outage_upper_bound(t, q)
                mc, se = outage_monte_carlo(t, q, named_rng(i, "ub", rate))
                assert bound >= mc - 3 * se

    def test_monotone_in_rate(self):
        t = Topology.from_snr(1.0, [2.0, 0.5], [1.0, 1.5])
        values = [outage_upper_bound(t, OutageQuery(rate=r, subset=(1, 2)))
                  for r in (0.25, 0.5, 1.0, 2.0, 4.0)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def test_empty_subset_equals_direct_outage(self):
        t = Topology.from_snr(0.7, [1.0], [1.0])
        q = OutageQuery(rate=1.2, subset=())
        assert outage_upper_bound(t, q) == pytest.approx(
            direct_outage(t.lambda_sd, 1.2), abs=1e-12)


class TestMonteCarlo:
    def test_tiny_rate_gives_zero(self):
        t = Topology.from_snr(1.0, [1.0], [1.0])
        q = OutageQuery(rate=1e-9, subset=(1,), mc_samples=10_000)
        est, se = outage_monte_carlo(t, q, named_rng(0, "mc0"))
        assert est == 0.0
        assert se == 0.0

    def test_single_relay_symmetric_closed_form(self):
        # capacity = max(C_sd, min(C_sr, C_rd)); with all lambda = 1, R = 1:
        # P = Pr{h_sd2 < 1} * Pr{min < 1} = (1 - e^-1)(1 - e^-2)
        t = Topology.from_snr(1.0, [1.0], [1.0])
        q = OutageQuery(rate=1.0, subset=(1,), mc_samples=10 ** 6)
        est, se = outage_monte_carlo(t, q, named_rng(0, "mc1"))
        closed = (1 - math.exp(-1)) * (1 - math.exp(-2))
        assert abs(est - closed) <= 3 * se

    def test_standard_error_scaling(self):
        t = Topology.from_snr(1.0, [1.0], [1.0])
        q1 = OutageQuery(rate=1.0, subset=(1,), mc_samples=10_000)
        q2 = OutageQuery(rate=1.0, subset=(1,), mc_samples=40_000)
        _, se1 = outage_monte_carlo(t, q1, named_rng(0, "se1"))
        _, se2 = outage_monte_carlo(t, q2, named_rng(0, "se2"))
        assert se2 == pytest.approx(se1 / 2, rel=0.1)

    def test_requires_minimum_samples(self):
        t = Topology.from_snr(1.0, [1.0], [1.0])
        q = OutageQuery(rate=1.0, subset=(1,), mc_samples=99)
        with pytest.raises(ValueError):
            outage_monte_carlo(t, q, named_rng(0, "mc"))

    def test_subset_beyond_topology_rejected(self):
        t = Topology.from_snr(1.0, [1.0], [1.0])
        q = OutageQuery(rate=1.0, subset=(1, 2))
        with pytest.raises(ValueError):
            outage_monte_carlo(t, q, named_rng(0, "mc"))
        with pytest.raises(ValueError):
            outage_upper_bound(t, q)


class TestBestSubnetwork:
    def test_symmetric_tie_break_is_lexicographic(self):
        t = Topology.from_snr(1.0, [1.0] * 4, [1.0] * 4)
        subset, _ = best_subnetwork(t, 1, 1.0)
        assert subset == (1,)
        subset, _ = best_subnetwork(t, 2, 1.0)
        assert subset == (1, 2)

    def test_k_zero_returns_direct_outage(self):
        t = Topology.from_snr(0.9, [1.0, 1.0], [1.0, 1.0])
        subset, value = best_subnetwork(t, 0, 1.0)
        assert subset == ()
        assert value == pytest.approx(direct_outage(t.lambda_sd, 1.0), abs=1e-12)

    def test_clustered_argmin_matches_brute_force_monte_carlo(self):
        # relay 2 is strong on both hops; an independent shared-draw brute
        # force over all C(3,k) subsets must agree with the search
        t = Topology.from_snr(0.1, [0.3, 5.0, 0.4], [0.3, 5.0, 0.5],
                              label="clustered3")
        for k in (1, 2):
            subset, _ = best_subnetwork(t, k, 1.0, method="montecarlo",
                                        mc_samples=40_000,
                                        rng=named_rng(3, "argmin", k))
            h_sd2, h2, g2 = sample_channel_batch(t, named_rng(7, "oracle", k),
                                                 200_000)
            brute = min(
                itertools.combinations(range(1, 4), k),
                key=lambda s: float(np.mean(_capacity_batch(h_sd2, h2, g2, s) < 1.0)))
            assert subset == brute

    def test_rejects_bad_k(self):
        t = Topology.from_snr(1.0, [1.0], [1.0])
        with pytest.raises(ValueError):
            best_subnetwork(t, 2, 1.0)


class TestSweep:
    def test_outage_nonincreasing_in_k_with_shared_draws(self):
        template = Topology.from_snr(0.2, [1.0, 0.8, 0.5, 0.3],
                                     [1.0, 0.8, 0.5, 0.3], label="sweep4")
        rows = outage_sweep(template, [0, 1, 2, 3], 1.0, [0.0, 6.0, 12.0],
                            method="montecarlo", mc_samples=20_000, seed=5)
        by_snr = {}
        for r in rows:
            by_snr.setdefault(r["snr_db"], []).append((r["k"], r["outage"]))
        for snr_db, pairs in by_snr.items():
            ordered = [v for _, v in sorted(pairs)]
            assert all(a >= b - 1e-12 for a, b in zip(ordered, ordered[1:])), \
                f"not monotone at {snr_db} dB: {ordered}"

    def test_rows_shape_and_grid_validation(self):
        template = Topology.from_snr(0.5, [1.0], [1.0])
        rows = outage_sweep(template, [0, 1], 1.0, [0.0, 10.0])
        assert len(rows) == 4
        assert {r["method"] for r in rows} == {"analytic"}
        with pytest.raises(ValueError):
            outage_sweep(template, [0], 1.0, [10.0, 0.0])

    def test_required_snr_bisection(self):
        template = Topology.from_snr(0.5, [1.0, 1.0], [1.0, 1.0])
        snr = required_snr_db(template, 1, 1.0, 1e-2, iterations=30)
        scaled = template.scaled(10 ** (snr / 10.0))
        _, value = best_subnetwork(scaled, 1, 1.0)
        assert value == pytest.approx(1e-2, rel=1e-3)
