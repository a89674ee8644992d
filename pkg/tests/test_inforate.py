import numpy as np
import pytest

from conftest import single_state_model
from markovsd import fit_mu
from markovsd.inforate import (InforateError, MonteCarlo, burn_in_length,
                               capacity_from_mu, default_mu_grid,
                               estimate_level_capacity, estimate_level_rate,
                               overall_rates, pilot_utility, rate_from_mu,
                               read_mu_csv, write_mu_csv)
from markovsd.interleaver import WeightDistribution, rectangular, sample_random
from oracles import PathEnumerator


def biawgn_capacity(n0):
    """Binary-input capacity of y = x + w, w ~ CN(0, n0), by quadrature."""
    mean = 4.0 / n0
    sigma = np.sqrt(2.0 * mean)
    t, w = np.polynomial.hermite.hermgauss(80)
    llr = mean + sigma * np.sqrt(2.0) * t
    return 1.0 - (w @ (np.logaddexp(0.0, -llr) / np.log(2.0))) / np.sqrt(np.pi)


class TestLevelRate:
    def test_single_state_no_information_at_huge_noise(self):
        model = single_state_model(10.0 ** 6.0)  # -60 dB
        mc = MonteCarlo(block_len=4000, blocks=10, seed=1)
        est = estimate_level_rate(model, rectangular(1, 4000), 1, mc)
        assert abs(est.mean) <= 3 * est.std_error + 1e-6

    def test_single_state_full_information_at_tiny_noise(self):
        model = single_state_model(1e-4)  # +40 dB
        mc = MonteCarlo(block_len=2000, blocks=10, seed=2)
        est = estimate_level_rate(model, rectangular(1, 2000), 1, mc)
        assert est.mean > 1.0 - 3 * est.std_error - 1e-6

    def test_single_state_matches_quadrature(self):
        n0 = 10.0 ** -0.3
        model = single_state_model(n0)
        mc = MonteCarlo(block_len=5000, blocks=20, seed=3)
        est = estimate_level_rate(model, rectangular(1, 5000), 1, mc)
        assert abs(est.mean - biawgn_capacity(n0)) <= 3 * est.std_error

    def test_empty_positions_rejected(self, small_model):
        burn = burn_in_length(small_model, cap=200)
        assert burn > 0
        n = 2 * burn  # burn-in eats the whole block
        mc = MonteCarlo(block_len=n, blocks=2, seed=4, burn_in_cap=200)
        with pytest.raises(InforateError):
            estimate_level_rate(small_model, rectangular(2, n), 1, mc)


class TestLevelCapacity:
    def test_single_state_capacity_equals_rate(self):
        model = single_state_model(0.5)
        mc = MonteCarlo(block_len=3000, blocks=12, seed=5)
        pat = rectangular(1, 3000)
        r = estimate_level_rate(model, pat, 1, mc)
        c = estimate_level_capacity(model, pat, 1, mc)
        assert abs(c.mean - r.mean) <= 2 * np.hypot(c.std_error, r.std_error) + 1e-9

    def test_capacity_dominates_rate(self, small_model):
        mc = MonteCarlo(block_len=2000, blocks=10, seed=6)
        pat = rectangular(2, 2000)
        for k in (1, 2):
            r = estimate_level_rate(small_model, pat, k, mc)
            c = estimate_level_capacity(small_model, pat, k, mc)
            se = np.hypot(c.std_error, r.std_error)
            assert c.mean >= r.mean - 2 * se
            assert r.mean >= -2 * r.std_error
            assert c.mean <= 1 + 2 * c.std_error

    def test_exact_mutual_information_small_blocks(self):
        # on 8-symbol blocks without trimming, the causal estimator averages
        # the exact joint posterior: check the telescoping identity per
        # realization and the Monte-Carlo mean against enumeration
        from markovsd.fsmc import StateModel, simulate_blocks
        from markovsd.trellis import causal_llr, info_bits_from_llr

        P = np.array([[0.85, 0.3], [0.15, 0.7]])
        evals, evecs = np.linalg.eig(P)
        stat = np.real(evecs[:, np.argmax(np.real(evals))])
        stat /= stat.sum()
        model = StateModel(np.array([0.9 + 0.2j, -0.4 + 1.0j]), P, stat,
                           noise_n0=0.7)
        pat = rectangular(2, 8)
        positions = pat.positions(2)
        mc = MonteCarlo(block_len=8, blocks=400, burn_in_cap=0, seed=7)
        est = estimate_level_capacity(model, pat, 2, mc)

        oracle_vals = []
        for b in range(200):
            s, x, y = simulate_blocks(model, 8, mc.seed, [b])
            training = np.where(pat.assignment < 2, x[0], 0)
            enum = PathEnumerator(model, y[0], training)
            joint = enum.joint_input_posterior_log2(positions, x[0][positions])
            oracle_vals.append(1.0 + joint / len(positions))
            # telescoping: product of causal per-bit posteriors = joint posterior
            llr = causal_llr(model, y[0], training, positions, x[0][positions])
            chain = -info_bits_from_llr(llr, x[0][positions]).sum()
            assert abs(chain - joint) < 1e-10
        oracle = np.mean(oracle_vals)
        oracle_se = np.std(oracle_vals, ddof=1) / np.sqrt(len(oracle_vals))
        assert abs(est.mean - oracle) <= 3 * np.hypot(est.std_error, oracle_se)


class TestOverallRates:
    def test_single_level_passthrough(self, small_model):
        mc = MonteCarlo(block_len=2000, blocks=8, seed=8)
        pat = rectangular(1, 2000)
        res = overall_rates(small_model, pat, mc)
        assert res.rate.mean == res.rate_per_level[0].mean
        assert res.capacity.mean == res.capacity_per_level[0].mean

    def test_capacity_interleaver_invariant(self, small_model):
        mc = MonteCarlo(block_len=4000, blocks=16, seed=9)
        c2 = overall_rates(small_model, rectangular(2, 4000), mc).capacity
        c4 = overall_rates(small_model, rectangular(4, 4000), mc).capacity
        assert abs(c2.mean - c4.mean) <= 2 * np.hypot(c2.std_error, c4.std_error)


class TestPilotUtility:
    def test_single_state_flat(self):
        model = single_state_model(0.5)
        mc = MonteCarlo(block_len=2000, blocks=10, seed=10)
        curve = pilot_utility(model, np.array([0.0, 0.3, 0.7, 1.0]), mc)
        for v, e in zip(curve.values[1:], curve.errors[1:]):
            assert abs(v - curve.values[0]) <= 2 * np.hypot(e, curve.errors[0])

    def test_monotone_within_noise(self, small_model):
        mc = MonteCarlo(block_len=2000, blocks=12, seed=11)
        curve = pilot_utility(small_model, np.linspace(0, 1, 6), mc)
        for i in range(len(curve.grid) - 1):
            se = np.hypot(curve.errors[i], curve.errors[i + 1])
            assert curve.values[i + 1] >= curve.values[i] - 2 * se

    def test_origin_equals_untrained_level_rate(self, small_model):
        mc_a = MonteCarlo(block_len=2500, blocks=12, seed=12)
        mc_b = MonteCarlo(block_len=2500, blocks=12, seed=13)
        curve = pilot_utility(small_model, np.array([0.0, 0.5]), mc_a)
        r1 = estimate_level_rate(small_model, rectangular(2, 2500), 1, mc_b)
        se = np.hypot(curve.errors[0], r1.std_error)
        assert abs(curve.values[0] - r1.mean) <= 2 * se + 1e-9

    def test_monotone_info_gain_from_training(self, small_model):
        # enlarging the training set never loses information (same seed:
        # paired comparison on identical realizations)
        from markovsd import fsmc, trellis
        from markovsd.inforate import _interior

        N, B = 2000, 10
        burn = burn_in_length(small_model)
        rng = np.random.default_rng(14)
        base = rng.random(N) < 0.1
        extra = base.copy()
        extra[np.flatnonzero(~base)[rng.integers(0, (~base).sum())]] = True
        measure = _interior(N, burn) & ~extra

        means = []
        for mask in (base, extra):
            _, x, y = fsmc.simulate_blocks(small_model, N, 15, range(B))
            training = np.where(mask[None, :], x, 0)
            llr = trellis._extrinsic_llr_batch(small_model, y, training)
            vals = trellis.info_bits_from_llr(llr, x)
            means.append(1.0 - vals[:, measure].mean(axis=1))
        diff = means[1] - means[0]
        se = diff.std(ddof=1) / np.sqrt(B)
        assert diff.mean() >= -2 * se


class TestMuReconstruction:
    def setup_method(self):
        grid = default_mu_grid(21)
        self.mu = fit_mu((grid, np.sqrt(grid)))

    def test_single_level(self):
        assert rate_from_mu(self.mu, np.array([1.0])) == pytest.approx(float(self.mu(0.0)))
        _, overall, _ = capacity_from_mu(self.mu, np.array([1.0]))
        assert overall == pytest.approx(self.mu.integrate(0, 1))

    def test_uniform_riemann_bound(self):
        K = 256
        w = np.full(K, 1.0 / K)
        r = rate_from_mu(self.mu, w)
        total = self.mu.integrate(0, 1)
        max_slope = np.max(self.mu.derivative(np.linspace(1e-4, 1, 4096)))
        assert abs(r - total) <= 2.0 / K * max_slope

    def test_stair_dominance(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            w = rng.dirichlet(np.ones(rng.integers(2, 7)))
            r = rate_from_mu(self.mu, w)
            _, overall, _ = capacity_from_mu(self.mu, w)
            assert r <= overall + 1e-12

    def test_zero_weight_level_flagged(self):
        per_level, _, flagged = capacity_from_mu(self.mu, np.array([0.5, 0.0, 0.5]))
        assert flagged == [2]
        assert per_level[1] == pytest.approx(float(self.mu(0.5)))

    def test_level_rate_matches_mu_point(self, small_model):
        # measured rate of a sampled random pattern sits on the curve
        mc = MonteCarlo(block_len=4000, blocks=16, seed=17)
        curve = pilot_utility(small_model, default_mu_grid(9), mc)
        mu = fit_mu(curve)
        w = WeightDistribution(np.array([0.3, 0.7]))
        pat = sample_random(w, 4000, seed=18)
        mc2 = MonteCarlo(block_len=4000, blocks=16, seed=19)
        est = estimate_level_rate(small_model, pat, 2, mc2)
        predicted = float(mu(0.3))
        se = np.hypot(est.std_error, np.interp(0.3, curve.grid, curve.errors))
        assert abs(est.mean - predicted) <= 3 * se


class TestCsv:
    def test_mu_round_trip(self, tmp_path, small_model):
        mc = MonteCarlo(block_len=1000, blocks=4, seed=20)
        curve = pilot_utility(small_model, np.array([0.0, 0.5, 1.0]), mc)
        path = tmp_path / "mu.csv"
        write_mu_csv(curve, path)
        back = read_mu_csv(path)
        assert np.array_equal(back.grid, curve.grid)
        assert np.array_equal(back.values, curve.values)
        assert np.array_equal(back.errors, curve.errors)

    def test_burn_in_bounds(self, small_model):
        b = burn_in_length(small_model, cap=200)
        assert 0 <= b <= 200
        assert burn_in_length(single_state_model(0.5)) == 0
