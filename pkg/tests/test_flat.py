import math

import numpy as np
import pytest
from scipy import special

from oracles import beta_cdf_trapezoid, flat_posterior_m
from typimp.dataset import PairCase, pair_view
from typimp.errors import ConfigError, NumericError
from typimp.flat import (
    DEFAULT_EPS_A,
    DEFAULT_EPS_B,
    FlatHyper,
    closest_noise_prior,
    gibbs_sweep_flat,
    implication_probability,
    initial_flat_state,
    pair_log_likelihood,
    run_flat,
    sample_feature_priors,
    sample_language_noise,
    solve_noise_prior,
)
from typimp.synthgen import Planted, SynthSpec, generate_flat

# Beta(a, 19a) closest to putting half its mass below 0.1, found by a log-grid
# scan plus bounded minimisation run once before the build.
FROZEN_NOISE_A = 0.3352092705106653
FROZEN_NOISE_B = 6.36897613970264


def case(rows, features=(0, 1)):
    rows = np.asarray(rows, dtype=np.int8)
    return PairCase(tuple(features), np.arange(len(rows), dtype=np.int64), rows)


def frozen_run(c, pi, eps_n, seed, iterations=1000, burn_in=200):
    hyper = FlatHyper(iterations=iterations, burn_in=burn_in, seed=seed)
    rng = np.random.default_rng(seed)
    state = initial_flat_state(c, hyper, rng)
    state.pi[:] = pi
    state.eps_n[:] = eps_n
    return run_flat(c, hyper, init=state, frozen=True, rng=rng)


class TestNoisePrior:
    def test_requested_prior_is_infeasible(self):
        with pytest.raises(NumericError, match="attainable range"):
            solve_noise_prior(0.05, 0.10, 0.50)

    def test_infeasibility_confirmed_by_quadrature(self):
        # every Beta(a, 19a) puts well over half its mass below 0.1
        for a in np.logspace(-3, 2, 21):
            assert beta_cdf_trapezoid(a, 19.0 * a, 0.1) > 0.8

    def test_closest_prior_frozen_values(self):
        a, b = closest_noise_prior(0.05, 0.10, 0.50)
        assert a == pytest.approx(FROZEN_NOISE_A, rel=1e-6)
        assert b == pytest.approx(FROZEN_NOISE_B, rel=1e-6)
        assert a / (a + b) == pytest.approx(0.05, abs=1e-15)
        assert (DEFAULT_EPS_A, DEFAULT_EPS_B) == (a, b)

    def test_closest_prior_mass_by_quadrature(self):
        mass = beta_cdf_trapezoid(FROZEN_NOISE_A, FROZEN_NOISE_B, 0.1)
        assert mass == pytest.approx(special.betainc(FROZEN_NOISE_A, FROZEN_NOISE_B, 0.1), abs=1e-6)
        assert mass == pytest.approx(0.8333, abs=1e-3)

    def test_feasible_request_is_solved(self):
        a, b = solve_noise_prior(0.05, 0.10, 0.90)
        assert a / (a + b) == pytest.approx(0.05, abs=1e-12)
        assert beta_cdf_trapezoid(a, b, 0.1) == pytest.approx(0.9, abs=1e-6)

    def test_symmetric_request_gives_equal_parameters(self):
        a, b = solve_noise_prior(0.5, 0.5, 0.5)
        assert a == pytest.approx(b, rel=1e-12)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            solve_noise_prior(0.0, 0.1, 0.5)


class TestLikelihood:
    def test_violation_under_implication(self):
        assert pair_log_likelihood(1, 0, 0, 0, 1, 0.3, 0.6) == -math.inf

    def test_independent_branch(self):
        assert pair_log_likelihood(1, 0, 0, 0, 0, 0.3, 0.6) == pytest.approx(math.log(0.3 * 0.4))

    def test_implicant_false_branch(self):
        assert pair_log_likelihood(0, 1, 0, 0, 1, 0.3, 0.6) == pytest.approx(math.log(0.7 * 0.6))

    def test_error_bits_flip_values(self):
        # observed (1, 0) with the second value flipped is effectively (1, 1)
        assert pair_log_likelihood(1, 0, 0, 1, 1, 0.3, 0.6) == pytest.approx(math.log(0.3))


class TestConditionals:
    def test_noiseless_exception_rules_out_implication(self):
        c = case([[1, 1], [1, 0], [0, 0]])
        hyper = FlatHyper()
        state = initial_flat_state(c, hyper, np.random.default_rng(0))
        state.eps_n[:] = 0.0
        assert implication_probability(state, c, hyper, frozen=True) == 0.0

    def test_feature_prior_conjugate_moments(self):
        c = case([[1, 0]] * 7 + [[0, 0]] * 3)
        hyper = FlatHyper()
        state = initial_flat_state(c, hyper, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        draws = np.array([sample_feature_priors(state, hyper, rng)[0] for _ in range(20000)])
        # Beta(8, 4)
        mean, var = 8 / 12, 8 * 4 / (12**2 * 13)
        assert abs(draws.mean() - mean) < 3 * math.sqrt(var / len(draws))
        assert draws.var() == pytest.approx(var, rel=0.05)

    def test_language_noise_conjugate_moments(self):
        c = case([[1, 1]])
        hyper = FlatHyper(kappa=10.0)
        state = initial_flat_state(c, hyper, np.random.default_rng(0))
        state.eps = 0.1
        state.e[0] = [1, 0]
        rng = np.random.default_rng(2)
        draws = np.array([sample_language_noise(state, hyper, rng)[0] for _ in range(20000)])
        a, b = 10 * 0.1 + 1, 10 * 0.9 + 1
        mean = a / (a + b)
        sd = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)))
        assert abs(draws.mean() - mean) < 3 * sd / math.sqrt(len(draws))


class TestFrozenOracle:
    def test_three_languages_match_enumeration(self):
        c = case([[1, 1], [1, -1], [0, 1]])
        pi, eps_n = [0.4, 0.6], [0.05, 0.1, 0.2]
        exact = flat_posterior_m(c.values, pi, eps_n)
        est = frozen_run(c, pi, eps_n, seed=3).score
        assert est == pytest.approx(exact, abs=0.05)

    def test_conditioned_case_matches_enumeration(self):
        c = case([[1, 1, 1], [1, 0, -1], [-1, 1, 0]], features=(0, 1, 2))
        pi, eps_n = [0.5, 0.5, 0.3], [0.1, 0.1, 0.1]
        exact = flat_posterior_m(c.values, pi, eps_n)
        assert frozen_run(c, pi, eps_n, seed=4).score == pytest.approx(exact, abs=0.05)


class TestRunFlat:
    def test_seed_determinism(self):
        c = case([[1, 1], [0, 1], [1, 1], [0, 0], [-1, 1]])
        a = run_flat(c, FlatHyper(iterations=300, burn_in=50, seed=9))
        b = run_flat(c, FlatHyper(iterations=300, burn_in=50, seed=9))
        assert a.score == b.score
        assert np.array_equal(a.error_marginals, b.error_marginals)
        assert np.array_equal(a.imputed_marginals, b.imputed_marginals, equal_nan=True)

    def test_summary_json_keys(self):
        c = case([[1, 1], [0, -1]])
        doc = run_flat(c, FlatHyper(iterations=50, burn_in=10)).to_json()
        for key in ("score", "pi1_mean", "pi2_mean", "eps_mean", "error_marginals", "imputed_marginals"):
            assert key in doc
        assert doc["imputed_marginals"] == {"1": {"1": pytest.approx(doc["imputed_marginals"]["1"]["1"])}}

    def test_sweep_returns_new_state(self):
        c = case([[1, 1], [0, 1], [1, 0]])
        hyper = FlatHyper()
        rng = np.random.default_rng(0)
        s0 = initial_flat_state(c, hyper, rng)
        s1 = gibbs_sweep_flat(s0, c, hyper, rng)
        assert s1 is not s0
        assert s1.m in (0, 1) and 0 < s1.eps < 1

    def test_empty_case_rejected(self):
        with pytest.raises(ValueError):
            run_flat(case(np.zeros((0, 2))))

    def test_bad_schedule(self):
        with pytest.raises(ConfigError):
            FlatHyper(iterations=100, burn_in=100)

    def test_planted_implication_scores_high(self):
        scores = []
        for seed in range(5):
            m, _ = generate_flat(SynthSpec(languages=200, features=4, planted=(Planted(0, 1),), seed=seed))
            scores.append(run_flat(pair_view(m, 0, 1), FlatHyper(seed=seed)).score)
        assert min(scores) >= 0.95

    def test_all_true_implicand_gets_no_boost(self):
        diffs = []
        for seed in range(5):
            spec = SynthSpec(languages=200, features=3, pi=(0.4, 0.3, 1.0), noise=0.05, seed=seed)
            m, _ = generate_flat(spec)
            cells = m.cells.copy()
            cells[cells[:, 2] >= 0, 2] = 1
            m = m.with_cells(cells)
            # feature 0 and feature 1 are both independent of the all-true feature 2
            a = run_flat(pair_view(m, 0, 2), FlatHyper(seed=seed)).score
            b = run_flat(pair_view(m, 1, 2), FlatHyper(seed=seed + 100)).score
            diffs.append(abs(a - b))
        assert max(diffs) < 0.2

    def test_empty_noise_rejects_exception(self):
        rows = [[1, 1]] * 30 + [[0, 0]] * 20 + [[0, 1]] * 20 + [[1, 0]]
        # mean 1e-9 with a concentrated prior: the one exception cannot be noise
        hyper = FlatHyper(eps_a=10.0, eps_b=1e10, seed=1)
        assert run_flat(case(rows), hyper).score <= 0.05

    def test_violation_never_raises_score(self):
        clean = [[1, 1]] * 12 + [[0, 0]] * 8 + [[0, 1]] * 6
        before, after = [], []
        for seed in range(6):
            h = FlatHyper(iterations=600, burn_in=100, seed=seed)
            before.append(run_flat(case(clean), h).score)
            after.append(run_flat(case(clean + [[1, 0]]), h).score)
        assert np.mean(after) <= np.mean(before) + 0.02

    def test_contrapositive_symmetry_on_balanced_counts(self):
        # (f1 => f2) and (not f2 => not f1) have equal evidence when the
        # both-true and both-false counts match
        rows = [[1, 1]] * 15 + [[0, 0]] * 15 + [[0, 1]] * 10 + [[1, 0]] * 2
        flipped = [[1 - b, 1 - a] for a, b in rows]
        s1 = np.mean([run_flat(case(rows), FlatHyper(seed=s)).score for s in range(4)])
        s2 = np.mean([run_flat(case(flipped), FlatHyper(seed=s + 50)).score for s in range(4)])
        assert s1 == pytest.approx(s2, abs=0.1)
