"""Unit tests for the membership test and its pieces."""

import math

import numpy as np
import pytest

from pbdtest.distributions import (
    ExplicitDistribution,
    TranslatedPoissonParams,
    binomial_pmf,
    ell2_sq_distance,
    translated_poisson_pmf,
    truncated_log,
    tv_distance,
)
from pbdtest.learner import MomentEstimates, estimate_mean_var, fit_binomial_by_moments
from pbdtest.oracles import paired_perturbation, tn_closed_form_moments
from pbdtest.sampling import SampleHistogram, SampleStream
from pbdtest.tester import (
    Branch,
    Closeness,
    TestConfig,
    Verdict,
    coarsen_to_interval,
    heavy_case_test,
    l2_statistic,
    l2_statistic_counts,
    numeric_tv_tp_vs_hypothesis,
    run_budgeted_test,
    simple_tolerant_identity_test,
)
from pbdtest.tester import test_pbd as run_membership_test


def heavy_inputs(src, n, eps, seed):
    """Moments and a binomial hypothesis from fresh stream splits."""
    root = SampleStream.from_distribution(src, seed=seed)
    eps_prime = eps / (n / 4.0) ** 0.125
    moments = estimate_mean_var(root.split(0), eps_prime)
    hyp_moments = estimate_mean_var(root.split(1), eps_prime)
    fit = fit_binomial_by_moments(hyp_moments.mu_hat, hyp_moments.sigma2_hat, n)
    return root, moments, binomial_pmf(fit.n, fit.p)


class TestConfigValidation:
    def test_closeness_const_floor(self):
        with pytest.raises(ValueError, match="closeness_const"):
            TestConfig(eps=0.1, delta=0.1, closeness_const=5.0)

    def test_repetition_formula(self):
        cfg = TestConfig(eps=0.1, delta=0.1)
        assert cfg.repetitions() == math.ceil(18.0 * math.log(10.0))
        assert TestConfig(eps=0.1, delta=0.1, amplification_reps=3).repetitions() == 3

    def test_truncated_log_reexport(self):
        assert truncated_log(0.5) == 1.0


class TestSimpleTolerantIdentityTest:
    def test_exact_match_is_close(self):
        q = ExplicitDistribution(0, np.array([0.5, 0.5]))
        samples = np.array([0, 1] * 500)
        assert simple_tolerant_identity_test(q, samples, 0.2) is Closeness.CLOSE

    def test_sample_count_enforced(self):
        q = ExplicitDistribution(0, np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="samples"):
            simple_tolerant_identity_test(q, [0, 1, 0], 0.2)

    def test_close_and_far_rates(self):
        m, eps = 50, 0.2
        probs = np.linspace(1.0, 2.0, m)
        q = ExplicitDistribution(0, probs / probs.sum())
        k = math.ceil(10 * m / eps**2)
        close_hits = 0
        far_hits = 0
        trials = 60
        root_q = SampleStream.from_distribution(q, seed=8)
        # A far source: TV > 2 eps / 5 by construction.
        far_probs = probs.copy()
        far_probs[: m // 2] *= 1.0 - 0.5
        far_probs[m // 2 :] *= 1.0 + 0.5 * (probs[: m // 2].sum() / probs[m // 2 :].sum())
        far = ExplicitDistribution(0, far_probs / far_probs.sum())
        assert tv_distance(far, q) > 2 * eps / 5
        root_far = SampleStream.from_distribution(far, seed=9)
        for t in range(trials):
            xs = root_q.split(t).draw(k)
            close_hits += simple_tolerant_identity_test(q, xs, eps) is Closeness.CLOSE
            ys = root_far.split(t).draw(k)
            far_hits += simple_tolerant_identity_test(q, ys, eps) is Closeness.FAR
        assert close_hits >= 0.95 * trials
        assert far_hits >= 0.95 * trials


class TestCoarsen:
    def test_point_mass_interval(self):
        d = ExplicitDistribution(4, np.array([1.0]))
        (lo, hi), _ = coarsen_to_interval(d, 0.2)
        assert (lo, hi) == (4, 4)

    def test_binomial_interval_mass(self):
        d = binomial_pmf(100, 0.5)
        (lo, hi), coarsener = coarsen_to_interval(d, 0.5)
        assert d.mass_on(lo, hi) >= 0.9
        assert lo + hi == pytest.approx(100, abs=3)  # near-symmetric around the mean
        coarse = coarsener.apply(d)
        assert coarse.total_mass == pytest.approx(1.0, abs=1e-12)

    def test_coarsened_histogram_sentinel(self):
        coarsener = coarsen_to_interval(binomial_pmf(10, 0.5), 0.5)[1]
        hist = SampleHistogram(0, np.array([2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2]), nominal_rate=4.0)
        emp = coarsener.apply_to_histogram(hist)
        assert emp.overflow > 0.0
        assert emp.total_mass == pytest.approx(1.0)


class TestL2Statistic:
    def test_single_symbol_plugin(self):
        q = ExplicitDistribution(0, np.array([1.0]))
        hist = SampleHistogram(0, np.array([100]), nominal_rate=100.0, poissonized=True)
        assert l2_statistic(hist, q) == pytest.approx(-0.01)

    def test_requires_poissonized(self):
        q = ExplicitDistribution(0, np.array([1.0]))
        hist = SampleHistogram(0, np.array([100]), nominal_rate=100.0)
        with pytest.raises(ValueError, match="Poissonized"):
            l2_statistic(hist, q)

    def test_counts_route_matches_independent_arithmetic(self):
        rng = np.random.Generator(np.random.Philox(3))
        q_probs = rng.random(12)
        q = ExplicitDistribution(3, q_probs / q_probs.sum())
        k = 40.0
        counts = rng.poisson(5.0, size=17)
        lo = 0
        # Oracle arithmetic on the union support, written out directly.
        tn = 0.0
        for i in range(lo, lo + 40):
            ci = counts[i - lo] if 0 <= i - lo < len(counts) else 0
            qi = q.prob_at(i)
            tn += (ci - k * qi) ** 2 - ci
        tn /= k * k
        assert l2_statistic_counts(counts, lo, q, k) == pytest.approx(tn, rel=1e-12)

    def test_unbiasedness_quick(self):
        # Full-scale moment validation lives in the acceptance suite.
        p = binomial_pmf(20, 0.5)
        trials = 20_000
        k = 50.0
        rng = np.random.Generator(np.random.Philox(5))
        counts = rng.poisson(k * p.probs, size=(trials, p.support_len))
        vals = np.array([l2_statistic_counts(c, 0, p, k) for c in counts[:2000]])
        mean_cf, var_cf = tn_closed_form_moments(p, p, k)
        assert mean_cf == 0.0
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean()) <= 4.0 * se


class TestNumericTv:
    def test_pivot_against_itself(self):
        tp = TranslatedPoissonParams(30.0, 25.0)
        pmf = translated_poisson_pmf(tp, tail_cut=1e-9)
        assert numeric_tv_tp_vs_hypothesis(tp, pmf, 0.1) <= 1e-8

    def test_disjoint_supports(self):
        tp = TranslatedPoissonParams(1000.0, 25.0)
        point = ExplicitDistribution(0, np.array([1.0]))
        assert numeric_tv_tp_vs_hypothesis(tp, point, 0.1) == pytest.approx(1.0, abs=1e-6)

    def test_binomial_vs_matched_pivot(self):
        tp = TranslatedPoissonParams(5000.0, 2500.0)
        assert numeric_tv_tp_vs_hypothesis(tp, binomial_pmf(10_000, 0.5), 0.1) < 0.05


class TestHeavyCase:
    def test_variance_above_half_n_rejects(self):
        src = binomial_pmf(100, 0.5)
        stream = SampleStream.from_distribution(src, seed=0)
        moments = MomentEstimates(mu_hat=50.0, sigma2_hat=60.0, eps_prime=0.1, samples_used=10)
        verdict = heavy_case_test(stream, 100, TestConfig(eps=0.1, delta=0.1), moments, src)
        assert verdict.verdict is Verdict.NO_PBD
        assert verdict.diagnostics["reason"] == "variance above n/2"

    def test_pivot_far_from_hypothesis_rejects(self):
        n = 10_000
        hyp = binomial_pmf(n, 0.5)
        moments = MomentEstimates(mu_hat=2000.0, sigma2_hat=1600.0, eps_prime=0.1, samples_used=10)
        stream = SampleStream.from_distribution(hyp, seed=0)
        verdict = heavy_case_test(stream, n, TestConfig(eps=0.1, delta=0.1), moments, hyp)
        assert verdict.verdict is Verdict.NO_PBD
        assert verdict.diagnostics["reason"] == "pivot far from hypothesis"

    def test_binomial_source_accepted(self):
        n, eps = 10_000, 0.1
        src = binomial_pmf(n, 0.5)
        cfg = TestConfig(eps=eps, delta=0.1)
        hits = 0
        trials = 40
        for t in range(trials):
            root, moments, hyp = heavy_inputs(src, n, eps, seed=400 + t)
            res = heavy_case_test(root.split(2), n, cfg, moments, hyp)
            hits += res.verdict is Verdict.YES_PBD
        assert hits >= 0.9 * trials

    def test_perturbed_source_rejected_through_statistic(self):
        # Source at TV 0.35 eps from the moment-matched pivot: the distance
        # gate passes and the count statistic has to do the rejecting.
        n, eps = 10_000, 0.1
        pivot = translated_poisson_pmf(TranslatedPoissonParams(5000.0, 2500.0), tail_cut=1e-9)
        far, _ = paired_perturbation(pivot, 0.35 * eps)
        cfg = TestConfig(eps=eps, delta=0.1)
        hits = 0
        trials = 40
        stat_path = 0
        for t in range(trials):
            root, moments, hyp = heavy_inputs(far, n, eps, seed=800 + t)
            res = heavy_case_test(root.split(2), n, cfg, moments, hyp)
            hits += res.verdict is Verdict.NO_PBD
            stat_path += "t_n" in res.diagnostics
        assert stat_path >= 0.9 * trials  # gate must not be doing the work
        assert hits >= 0.9 * trials

    def test_close_case_l2_ceiling(self):
        # For Bernoulli-sum sources in the heavy regime, the exact squared-l2
        # gap to the estimated pivot stays under (5.3/sigma)(2 eps^2 / (C' sqrt(logt))).
        n, eps = 10_000, 0.1
        src = binomial_pmf(n, 0.5)
        cfg = TestConfig(eps=eps, delta=0.1)
        eps_prime = eps / (n / 4.0) ** 0.125
        root = SampleStream.from_distribution(src, seed=31)
        hits = 0
        trials = 40
        for t in range(trials):
            m = estimate_mean_var(root.split(t), eps_prime)
            pivot = translated_poisson_pmf(
                TranslatedPoissonParams(m.mu_hat, m.sigma2_hat), tail_cut=1e-9
            )
            sigma_hat = math.sqrt(m.sigma2_hat)
            ceiling = (5.3 / sigma_hat) * (2.0 * eps**2 / (cfg.closeness_const * math.sqrt(cfg.logt)))
            hits += ell2_sq_distance(src, pivot) <= ceiling
        assert hits >= 0.95 * trials

    def test_far_corpus_clears_threshold_constant(self):
        # Whenever the pivot is far (TV > 0.3 eps), the restricted squared-l2
        # over the pivot's high-mass interval exceeds c eps^2/(sigma sqrt(logt)).
        for sigma_hat, eps in [(50.0, 0.1), (25.0, 0.2), (16.0, 0.15)]:
            cfg = TestConfig(eps=eps, delta=0.1)
            pivot = translated_poisson_pmf(
                TranslatedPoissonParams(sigma_hat**2 + 3.0, sigma_hat**2), tail_cut=1e-9
            )
            far, _ = paired_perturbation(pivot, 0.35 * eps)
            assert tv_distance(far, pivot) > 0.3 * eps
            from pbdtest.distributions import effective_support_interval

            lo, hi = effective_support_interval(pivot, eps / 10.0)
            a, b = lo - far.lo, hi - far.lo
            restricted = float(((far.probs - pivot.probs)[a : b + 1] ** 2).sum())
            floor = cfg.l2_far_const * eps**2 / (sigma_hat * math.sqrt(cfg.logt))
            assert restricted > floor

    def test_spread_in_far_regime(self):
        # Var/E^2 of the statistic stays below 1.5x the 1/20 target at the
        # calibrated sampling rate (closed form; empirical check in acceptance).
        sigma_hat, eps = 25.0, 0.2
        cfg = TestConfig(eps=eps, delta=0.1)
        pivot = translated_poisson_pmf(
            TranslatedPoissonParams(sigma_hat**2, sigma_hat**2), tail_cut=1e-9
        )
        far, _ = paired_perturbation(pivot, 0.35 * eps)
        k = math.ceil(cfg.l2_sample_rate(sigma_hat))
        mean, var = tn_closed_form_moments(far, pivot, float(k))
        assert var / mean**2 <= 1.5 / 20.0


class TestTestPbd:
    def test_point_mass_is_yes_via_sparse(self):
        d = ExplicitDistribution(0, np.array([1.0]))
        cfg = TestConfig(eps=0.2, delta=0.2, seed=0, amplification_reps=3)
        res = run_membership_test(SampleStream.from_distribution(d, seed=0), 10, cfg)
        assert res.verdict is Verdict.YES_PBD
        assert res.branch is Branch.SPARSE

    def test_replay_identical(self):
        src = binomial_pmf(500, 0.4)
        cfg = TestConfig(eps=0.15, delta=0.3, seed=7, amplification_reps=5)
        a = run_membership_test(SampleStream.from_distribution(src, seed=7), 500, cfg)
        b = run_membership_test(SampleStream.from_distribution(src, seed=7), 500, cfg)
        assert a == b

    def test_interval_ceiling_recorded(self):
        src = binomial_pmf(500, 0.4)
        cfg = TestConfig(eps=0.15, delta=0.3, seed=7, amplification_reps=1)
        res = run_membership_test(SampleStream.from_distribution(src, seed=7), 500, cfg)
        run = res.diagnostics["runs"][0]["diagnostics"]
        assert run["interval_len_ceiling"] == pytest.approx(cfg.logt**2.5 / cfg.eps**4)

    def test_budgeted_run_consumes_at_most_budget(self):
        src = binomial_pmf(500, 0.4)
        cfg = TestConfig(eps=0.15, delta=0.3, seed=7, amplification_reps=1)
        for budget in (0, 10, 1_000, 50_000):
            res = run_budgeted_test(SampleStream.from_distribution(src, seed=7), 500, cfg, budget)
            assert res.samples_used <= budget

    def test_zero_budget_accepts_by_default(self):
        src = binomial_pmf(500, 0.4)
        cfg = TestConfig(eps=0.15, delta=0.3, seed=7, amplification_reps=1)
        res = run_budgeted_test(SampleStream.from_distribution(src, seed=7), 500, cfg, 0)
        assert res.verdict is Verdict.YES_PBD


class TestPoissonizedOverdrawGuard:
    class _OverdrawStream:
        """Stub whose Poissonized draws always land far above the rate."""

        def __init__(self):
            self.calls = 0

        def draw_poissonized(self, k):
            self.calls += 1
            return SampleHistogram(
                0, np.array([int(10 * k)]), nominal_rate=k, poissonized=True
            )

    def test_redraw_limit_raises(self):
        from pbdtest.tester import _poissonized_draw

        cfg = TestConfig(eps=0.1, delta=0.1, max_redraws=3)
        stream = self._OverdrawStream()
        with pytest.raises(RuntimeError, match="overdraw"):
            _poissonized_draw(stream, 10.0, cfg)
        assert stream.calls == 3
