"""The membership test: is the sampled distribution a Bernoulli-sum law?

The base test learns a hypothesis, then branches on its variance:

* sparse branch - coarsen both the unknown and the hypothesis to a short
  high-mass interval and run the simple tolerant identity test there;
* heavy branch - pivot through the shifted Poisson matched to estimated
  moments, reject on an impossible variance or a hypothesis that sits far
  from the pivot, otherwise decide with the unbiased squared-l2 count
  statistic under Poissonized sampling.

``test_pbd`` amplifies the base test by majority over independent
sub-streams.  Every stage draws from its own split of the caller's
stream, so verdicts replay bit-for-bit from (seed, config).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

from .calibrated import CALIBRATION_VERSION, L2_FAR_CONST, L2_SAMPLE_CONST
from .distributions import (
    ExplicitDistribution,
    TranslatedPoissonParams,
    effective_support_interval,
    translated_poisson_pmf,
    truncated_log,
    tv_distance,
)
from .learner import MomentEstimates, estimate_mean_var, learn_pbd
from .sampling import SampleHistogram, SampleStream, empirical_distribution

__all__ = [
    "Verdict",
    "Branch",
    "Closeness",
    "TestConfig",
    "TestVerdict",
    "truncated_log",
    "simple_tolerant_identity_test",
    "coarsen_to_interval",
    "Coarsener",
    "l2_statistic",
    "l2_statistic_counts",
    "numeric_tv_tp_vs_hypothesis",
    "heavy_case_test",
    "run_budgeted_test",
    "test_pbd",
]


class Verdict(str, Enum):
    YES_PBD = "yes_pbd"
    NO_PBD = "no_pbd"


class Branch(str, Enum):
    SPARSE = "sparse"
    HEAVY = "heavy"


class Closeness(str, Enum):
    CLOSE = "close"
    FAR = "far"


# Stage indices for stream splitting inside one base run.
_STAGE_LEARN = 0
_STAGE_TOLERANT = 1
_STAGE_MOMENTS = 2
_STAGE_L2 = 3


@dataclass(frozen=True)
class TestConfig:
    """All tunable absolute constants of the test, plus eps, delta and seed.

    Short names in comments give the conventional symbol for each knob.
    ``tail_cut`` doubles as the numeric tolerance of the deterministic
    pivot-vs-hypothesis TV estimate, which must stay within eps/5.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    eps: float
    delta: float
    seed: int = 0
    var_threshold_const: float = 4.0  # C: sparse/heavy variance split
    closeness_const: float = 10.0  # C': pivot closeness budget, must be >= 10
    l2_sample_const: float = L2_SAMPLE_CONST  # C1: Poissonized rate multiplier
    l2_far_const: float = L2_FAR_CONST  # c: statistic threshold constant
    tolerant_sample_const: float = 10.0  # A_tol: sparse-branch samples per |I|/eps^2
    moment_sample_const: float = 200.0  # A_m: moment-stage samples per 1/eps'^2
    learn_sample_const: float = 200.0  # A_L: learn-stage budget constant
    learn_sparse_threshold_const: float = 16.0  # A_t: learner sparse routing
    sparse_len_const: float = 4.0  # A_s: sparse hypothesis support cap
    amplification_const: float = 18.0  # B: majority repetitions ceil(B ln(1/delta))
    amplification_reps: int | None = None  # explicit override (experiments)
    tail_cut: float = 1e-9
    poissonized_overdraw: float = 4.0  # redraw when K > overdraw * k
    max_redraws: int = 8

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.closeness_const < 10.0:
            raise ValueError("closeness_const must be at least 10")
        if not 0.0 < self.tail_cut <= 1e-6:
            raise ValueError("tail_cut must lie in (0, 1e-6]")

    def replace(self, **kw) -> "TestConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["calibration_version"] = CALIBRATION_VERSION
        return out

    # -- derived quantities -------------------------------------------------

    @property
    def logt(self) -> float:
        return truncated_log(1.0 / self.eps)

    def variance_threshold(self) -> float:
        return self.var_threshold_const * self.logt**4 / self.eps**8

    def l2_sample_rate(self, sigma_hat: float) -> float:
        return self.l2_sample_const * math.sqrt(sigma_hat * self.logt) / self.eps**2

    def l2_threshold(self, sigma_hat: float) -> float:
        return 0.25 * self.l2_far_const * self.eps**2 / (sigma_hat * math.sqrt(self.logt))

    def repetitions(self) -> int:
        if self.amplification_reps is not None:
            if self.amplification_reps < 1:
                raise ValueError("amplification_reps must be positive")
            return self.amplification_reps
        return max(1, math.ceil(self.amplification_const * math.log(1.0 / self.delta)))


@dataclass(frozen=True)
class TestVerdict:
    __test__ = False

    verdict: Verdict
    branch: Branch
    samples_used: int
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "branch": self.branch.value,
            "samples_used": self.samples_used,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class Coarsener:
    """Restriction to an interval; everything else goes to the sentinel."""

    lo: int
    hi: int

    def apply(self, dist: ExplicitDistribution) -> ExplicitDistribution:
        a = max(self.lo, dist.lo)
        b = min(self.hi, dist.hi)
        width = self.hi - self.lo + 1
        probs = np.zeros(width)
        inside = 0.0
        if b >= a:
            seg = dist.probs[a - dist.lo : b - dist.lo + 1]
            probs[a - self.lo : b - self.lo + 1] = seg
            inside = float(seg.sum())
        out = max(0.0, 1.0 - dist.tail_slack - inside - dist.overflow)
        return ExplicitDistribution(
            self.lo, probs, overflow=dist.overflow + out, tail_slack=dist.tail_slack
        )

    def apply_to_samples(self, samples: np.ndarray) -> ExplicitDistribution:
        return empirical_distribution(samples, (self.lo, self.hi))

    def apply_to_histogram(self, hist: SampleHistogram) -> ExplicitDistribution:
        k = hist.total
        if k == 0:
            raise ValueError("cannot coarsen an empty histogram")
        width = self.hi - self.lo + 1
        probs = np.zeros(width)
        a = max(self.lo, hist.lo)
        b = min(self.hi, hist.hi)
        inside = 0
        if b >= a:
            seg = hist.counts[a - hist.lo : b - hist.lo + 1]
            probs[a - self.lo : b - self.lo + 1] = seg / k
            inside = int(seg.sum())
        return ExplicitDistribution(self.lo, probs, overflow=(k - inside) / k)


def coarsen_to_interval(
    hypothesis: ExplicitDistribution, eps: float
) -> tuple[tuple[int, int], Coarsener]:
    """Smallest interval I with hypothesis mass >= 1 - eps/5, plus its coarsener.

    The interval comes from exact hypothesis quantiles rather than the
    worst-case length bound; the bound is still recorded by the caller as
    a sanity ceiling for genuinely binomial hypotheses.
    """
    lo, hi = effective_support_interval(hypothesis, eps / 5.0)
    return (lo, hi), Coarsener(lo, hi)


def simple_tolerant_identity_test(
    q: ExplicitDistribution, samples, eps: float, sample_const: float = 10.0
) -> Closeness:
    """Close iff the empirical distribution sits within 0.25 eps of q in TV.

    Distinguishes TV <= eps/10 from TV > 2 eps/5 with frequency >= 0.99
    given ceil(sample_const * m / eps^2) samples on a support of size m.
    """
    xs = np.ascontiguousarray(samples, dtype=np.int64)
    required = math.ceil(sample_const * q.support_len / eps**2)
    if xs.size < required:
        raise ValueError(f"need at least {required} samples, got {xs.size}")
    emp = empirical_distribution(xs, (q.lo, q.hi))
    return Closeness.CLOSE if tv_distance(emp, q) < 0.25 * eps else Closeness.FAR


def _tolerant_verdict(q: ExplicitDistribution, emp: ExplicitDistribution, eps: float) -> Closeness:
    return Closeness.CLOSE if tv_distance(emp, q) < 0.25 * eps else Closeness.FAR


def l2_statistic_counts(counts: np.ndarray, lo: int, q: ExplicitDistribution, k: float) -> float:
    """The unbiased squared-l2 statistic from raw per-symbol counts.

    Sums (K_i - k Q(i))^2 - K_i over the union of the observed range and
    q's support; q is 0 outside its support.  May be negative.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    counts = np.ascontiguousarray(counts, dtype=np.float64)
    u_lo = min(lo, q.lo)
    u_hi = max(lo + len(counts) - 1, q.hi)
    width = u_hi - u_lo + 1
    c = np.zeros(width)
    c[lo - u_lo : lo - u_lo + len(counts)] = counts
    lam_p = np.zeros(width)
    lam_p[q.lo - u_lo : q.lo - u_lo + q.support_len] = k * q.probs
    return float((((c - lam_p) ** 2) - c).sum() / (k * k))


def l2_statistic(hist: SampleHistogram, q: ExplicitDistribution) -> float:
    """Statistic for a Poissonized histogram against a known q; E = l2^2(P, q)."""
    if not hist.poissonized:
        raise ValueError("the statistic requires Poissonized sampling")
    return l2_statistic_counts(hist.counts, hist.lo, q, hist.nominal_rate)


def numeric_tv_tp_vs_hypothesis(
    tp: TranslatedPoissonParams, hypothesis: ExplicitDistribution, eps: float, tail_cut: float = 1e-9
) -> float:
    """Deterministic TV estimate between the pivot and the hypothesis.

    Both are explicit, so no samples are spent; pivot truncation keeps the
    numeric error at most tail_cut, far inside the eps/5 accuracy budget.
    """
    cut = min(tail_cut, 1e-6)
    return tv_distance(translated_poisson_pmf(tp, tail_cut=cut), hypothesis)


def _poissonized_draw(stream: SampleStream, k: float, config: TestConfig) -> tuple[SampleHistogram, int]:
    """Poissonized histogram with the overdraw guard; returns (hist, samples_spent)."""
    spent = 0
    for _ in range(config.max_redraws):
        hist = stream.draw_poissonized(k)
        spent += hist.total
        if hist.total <= config.poissonized_overdraw * k:
            return hist, spent
    raise RuntimeError("poissonized draw exceeded the overdraw guard repeatedly")


def heavy_case_test(
    stream: SampleStream,
    n: int,
    config: TestConfig,
    moments: MomentEstimates,
    hypothesis: ExplicitDistribution,
) -> TestVerdict:
    """Heavy-branch decision given moment estimates and the learned hypothesis.

    Rejects when the pivot sits far from the hypothesis or the variance
    estimate exceeds n/2; otherwise thresholds the Poissonized statistic.
    A tie at the threshold resolves to acceptance.
    """
    eps = config.eps
    diag: dict = {
        "mu_hat": moments.mu_hat,
        "sigma2_hat": moments.sigma2_hat,
        "moment_samples": moments.samples_used,
    }
    if moments.sigma2_hat <= 0.0:
        diag["reason"] = "nonpositive variance estimate in heavy branch"
        return TestVerdict(Verdict.NO_PBD, Branch.HEAVY, moments.samples_used, diag)
    if moments.sigma2_hat > n / 2.0:
        # No Bernoulli-sum law on [0, n] has variance beyond n/4.
        diag["reason"] = "variance above n/2"
        return TestVerdict(Verdict.NO_PBD, Branch.HEAVY, moments.samples_used, diag)
    tp = TranslatedPoissonParams(moments.mu_hat, moments.sigma2_hat)
    d_tv = numeric_tv_tp_vs_hypothesis(tp, hypothesis, eps, config.tail_cut)
    diag["d_tv_pivot_vs_hypothesis"] = d_tv
    if d_tv > eps / 2.0:
        diag["reason"] = "pivot far from hypothesis"
        return TestVerdict(Verdict.NO_PBD, Branch.HEAVY, moments.samples_used, diag)
    sigma_hat = math.sqrt(moments.sigma2_hat)
    k = math.ceil(config.l2_sample_rate(sigma_hat))
    pivot = translated_poisson_pmf(tp, tail_cut=min(config.tail_cut, 1e-6))
    hist, spent = _poissonized_draw(stream, float(k), config)
    t_n = l2_statistic(hist, pivot)
    threshold = config.l2_threshold(sigma_hat)
    diag.update(
        {"k_poissonized": k, "realized_count": hist.total, "t_n": t_n, "t_n_threshold": threshold}
    )
    verdict = Verdict.YES_PBD if t_n <= threshold else Verdict.NO_PBD
    return TestVerdict(verdict, Branch.HEAVY, moments.samples_used + spent, diag)


def _sparse_case(
    stream: SampleStream,
    config: TestConfig,
    hypothesis: ExplicitDistribution,
    budget: int | None,
) -> tuple[Verdict, dict, int]:
    eps = config.eps
    (i_lo, i_hi), coarsener = coarsen_to_interval(hypothesis, eps)
    length = i_hi - i_lo + 1
    k_tol = math.ceil(config.tolerant_sample_const * length / eps**2)
    if budget is not None:
        k_tol = min(k_tol, budget)
    diag = {
        "interval": [i_lo, i_hi],
        "interval_len_ceiling": config.logt**2.5 / eps**4,
        "tolerant_samples": k_tol,
    }
    if k_tol < 1:
        # No budget left: no evidence against membership.
        diag["budget_exhausted"] = True
        return Verdict.YES_PBD, diag, 0
    hist = stream.split(_STAGE_TOLERANT).draw_histogram(k_tol)
    emp = coarsener.apply_to_histogram(hist)
    coarse_hyp = coarsener.apply(hypothesis)
    closeness = _tolerant_verdict(coarse_hyp, emp, eps)
    diag["tv_empirical_vs_hypothesis"] = tv_distance(emp, coarse_hyp)
    diag["tolerant_outcome"] = closeness.value
    verdict = Verdict.YES_PBD if closeness is Closeness.CLOSE else Verdict.NO_PBD
    return verdict, diag, k_tol


def _base_test(
    stream: SampleStream, n: int, config: TestConfig, budget: int | None = None
) -> TestVerdict:
    """One unamplified run; ``budget`` caps total sample consumption."""
    eps = config.eps
    remaining = budget
    # Under a hard cap, reserve half for the post-learning stage so partial
    # budgets degrade both stages instead of starving the second one.
    learn_cap = None if remaining is None else remaining // 2
    learned = learn_pbd(
        stream.split(_STAGE_LEARN),
        n,
        eps / 10.0,
        learn_sample_const=config.learn_sample_const,
        sparse_threshold_const=config.learn_sparse_threshold_const,
        sparse_len_const=config.sparse_len_const,
        max_samples=learn_cap,
    )
    used = learned.samples_used
    if remaining is not None:
        remaining -= used
    hyp_var = learned.variance()
    diag: dict = {
        "hypothesis_kind": "sparse" if learned.is_sparse else "binomial",
        "hypothesis_variance": hyp_var,
        "variance_threshold": config.variance_threshold(),
        "learn_samples": used,
    }
    if hyp_var < config.variance_threshold():
        verdict, sparse_diag, spent = _sparse_case(
            stream, config, learned.to_explicit(), remaining
        )
        diag.update(sparse_diag)
        return TestVerdict(verdict, Branch.SPARSE, used + spent, diag)
    eps_prime = eps / max(n / 4.0, 1.0) ** 0.125
    moments = estimate_mean_var(
        stream.split(_STAGE_MOMENTS),
        min(eps_prime, 0.999),
        sample_const=config.moment_sample_const,
        max_samples=remaining,
    )
    heavy = heavy_case_test(stream.split(_STAGE_L2), n, config, moments, learned.to_explicit())
    diag.update(heavy.diagnostics)
    return TestVerdict(heavy.verdict, Branch.HEAVY, used + heavy.samples_used, diag)


def run_budgeted_test(
    stream: SampleStream, n: int, config: TestConfig, sample_budget: int | None = None
) -> TestVerdict:
    """Single base run with a hard cap on total samples (experiment harness)."""
    return _base_test(stream, n, config, budget=sample_budget)


def test_pbd(stream: SampleStream, n: int, config: TestConfig) -> TestVerdict:
    """Majority-amplified membership test.

    Runs the base test ceil(B ln(1/delta)) times on fresh sub-streams and
    returns the majority verdict (a tie counts as rejection).  Diagnostics
    carry every per-run verdict so the decision replays deterministically.
    """
    reps = config.repetitions()
    runs = []
    yes_votes = 0
    samples = 0
    branches = {Branch.SPARSE: 0, Branch.HEAVY: 0}
    for r in range(reps):
        res = _base_test(stream.split(r), n, config)
        runs.append(res)
        samples += res.samples_used
        branches[res.branch] += 1
        if res.verdict is Verdict.YES_PBD:
            yes_votes += 1
    verdict = Verdict.YES_PBD if yes_votes * 2 > reps else Verdict.NO_PBD
    branch = Branch.SPARSE if branches[Branch.SPARSE] >= branches[Branch.HEAVY] else Branch.HEAVY
    diag = {
        "repetitions": reps,
        "yes_votes": yes_votes,
        "branch_counts": {b.value: c for b, c in branches.items()},
        "runs": [r.to_dict() for r in runs],
        "config": config.to_dict(),
    }
    return TestVerdict(verdict, branch, samples, diag)
