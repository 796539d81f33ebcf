"""Exact distribution machinery: PMFs, moments, distances and tail bounds.

Everything here is a pure function of immutable values; no global state,
safe to call concurrently.  All PMFs live in linear space but are computed
from log-space terms so they stay usable up to seven-digit supports.

Distance conventions: ``tv_distance`` carries the 1/2 factor.  The raw
(unhalved) sum of absolute differences is exposed separately as
``ell1_distance`` because the inequality ``l2^2 <= l_inf * l1`` needs the
unhalved quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "MASS_TOL",
    "ExplicitDistribution",
    "Pbd",
    "TranslatedPoissonParams",
    "BoundReport",
    "TpApproxBounds",
    "truncated_log",
    "pbd_pmf",
    "binomial_pmf",
    "translated_poisson_pmf",
    "pbd_moments",
    "tv_distance",
    "ell1_distance",
    "ell2_sq_distance",
    "ell_inf_distance",
    "effective_support_interval",
    "poisson_tail_bound",
    "indicator_chernoff_bound",
    "tp_approx_bounds",
    "tp_pair_tv_bound",
]

# Mass-conservation tolerance beyond any declared truncation slack.
MASS_TOL = 1e-9

# Refuse to materialise union supports wider than this in distance code.
_MAX_ALIGN_WIDTH = 1 << 26


@dataclass(frozen=True)
class ExplicitDistribution:
    """A PMF on the contiguous integer interval ``[lo, lo + len(probs) - 1]``.

    ``overflow`` is mass sitting on a single sentinel point outside the
    interval (think of it as index ``lo - 1``); coarsening parks everything
    a restricted test ignores there.  The sentinel is the *same* abstract
    point for every distribution, so distances compare overflow to overflow.

    ``tail_slack`` is mass that a truncated construction dropped outright.
    It is reported, never folded back into the endpoints, and callers that
    care about exactness must budget for it.
    """

    lo: int
    probs: np.ndarray
    overflow: float = 0.0
    tail_slack: float = 0.0

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("probs must be a 1-D array with at least one entry")
        if probs.min(initial=0.0) < -1e-12:
            raise ValueError("probs must be nonnegative")
        probs = np.maximum(probs, 0.0)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "lo", int(self.lo))
        if self.overflow < 0 or self.tail_slack < 0:
            raise ValueError("overflow and tail_slack must be nonnegative")
        total = float(probs.sum()) + self.overflow
        if not (1.0 - self.tail_slack - MASS_TOL <= total <= 1.0 + MASS_TOL):
            raise ValueError(
                f"total mass {total} outside [1 - {self.tail_slack} - {MASS_TOL}, 1 + {MASS_TOL}]"
            )

    @property
    def hi(self) -> int:
        return self.lo + len(self.probs) - 1

    @property
    def support_len(self) -> int:
        return len(self.probs)

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum()) + self.overflow

    def prob_at(self, i: int) -> float:
        if self.lo <= i <= self.hi:
            return float(self.probs[i - self.lo])
        return 0.0

    def mass_on(self, lo: int, hi: int) -> float:
        """Mass of the interval [lo, hi]; the sentinel is never inside."""
        a = max(lo, self.lo) - self.lo
        b = min(hi, self.hi) - self.lo
        if b < a:
            return 0.0
        return float(self.probs[a : b + 1].sum())

    def mean(self) -> float:
        if self.overflow > MASS_TOL:
            raise ValueError("moments undefined with sentinel mass present")
        xs = self.lo + np.arange(len(self.probs))
        total = float(self.probs.sum())
        return float((xs * self.probs).sum() / total)

    def variance(self) -> float:
        if self.overflow > MASS_TOL:
            raise ValueError("moments undefined with sentinel mass present")
        xs = self.lo + np.arange(len(self.probs))
        total = float(self.probs.sum())
        mu = float((xs * self.probs).sum() / total)
        return float(((xs - mu) ** 2 * self.probs).sum() / total)

    def max_prob(self) -> float:
        return float(self.probs.max())


@dataclass(frozen=True)
class Pbd:
    """Parameter vector of independent Bernoulli means; n = 0 is the point mass at 0."""

    ps: np.ndarray

    def __post_init__(self):
        ps = np.ascontiguousarray(self.ps, dtype=np.float64)
        if ps.ndim != 1:
            raise ValueError("ps must be 1-D")
        if ps.size and (ps.min() < 0.0 or ps.max() > 1.0):
            raise ValueError("all p_i must lie in [0, 1]")
        object.__setattr__(self, "ps", ps)

    @property
    def n(self) -> int:
        return len(self.ps)

    def mean(self) -> float:
        return float(self.ps.sum())

    def variance(self) -> float:
        return float((self.ps * (1.0 - self.ps)).sum())


@dataclass(frozen=True)
class TranslatedPoissonParams:
    """Mean/variance pair defining a Poisson shifted to match both moments.

    The realised law is ``floor(mu - sigma2) + Poisson(sigma2 + frac)`` with
    ``frac`` the fractional part of ``mu - sigma2``.
    """

    mu: float
    sigma2: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma2)):
            raise ValueError("mu and sigma2 must be finite")
        if self.sigma2 <= 0.0:
            raise ValueError("sigma2 must be positive")
        if self.rate <= 0.0 or not math.isfinite(self.rate):
            raise ValueError("derived Poisson rate must be positive and finite")

    @property
    def shift(self) -> int:
        return math.floor(self.mu - self.sigma2)

    @property
    def rate(self) -> float:
        return self.sigma2 + ((self.mu - self.sigma2) - math.floor(self.mu - self.sigma2))


@dataclass(frozen=True)
class BoundReport:
    """A closed-form bound value together with its named constituent terms."""

    bound_value: float
    terms: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.bound_value < 0.0:
            raise ValueError("bound_value must be nonnegative")


@dataclass(frozen=True)
class TpApproxBounds:
    """The three closed-form error bounds for the matched-moment Poisson shift."""

    tv: BoundReport
    ell_inf: BoundReport
    q_max_cap: BoundReport
    q_max: float


def truncated_log(x: float) -> float:
    """max(1, ln x); keeps logarithmic factors in thresholds away from zero."""
    if x <= 0.0:
        raise ValueError("truncated_log requires x > 0")
    return max(1.0, math.log(x))


def pbd_pmf(pbd: Pbd, tail_cut: float = 0.0) -> ExplicitDistribution:
    """Exact PMF of a Bernoulli sum by sequential convolution.

    ``tail_cut`` is a global budget for mass dropped off the two ends while
    convolving; whatever is actually dropped is reported via ``tail_slack``,
    never folded into the endpoints.
    """
    if not 0.0 <= tail_cut <= 1e-6:
        raise ValueError("tail_cut must lie in [0, 1e-6]")
    v = np.array([1.0])
    lo = 0
    budget = float(tail_cut)
    dropped = 0.0
    for p in pbd.ps:
        new = np.empty(len(v) + 1)
        new[: len(v)] = v * (1.0 - p)
        new[len(v)] = 0.0
        new[1:] += v * p
        start = 0
        end = len(new)
        while end - start > 1 and new[start] <= budget:
            budget -= new[start]
            dropped += new[start]
            start += 1
        while end - start > 1 and new[end - 1] <= budget:
            budget -= new[end - 1]
            dropped += new[end - 1]
            end -= 1
        lo += start
        v = new[start:end]
    return ExplicitDistribution(lo, v, tail_slack=dropped if dropped > 0.0 else 0.0)


def binomial_pmf(n: int, p: float) -> ExplicitDistribution:
    """Numerically stable Binomial(n, p) PMF on the full support [0, n]."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n == 0:
        return ExplicitDistribution(0, np.array([1.0]))
    if p == 0.0:
        out = np.zeros(n + 1)
        out[0] = 1.0
        return ExplicitDistribution(0, out)
    if p == 1.0:
        out = np.zeros(n + 1)
        out[n] = 1.0
        return ExplicitDistribution(0, out)
    ks = np.arange(n + 1, dtype=np.float64)
    # Grouping the two factorial terms keeps the expression, hence the PMF,
    # bit-exactly symmetric under i <-> n - i.
    log_binom = gammaln(n + 1.0) - (gammaln(ks + 1.0) + gammaln(n - ks + 1.0))
    if p == 0.5:
        # Constant term keeps P(i) == P(n-i) bit-exact.
        log_pmf = log_binom - n * math.log(2.0)
    else:
        log_pmf = log_binom + ks * math.log(p) + (n - ks) * math.log1p(-p)
    return ExplicitDistribution(0, np.exp(log_pmf))


def translated_poisson_pmf(
    tp: TranslatedPoissonParams, tail_cut: float = 1e-9
) -> ExplicitDistribution:
    """PMF of the shifted Poisson on an interval missing at most ``tail_cut`` mass."""
    if not 0.0 < tail_cut <= 1e-6:
        raise ValueError("tail_cut must lie in (0, 1e-6]")
    lam = tp.rate
    level = math.log(2.0 / tail_cut)
    z_lo = max(0, math.floor(lam - math.sqrt(2.0 * lam * level)) - 1)
    z_hi = math.ceil(lam + level + math.sqrt(level * level + 2.0 * lam * level)) + 1
    zs = np.arange(z_lo, z_hi + 1, dtype=np.float64)
    log_pmf = zs * math.log(lam) - lam - gammaln(zs + 1.0)
    probs = np.exp(log_pmf)
    slack = max(0.0, 1.0 - float(probs.sum()))
    return ExplicitDistribution(tp.shift + z_lo, probs, tail_slack=slack)


def pbd_moments(pbd: Pbd) -> tuple[float, float]:
    """(sum p_i, sum p_i (1 - p_i))."""
    return pbd.mean(), pbd.variance()


def _aligned(p: ExplicitDistribution, q: ExplicitDistribution) -> tuple[np.ndarray, np.ndarray]:
    lo = min(p.lo, q.lo)
    hi = max(p.hi, q.hi)
    width = hi - lo + 1
    if width > _MAX_ALIGN_WIDTH:
        raise ValueError(f"union support of width {width} is too large to align")
    a = np.zeros(width)
    b = np.zeros(width)
    a[p.lo - lo : p.lo - lo + len(p.probs)] = p.probs
    b[q.lo - lo : q.lo - lo + len(q.probs)] = q.probs
    return a, b


def ell1_distance(p: ExplicitDistribution, q: ExplicitDistribution) -> float:
    """Unhalved sum of absolute differences, sentinel compared to sentinel."""
    a, b = _aligned(p, q)
    return float(np.abs(a - b).sum()) + abs(p.overflow - q.overflow)


def tv_distance(p: ExplicitDistribution, q: ExplicitDistribution) -> float:
    """Total variation distance (half the unhalved l1 sum)."""
    return 0.5 * ell1_distance(p, q)


def ell2_sq_distance(p: ExplicitDistribution, q: ExplicitDistribution) -> float:
    a, b = _aligned(p, q)
    d = a - b
    return float((d * d).sum()) + (p.overflow - q.overflow) ** 2


def ell_inf_distance(p: ExplicitDistribution, q: ExplicitDistribution) -> float:
    a, b = _aligned(p, q)
    base = float(np.abs(a - b).max())
    return max(base, abs(p.overflow - q.overflow))


def effective_support_interval(p: ExplicitDistribution, eps: float) -> tuple[int, int]:
    """Smallest contiguous interval holding at least ``1 - eps`` mass.

    Ties go to the smallest left endpoint.  Raises when no interval can
    reach the target (e.g. too much sentinel mass).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    target = 1.0 - eps
    cs = np.concatenate(([0.0], np.cumsum(p.probs)))
    if cs[-1] < target:
        raise ValueError("no contiguous interval reaches 1 - eps mass")
    ends = np.searchsorted(cs, cs[:-1] + target, side="left")
    lengths = np.where(ends <= len(p.probs), ends - np.arange(len(p.probs)), np.iinfo(np.int64).max)
    start = int(np.argmin(lengths))
    end = int(ends[start])
    return p.lo + start, p.lo + end - 1


def poisson_tail_bound(lam: float, x: float) -> float:
    """Chernoff-style Poisson tail bound, upper tail for x >= lam, lower otherwise."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    if x >= lam:
        return math.exp(-((x - lam) ** 2) / (2.0 * x))
    return math.exp(-((x - lam) ** 2) / (2.0 * lam))


def indicator_chernoff_bound(sigma: float, lam: float) -> float:
    """Two-sided tail bound 2 exp(-lam^2 / 4) for a Bernoulli sum, 0 < lam < 2 sigma."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if not 0.0 < lam < 2.0 * sigma:
        raise ValueError("lam must lie in (0, 2 sigma)")
    return 2.0 * math.exp(-lam * lam / 4.0)


def tp_approx_bounds(pbd: Pbd, q_max: float | None = None) -> TpApproxBounds:
    """Closed-form bounds on how far a Bernoulli sum sits from its matched
    shifted Poisson: a TV bound, an l_inf bound, and a cap on the mode mass.

    ``q_max`` is the distribution's largest point mass; when omitted it is
    computed from the exact PMF (fine at test scale, expensive for huge n).
    """
    sigma2 = pbd.variance()
    if sigma2 <= 0.0:
        raise ValueError("variance must be positive")
    s3 = float((pbd.ps**3 * (1.0 - pbd.ps)).sum())
    tv_value = (2.0 + math.sqrt(s3)) / sigma2
    if q_max is None:
        q_max = pbd_pmf(pbd, tail_cut=1e-12).max_prob()
    linf_value = (2.0 + 2.0 * math.sqrt(q_max * s3)) / sigma2
    qmax_cap = tv_value + 1.0 / (2.3 * math.sqrt(sigma2))
    return TpApproxBounds(
        tv=BoundReport(tv_value, {"numerator": 2.0 + math.sqrt(s3), "denominator": sigma2}),
        ell_inf=BoundReport(
            linf_value,
            {"numerator": 2.0 + 2.0 * math.sqrt(q_max * s3), "denominator": sigma2, "q_max": q_max},
        ),
        q_max_cap=BoundReport(
            qmax_cap, {"tv_bound": tv_value, "sigma_term": 1.0 / (2.3 * math.sqrt(sigma2))}
        ),
        q_max=q_max,
    )


def tp_pair_tv_bound(tp1: TranslatedPoissonParams, tp2: TranslatedPoissonParams) -> float:
    """TV bound between two shifted Poissons from their parameter gaps."""
    s1 = math.sqrt(tp1.sigma2)
    s2 = math.sqrt(tp2.sigma2)
    return abs(tp1.mu - tp2.mu) / min(s1, s2) + (abs(tp1.sigma2 - tp2.sigma2) + 1.0) / min(
        tp1.sigma2, tp2.sigma2
    )
