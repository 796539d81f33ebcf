"""Brute-force ground truth used to validate the fast paths.

Every oracle takes an independent arithmetic route from the code it
checks: the Bernoulli-sum PMF enumerates outcome vectors instead of
convolving, the statistic moments are simulated from raw per-symbol
Poisson counts with their own accumulation, and the unimodal distance is
a per-mode linear program rather than the matching certificate.

Caps are enforced so each oracle finishes in well under a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.optimize import linprog

from .distributions import ExplicitDistribution, truncated_log

__all__ = [
    "OracleReport",
    "brute_force_pbd_pmf",
    "exact_tv_to_pbd_class",
    "exact_tv_to_unimodal",
    "tn_closed_form_moments",
    "monte_carlo_moment_check",
    "paired_perturbation",
    "calibration_report",
]


@dataclass(frozen=True)
class OracleReport:
    """One oracle-vs-fast-path comparison."""

    case: str
    oracle_value: float
    fast_value: float
    std_error: float = 0.0

    @property
    def abs_error(self) -> float:
        return abs(self.oracle_value - self.fast_value)

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.oracle_value), abs(self.fast_value))
        return 0.0 if scale == 0.0 else self.abs_error / scale

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "oracle_value": self.oracle_value,
            "fast_value": self.fast_value,
            "std_error": self.std_error,
            "abs_error": self.abs_error,
            "rel_error": self.rel_error,
        }


def brute_force_pbd_pmf(ps) -> ExplicitDistribution:
    """Exact Bernoulli-sum PMF by summing over all 2^n outcome vectors (n <= 20)."""
    ps = np.ascontiguousarray(ps, dtype=np.float64)
    n = len(ps)
    if n > 20:
        raise ValueError("brute force enumeration is capped at n = 20")
    if n == 0:
        return ExplicitDistribution(0, np.array([1.0]))
    out = np.zeros(n + 1)
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n), dtype=np.uint64)
        bits = ((idx[:, None] >> np.arange(n, dtype=np.uint64)) & 1).astype(bool)
        weights = np.where(bits, ps, 1.0 - ps).prod(axis=1)
        out += np.bincount(bits.sum(axis=1), weights=weights, minlength=n + 1)
    return ExplicitDistribution(0, out)


def _tiny_pbd_pmf_columns(grid: np.ndarray) -> np.ndarray:
    """PMF rows for every p-vector in ``grid`` (shape (K, n)); closed products."""
    k, n = grid.shape
    out = np.zeros((k, n + 1))
    for mask in range(1 << n):
        bits = [(mask >> j) & 1 for j in range(n)]
        cols = np.ones(k)
        for j, b in enumerate(bits):
            cols = cols * (grid[:, j] if b else 1.0 - grid[:, j])
        out[:, sum(bits)] += cols
    return out


def exact_tv_to_pbd_class(p: ExplicitDistribution, n: int, grid_step: float) -> float:
    """Min TV from p to any Bernoulli-sum law over [0, n], by exhaustive grid.

    An upper bound on the true infimum within Lipschitz slack n * grid_step.
    Capped at n <= 3 and grid_step >= 0.01.
    """
    if n > 3 or n < 0:
        raise ValueError("grid search is capped at n <= 3")
    if grid_step < 0.01:
        raise ValueError("grid_step must be at least 0.01")
    m = round(1.0 / grid_step)
    pts = np.arange(m + 1) / m
    combos = np.array(list(combinations_with_replacement(pts, n))) if n else np.zeros((1, 0))
    pmfs = _tiny_pbd_pmf_columns(combos)
    lo = min(p.lo, 0)
    hi = max(p.hi, n)
    target = np.zeros(hi - lo + 1)
    target[p.lo - lo : p.lo - lo + p.support_len] = p.probs
    cand = np.zeros((len(pmfs), hi - lo + 1))
    cand[:, -lo : -lo + n + 1] = pmfs
    tvs = 0.5 * (np.abs(cand - target).sum(axis=1) + p.overflow)
    return float(tvs.min())


def exact_tv_to_unimodal(p: ExplicitDistribution, tol: float = 1e-9) -> float:
    """Exact TV projection distance onto unimodal distributions (support <= 60).

    For each candidate mode the projection is a linear program: minimize
    half the l1 residual over distributions rising up to the mode and
    falling after.  The reported distance is the minimum over modes.
    """
    m = p.support_len
    if m > 60:
        raise ValueError("exact unimodal projection is capped at support 60")
    q = p.probs
    best = math.inf
    for mode in range(m):
        # Variables [r_0..r_{m-1}, t_0..t_{m-1}]; minimize 0.5 * sum t.
        cost = np.concatenate([np.zeros(m), 0.5 * np.ones(m)])
        rows = []
        rhs = []
        for i in range(m):
            row = np.zeros(2 * m)
            row[i] = 1.0
            row[m + i] = -1.0
            rows.append(row)
            rhs.append(q[i])
            row = np.zeros(2 * m)
            row[i] = -1.0
            row[m + i] = -1.0
            rows.append(row)
            rhs.append(-q[i])
        for i in range(m - 1):
            row = np.zeros(2 * m)
            if i < mode:
                row[i] = 1.0
                row[i + 1] = -1.0
            else:
                row[i] = -1.0
                row[i + 1] = 1.0
            rows.append(row)
            rhs.append(0.0)
        a_eq = np.zeros((1, 2 * m))
        a_eq[0, :m] = 1.0
        res = linprog(
            cost,
            A_ub=np.array(rows),
            b_ub=np.array(rhs),
            A_eq=a_eq,
            b_eq=np.array([1.0]),
            bounds=[(0, None)] * (2 * m),
            method="highs",
        )
        if not res.success:
            raise RuntimeError(f"unimodal projection LP failed at mode {mode}: {res.message}")
        best = min(best, res.fun)
    # Sentinel mass cannot be matched by a unimodal law on the interval.
    return float(best + 0.5 * p.overflow if best != math.inf else 0.5 * p.overflow)


def _union_lambdas(
    p: ExplicitDistribution, q: ExplicitDistribution, k: float
) -> tuple[np.ndarray, np.ndarray]:
    lo = min(p.lo, q.lo)
    hi = max(p.hi, q.hi)
    lam = np.zeros(hi - lo + 1)
    lam_p = np.zeros(hi - lo + 1)
    lam[p.lo - lo : p.lo - lo + p.support_len] = k * p.probs
    lam_p[q.lo - lo : q.lo - lo + q.support_len] = k * q.probs
    return lam, lam_p


def tn_closed_form_moments(
    p: ExplicitDistribution, q: ExplicitDistribution, k: float
) -> tuple[float, float]:
    """Closed-form mean and variance of the Poissonized squared-l2 statistic.

    mean = l2^2(p, q); variance = (2/k^4) sum[lam_i^2 + 2 lam_i (lam_i - lam'_i)^2].
    """
    lam, lam_p = _union_lambdas(p, q, k)
    diff = lam - lam_p
    mean = float((diff**2).sum() / k**2)
    var = float((2.0 / k**4) * (lam**2 + 2.0 * lam * diff**2).sum())
    return mean, var


def monte_carlo_moment_check(
    p: ExplicitDistribution,
    q: ExplicitDistribution,
    k: float,
    trials: int,
    seed: int = 0,
) -> list[OracleReport]:
    """Empirical statistic moments from raw Poisson counts vs closed forms.

    Simulates per-symbol counts K_i ~ Poisson(k P(i)) directly (the law of
    Poissonized sampling) and accumulates the statistic with its own
    arithmetic, independent of the fast path.  Needs trials >= 10^4 for
    meaningful error bars.
    """
    if trials < 10_000:
        raise ValueError("trials must be at least 10^4")
    lam, lam_p = _union_lambdas(p, q, k)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    t_vals = np.empty(trials)
    chunk = max(1, min(trials, 200_000_000 // max(len(lam), 1) // 8))
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        counts = rng.poisson(lam, size=(size, len(lam)))
        t_vals[done : done + size] = (
            ((counts - lam_p) ** 2).sum(axis=1) - counts.sum(axis=1)
        ) / k**2
        done += size
    mean_cf, var_cf = tn_closed_form_moments(p, q, k)
    emp_mean = float(t_vals.mean())
    emp_var = float(t_vals.var(ddof=1))
    se_mean = float(t_vals.std(ddof=1) / math.sqrt(trials))
    centered = t_vals - emp_mean
    m4 = float((centered**4).mean())
    se_var = math.sqrt(max(m4 - emp_var**2 * (trials - 3) / (trials - 1), 0.0) / trials)
    return [
        OracleReport("tn_mean", oracle_value=emp_mean, fast_value=mean_cf, std_error=se_mean),
        OracleReport("tn_variance", oracle_value=emp_var, fast_value=var_cf, std_error=se_var),
    ]


def paired_perturbation(
    base: ExplicitDistribution, tv_target: float
) -> tuple[ExplicitDistribution, float]:
    """A distribution at exact TV ``tv_target`` from ``base``.

    Adjacent support points are paired and mass t * min(pair) moves within
    each pair in alternating directions, so totals are conserved exactly
    and TV scales linearly in t.  Returns (distribution, exact l2^2).
    """
    p = base.probs.copy()
    m = len(p)
    mins = np.minimum(p[0 : m - 1 : 2], p[1 : m + 1 : 2][: (m // 2)])
    movable = float(mins.sum())
    if tv_target >= movable:
        raise ValueError(f"tv_target {tv_target} exceeds movable mass {movable}")
    t = tv_target / movable
    deltas = t * mins
    p[0 : 2 * len(deltas) : 2] += deltas
    p[1 : 2 * len(deltas) + 1 : 2] -= deltas
    ell2_sq = float(2.0 * (deltas**2).sum())
    return (
        ExplicitDistribution(base.lo, p, overflow=base.overflow, tail_slack=base.tail_slack),
        ell2_sq,
    )


def calibration_report(
    corpus=((50.0, 0.1), (25.0, 0.2), (16.0, 0.15)),
    sample_const_grid=(10.0, 20.0, 40.0, 80.0, 160.0),
    threshold_const_grid=(0.05, 0.1, 0.2, 0.4),
    spread_cap: float = 0.05,
    close_margin: float = 2.5,
    far_margin: float = 1.5,
) -> dict:
    """Closed-form sweep that fixes the two statistic constants.

    The corpus pairs a shifted-Poisson pivot with its paired perturbation
    at TV = 0.35 eps, for several (sigma_hat, eps).  The threshold
    constant is the smallest implied constant on the far corpus (restricted
    squared l2 over the pivot's high-mass interval, rescaled) divided by
    ``far_margin`` and rounded down to the grid.  The sample constant is
    the smallest grid value that keeps the far-corpus spread Var/E^2 at or
    under ``spread_cap`` while the acceptance threshold clears the
    close-case statistic noise by ``close_margin`` standard deviations.
    """
    from .distributions import (
        TranslatedPoissonParams,
        effective_support_interval,
        translated_poisson_pmf,
    )

    cases = []
    for sigma_hat, eps in corpus:
        logt = truncated_log(1.0 / eps)
        pivot = translated_poisson_pmf(
            TranslatedPoissonParams(sigma_hat**2 + 7.0, sigma_hat**2), tail_cut=1e-9
        )
        far, _ = paired_perturbation(pivot, 0.35 * eps)
        i_lo, i_hi = effective_support_interval(pivot, eps / 10.0)
        a, b = i_lo - pivot.lo, i_hi - pivot.lo
        restricted = float(((far.probs - pivot.probs)[a : b + 1] ** 2).sum())
        cases.append(
            {
                "sigma_hat": sigma_hat,
                "eps": eps,
                "logt": logt,
                "pivot": pivot,
                "far": far,
                "implied_threshold_const": restricted * sigma_hat * math.sqrt(logt) / eps**2,
            }
        )
    floor = min(case["implied_threshold_const"] for case in cases)
    chosen_c = max((c for c in threshold_const_grid if c <= floor / far_margin), default=None)
    chosen_c1 = None
    diagnostics = {}
    for c1 in sample_const_grid:
        ok = True
        per_case = []
        for case in cases:
            k = math.ceil(c1 * math.sqrt(case["sigma_hat"] * case["logt"]) / case["eps"] ** 2)
            mean, var = tn_closed_form_moments(case["far"], case["pivot"], float(k))
            spread = var / mean**2
            sd_close = math.sqrt(2.0 * float((case["pivot"].probs ** 2).sum())) / k
            thr = (
                0.25 * (chosen_c or 0.0) * case["eps"] ** 2
                / (case["sigma_hat"] * math.sqrt(case["logt"]))
            )
            per_case.append({"k": k, "spread": spread, "close_z": thr / sd_close})
            if spread > spread_cap or thr < close_margin * sd_close:
                ok = False
        diagnostics[c1] = per_case
        if ok and chosen_c1 is None:
            chosen_c1 = c1
    return {
        "corpus": [(case["sigma_hat"], case["eps"]) for case in cases],
        "far_floor_threshold_const": floor,
        "chosen_threshold_const": chosen_c,
        "chosen_sample_const": chosen_c1,
        "spread_cap": spread_cap,
        "close_margin": close_margin,
        "far_margin": far_margin,
        "per_sample_const": {
            str(c1): [
                {k: (round(v, 6) if isinstance(v, float) else v) for k, v in entry.items()}
                for entry in per
            ]
            for c1, per in diagnostics.items()
        },
    }
