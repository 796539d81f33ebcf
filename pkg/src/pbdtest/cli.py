"""Command-line front end tying the library into reproducible experiments.

All randomness flows from ``--seed``; artifacts carry a schema tag and the
fully resolved configuration, so the same invocation reproduces them
byte for byte.  Verdicts and reports are JSON, curves are CSV.

Exit codes: 0 on success, 1 on any error, 2 when ``test --assert-yes``
ends in rejection.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import distspec
from .calibrated import CALIBRATION_VERSION
from .distributions import Pbd, binomial_pmf, pbd_pmf, tv_distance
from .learner import learn_pbd
from .lowerbound import detection_experiment
from .oracles import (
    brute_force_pbd_pmf,
    calibration_report,
    exact_tv_to_unimodal,
    monte_carlo_moment_check,
)
from .sampling import SampleHistogram, SampleStream, empirical_distribution
from .tester import TestConfig, Verdict, l2_statistic, test_pbd

__all__ = ["main"]

_CONFIG_ENV = "PBDTEST_CONFIG"
_CONFIG_FIELDS = {
    "var_threshold_const",
    "closeness_const",
    "l2_sample_const",
    "l2_far_const",
    "tolerant_sample_const",
    "moment_sample_const",
    "learn_sample_const",
    "learn_sparse_threshold_const",
    "sparse_len_const",
    "amplification_const",
    "amplification_reps",
    "tail_cut",
    "poissonized_overdraw",
    "max_redraws",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _emit(obj: dict, out_path: str | None):
    text = _dump(obj)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _load_config_overrides(path: str | None) -> dict:
    overrides = {}
    for candidate in (os.environ.get(_CONFIG_ENV), path):
        if not candidate:
            continue
        with open(candidate) as fh:
            data = json.load(fh)
        unknown = set(data) - _CONFIG_FIELDS
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        overrides.update(data)
    return overrides


def _read_samples(path: str) -> np.ndarray:
    xs = np.loadtxt(path, dtype=np.int64, ndmin=1)
    if xs.size == 0:
        raise ValueError("sample file is empty")
    if xs.min() < 0:
        raise ValueError("sample file must contain nonnegative integers")
    return xs


def _make_stream(args, seed: int) -> SampleStream:
    if getattr(args, "spec", None):
        with open(args.spec) as fh:
            spec = json.load(fh)
        dist = distspec.realize(spec)
        return SampleStream.from_distribution(dist, seed)
    return SampleStream.from_samples(_read_samples(args.samples), seed)


def _cmd_test(args) -> int:
    overrides = _load_config_overrides(args.config)
    config = TestConfig(eps=args.eps, delta=args.delta, seed=args.seed, **overrides)
    stream = _make_stream(args, args.seed)
    verdict = test_pbd(stream, args.n, config)
    artifact = {
        "schema": "pbdtest.verdict/1",
        "command": "test",
        "n": args.n,
        **verdict.to_dict(),
    }
    _emit(artifact, args.out)
    if args.assert_yes and verdict.verdict is Verdict.NO_PBD:
        return 2
    return 0


def _cmd_learn(args) -> int:
    overrides = _load_config_overrides(args.config)
    stream = _make_stream(args, args.seed)
    learned = learn_pbd(
        stream,
        args.n,
        args.eps,
        learn_sample_const=overrides.get("learn_sample_const", 200.0),
        sparse_threshold_const=overrides.get("learn_sparse_threshold_const", 16.0),
        sparse_len_const=overrides.get("sparse_len_const", 4.0),
    )
    if learned.is_sparse:
        hyp_spec = distspec.explicit_spec(learned.hypothesis.dist)
    else:
        hyp_spec = {"kind": "binomial", "n": learned.hypothesis.n, "p": learned.hypothesis.p}
    artifact = {
        "schema": "pbdtest.hypothesis/1",
        "command": "learn",
        "eps": args.eps,
        "seed": args.seed,
        "hypothesis": distspec.normalize_spec(hyp_spec),
        "samples_used": learned.samples_used,
        "mu_hat": learned.mu_hat,
        "sigma2_hat": learned.sigma2_hat,
    }
    _emit(artifact, args.out)
    return 0


def _cmd_stat(args) -> int:
    with open(args.spec) as fh:
        q = distspec.realize(json.load(fh))
    if args.draw is not None:
        stream = SampleStream.from_distribution(q, args.seed)
        xs = stream.draw(args.draw)
        with open(args.emit, "w") as fh:
            fh.writelines(f"{x}\n" for x in xs)
        _emit(
            {
                "schema": "pbdtest.stat/1",
                "command": "stat",
                "emitted": int(args.draw),
                "seed": args.seed,
                "path": args.emit,
            },
            args.out,
        )
        return 0
    xs = _read_samples(args.samples)
    rate = args.rate if args.rate is not None else float(xs.size)
    lo = int(xs.min())
    hist = SampleHistogram(
        lo, np.bincount(xs - lo), nominal_rate=rate, poissonized=True
    )
    emp = empirical_distribution(xs, (q.lo, q.hi))
    artifact = {
        "schema": "pbdtest.stat/1",
        "command": "stat",
        "samples": int(xs.size),
        "rate": rate,
        "t_n": l2_statistic(hist, q),
        "tv_empirical_vs_spec": tv_distance(emp, q),
    }
    _emit(artifact, args.out)
    return 0


def _cmd_lowerbound(args) -> int:
    k_grid = [float(v) for v in args.k_grid.split(",") if v]
    overrides = _load_config_overrides(args.config)
    config = TestConfig(
        eps=args.eps,
        delta=0.5,
        seed=args.seed,
        amplification_reps=1,
        **overrides,
    )
    rows, meta = detection_experiment(
        args.n,
        args.c,
        args.eps,
        k_grid,
        args.trials,
        config=config,
        seed=args.seed,
        threads=args.threads,
    )
    lines = [
        "# pbdtest.lowerbound/1",
        "# meta " + _dump(meta),
        "k,detect_rate,false_reject_rate,advantage,chi2_bound,certified_far_rate,trials",
    ]
    for r in rows:
        lines.append(
            f"{r.k!r},{r.detect_rate!r},{r.false_reject_rate!r},"
            f"{r.advantage!r},{r.chi2_bound!r},{r.certified_far_rate!r},{r.trials}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def _oracle_suite(name: str, seed: int) -> list[dict]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    if name == "pmf":
        reports = []
        for case in range(20):
            n = int(rng.integers(1, 13))
            ps = rng.random(n)
            fast = pbd_pmf(Pbd(ps))
            slow = brute_force_pbd_pmf(ps)
            err = float(np.abs(fast.probs - slow.probs).max())
            reports.append(
                {"case": f"pmf-{case}", "n": n, "max_abs_error": err, "ok": err <= 1e-12}
            )
        return reports
    if name == "tn-moments":
        p = binomial_pmf(20, 0.4)
        q = binomial_pmf(20, 0.5)
        return [r.to_dict() for r in monte_carlo_moment_check(p, q, 50.0, 20_000, seed=seed)]
    if name == "unimodal":
        from .lowerbound import unimodal_distance_lb

        reports = []
        for case in range(10):
            m = int(rng.integers(3, 12))
            probs = rng.random(m)
            probs /= probs.sum()
            from .distributions import ExplicitDistribution

            d = ExplicitDistribution(0, probs)
            lb = unimodal_distance_lb(d)
            exact = exact_tv_to_unimodal(d)
            reports.append(
                {
                    "case": f"unimodal-{case}",
                    "certificate": lb,
                    "exact": exact,
                    "ok": lb <= exact + 1e-9,
                }
            )
        return reports
    if name == "calibration":
        return [{"case": "calibration", **calibration_report()}]
    raise ValueError(f"unknown oracle suite {name!r}")


def _cmd_oracle(args) -> int:
    reports = _oracle_suite(args.suite, args.seed)
    lines = [_dump({"schema": "pbdtest.oracle/1", "suite": args.suite, **r}) for r in reports]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def _cmd_bench(args) -> int:
    timings = {}
    t0 = time.perf_counter()
    dist = pbd_pmf(Pbd(np.full(2000, 0.3)), tail_cut=1e-9)
    timings["pbd_pmf_n2000_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    stream = SampleStream.from_distribution(dist, args.seed)
    hist = stream.draw_histogram(1_000_000)
    timings["histogram_1e6_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    config = TestConfig(eps=0.2, delta=0.5, seed=args.seed, amplification_reps=1)
    verdict = test_pbd(stream.split(1), 2000, config)
    timings["base_test_s"] = time.perf_counter() - t0
    artifact = {
        "schema": "pbdtest.bench/1",
        "command": "bench",
        "seed": args.seed,
        "pmf_support": dist.support_len,
        "histogram_total": hist.total,
        "verdict": verdict.verdict.value,
        "calibration_version": CALIBRATION_VERSION,
    }
    _emit(artifact, args.out)
    print("# timings " + _dump({k: round(v, 4) for k, v in timings.items()}), file=sys.stderr)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="pbdtest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p, need_n=True):
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--spec", help="distribution spec JSON file")
        group.add_argument("--samples", help="sample file, one integer per line")
        if need_n:
            p.add_argument("--n", type=int, required=True, help="support bound n")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--config", help="JSON file overriding test constants")
        p.add_argument("--out", help="write the JSON artifact here as well")

    t = sub.add_parser("test", help="run the membership test")
    add_source(t)
    t.add_argument("--eps", type=float, required=True)
    t.add_argument("--delta", type=float, required=True)
    t.add_argument("--assert-yes", action="store_true", help="exit 2 on rejection")
    t.set_defaults(fn=_cmd_test)

    l = sub.add_parser("learn", help="learn a hypothesis and emit it as a spec")
    add_source(l)
    l.add_argument("--eps", type=float, required=True)
    l.set_defaults(fn=_cmd_learn)

    s = sub.add_parser("stat", help="statistics against a known spec, or emit samples")
    s.add_argument("--spec", required=True)
    s.add_argument("--samples", help="compute statistics for these samples")
    s.add_argument("--rate", type=float, help="nominal Poissonized rate (defaults to count)")
    s.add_argument("--draw", type=int, help="emit this many samples instead")
    s.add_argument("--emit", help="sample output path (with --draw)")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(fn=_cmd_stat)

    lb = sub.add_parser("lowerbound", help="indistinguishability detection curve")
    lb.add_argument("--n", type=int, required=True)
    lb.add_argument("--c", type=float, required=True)
    lb.add_argument("--eps", type=float, required=True)
    lb.add_argument("--k-grid", required=True, help="comma-separated sample budgets")
    lb.add_argument("--trials", type=int, required=True)
    lb.add_argument("--seed", type=int, required=True)
    lb.add_argument("--threads", type=int, default=1)
    lb.add_argument("--config")
    lb.add_argument("--out", help="CSV output path")
    lb.set_defaults(fn=_cmd_lowerbound)

    o = sub.add_parser("oracle", help="run a brute-force validation suite")
    o.add_argument("--suite", required=True, choices=["pmf", "tn-moments", "unimodal", "calibration"])
    o.add_argument("--seed", type=int, required=True)
    o.add_argument("--out")
    o.set_defaults(fn=_cmd_oracle)

    b = sub.add_parser("bench", help="time representative operations")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "stat":
        if (args.draw is None) == (args.samples is None):
            parser.error("stat needs exactly one of --samples or --draw")
        if args.draw is not None and not args.emit:
            parser.error("--draw requires --emit PATH")
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"pbdtest: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
