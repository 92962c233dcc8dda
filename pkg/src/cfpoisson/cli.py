"""Experiment runner: every library capability as a reproducible subcommand.

Each subcommand resolves its flags into a config dict, runs the matching
library routine, and writes machine-readable outputs into --out: CSV
files with bit-stable headers plus a JSON report.  The resolved config is
echoed into every file, and (config, seed) determines every output byte
except the runtime_seconds field, so reruns are directly diffable.

Thread count is taken from the CFPOISSON_THREADS environment variable
(default: all cores) and deliberately kept out of the echoed config:
results are independent of it by contract, and the files must stay
byte-identical when only the thread count changes.

Exit codes: 0 success, 1 invalid usage or config, 2 numeric failure
(non-convergence or a certified-precision shortfall past the retry cap).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, hitstats, renewal, targets, ulam
from .cf import GAUSS, LEBESGUE, rational_cf
from .errors import CertificationError, ConfigError, PrecisionError
from .sampling import DigitStream, trial_bit_budget

HIST_HEADER = "k,count,empirical_p,reference_p,std_err"
SPECTRAL_HEADER = "n,mu_An,s,lambda,ratio,grid,residual"
HITTING_HEADER = "trial,tau,scaled_tau,censored"

_TAGS = {
    "doeblin": "digit hit-count law vs Poisson",
    "tuples": "consecutive digit tuples vs Poisson",
    "pattern": "repeated two-digit pattern vs Poisson",
    "negcontrol": "clustering control: lag-1 overlap ratios",
    "renewal": "renewal chain tail hits vs Poisson",
    "lemma-ratio": "perturbed eigenvalue deficit vs s*mu",
    "escape": "escape rate vs target mass",
    "laplace": "spectral transform vs limit law",
    "hitting-time": "scaled first hits vs Exp(1)",
    "spectrum": "unperturbed operator invariants",
    "mixing": "correlation decay rate fit",
    "shortret": "short-return bound enumeration",
    "renyi": "branch distortion constant",
    "digits": "certified digit extraction",
    "measure": "target set mass",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports errors as exceptions instead of exiting.

    Keeps the exit-code contract in one place (main) and guarantees no
    output file is touched on a malformed invocation.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _int_list(text) -> list:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            a, _, b = part.partition("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ValueError("empty integer list")
    return out


def _float_list(text) -> list:
    out = [float(part) for part in str(text).split(",") if part.strip()]
    if not out:
        raise ValueError("empty float list")
    return out


def _fmt_value(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def _config(sub: str, args, keys: list) -> dict:
    # values stay native here; _write_csv stringifies for comment lines
    cfg = {"subcommand": sub}
    for key in keys:
        cfg[key] = getattr(args, key.replace("-", "_"))
    cfg["seed"] = args.seed
    cfg["out"] = str(args.out)
    cfg["version"] = __version__
    cfg["tag"] = _TAGS[sub]
    return cfg


def _write_csv(path: Path, cfg: dict, header: str, rows) -> None:
    lines = [f"# {k} = {v}" for k, v in cfg.items()]
    lines.append(header)
    for row in rows:
        lines.append(",".join(_fmt_value(c) for c in row))
    path.write_text("\n".join(lines) + "\n")


def _write_report(path: Path, cfg: dict, results, witnesses,
                  runtime: float) -> None:
    payload = {"config": _jsonable(cfg), "results": _jsonable(results),
               "witnesses": _jsonable(witnesses),
               "runtime_seconds": round(runtime, 3)}
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _make_family(name: str, theta: float, m: int):
    if name == "tail":
        return targets.TailSet(theta)
    if name == "tuple":
        return targets.TupleSet(m, theta)
    if name == "pattern":
        return targets.PatternSet()
    if name == "negcontrol":
        return targets.NegControl()
    raise ConfigError(f"unknown family {name!r}")


# --- subcommand runners ---------------------------------------------------
# each returns (config, results, witnesses, csvs, summary); csvs is a list
# of (kind, header, rows) written as <subcommand>_<kind>.csv


def _histogram_run(sub, args, fam):
    cfgkeys = {"doeblin": ["theta", "n", "trials", "law"],
               "tuples": ["m", "theta", "n", "trials", "law"],
               "pattern": ["n", "trials", "law"]}[sub]
    cfg = _config(sub, args, cfgkeys)
    hist = hitstats.run_trials("gauss", fam, args.n, args.trials, args.law,
                               args.seed)
    t_lim = fam.limit_t()
    rep = hitstats.tv_distance(hist, lambda k: hitstats.poisson_pmf(t_lim, k))
    p0 = float(hist.counts[0]) / hist.scored
    results = {
        "t_hat": hist.t_hat, "t_limit": t_lim, "tv": rep.tv,
        "mean_hits": hist.mean(), "p0_empirical": p0,
        "p0_reference": math.exp(-t_lim),
        "p0_abs_error": abs(p0 - math.exp(-t_lim)),
        "tail_reference": rep.tail_reference,
        "aborted_trials": len(hist.aborted),
    }
    rows = [(int(k), int(c), float(e), float(r), float(se))
            for k, c, e, r, se in rep.table]
    return (cfg, results, {}, [("histogram", HIST_HEADER, rows)],
            f"tv={rep.tv:.4f} t_hat={hist.t_hat:.4f}")


def _run_doeblin(args):
    return _histogram_run("doeblin", args, targets.TailSet(args.theta))


def _run_tuples(args):
    return _histogram_run("tuples", args, targets.TupleSet(args.m, args.theta))


def _run_pattern(args):
    return _histogram_run("pattern", args, targets.PatternSet())


def _run_negcontrol(args):
    cfg = _config("negcontrol", args, ["n"])
    neg, tail = targets.NegControl(), targets.TailSet(1.0)
    rows = []
    for n in args.n:
        r_neg = targets.overlap_measure(neg, n, 1) / neg.measure(n)
        r_tail = targets.overlap_measure(tail, n, 1) / tail.measure(n)
        rows.append({"n": n, "negcontrol_mu": neg.measure(n),
                     "negcontrol_ratio": r_neg, "tail_mu": tail.measure(n),
                     "tail_ratio": r_tail})
    results = {"schedule": rows,
               "min_negcontrol_ratio": min(r["negcontrol_ratio"] for r in rows),
               "max_tail_ratio": max(r["tail_ratio"] for r in rows)}
    return (cfg, results, {}, [],
            f"negcontrol ratio >= {results['min_negcontrol_ratio']:.4f}, "
            f"tail ratio <= {results['max_tail_ratio']:.6f}")


def _run_renewal(args):
    cfg = _config("renewal", args, ["chain", "k", "n", "trials", "target"])
    if args.chain == "factorial":
        chain, c = renewal.RenewalChain.factorial(), None
    else:
        c = args.c if args.c is not None else renewal.calibrate_poisson_tail(
            args.k, args.n, args.target)
        chain = renewal.RenewalChain.poisson_weights(c)
    cfg["c"] = "" if c is None else c
    hist = hitstats.run_trials("renewal", None, args.n, args.trials,
                               hitstats.STATIONARY, args.seed,
                               chain=chain, k_threshold=args.k)
    rep = hitstats.tv_distance(hist,
                               lambda k: hitstats.poisson_pmf(hist.t_hat, k))
    results = {"c": c, "t_hat": hist.t_hat,
               "intensity_target_dev": abs(hist.t_hat / args.target - 1.0),
               "tv": rep.tv, "mean_hits": hist.mean(),
               "tail_reference": rep.tail_reference}
    rows = [(int(k), int(cnt), float(e), float(r), float(se))
            for k, cnt, e, r, se in rep.table]
    return (cfg, results, {}, [("histogram", HIST_HEADER, rows)],
            f"tv={rep.tv:.4f} t_hat={hist.t_hat:.4f}")


def _spectral_rows(records):
    return [(r["n"], float(r["mu_target"]), r.get("s", float("inf")),
             float(r["lambda"]), float(r["ratio"]), int(r["grid"]),
             float(r["residual"])) for r in records]


def _run_lemma_ratio(args):
    cfg = _config("lemma-ratio", args, ["theta", "n", "s", "grid"])
    fam = targets.TailSet(args.theta)
    records = [ulam.lemma_ratio(fam, n, s, grid_size=g)
               for g in args.grid for n in args.n for s in args.s]
    worst = max(abs(r["ratio"] - 1.0) for r in records)
    results = {"records": records, "worst_ratio_dev": worst}
    return (cfg, results, {}, [("spectral", SPECTRAL_HEADER,
                                _spectral_rows(records))],
            f"worst |ratio-1| = {worst:.5f}")


def _run_escape(args):
    cfg = _config("escape", args, ["theta", "n", "grid"])
    fam = targets.TailSet(args.theta)
    records = [ulam.escape_ratio(fam, n, grid_size=g)
               for g in args.grid for n in args.n]
    worst = max(abs(r["ratio"] - 1.0) for r in records)
    results = {"records": records, "worst_ratio_dev": worst}
    return (cfg, results, {}, [("spectral", SPECTRAL_HEADER,
                                _spectral_rows(records))],
            f"worst |ratio-1| = {worst:.5f}")


def _run_laplace(args):
    cfg = _config("laplace", args, ["theta", "n", "s", "grid", "trials", "law"])
    fam = targets.TailSet(args.theta)
    pred = ulam.poisson_laplace_predict(fam, args.n, args.s,
                                        grid_size=args.grid)
    results = dict(pred)
    if args.trials > 0:
        hist = hitstats.run_trials("gauss", fam, args.n, args.trials,
                                   args.law, args.seed)
        est = hitstats.empirical_laplace(hist, args.s)
        z = (0.0 if est.std_err == 0.0
             else (pred["lambda_power"] - est.value) / est.std_err)
        results.update({"mc_value": est.value, "mc_std_err": est.std_err,
                        "mc_z": z})
    row = (args.n, float(targets.target_measure(fam, args.n)), args.s,
           pred.get("lambda", 1.0), pred["lambda_power"] / pred["limit"],
           pred["grid"], pred.get("residual", 0.0))
    return (cfg, results, {}, [("spectral", SPECTRAL_HEADER, [row])],
            f"lambda^n={pred['lambda_power']:.6f} "
            f"limit={pred['limit']:.6f} rel={pred['rel_diff']:.5f}")


def _run_hitting_time(args):
    cfg = _config("hitting-time", args, ["theta", "n", "trials", "law",
                                         "horizon"])
    fam = targets.TailSet(args.theta)
    sample = hitstats.first_hit_times("gauss", fam, args.n, args.trials,
                                      args.law, args.seed,
                                      horizon=args.horizon)
    cfg["horizon"] = sample.horizon
    uncensored = int((~sample.censored).sum())
    ks = sample.ks if uncensored else None
    results = {"ks": ks, "censored_fraction": sample.censored_fraction,
               "mean_scaled": (float(sample.scaled.mean()) if uncensored
                               else None),
               "horizon": sample.horizon, "mu": sample.mu,
               "aborted_trials": len(sample.aborted)}
    rows = [(t, int(tau), float(tau * sample.mu), int(cen))
            for t, (tau, cen) in enumerate(zip(sample.taus.tolist(),
                                               sample.censored.tolist()))]
    return (cfg, results, {}, [("hitting", HITTING_HEADER, rows)],
            f"ks={ks if ks is None else format(ks, '.5f')} "
            f"censored={sample.censored_fraction:.2e}")


def _run_spectrum(args):
    cfg = _config("spectrum", args, ["grid"])
    results = []
    prev = None
    for g in args.grid:
        weights = ulam.build_ulam(ulam.UlamGrid.geometric(g))
        eig = ulam.leading_eigen(weights, compute_gap=False)
        lam2, resid2 = ulam.second_eigenvalue(weights)
        rec = {"grid": g, "lambda1": eig.value,
               "lambda1_dev": abs(eig.value - 1.0),
               "eigvec_const_dev": float(np.abs(eig.vector - 1.0).max()),
               "residual": eig.residual,
               "row_sum_error": weights.row_sum_error(),
               "adjoint_error": weights.adjoint_error(),
               "lambda2": lam2, "lambda2_residual": resid2}
        if prev is not None:
            rec["lambda2_doubling_change"] = abs(lam2 - prev)
        prev = lam2
        results.append(rec)
    last = results[-1]
    return (cfg, results, {}, [],
            f"lambda1 dev={last['lambda1_dev']:.2e} "
            f"lambda2={last['lambda2']:.6f}")


def _run_mixing(args):
    cfg = _config("mixing", args, ["grid", "gaps"])
    grid = ulam.UlamGrid.geometric(args.grid, include=(Fraction(1, 2),))
    weights = ulam.build_ulam(grid)
    cells_a = grid.cell_mask(Fraction(1, 2), Fraction(1))
    cells_b = grid.cell_mask(Fraction(0), Fraction(1, 2))
    est = ulam.mixing_decay(weights, cells_a, cells_b, args.gaps)
    results = {"rate": est.rate, "scale": est.scale,
               "fit_residual": est.fit_residual,
               "gaps": list(est.gaps), "psi": list(est.psi),
               "used": list(est.used)}
    return (cfg, results, {}, [],
            f"rate={est.rate:.4f} fit_residual={est.fit_residual:.4f}")


def _run_shortret(args):
    cfg = _config("shortret", args, ["max_len", "max_digit"])
    rep = diagnostics.short_return_report(args.max_len, args.max_digit)
    witnesses = {"word": rep.worst_witness[0], "k": rep.worst_witness[1]}
    return (cfg, rep.as_dict(), witnesses, [],
            f"M_1={rep.constant:.6f} witness={rep.worst_witness}")


def _run_renyi(args):
    cfg = _config("renyi", args, ["max_len", "max_digit", "samples"])
    rep = diagnostics.renyi_report(args.max_len, args.max_digit, args.samples)
    word, x = rep.worst_witness
    witnesses = {"word": word, "x": str(x)}
    return (cfg, rep.as_dict(), witnesses, [],
            f"M={rep.constant:.6f} witness={word} at x={x}")


def _run_digits(args):
    if args.x is not None:
        x = Fraction(args.x)
        if not (0 < x < 1):
            raise ConfigError("--x must be a rational in (0, 1)")
        digits = rational_cf(x.numerator, x.denominator)[: args.count]
    else:
        stream = DigitStream.for_trial(args.seed, args.trial,
                                       trial_bit_budget(args.count), args.law)
        digits = stream.take(args.count)
    print(" ".join(str(d) for d in digits))


def _run_measure(args):
    fam = _make_family(args.family, args.theta, args.m)
    print(repr(targets.target_measure(fam, args.n)))


_RUNNERS = {
    "doeblin": _run_doeblin, "tuples": _run_tuples, "pattern": _run_pattern,
    "negcontrol": _run_negcontrol, "renewal": _run_renewal,
    "lemma-ratio": _run_lemma_ratio, "escape": _run_escape,
    "laplace": _run_laplace, "hitting-time": _run_hitting_time,
    "spectrum": _run_spectrum, "mixing": _run_mixing,
    "shortret": _run_shortret, "renyi": _run_renyi,
    "digits": _run_digits, "measure": _run_measure,
}


# --- argument plumbing -----------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="cfpoisson",
        description="Hit statistics, spectra, and exact diagnostics for "
                    "continued-fraction digits and renewal chains.",
        epilog="Use `cfpoisson run --config FILE` to load flags from a "
               "key = value or JSON file; command-line flags override it.")
    subs = parser.add_subparsers(dest="subcommand", required=True,
                                 parser_class=_Parser)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0,
                        help="master seed (64-bit)")

    def sub(name, **kw):
        return subs.add_parser(name, parents=[common], help=_TAGS[name], **kw)

    p = sub("doeblin")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--law", choices=[GAUSS, LEBESGUE], default=LEBESGUE)

    p = sub("tuples")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--law", choices=[GAUSS, LEBESGUE], default=GAUSS)

    p = sub("pattern")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--law", choices=[GAUSS, LEBESGUE], default=GAUSS)

    p = sub("negcontrol")
    p.add_argument("--n", type=_int_list, default=[10, 32, 100, 316, 1000])

    p = sub("renewal")
    p.add_argument("--chain", choices=["poisson", "factorial"],
                   default="poisson")
    p.add_argument("--k", type=int, default=3, help="tail threshold")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--c", type=float, default=None,
                   help="explicit jump weight (skips calibration)")
    p.add_argument("--target", type=float, default=1.0,
                   help="calibration target for n*pi(tail)")

    p = sub("lemma-ratio")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=_int_list, default=[200, 400, 800])
    p.add_argument("--s", type=_float_list, default=[1.0],
                   help="damping strengths, comma-separated")
    p.add_argument("--grid", type=_int_list, default=[8192])

    p = sub("escape")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=_int_list, default=[200, 400, 800])
    p.add_argument("--grid", type=_int_list, default=[8192])

    p = sub("laplace")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=8192)
    p.add_argument("--trials", type=int, default=0,
                   help="Monte Carlo cross-check trials (0 = spectral only)")
    p.add_argument("--law", choices=[GAUSS, LEBESGUE], default=GAUSS)

    p = sub("hitting-time")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--law", choices=[GAUSS, LEBESGUE], default=GAUSS)
    p.add_argument("--horizon", type=int, default=None)

    p = sub("spectrum")
    p.add_argument("--grid", type=_int_list, default=[1024, 2048])

    p = sub("mixing")
    p.add_argument("--grid", type=int, default=8192)
    p.add_argument("--gaps", type=_int_list, default=list(range(2, 33)))

    p = sub("shortret")
    p.add_argument("--max-len", type=int, default=4)
    p.add_argument("--max-digit", type=int, default=20)

    p = sub("renyi")
    p.add_argument("--max-len", type=int, default=4)
    p.add_argument("--max-digit", type=int, default=20)
    p.add_argument("--samples", type=int, default=5)

    p = sub("digits")
    p.add_argument("--x", default=None,
                   help="rational point p/q; overrides sampling")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--law", choices=[GAUSS, LEBESGUE], default=GAUSS)
    p.add_argument("--count", type=int, default=20)

    p = sub("measure")
    p.add_argument("--family", choices=sorted(targets.FAMILIES),
                   default="tail")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n", type=int, required=True)

    return parser


def _load_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    stripped = text.strip()
    if not stripped:
        raise ConfigError("config file is empty")
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be a single object")
        return data
    out = {}
    for lineno, raw in enumerate(stripped.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq or not key.strip():
            raise ConfigError(
                f"config line {lineno}: expected `key = value`, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def _expand_run(argv: list) -> list:
    rest = argv[1:]
    if "--config" not in rest:
        raise ConfigError("run requires --config <file>")
    at = rest.index("--config")
    if at + 1 >= len(rest):
        raise ConfigError("--config needs a file path")
    cfg = _load_config_file(Path(rest[at + 1]))
    extra = rest[:at] + rest[at + 2:]
    sub = cfg.pop("subcommand", None)
    if not sub:
        raise ConfigError("config file must set `subcommand`")
    flags = []
    for key, value in cfg.items():
        flags.append(f"--{str(key).replace('_', '-')}")
        if isinstance(value, list):
            flags.append(",".join(str(v) for v in value))
        else:
            flags.append(str(value))
    return [str(sub)] + flags + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        if argv and argv[0] == "run":
            argv = _expand_run(argv)
        args = _build_parser().parse_args(argv)
        started = time.perf_counter()
        outcome = _RUNNERS[args.subcommand](args)
        if outcome is None:  # print-only subcommand
            return 0
        cfg, results, witnesses, csvs, summary = outcome
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for kind, header, rows in csvs:
            _write_csv(out_dir / f"{args.subcommand}_{kind}.csv",
                       cfg, header, rows)
        report = out_dir / f"{args.subcommand}_report.json"
        _write_report(report, cfg, results, witnesses,
                      time.perf_counter() - started)
        print(f"{args.subcommand}: {summary} -> {report}")
        return 0
    except _UsageError as exc:
        print(f"cfpoisson: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (PrecisionError, CertificationError) as exc:
        print(f"cfpoisson: numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"cfpoisson: invalid config: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
