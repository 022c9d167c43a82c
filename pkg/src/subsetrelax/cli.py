"""Command-line front end.

Every subcommand takes ``--seed``, ``--json``/``--csv`` and ``--out``.
The resolved seed is always printed to stderr, so the payload on stdout
(or in ``--out``) stays machine-readable. Exit codes: 0 success, 1 bad
input, 2 internal error or failed check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .distributions import ENUMERATION_LIMIT, enumerate_subset_distribution, enumeration_size, subset_key
from .errors import DivergenceError, SubsetRelaxError
from .experiments import (
    EmbeddingConfig,
    rss_sne_train,
    scaling_benchmark,
    three_clusters,
    toy_feature_selection,
    train_match_distribution,
)
from .gradients import finite_difference_check, relaxed_topk_jacobian
from .relaxation import relax_subset_sample, relax_subset_sample_batch, relaxed_topk
from .samplers import UniformStream, gumbel_topk_batch, wrs_sample_batch
from .stats import EmpiricalDistribution, chi_square_gof, comparison_rows, total_variation


class CliError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class CheckFailed(Exception):
    """A verification subcommand ran but its check did not pass."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


# ---------------------------------------------------------------- parsing


def parse_weights(text: str, flag: str = "--weights") -> np.ndarray:
    """Comma-separated numbers, or a path to a single-column CSV file."""
    path = Path(text)
    if path.is_file():
        values = []
        with path.open(newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or not row[0].strip():
                    continue
                if len(row) != 1:
                    raise CliError(flag, f"{path}:{lineno}: expected a single column")
                try:
                    values.append(float(row[0]))
                except ValueError:
                    if values or lineno > 1:
                        raise CliError(flag, f"{path}:{lineno}: not a number: {row[0]!r}")
                    # header line
        if not values:
            raise CliError(flag, f"{path}: no weights found")
        arr = np.array(values)
    else:
        try:
            arr = np.array([float(p) for p in text.split(",") if p.strip()])
        except ValueError:
            raise CliError(flag, f"not a comma-separated list of numbers or a file: {text!r}")
    if arr.size == 0:
        raise CliError(flag, "no values given")
    if not np.all(np.isfinite(arr)):
        raise CliError(flag, "values must be finite")
    return arr


def parse_floats(text: str, flag: str) -> list[float]:
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise CliError(flag, f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise CliError(flag, "no values given")
    return vals


def parse_int_range(text: str, flag: str) -> tuple[int, int]:
    """``"8"`` or ``"2:10"`` (inclusive)."""
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise CliError(flag, f"expected an integer or lo:hi, got {text!r}")
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2 or parts[0] > parts[1] or parts[0] < 1:
        raise CliError(flag, f"expected a positive integer or lo:hi with lo <= hi, got {text!r}")
    return parts[0], parts[1]


def parse_float_spec(text: str, flag: str):
    """``"1"``, ``"0.5,1,5"`` (choices) or ``"0.5:10"`` (uniform range)."""
    if ":" in text:
        lo, hi = parse_floats(text.replace(":", ","), flag)
        if not 0 < lo <= hi:
            raise CliError(flag, f"expected 0 < lo <= hi, got {text!r}")
        return ("range", lo, hi)
    vals = parse_floats(text, flag)
    return ("choice", vals)


def _draw(spec, gen):
    if spec[0] == "range":
        return float(gen.uniform(spec[1], spec[2]))
    return float(spec[1][gen.integers(len(spec[1]))])


def _positive(value, flag):
    if value is None or value <= 0:
        raise CliError(flag, f"must be positive, got {value}")
    return value


def _check_temperatures(ts, flag="--t"):
    for t in ts:
        if not (math.isfinite(t) and t > 0):
            raise CliError(flag, f"temperature must be positive, got {t}")
    return ts


def _check_k(k, weights, flag="--k"):
    positive = int(np.count_nonzero(weights > 0))
    if np.any(weights < 0):
        raise CliError("--weights", "weights must be nonnegative")
    if positive == 0:
        raise CliError("--weights", "at least one weight must be positive")
    if not 1 <= k <= positive:
        raise CliError(flag, f"must be between 1 and the number of positive weights ({positive})")


# ---------------------------------------------------------------- output


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(x: float) -> str:
    return repr(float(x))


def _note(msg: str):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- commands


def cmd_sample(args, seed):
    w = parse_weights(args.weights)
    _check_k(args.k, w)
    _positive(args.count, "--count")
    rng = UniformStream(seed)
    if args.method == "reservoir":
        samples = wrs_sample_batch(w, args.k, args.count, rng)
    else:
        samples = gumbel_topk_batch(w, args.k, args.count, rng)
    if args.mode == "subset":
        samples = np.sort(samples, axis=1)
    if args.format == "json":
        return _json_text({"seed": seed, "k": args.k, "mode": args.mode,
                           "method": args.method, "samples": samples})
    return _csv_text(["sample", "items"],
                     [(i, "-".join(str(int(v)) for v in row)) for i, row in enumerate(samples)])


def cmd_relax(args, seed):
    ts = _check_temperatures([args.t])
    if args.raw:
        if args.scores is None:
            raise CliError("--scores", "required with --raw")
        scores = parse_weights(args.scores, "--scores")
        if not 1 <= args.k <= scores.size:
            raise CliError("--k", f"must be between 1 and {scores.size}")
        out = relaxed_topk(scores, args.k, ts[0])
    else:
        if args.weights is None:
            raise CliError("--weights", "required unless --raw is given")
        w = parse_weights(args.weights)
        _check_k(args.k, w)
        out = relax_subset_sample(w, args.k, ts[0], UniformStream(seed))
    if args.format == "csv":
        header = ["item", "mass"] + [f"step_{j + 1}" for j in range(out.k)]
        rows = [[i, _fmt(out.mass[i])] + [_fmt(v) for v in out.steps[:, i]]
                for i in range(out.mass.size)]
        return _csv_text(header, rows)
    return _json_text({"seed": seed, "k": out.k, "t": out.t, "mode": "raw" if args.raw else "gumbel",
                       "mass": out.mass, "steps": out.steps, "saturated": out.saturated})


def cmd_verify_dist(args, seed):
    w = parse_weights(args.weights)
    _check_k(args.k, w)
    ts = _check_temperatures(parse_floats(args.t, "--t"))
    _positive(args.samples, "--samples")
    if enumeration_size(w.size, args.k) > ENUMERATION_LIMIT:
        raise CliError("--weights", f"too many items to enumerate subsets of size {args.k}")
    exact = enumerate_subset_distribution(w, args.k)
    rng = UniformStream(seed)
    results = []
    rows = []
    worst = 0.0
    for t in ts:
        masses = relax_subset_sample_batch(w, args.k, t, args.samples, rng)
        idx = np.argsort(-masses, axis=1, kind="stable")[:, :args.k]
        emp = EmpiricalDistribution.from_samples(w.size, args.k, idx)
        tv = total_variation(exact, emp)
        chi = chi_square_gof(exact, emp)
        worst = max(worst, tv)
        cmp_rows = comparison_rows(exact, emp, args.level)
        _note(f"t={t:g} tv={tv:.6f} chi2={chi.statistic:.4f} chi2_p={chi.pvalue:.6g}")
        results.append({"t": t, "tv": tv, "chi2_stat": chi.statistic, "chi2_p": chi.pvalue,
                        "dof": chi.dof,
                        "rows": [dict(zip(("subset", "exact_p", "empirical_p", "ci_lo", "ci_hi"), r))
                                 for r in cmp_rows]})
        rows.extend([_fmt(t), s, _fmt(p), _fmt(q), _fmt(lo), _fmt(hi)] for s, p, q, lo, hi in cmp_rows)
    if args.max_tv is not None and worst > args.max_tv:
        raise CheckFailed(f"total variation {worst:.6f} exceeds --max-tv {args.max_tv}")
    if args.format == "json":
        return _json_text({"seed": seed, "k": args.k, "samples": args.samples,
                           "weights": w, "temperatures": results})
    return _csv_text(["t", "subset", "exact_p", "empirical_p", "ci_lo", "ci_hi"], rows)


def cmd_grad_check(args, seed):
    n_lo, n_hi = parse_int_range(args.n, "--n")
    k_lo, k_hi = parse_int_range(args.k, "--k")
    if k_lo > n_hi:
        raise CliError("--k", f"minimum k={k_lo} exceeds maximum n={n_hi}")
    tspec = parse_float_spec(args.t, "--t")
    _check_temperatures([tspec[1]] if tspec[0] == "range" else tspec[1])
    _positive(args.trials, "--trials")
    _positive(args.h, "--h")
    gen = np.random.default_rng(seed)
    errs, col_sums, trials = [], [], []
    for _ in range(args.trials):
        n = int(gen.integers(max(n_lo, k_lo), n_hi + 1))
        k = int(gen.integers(k_lo, min(k_hi, n) + 1))
        t = _draw(tspec, gen)
        s = gen.standard_normal(n) * args.scale
        jac = relaxed_topk_jacobian(s, k, t)
        rep = finite_difference_check(lambda x: relaxed_topk(x, k, t).mass, jac.matrix, s, args.h)
        errs.append(rep.max_error)
        col_sums.append(float(np.abs(jac.column_sums).max()))
        trials.append({"n": n, "k": k, "t": t, "max_error": rep.max_error,
                       "mean_error": rep.mean_error, "saturated": jac.saturated})
    max_error = max(errs)
    max_col = max(col_sums)
    passed = max_error < args.tol and max_col < 1e-8
    report = {"seed": seed, "trials": args.trials, "h": args.h, "tol": args.tol,
              "max_error": max_error, "mean_error": float(np.mean(errs)),
              "max_column_sum": max_col, "passed": passed}
    if args.format == "csv":
        text = _csv_text(["n", "k", "t", "max_error", "mean_error", "saturated"],
                         [[r["n"], r["k"], _fmt(r["t"]), _fmt(r["max_error"]),
                           _fmt(r["mean_error"]), r["saturated"]] for r in trials])
    else:
        text = _json_text(report)
    if not passed:
        _emit(text, args.out)
        raise CheckFailed(f"max_error={max_error:.3g}, max column sum={max_col:.3g}")
    return text


def cmd_consistency(args, seed):
    ts = _check_temperatures(parse_floats(args.t, "--t"))
    _positive(args.trials, "--trials")
    if args.n_max < 1:
        raise CliError("--n-max", "must be at least 1")
    gen = np.random.default_rng(seed)
    violations = []
    for trial in range(args.trials):
        n = int(gen.integers(1, args.n_max + 1))
        k = int(gen.integers(1, n + 1))
        t = ts[int(gen.integers(len(ts)))]
        s = gen.standard_normal(n) * args.scale
        mass = relaxed_topk(s, k, t).mass
        order = np.argsort(s, kind="stable")
        drops = np.diff(mass[order])
        if np.any(drops < -1e-12):
            violations.append({"trial": trial, "n": n, "k": k, "t": t})
    counter = relaxed_topk([1.0, 2.0], 2, 0.4).mass
    report = {"seed": seed, "trials": args.trials, "temperatures": ts,
              "violations": len(violations), "violating_trials": violations,
              "counterexample": {"scores": [1.0, 2.0], "k": 2, "t": 0.4, "mass": counter}}
    text = _json_text(report) if args.format == "json" else _csv_text(
        ["trials", "violations"], [[args.trials, len(violations)]])
    if violations:
        _emit(text, args.out)
        raise CheckFailed(f"{len(violations)} order violations")
    return text


def cmd_train_demo(args, seed):
    w = parse_weights(args.weights)
    _check_k(args.k, w)
    _check_temperatures([args.t])
    if args.lr < 0:
        raise CliError("--lr", "must be nonnegative")
    _positive(args.steps, "--steps")
    res = train_match_distribution(w, args.k, args.t, args.steps, args.lr, seed,
                                   batch_size=_positive(args.batch_size, "--batch-size"))
    tv = None
    if enumeration_size(w.size, args.k) <= ENUMERATION_LIMIT:
        tv = total_variation(enumerate_subset_distribution(w, args.k),
                             enumerate_subset_distribution(res.weights, args.k))
        _note(f"tv={tv:.6f}")
    if args.format == "csv":
        return _csv_text(["step", "loss", "train_loss"],
                         [[i, _fmt(a), _fmt(b)] for i, (a, b) in enumerate(zip(res.loss_trace, res.train_loss))])
    return _json_text({"seed": seed, "config": res.config, "target": w / w.sum(),
                       "learned": res.weights, "log_weights": res.log_weights, "tv": tv,
                       "final_loss": float(res.loss_trace[-1])})


def cmd_select_demo(args, seed):
    if not 1 <= args.k <= args.features:
        raise CliError("--k", f"must be between 1 and --features ({args.features})")
    _check_temperatures([args.t])
    _positive(args.epochs, "--epochs")
    res = toy_feature_selection(args.features, args.k, args.t, seed, epochs=args.epochs,
                                lr=args.lr, null=args.null)
    _note(f"selected={subset_key(res.selected)} final_r2={res.accuracy[-1]:.4f}")
    if args.format == "csv":
        return _csv_text(["epoch", "accuracy"], [[i, _fmt(a)] for i, a in enumerate(res.accuracy)])
    return _json_text({"seed": seed, "selected": list(res.selected), "mask": res.mask,
                       "frequencies": res.frequencies, "accuracy": res.accuracy})


def cmd_sne_demo(args, seed):
    _check_temperatures([args.t])
    if args.k < 1:
        raise CliError("--k", "must be at least 1")
    _positive(args.n_per, "--n-per")
    try:
        cfg = EmbeddingConfig(d_in=args.d_in, d_out=args.d_out, k=args.k, t=args.t,
                              epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=seed)
    except SubsetRelaxError as exc:
        raise CliError("--d-out" if "d_out" in str(exc) else "--epochs", str(exc))
    x, labels = three_clusters(args.n_per, args.d_in, args.spread, seed)
    res = rss_sne_train(x, cfg, labels=labels, trust_k=args.trust_k)
    _note(f"T({args.trust_k}) init={res.trust_init:.4f} final={res.trust_final:.4f} "
          f"1nn_error={res.one_nn_error:.4f}")
    if args.format == "csv":
        header = ["point_id", "class"] + [f"y{j}" for j in range(cfg.d_out)]
        return _csv_text(header, [[i, int(labels[i])] + [_fmt(v) for v in row]
                                  for i, row in enumerate(res.embedding)])
    return _json_text({"seed": seed, "config": res.config, "trust_k": args.trust_k,
                       "trust_init": res.trust_init, "trust_final": res.trust_final,
                       "one_nn_error": res.one_nn_error, "degenerate": res.degenerate,
                       "loss_trace": res.loss_trace, "embedding": res.embedding,
                       "classes": labels})


def cmd_bench(args, seed):
    ms = [int(m) for m in parse_floats(args.m, "--m")]
    if args.k < 1:
        raise CliError("--k", "must be at least 1")
    _check_temperatures([args.t])
    _positive(args.trials, "--trials")
    if any(b <= a for a, b in zip(ms, ms[1:])) or ms[0] < args.k:
        raise CliError("--m", "values must be ascending and at least --k")
    rows = scaling_benchmark(ms, args.k, args.t, args.trials, seed)
    if args.format == "json":
        return _json_text({"seed": seed, "rows": rows})
    return _csv_text(["m", "k", "mean_ms", "std_ms"],
                     [[r["m"], r["k"], f"{r['mean_ms']:.6f}", f"{r['std_ms']:.6f}"] for r in rows])


# ---------------------------------------------------------------- wiring

_DEFAULT_FORMAT = {
    "sample": "csv", "relax": "json", "verify-dist": "csv", "grad-check": "json",
    "consistency": "json", "train-demo": "json", "select-demo": "json",
    "sne-demo": "csv", "bench": "csv",
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default: drawn and printed)")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--csv", dest="format", action="store_const", const="csv")
    common.add_argument("--out", type=Path, default=None, help="write output here instead of stdout")

    parser = _Parser(prog="subsetrelax", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", parents=[common], help="exact weighted samples without replacement")
    p.add_argument("--weights", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--mode", choices=("sequence", "subset"), default="sequence")
    p.add_argument("--method", choices=("reservoir", "gumbel"), default="reservoir")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("relax", parents=[common], help="relaxed top-k of scores or a relaxed subset sample")
    p.add_argument("--weights")
    p.add_argument("--scores")
    p.add_argument("--raw", action="store_true", help="relax --scores directly, no Gumbel noise")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("verify-dist", parents=[common], help="compare hardened relaxed samples to the exact distribution")
    p.add_argument("--weights", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--t", default="0.1,1,10")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--max-tv", type=float, default=None, help="exit 2 if any TV exceeds this")
    p.set_defaults(func=cmd_verify_dist)

    p = sub.add_parser("grad-check", parents=[common], help="analytic Jacobians vs central differences")
    p.add_argument("--n", default="2:10")
    p.add_argument("--k", default="1:5")
    p.add_argument("--t", default="0.5:10")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--scale", type=float, default=1.0, help="std of random scores")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("consistency", parents=[common], help="order-preservation sweep for t >= 1")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n-max", type=int, default=16)
    p.add_argument("--t", default="1,2,5,10")
    p.add_argument("--scale", type=float, default=2.0)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("train-demo", parents=[common], help="learn weights from hard target samples")
    p.add_argument("--weights", default="0.1,0.2,0.3,0.4")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=128)
    p.set_defaults(func=cmd_train_demo)

    p = sub.add_parser("select-demo", parents=[common], help="toy instance-wise feature selection")
    p.add_argument("--features", type=int, default=6)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--null", action="store_true", help="target independent of the features")
    p.set_defaults(func=cmd_select_demo)

    p = sub.add_parser("sne-demo", parents=[common], help="neighbor-matching embedding of three clusters")
    p.add_argument("--n-per", type=int, default=20)
    p.add_argument("--d-in", type=int, default=10)
    p.add_argument("--d-out", type=int, default=2)
    p.add_argument("--spread", type=float, default=3.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--t", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--trust-k", type=int, default=12)
    p.set_defaults(func=cmd_sne_demo)

    p = sub.add_parser("bench", parents=[common], help="forward-pass timing versus candidate count")
    p.add_argument("--m", default="100,1000,5000")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_bench)
    return parser


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        out.write_text(text)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.format = args.format or _DEFAULT_FORMAT[args.command]
        seed = args.seed if args.seed is not None else secrets.randbits(63)
        if seed < 0:
            raise CliError("--seed", "must be nonnegative")
        _note(f"seed: {seed}")
        text = args.func(args, seed)
        _emit(text, args.out)
        return 0
    except CliError as exc:
        _note(f"error: {exc}")
        return 1
    except SubsetRelaxError as exc:
        _note(f"error: {args.command}: {exc}")
        return 1
    except CheckFailed as exc:
        _note(f"check failed: {exc}")
        return 2
    except DivergenceError as exc:
        _note(f"error: {args.command}: {exc}")
        return 2
    except OSError as exc:
        _note(f"error: --out: {exc}")
        return 1
    except Exception as exc:  # noqa: BLE001
        _note(f"internal error: {type(exc).__name__}: {exc}")
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
