"""Command-line entry point: ``piid <subcommand> ...``.

Every subcommand writes one JSON document (to --output or stdout).  Errors
print a single ``error: <Category>: message`` line on stderr and exit with
2 (config), 3 (I/O) or 4 (solve).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from importlib import resources

import numpy as np

from . import __version__
from .errors import ConfigError, IoError, PiidError, SolveError

EXIT_CODES = {ConfigError: 2, IoError: 3, SolveError: 4}
SIG_DIGITS = 12


# output

def clean(obj):
    """Round floats to 12 significant digits and make the tree JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{SIG_DIGITS}g}")
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=2) + "\n"


def write_atomic(path, text: str):
    """Write via a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".piid-", suffix=".tmp")
    except OSError as exc:
        raise IoError(f"cannot write to {d}: {exc.strerror or exc}") from None
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


def emit(args, payload):
    text = dumps(payload)
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)


def fixture_path(name: str) -> str:
    return str(resources.files("piid") / "data" / name)


def _resolve(path):
    """Paths of the form ``fixture:<name>`` point into the shipped data directory."""
    if path and path.startswith("fixture:"):
        return fixture_path(path.split(":", 1)[1])
    return path


def _need_file(path, what):
    if not path:
        raise ConfigError(f"--{what} is required")
    if not os.path.isfile(path):
        raise IoError(f"{what} file {path} does not exist")
    return path


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


# subcommands

def _region_from_options(opts, spec, args):
    """S for problems that carry their own region (no data file)."""
    from .moments import SConstraint, Shape
    from .robust import cp_rectangle, kt_counts

    if "counts" in opts:
        xA, nA, xJ, nJ = (int(v) for v in opts["counts"])
    elif "proportions" in opts:
        nA, pA, nJ, pJ = opts["proportions"]
        xA, xJ = kt_counts(int(nA), float(pA), int(nJ), float(pJ))
        nA, nJ = int(nA), int(nJ)
    elif "lo" in opts and "hi" in opts:
        lo, hi = np.asarray(opts["lo"], float), np.asarray(opts["hi"], float)
        return SConstraint(Shape.RECTANGLE, 0.5 * (lo + hi), lo, hi, alpha=args.alpha)
    else:
        raise ConfigError("a rectangle S needs 'counts', 'proportions' or 'lo'/'hi'")
    if spec.mu_dim != 2:
        raise ConfigError(f"count-based rectangles are two-dimensional, problem has mu_dim={spec.mu_dim}")
    return cp_rectangle(xA, nA, xJ, nJ, float(opts.get("joint_conf", 1.0 - args.alpha)))


def cmd_solve(args):
    from .mccormick import algorithm1
    from .moments import build_s, compute_moments, read_csv
    from .problem import SolvableProblem, load_problem, require_valid

    spec, opts = load_problem(_need_file(_resolve(args.spec), "spec"))
    require_valid(spec)
    if args.alpha is None:
        args.alpha = float(opts.get("alpha", 0.05))
    _check_alpha(args.alpha)
    shape = (args.shape or opts.get("shape", "box")).lower()
    if shape in ("rectangle", "fixedrectangle", "fixed_rectangle"):
        region = _region_from_options(opts, spec, args)
        data_info = None
    else:
        data = read_csv(_need_file(_resolve(args.data), "data"))
        if data.p != spec.mu_dim:
            raise ConfigError(f"data has {data.p} columns but the problem has mu_dim={spec.mu_dim}")
        m = compute_moments(data)
        region = build_s(m, shape, args.alpha, args.n_sims, args.seed)
        data_info = {"n": data.n, "p": data.p}
    schedule = _schedule(args)
    res = algorithm1(SolvableProblem(spec, region, "min"), schedule, args.gap_tol, seed=args.seed)
    out = {"command": "solve", "version": __version__, "s": region.to_dict(), "data": data_info,
           "schedule": [list(k) for k in schedule], "gap_tol": args.gap_tol, "seed": args.seed,
           "result": res.to_dict()}
    out["lower"], out["upper"] = res.outer
    emit(args, out)


def _schedule(args):
    if args.schedule:
        pairs = []
        for part in args.schedule.split(","):
            try:
                k, g = part.split(":")
                pairs.append((int(k), int(g)))
            except ValueError:
                raise ConfigError(f"schedule entries look like K:G, got {part!r}") from None
        return pairs
    return [(args.K, args.G)]


def _mc_configs(args):
    from .experiments import Mode

    modes = [m.strip() for m in args.mode.split(",")] if args.mode else ["outer", "inner"]
    shapes = [s.strip() for s in args.shape.split(",")] if args.shape else ["box", "ellipsoid"]
    if any(Mode.parse(m) is Mode.MINSKER for m in modes):
        raise ConfigError("use --design table3 for the median-of-means comparison")
    return [(m, s) for s in shapes for m in modes]


def _load_custom(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read design file {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: design must be a JSON object")
    return d


CSV_FIELDS = ["v_dist", "shape", "mode", "n", "reps", "avg_lower", "avg_upper", "coverage", "failures"]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(clean(r.to_dict(details=False)))
    return buf.getvalue()


def cmd_mc(args):
    from .experiments import McDesign, run_mc_multi, run_minsker_comparison

    design = args.design or "table2"
    if design.lower() in ("table2", "table3"):
        design = design.lower()
    base = {"K": args.K, "G": args.G, "seed": args.seed, "n_sims": args.n_sims,
            "alpha": args.alpha if args.alpha is not None else 0.05}
    _check_alpha(base["alpha"])
    rows = []
    t0 = time.perf_counter()
    if design == "table2":
        ns = args.n or [500, 1000, 2000]
        for n in ns:
            d = McDesign(n=n, reps=args.reps or 100, v_dist=args.v_dist or "normal", **base)
            rows += run_mc_multi(d, _mc_configs(args), _progress(args, n))
    elif design == "table3":
        ns = args.n or [10000]
        dists = [args.v_dist] if args.v_dist else ["normal", "t3"]
        for n in ns:
            for v in dists:
                d = McDesign(n=n, reps=args.reps or 10, v_dist=v, **base)
                rows += list(run_minsker_comparison(d, _progress(args, n)))
    else:
        spec = _load_custom(_need_file(args.design, "design"))
        configs = spec.pop("configs", None) or _mc_configs(args)
        ns = args.n or [spec.pop("n", 1000)]
        spec.pop("n", None)
        if args.reps is not None:
            spec["reps"] = args.reps
        fields = {**base, **spec}
        for n in ns:
            try:
                d = McDesign(n=n, **fields)
            except TypeError as exc:
                raise ConfigError(f"bad design file: {exc}") from None
            rows += run_mc_multi(d, configs, _progress(args, n))
    if args.verbose and rows:
        # wall time stays out of the JSON so repeated runs are byte-identical
        print(f"elapsed {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    payload = {"command": "mc", "version": __version__, "design": design,
               "rows": [r.to_dict(details=True) for r in rows]}
    if args.csv:
        write_atomic(args.csv, rows_to_csv(rows))
    emit(args, payload)


def _progress(args, n):
    if not args.verbose:
        return None

    def report(rep, res):
        print(f"n={n} rep={rep} done", file=sys.stderr, flush=True)
        for (mode, shape), r in res.items():
            if "error" in r:
                print(f"  {shape.value}/{mode.value}: {r['error']}", file=sys.stderr, flush=True)

    return report


def cmd_coverage_bound(args):
    from .coverage import (CoverageInputs, estimate_c_sigma, estimate_kappa1, estimate_mu3bar,
                           theorem3_bound)
    from .moments import compute_moments, read_csv

    alpha = args.alpha if args.alpha is not None else 0.05
    _check_alpha(alpha)
    n, p = args.n, args.p
    plug = {}
    mu3bar, c_sigma, kappa1 = args.mu3bar, args.c_sigma, args.kappa1
    if args.data:
        data = read_csv(_need_file(_resolve(args.data), "data"))
        m = compute_moments(data)
        n = n or data.n
        p = p or data.p
        if mu3bar is None:
            mu3bar = plug["mu3bar"] = estimate_mu3bar(data, m)
        if c_sigma is None:
            c_sigma = plug["c_sigma"] = estimate_c_sigma(m)
        if kappa1 is None:
            kappa1 = plug["kappa1"] = estimate_kappa1(data)
    missing = [k for k, v in (("n", n), ("p", p), ("mu3bar", mu3bar), ("c-sigma", c_sigma),
                              ("kappa1", kappa1)) if v is None]
    if missing:
        raise ConfigError("missing --" + ", --".join(missing) + " (or pass --data)")
    inputs = CoverageInputs(p=int(p), n=int(n), mu3bar=float(mu3bar), c_sigma=float(c_sigma),
                            kappa1=float(kappa1))
    p_hat = args.p_hat if args.p_hat is not None else 1.0 - alpha
    try:
        report = theorem3_bound(p_hat, inputs).to_dict()
    except SolveError as exc:
        report = {"br_term": None, "t_star": None, "delta_star": None, "lower_bound": None,
                  "vacuous": True, "feasible": False, "reason": str(exc)}
    out = {"command": "coverage-bound", "version": __version__, "inputs": vars(inputs) | {"p_hat": p_hat}}
    out.update(report)
    if plug:
        out["plug_in"] = plug
    emit(args, out)


def cmd_kt(args):
    from .robust import cp_rectangle, kt_counts, kt_lower, kt_lower_milp

    if args.xA is not None and args.xJ is not None:
        xA, xJ = args.xA, args.xJ
        reconstructed = False
    else:
        xA, xJ = kt_counts(args.nA, args.pA, args.nJ, args.pJ)
        reconstructed = True
    conf = args.conf
    if not 0 < conf < 1:
        raise ConfigError(f"conf must lie in (0, 1), got {conf}")
    region = cp_rectangle(xA, args.nA, xJ, args.nJ, conf)
    closed = kt_lower(region)
    milp = kt_lower_milp(region, args.K)
    out = {"command": "kt", "version": __version__,
           "counts": {"xA": xA, "nA": args.nA, "xJ": xJ, "nJ": args.nJ, "reconstructed": reconstructed},
           "joint_conf": conf, "margin_conf": region.info["margin_conf"],
           "rectangle": {"A": [region.lo[0], region.hi[0]], "J": [region.lo[1], region.hi[1]]},
           "lower_closed_form": closed, "lower_milp": milp, "abs_diff": abs(closed - milp)}
    emit(args, out)


def cmd_minsker_s(args):
    from .moments import read_csv
    from .robust import median_of_means, minsker_condition_check

    data = read_csv(_need_file(_resolve(args.data), "data"))
    res = median_of_means(data, args.delta, args.variant, args.shuffle_seed)
    s = res.to_s()
    out = {"command": "minsker-s", "version": __version__, "s": s.to_dict(),
           "condition": minsker_condition_check(data, args.delta).to_dict()}
    emit(args, out)


# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="piid", description="Confidence intervals for partially identified "
                                 "parameters via optimization over a moment confidence set.")
    ap.add_argument("--version", action="store_true", help="print build metadata and exit")
    sub = ap.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--output", "-o", help="write JSON here instead of stdout")
        p.add_argument("--alpha", type=float, default=None)
        return p

    p = common(sub.add_parser("solve", help="outer and inner bounds for a problem file"))
    p.add_argument("--spec", required=True, help="problem JSON (or fixture:<name>)")
    p.add_argument("--data", help="headerless numeric CSV, one column per mean")
    p.add_argument("--shape", help="box, ellipsoid or rectangle (overrides the file)")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--G", type=int, default=1000)
    p.add_argument("--schedule", help="comma-separated K:G rounds, e.g. 5:200,10:1000")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap-tol", type=float, default=0.05)
    p.add_argument("--n-sims", type=int, default=1000)
    p.set_defaults(func=cmd_solve)

    p = common(sub.add_parser("mc", help="Monte Carlo replication"))
    p.add_argument("--design", default="table2", help="table2, table3 or a design JSON file")
    p.add_argument("--n", type=int, action="append", help="sample size (repeatable)")
    p.add_argument("--reps", type=int)
    p.add_argument("--shape", help="comma-separated shapes")
    p.add_argument("--mode", help="comma-separated modes: outer, inner, fixed")
    p.add_argument("--v-dist", help="normal or t3")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--G", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-sims", type=int, default=1000)
    p.add_argument("--csv", help="also write the summary table here")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_mc)

    p = common(sub.add_parser("coverage-bound", help="finite-sample coverage lower bound"))
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--mu3bar", type=float)
    p.add_argument("--c-sigma", type=float)
    p.add_argument("--kappa1", type=float)
    p.add_argument("--p-hat", type=float, help="nominal coverage of S (default 1 - alpha)")
    p.add_argument("--data", help="CSV for plug-in constants")
    p.set_defaults(func=cmd_coverage_bound)

    p = common(sub.add_parser("kt", help="two-regime choice-probability lower bound"))
    p.add_argument("--nA", type=int, default=16268)
    p.add_argument("--nJ", type=int, default=16226)
    p.add_argument("--pA", type=float, default=0.099)
    p.add_argument("--pJ", type=float, default=0.068)
    p.add_argument("--xA", type=int, help="success count in regime A (skips rounding)")
    p.add_argument("--xJ", type=int)
    p.add_argument("--conf", type=float, default=0.95, help="joint confidence of the rectangle")
    p.add_argument("--K", type=int, default=10)
    p.set_defaults(func=cmd_kt)

    p = common(sub.add_parser("minsker-s", help="median-of-means ball from a data CSV"))
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, default=0.025)
    p.add_argument("--variant", default="geometric")
    p.add_argument("--shuffle-seed", type=int)
    p.set_defaults(func=cmd_minsker_s)
    return ap


def version_text() -> str:
    return (f"piid {__version__} (python {platform.python_version()}, numpy {np.__version__}, "
            f"{platform.system().lower()}-{platform.machine()})")


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; treat as a configuration error
        return 0 if exc.code == 0 else 2
    if args.version:
        print(version_text())
        return 0
    if not args.command:
        ap.print_usage(sys.stderr)
        return 2
    try:
        from threadpoolctl import threadpool_limits

        # single-threaded BLAS keeps floating-point reductions reproducible
        with threadpool_limits(1):
            args.func(args)
    except PiidError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(exc, cls):
                return code
        return 4
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
