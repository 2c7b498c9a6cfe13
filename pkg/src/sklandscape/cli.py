"""Command-line front end: ``sklandscape <subcommand> [flags]``.

Exit codes: 0 ok, 2 configuration error, 3 failed check, 4 resource guard.
Every file written with ``--output`` gets a ``<output>.manifest.json``
next to it; ``--no-timestamp`` drops the two time-dependent manifest
fields so that repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import estimators as est
from .ensemble import enumerate_ensemble, simulate
from .errors import DomainError, ResourceError
from .model import RULES
from .rate import critical_constants, rate_table
from .selfcheck import LEVELS, run_selfcheck

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_RESOURCE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# --- flag grammar ------------------------------------------------------------------

def parse_grid(text: str, kind=float) -> list:
    """``start:stop:step`` (stop included when on the grid) or ``a,b,c``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"range {text!r} must be start:stop:step")
            start, stop, step = (kind(p) for p in parts)
            if not step > 0 or stop < start:
                raise ConfigError(f"range {text!r} needs step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = [start + k * step for k in range(count)]
            return [round(v, 12) for v in vals] if kind is float else vals
        return [kind(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse {text!r}: {exc}") from None


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


# --- output ----------------------------------------------------------------------

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render(rows: list[dict], columns: list[str], form: str) -> str:
    if form == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])
        return buf.getvalue()
    body = rows[0] if len(rows) == 1 else rows
    return json.dumps(_jsonable(body), indent=2) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def git_version() -> str:
    """``v<version>-<commits>-g<hash>[-dirty]`` in the style of ``git describe``."""
    here = Path(__file__).resolve().parent

    def git(*cmd):
        return subprocess.run(["git", "-C", str(here), *cmd], capture_output=True,
                              text=True, timeout=10, check=True).stdout.strip()

    try:
        try:
            return git("describe", "--tags", "--long", "--dirty")
        except subprocess.CalledProcessError:
            short = git("rev-parse", "--short", "HEAD")
            dirty = "-dirty" if git("status", "--porcelain", "--untracked-files=no") else ""
            return f"v{__version__}-0-g{short}{dirty}"
    except (OSError, subprocess.SubprocessError):
        return f"v{__version__}"


def write_output(text: str, args, started: float) -> None:
    if args.output is None:
        sys.stdout.write(text)
        return
    path = Path(args.output)
    try:
        path.write_text(text)
        manifest = {
            "command": args.command,
            "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)},
            "seed": args.seed,
            "version": git_version(),
            "output": path.name,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        }
        if not args.no_timestamp:
            manifest["wall_time_s"] = time.perf_counter() - started
            manifest["timestamp"] = datetime.now(timezone.utc).isoformat()
        Path(f"{path}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {exc.filename or path}: {exc.strerror or exc}") from None


def _form(args, default):
    return args.format or default


def _n_values(args):
    if getattr(args, "n_list", None):
        return parse_grid(args.n_list, int)
    if getattr(args, "n", None) is not None:
        return [args.n]
    raise ConfigError("give --n or --n-list")


# --- subcommands -------------------------------------------------------------------

def cmd_constants(args):
    cc = critical_constants()
    lo, hi = 1.0 / (2.0 * math.pi), 2.0 / (3.0 * math.pi)
    row = cc.to_dict()
    row.update(bracket_low=lo, bracket_high=hi, bracket_holds=lo < cc.alpha_star < hi)
    form = _form(args, "json")
    if form == "csv":
        text = render([{"name": k, "value": v} for k, v in row.items()], ["name", "value"], "csv")
    else:
        text = render([row], list(row), "json")
    return text, EXIT_OK if row["bracket_holds"] else EXIT_CHECK


def cmd_rate_table(args):
    rows = rate_table(parse_grid(args.x_grid))
    return render(rows, ["x", "lambda_star", "mu_star", "R", "theta_ratio"], _form(args, "csv")), EXIT_OK


def cmd_prob(args):
    methods = {"quadrature": ["quadrature"], "mc": ["mc"], "both": ["quadrature", "mc"]}[args.method]
    rows = []
    for n in _n_values(args):
        for m in methods:
            if m == "quadrature":
                e = est.local_opt_probability(n)
            else:
                e = est.mc_local_opt_probability(n, args.samples, args.seed, args.threads)
            rows.append({"n": n, **e.to_dict()})
    cols = ["n", "method", "value", "log_value", "error", "n_samples"]
    return render(rows, cols, _form(args, "json" if len(rows) == 1 else "csv")), EXIT_OK


def cmd_exponent(args):
    rows = []
    for n in parse_grid(args.n_list, int):
        c = est.expected_count(n)
        rows.append({"n": n, "log_count_over_n": c.log_count_over_n, "residual": c.exponent_residual})
    return render(rows, ["n", "log_count_over_n", "residual"], _form(args, "csv")), EXIT_OK


def cmd_tail(args):
    xs = parse_grid(args.x_grid) if args.x_grid else [args.x]
    if xs == [None]:
        raise ConfigError("give --x or --x-grid")
    rows = []
    for n in _n_values(args):
        for x in xs:
            t = est.tail_probability(n, x)
            d = t.log_tail.to_dict()
            rows.append({"n": n, "x": x, "method": d["method"], "log_value": d["log_value"],
                         "error": d["error"], "mu_star": t.mu_star, "r_n": t.r_n,
                         "meta": d.get("meta", {})})
    cols = ["n", "x", "method", "log_value", "error", "mu_star", "r_n"]
    return render(rows, cols, _form(args, "json" if len(rows) == 1 else "csv")), EXIT_OK


def cmd_conditional(args):
    if args.mean and (args.delta is not None or args.delta_grid):
        raise ConfigError("--mean cannot be combined with --delta or --delta-grid")
    rows = []
    if args.mean or (args.delta is None and not args.delta_grid):
        for n in _n_values(args):
            e = est.conditional_energy_mean(n)
            rows.append({"n": n, "quantity": "mean", **e.to_dict()})
        cols = ["n", "quantity", "method", "value", "error"]
    else:
        deltas = parse_grid(args.delta_grid) if args.delta_grid else [args.delta]
        for n in _n_values(args):
            for dl in deltas:
                e = est.conditional_energy_tail(n, dl)
                rows.append({"n": n, "delta": dl, **e.to_dict()})
        cols = ["n", "delta", "method", "value", "error"]
    return render(rows, cols, _form(args, "json" if len(rows) == 1 else "csv")), EXIT_OK


def cmd_simulate(args):
    rows = simulate(args.n, args.replicas, args.rule, args.seed, args.threads)
    cols = ["seed", "replica", "rule", "flips", "final_energy", "normalized_energy"]
    return render(rows, cols, _form(args, "csv")), EXIT_OK


def cmd_enumerate(args):
    res = enumerate_ensemble(args.n, args.instances, args.seed, args.threads)
    form = _form(args, "csv")
    if form == "csv":
        rows = [{"seed": r.seed, "count": r.count, "normalized_energy": float(e)}
                for r in res for e in r.normalized_energies]
        text = render(rows, ["seed", "count", "normalized_energy"], "csv")
    else:
        rows = [{"seed": r.seed, "count": r.count,
                 "normalized_energies": [float(e) for e in r.normalized_energies]} for r in res]
        text = json.dumps(rows, indent=2) + "\n"
    counts = [r.count for r in res]
    mean = sum(counts) / len(counts)
    if args.n >= 3:
        expected = 2.0 ** args.n * est.local_opt_probability(args.n).value
        print(f"mean count {mean:.6g} over {len(counts)} instances; 2^n P(n) = {expected:.6g}",
              file=sys.stderr)
    return text, EXIT_OK


def cmd_selfcheck(args):
    results = run_selfcheck(args.level)
    passed = all(r.passed for r in results)
    checks = []
    for r in results:
        d = r.to_dict()
        if args.no_timestamp:
            d.pop("seconds")
        checks.append(d)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}", file=sys.stderr)
    form = _form(args, "json")
    if form == "csv":
        text = render(checks, ["name", "passed"] + ([] if args.no_timestamp else ["seconds"]), "csv")
    else:
        text = json.dumps(_jsonable({"level": args.level, "passed": passed, "checks": checks}),
                          indent=2) + "\n"
    return text, EXIT_OK if passed else EXIT_CHECK


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="64-bit unsigned master seed")
    common.add_argument("--threads", type=_nonneg, default=1, help="worker threads, 0 = all cores")
    common.add_argument("--output", help="write here instead of stdout (plus a manifest)")
    common.add_argument("--format", choices=("csv", "json"), help="default depends on the subcommand")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit time-dependent manifest fields")

    p = argparse.ArgumentParser(prog="sklandscape",
                                description="Local optima of the SK Hamiltonian: exact rates, "
                                            "densities and seeded experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    add("constants", cmd_constants, "v*, alpha* and the bracket check")
    sp = add("rate-table", cmd_rate_table, "lambda*, mu*, R and theta on an x grid")
    sp.add_argument("--x-grid", default="0.8:3.0:0.1")
    sp = add("prob", cmd_prob, "probability that a fixed configuration is a local minimum")
    sp.add_argument("--n", type=int)
    sp.add_argument("--n-list")
    sp.add_argument("--method", choices=("quadrature", "mc", "both"), default="quadrature")
    sp.add_argument("--samples", type=_positive, default=10 ** 6)
    sp = add("exponent", cmd_exponent, "(1/n) log E[#local minima] and its gap to alpha*")
    sp.add_argument("--n-list", default="16,64,256,1024")
    sp = add("tail", cmd_tail, "log P{S >= n x} and r_n(x)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--n-list")
    sp.add_argument("--x", type=float)
    sp.add_argument("--x-grid")
    sp = add("conditional", cmd_conditional, "energy law of a configuration given local optimality")
    sp.add_argument("--n", type=int)
    sp.add_argument("--n-list")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--delta-grid")
    sp.add_argument("--mean", action="store_true", help="report E[-H/n^(3/2) | local min]")
    sp = add("simulate", cmd_simulate, "greedy descent ensemble")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--replicas", type=_positive, default=100)
    sp.add_argument("--rule", choices=RULES, default="steepest")
    sp = add("enumerate", cmd_enumerate, "exhaustive local-minimum enumeration over instances")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--instances", type=_positive, default=100)
    sp = add("selfcheck", cmd_selfcheck, "run the invariant suites")
    sp.add_argument("--level", choices=LEVELS, default="quick")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    started = time.perf_counter()
    try:
        text, code = args.func(args)
        write_output(text, args, started)
    except ResourceError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
