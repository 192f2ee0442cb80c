"""``tokentiming`` command line: capacity, ordering entropy, asymptotics, verify."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__, bounds, deadline, iidorder, mc, verify
from .dist import Atom, DensityError, ExponentialPassage, MixedDensity1D, Piece, UniformPassage

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_CONVERGENCE = 0, 1, 2, 3
LN2 = math.log(2.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    version: str
    timestamp: str
    output_digest: str


# --------------------------------------------------------------------------
# parsing helpers
# --------------------------------------------------------------------------

def parse_range(text: str, *, integer: bool = False):
    """``a:b:step`` (inclusive) or ``a:b`` for integers."""
    parts = text.split(":")
    try:
        if integer:
            if len(parts) != 2:
                raise ValueError
            a, b = int(parts[0]), int(parts[1])
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        if len(parts) != 3:
            raise ValueError
        a, b, step = (float(p) for p in parts)
        if step <= 0 or b < a:
            raise ValueError
    except ValueError:
        raise UsageError(f"bad range {text!r}") from None
    n = int(math.floor((b - a) / step + 1e-9))
    return [round(a + i * step, 12) for i in range(n + 1)]


def load_density(path: str) -> MixedDensity1D:
    """Read ``atom <loc> <mass>`` / ``piece <a> <b> const [mass]`` / ``piece <a> <b> exp <rate> [mass]``.

    At most one piece may omit its mass; it receives whatever mass remains.
    """
    atoms, specs = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "atom" and len(tok) == 3:
                    atoms.append(Atom(float(tok[1]), float(tok[2])))
                elif tok[0] == "piece" and len(tok) in (4, 5) and tok[3] == "const":
                    specs.append((float(tok[1]), float(tok[2]), 0.0, float(tok[4]) if len(tok) == 5 else None))
                elif tok[0] == "piece" and len(tok) in (5, 6) and tok[3] == "exp":
                    specs.append((float(tok[1]), float(tok[2]), float(tok[4]), float(tok[5]) if len(tok) == 6 else None))
                else:
                    raise ValueError("unrecognised line")
            except (ValueError, IndexError) as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from None
    missing = [s for s in specs if s[3] is None]
    if len(missing) > 1:
        raise UsageError("at most one piece may omit its mass")
    used = math.fsum([a.mass for a in atoms] + [s[3] for s in specs if s[3] is not None])
    pieces = []
    for a, b, rate, mass in specs:
        m = 1.0 - used if mass is None else mass
        if rate == 0.0:
            if not math.isfinite(b):
                raise UsageError("a constant piece needs a finite end")
            coef = m / (b - a)
        else:
            coef = m * rate / (-math.expm1(-rate * (b - a)) if math.isfinite(b) else 1.0)
        pieces.append(Piece(a, b, coef=coef, rate=rate))
    try:
        return MixedDensity1D(atoms=tuple(atoms), pieces=tuple(pieces))
    except (DensityError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("TOKEN_TIMING_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError("TOKEN_TIMING_SEED must be an integer") from None
    return 0


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _cell(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(columns: list[str], rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        def clean(v):
            if isinstance(v, (float, np.floating)):
                return None if math.isnan(v) else float(v)
            if isinstance(v, np.bool_):
                return bool(v)
            return v

        data = {c: [clean(r.get(c)) for r in rows] for c in columns}
        return json.dumps(data, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def emit(text: str, args, command: str, params: dict, seed: int | None = None) -> None:
    if not args.out:
        sys.stdout.write(text)
        return
    data = text.encode("utf-8")
    with open(args.out, "wb") as fh:
        fh.write(data)
    manifest = RunManifest(
        command=command,
        parameters=params,
        seed=seed,
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        output_digest="sha256:" + hashlib.sha256(data).hexdigest(),
    )
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}


def _pmap(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

CAPACITY_COLUMNS = ["mu_tau", "sigma_star", "capacity_nats", "capacity_bits", "numeric_capacity", "abs_gap"]


def cmd_capacity(args) -> int:
    if args.mu <= 0:
        raise UsageError("--mu must be positive")
    if args.sweep_mutau:
        grid = parse_range(args.sweep_mutau)
    else:
        if args.tau is None or args.tau <= 0:
            raise UsageError("--tau must be positive (or use --sweep-mutau)")
        grid = [args.mu * args.tau]
    if any(x < 0 for x in grid):
        raise UsageError("mu*tau must be nonnegative")
    unit = LN2 if args.bits else 1.0
    cgrid = deadline.CapacityGrid(args.n_input, args.n_output)

    def row(mt):
        if mt == 0:
            return {"mu_tau": 0.0, "sigma_star": 0.0, "capacity_nats": 0.0, "capacity_bits": 0.0, "numeric_capacity": 0.0, "abs_gap": 0.0}
        ch = deadline.DeadlineChannel(args.mu, mt / args.mu)
        c = deadline.capacity(ch)
        num = float(deadline.numeric_capacity(ch, cgrid).capacity) if not args.no_numeric else float("nan")
        return {
            "mu_tau": mt,
            "sigma_star": deadline.optimal_sigma(ch),
            "capacity_nats": c,
            "capacity_bits": c / LN2,
            "numeric_capacity": num / unit,
            "abs_gap": abs(num - c) / unit,
        }

    rows = _pmap(row, grid, args.workers)
    emit(render(CAPACITY_COLUMNS, rows, args.format), args, "capacity", _params(args))
    return EXIT_OK


ORDENT_COLUMNS = ["M", "closed_form_nats", "pipeline_nats", "mc_mean", "mc_stderr", "log_M_factorial"]


def cmd_ordent(args) -> int:
    if args.mu <= 0 or args.tau is None or args.tau <= 0:
        raise UsageError("--mu and --tau must be positive")
    Ms = parse_range(args.M_sweep, integer=True) if args.M_sweep else [args.M]
    if any(m < 1 for m in Ms):
        raise UsageError("M must be at least 1")
    if args.mc_reps and args.mc_reps < mc.MIN_REPLICATIONS:
        raise UsageError(f"--mc-reps must be 0 or at least {mc.MIN_REPLICATIONS}")
    seed = resolve_seed(args.seed)
    passage = ExponentialPassage(args.mu) if args.passage == "exp" else UniformPassage.with_mean(args.mu)
    exponential = args.passage == "exp"

    if args.case == "mean":
        inp = iidorder.mean_constraint_input(args.mu, args.tau)
        closed = lambda M: iidorder.ordering_entropy_mean_constraint(args.mu, args.tau, M)  # noqa: E731
    elif args.case == "deadline":
        inp = iidorder.deadline_input(args.mu, args.tau)
        closed = lambda M: iidorder.ordering_entropy_deadline(args.mu, args.tau, M)  # noqa: E731
    else:
        if not args.density:
            raise UsageError("--case custom requires --density FILE")
        inp = iidorder.IIDInput(load_density(args.density), "custom")
        closed = None
    unit = LN2 if args.bits else 1.0

    def row(M):
        cf = closed(M) if (closed is not None and exponential) else float("nan")
        pipe = iidorder.h_up_iid(inp, passage, M)
        mean = se = float("nan")
        if args.mc_reps:
            est = mc.estimate_ordering_entropy(mc.SimConfig(M, passage, inp, args.mc_reps, seed, args.workers))
            mean, se = est.mean, est.std_error
        return {
            "M": M,
            "closed_form_nats": cf / unit,
            "pipeline_nats": pipe / unit,
            "mc_mean": mean / unit,
            "mc_stderr": se / unit,
            "log_M_factorial": math.lgamma(M + 1) / unit,
        }

    rows = [row(M) for M in Ms]  # MC already uses the worker pool
    emit(render(ORDENT_COLUMNS, rows, args.format), args, "ordent", _params(args), seed)
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    rhos = parse_range(args.rho_sweep) if args.rho_sweep else [args.rho]
    if any(r is None or r <= 0 for r in rhos):
        raise UsageError("rho must be positive")
    unit = LN2 if args.bits else 1.0
    cols = ["rho", "h_over_m_mean_limit", "h_over_m_deadline_limit", "cq_upper"]
    if args.M:
        cols += ["finite_M_mean", "finite_M_deadline"]

    def row(rho):
        r = {
            "rho": rho,
            "h_over_m_mean_limit": iidorder.asymptotic_mean(rho) / unit,
            "h_over_m_deadline_limit": iidorder.asymptotic_deadline(rho) / unit,
            "cq_upper": bounds.cq_upper(rho) / unit,
        }
        if args.M:
            r["finite_M_mean"] = iidorder.finite_m_per_token("mean", rho, args.M, args.mu) / unit
            r["finite_M_deadline"] = iidorder.finite_m_per_token("deadline", rho, args.M, args.mu) / unit
        return r

    rows = _pmap(row, rhos, args.workers)
    emit(render(cols, rows, args.format), args, "asymptotics", _params(args))
    return EXIT_OK


VERIFY_COLUMNS = ["suite", "name", "measured", "expected", "tol", "passed"]


def cmd_verify(args) -> int:
    seed = resolve_seed(args.seed)
    settings = verify.Settings(seed=seed, quick=args.quick, workers=args.workers)
    results = verify.run(args.suite, settings)
    n_fail = sum(not r.passed for r in results)
    report = "".join(r.line() + "\n" for r in results)
    report += f"{len(results) - n_fail} passed, {n_fail} failed\n"
    if args.out:
        emit(render(VERIFY_COLUMNS, [r.as_dict() for r in results], args.format), args, "verify", _params(args), seed)
    sys.stdout.write(report)
    return EXIT_VERIFY if n_fail else EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--mu", type=float, default=1.0, help="passage rate (default 1)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $TOKEN_TIMING_SEED, then 0)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--bits", action="store_true", help="report information in bits instead of nats")
    common.add_argument("--out", default=None, help="write the table here (plus a .manifest.json)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = _Parser(prog="tokentiming", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("capacity", parents=[common], help="deadline-channel capacity vs Blahut-Arimoto")
    c.add_argument("--tau", type=float, default=None)
    c.add_argument("--sweep-mutau", default=None, metavar="A:B:STEP")
    c.add_argument("--n-input", type=int, default=400)
    c.add_argument("--n-output", type=int, default=4000)
    c.add_argument("--no-numeric", action="store_true", help="skip Blahut-Arimoto")
    c.set_defaults(func=cmd_capacity)

    o = sub.add_parser("ordent", parents=[common], help="ordering entropy for i.i.d. launches")
    o.add_argument("--case", choices=("mean", "deadline", "custom"), default="deadline")
    o.add_argument("--tau", type=float, default=1.0)
    o.add_argument("--M", type=int, default=2)
    o.add_argument("--M-sweep", default=None, metavar="A:B")
    o.add_argument("--mc-reps", type=int, default=0)
    o.add_argument("--density", default=None, help="launch density file for --case custom")
    o.add_argument("--passage", choices=("exp", "uniform"), default="exp")
    o.set_defaults(func=cmd_ordent)

    a = sub.add_parser("asymptotics", parents=[common], help="per-token limits and capacity bound")
    a.add_argument("--rho", type=float, default=1.0)
    a.add_argument("--rho-sweep", default=None, metavar="A:B:STEP")
    a.add_argument("--M", type=int, default=None, help="also report finite-M values with tau = M/lambda")
    a.set_defaults(func=cmd_asymptotics)

    v = sub.add_parser("verify", parents=[common], help="run reproduction checks")
    v.add_argument("suite", choices=verify.SUITES + ("all",))
    v.add_argument("--quick", action="store_true")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be positive")
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"tokentiming: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except deadline.ConvergenceError as exc:
        print(f"tokentiming: did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
