"""Command-line front end.

Every command writes one table, either comma-separated with a ``#`` comment
header or as a JSON document whose ``meta`` block carries the same header.
Exit status: 0 success, 1 domain error, 2 accuracy or convergence failure
(partial results are still written when available), 64 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import AccuracyError, DomainError

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_ACCURACY = 2
EXIT_USAGE = 64

COMMANDS = ("solve", "residuals", "balance-check", "asymptotics", "dominating-table", "qtilde",
            "contraction", "refined", "audit", "conjecture", "beta-scan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_grid(text: str) -> List[float]:
    """``"a,b,c"`` lists values; ``"start:stop:count"`` is an inclusive linspace."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            n = int(count)
            if n < 1:
                raise ValueError
            return [float(v) for v in np.linspace(float(start), float(stop), n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise DomainError(f"cannot parse grid {text!r}") from None


# ---------------------------------------------------------------------------
# table rendering


def _fmt(v, digits: int) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{digits}g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def _records(rows) -> List[Dict]:
    out = []
    for r in rows:
        if dataclasses.is_dataclass(r):
            d = {f.name: getattr(r, f.name) for f in dataclasses.fields(r)
                 if not isinstance(getattr(r, f.name), np.ndarray)}
        else:
            d = dict(r)
        out.append(d)
    return out


def render(command: str, params: Dict, rows, fmt: str, digits: int = 12,
           status: str = "ok") -> str:
    records = _records(rows)
    if fmt == "json":
        doc = {"meta": {"artifact": "balanced", "version": __version__, "command": command,
                        "status": status,
                        "params": {k: _jsonable(v) for k, v in sorted(params.items())}},
               "rows": [{k: _jsonable(v) for k, v in r.items()} for r in records]}
        return json.dumps(doc, indent=1) + "\n"
    head = [f"# balanced {__version__}", f"# command={command}", f"# status={status}"]
    head += [f"# {k}={v}" for k, v in sorted(params.items())]
    cols = list(records[0]) if records else []
    lines = head + [",".join(cols)]
    lines += [",".join(_fmt(r[c], digits) for c in cols) for r in records]
    return "\n".join(lines) + "\n"


def emit(text: str, output: Optional[str]) -> None:
    if output:
        from .solver import _atomic_write
        _atomic_write(output, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def _solver_config(args):
    from .solver import SolverConfig
    return SolverConfig(truncation_order=args.order, tol=args.tol, method=args.method)


def _sequence(args):
    from .series import factorial_sequence
    from .solver import read_solution, solve_balanced
    if getattr(args, "input", None):
        return read_solution(args.input)
    if getattr(args, "factorial", False):
        return factorial_sequence(args.order)
    return solve_balanced(args.beta, _solver_config(args))


def cmd_solve(args):
    from .solver import format_solution, solve_balanced
    seq = solve_balanced(args.beta, _solver_config(args))
    if args.format == "csv":
        return format_solution(seq, __version__)
    rows = [{"i": i, "lambda_i": float(v)} for i, v in enumerate(seq.lambdas)]
    params = {"beta": args.beta, "order": args.order, "tol": args.tol, "method": args.method,
              **{k: v for k, v in seq.info.items()}}
    return render("solve", params, rows, "json", digits=17)


def cmd_residuals(args):
    from .solver import SolverConfig, residual_vector
    seq = _sequence(args)
    cfg = SolverConfig(truncation_order=seq.truncation_order, tol=args.tol,
                       domain_cutoff=seq.info.get("R"))
    res = residual_vector(seq, cfg)
    target = np.ones(res.b.size)
    target[0] = 1.0 - seq.beta
    rows = [{"i": i, "b_i": b, "target": t, "deviation": abs(b - t)}
            for i, (b, t) in enumerate(zip(res.b, target))]
    return rows, {"R": res.cutoff, "max_deviation": res.max_deviation}


def cmd_balance_check(args):
    from .solver import SolverConfig, global_balance_check
    seq = _sequence(args)
    s = parse_grid(args.grid) if args.grid else [0.1 * k for k in range(1, 8)]
    cfg = SolverConfig(truncation_order=seq.truncation_order,
                       enforce_count=seq.info.get("N_eff"), domain_cutoff=seq.info.get("R"))
    return global_balance_check(seq, s, cfg), {}


def cmd_asymptotics(args):
    from .series import asymptotic_report
    seq = _sequence(args)
    grid = parse_grid(args.grid) if args.grid else [seq.truncation_order / 4.0]
    return asymptotic_report(seq, grid), {}


def cmd_dominating_table(args):
    from .dominating import pq_extremize
    from .twosided import qtilde_extremize
    rows = []
    for m in parse_grid(args.m or "1,1.01,2,10,576,10000"):
        pq = pq_extremize(m)
        rows.append({"m": m, "p": pq.p, "q": pq.q, "c_at_p": pq.c_at_p, "c_at_q": pq.c_at_q,
                     "q_tilde": qtilde_extremize(m).q_tilde})
    return rows, {}


def cmd_qtilde(args):
    from .twosided import qtilde_extremize
    return [qtilde_extremize(m) for m in parse_grid(args.m or "1.01")], {}


def cmd_contraction(args):
    from .contraction import IterationState, coarse_iterate
    init = IterationState(1e10, 1e10, 2.0, 2.0, 1.0 / 12, 1.0 / 12)
    traj = coarse_iterate(init, args.epsilon, args.max_iter, args.qbar_convention)
    return [_traj_row(s) for s in traj], {}


def _traj_row(s):
    return {"iter": s.iter, "m": s.m, "m_prime": s.m_prime, "p": s.p, "p_prime": s.p_prime,
            "q": s.q, "q_prime": s.q_prime}


def cmd_refined(args):
    from .contraction import refined_iterate
    m0 = parse_grid(args.m)[0] if args.m else 1.009
    return refined_iterate(m0, args.epsilon, args.max_iter), {}


def cmd_audit(args):
    from .contraction import AuditConfig, constants_audit
    rows = constants_audit(AuditConfig(grid=args.points))
    return rows, {"all_passed": all(r.passed for r in rows)}


def cmd_conjecture(args):
    from .solver import conjecture_probe
    seq = _sequence(args)
    grid = parse_grid(args.grid) if args.grid else [0.0, 1.0, 5.0, 10.0]
    return conjecture_probe(seq, grid, seq.info.get("N_eff")), {}


def cmd_beta_scan(args):
    from .solver import beta_scan
    grid = parse_grid(args.grid) if args.grid else [0.1 * k for k in range(10)]
    return beta_scan(grid, args.n, _solver_config(args)), {}


HANDLERS: Dict[str, Callable] = {
    "solve": cmd_solve, "residuals": cmd_residuals, "balance-check": cmd_balance_check,
    "asymptotics": cmd_asymptotics, "dominating-table": cmd_dominating_table,
    "qtilde": cmd_qtilde, "contraction": cmd_contraction, "refined": cmd_refined,
    "audit": cmd_audit, "conjecture": cmd_conjecture, "beta-scan": cmd_beta_scan,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="balanced", description="Balanced power-series coefficients and "
                     "the curvature-band contraction audit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--output", help="write to this file instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        return p

    def seq_flags(p, grid_help=None):
        p.add_argument("--beta", type=float, default=0.0)
        p.add_argument("--order", type=int, default=80)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--method", choices=("newton", "fixed-point"), default="newton")
        if grid_help:
            p.add_argument("--grid", help=grid_help)

    p = add("solve", "solve the balance equations for one beta")
    seq_flags(p)
    for name, help_text, grid_help in (
            ("residuals", "per-index balance moments", None),
            ("balance-check", "integral identity at sample ratios s", "s values"),
            ("asymptotics", "finite-a concentration diagnostics", "a values"),
            ("conjecture", "f(x) / (x^beta e^x) on a grid", "x values")):
        p = add(name, help_text)
        seq_flags(p, grid_help)
        p.add_argument("--input", help="read the sequence from a solution file")
        p.add_argument("--factorial", action="store_true",
                       help="use lambda_i = log i! instead of solving")
    p = add("beta-scan", "c_n as beta varies")
    seq_flags(p, "beta values")
    p.add_argument("--n", type=int, default=1, help="coefficient index to report")
    p = add("dominating-table", "extremal constants p, q and q~ over ratios")
    p.add_argument("--m", help="ratios")
    p = add("qtilde", "two-sided extremal constant")
    p.add_argument("--m", help="ratios")
    p = add("contraction", "coarse band iteration from ratio 1e10")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--qbar-convention", choices=("mprime", "mbar"), default="mprime")
    p = add("refined", "refined iteration m -> I(m) + eps")
    p.add_argument("--m", help="starting ratio in (1, 1.01]")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--max-iter", type=int, default=200)
    p = add("audit", "recompute the published constants")
    p.add_argument("--points", type=int, default=21, help="rectangle grid size per axis")
    return parser


def _params(args) -> Dict:
    skip = {"command", "output", "format"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n{parser.format_usage()}")
        return EXIT_USAGE
    if args.command is None:
        sys.stderr.write(parser.format_usage())
        return EXIT_USAGE
    params = _params(args)
    try:
        result = HANDLERS[args.command](args)
        if isinstance(result, str):
            emit(result, args.output)
            return EXIT_OK
        rows, extra = result
        emit(render(args.command, {**params, **extra}, rows, args.format), args.output)
        return EXIT_OK
    except DomainError as exc:
        sys.stderr.write(f"domain error: {exc}\n")
        return EXIT_DOMAIN
    except AccuracyError as exc:
        sys.stderr.write(f"accuracy error: {exc}\n")
        best = exc.best
        if isinstance(best, list) and best:
            rows = [_traj_row(s) if hasattr(s, "m_prime") else s for s in best]
            emit(render(args.command, params, rows, args.format, status="partial"), args.output)
        return EXIT_ACCURACY


if __name__ == "__main__":
    sys.exit(main())
