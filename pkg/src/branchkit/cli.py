"""Command-line front end.

Subcommands::

    branchkit classify --law FILE
    branchkit evolve   --law FILE --t GRID --s GRID [--tol X] [--order N]
    branchkit evolve   --law FILE --t GRID --dist N
    branchkit limits   --law FILE [--t GRID] [--rho GRID] [--order N]
    branchkit simulate --law FILE --t T --reps N --seed S [--cap C]
    branchkit verify   --law FILE [--suite NAME]

Every subcommand accepts ``--out DIR``; the table is then written to a file
in ``DIR`` together with ``manifest.json``.  Grids are
``start:stop:count`` (linear), ``log:start:stop:count`` (geometric) or a
comma separated list.  Exit codes: 0 success, 2 input error, 3 numerical
failure (a failed verification counts as one).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BranchkitError, ConvergenceError, DomainError, InvalidLawError, UnderflowError
from .evolve import (
    evaluate_series,
    integral_inverse,
    mean,
    pi_evaluator,
    regularity,
    scalar_F,
    series_F,
)
from .law import OffspringLaw, Regime, load_law
from .limits import (
    critical_asymptotics,
    martingale_limit_transform,
    subcritical_limit,
    supercritical_local_limit,
)
from .mc import SimConfig, histogram_chisquare, simulate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

NUMERIC_ERRORS = (ConvergenceError, UnderflowError, FloatingPointError, ArithmeticError)


def fmt(x) -> str:
    """Round-trip float formatting used in every table."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def parse_grid(text: str) -> np.ndarray:
    """``a:b:n``, ``log:a:b:n`` or ``x1,x2,...``."""
    try:
        if text.startswith("log:"):
            a, b, n = text[4:].split(":")
            if float(a) <= 0 or float(b) <= 0:
                raise ValueError("log grids need positive end points")
            return np.geomspace(float(a), float(b), int(n))
        if ":" in text:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise InvalidLawError(f"bad grid {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    law: dict
    command: str
    parameters: dict
    version: str = __version__
    seed: int | None = None
    started: str = ""
    finished: str = ""
    outputs: dict[str, str] = field(default_factory=dict)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _emit(args, name: str, text: str, law: OffspringLaw, started: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    params = {k: v for k, v in vars(args).items() if k not in ("func", "law", "out", "command") and not k.startswith("_")}
    manifest = RunManifest(
        law=law.to_spec(),
        command=args.command,
        parameters=params,
        seed=getattr(args, "seed", None),
        started=started,
        finished=_now(),
        outputs={name: _digest(path)},
    )
    (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _yn(flag) -> str:
    return "n/a" if flag is None else ("yes" if flag else "no")


def cmd_classify(args, law: OffspringLaw) -> int:
    pe = pi_evaluator(law)
    fp = pe.fp
    short = lambda x: "none" if x is None else format(float(x), ".12g")
    xq = law.xlogx_holds(fp.q)
    xr = law.xlogx_holds(fp.r) if fp.r is not None else None
    text = (
        f"q={short(fp.q)} r={short(fp.r)} m={short(fp.mean)} regime={fp.regime.value} "
        f"gamma={short(fp.gamma)} beta={short(pe.beta)} "
        f"regular={_yn(regularity(law).regular)} xlogx_q={_yn(xq)} xlogx_r={_yn(xr)}\n"
    )
    _emit(args, "classify.txt", text, law, args._started)
    return EXIT_OK


def cmd_evolve(args, law: OffspringLaw) -> int:
    ts = parse_grid(args.t)
    failed = False
    if args.dist is not None:
        rows = []
        for t in ts:
            try:
                res = series_F(t, args.dist, law, args.tol)
                rows += [[t, k, p, res.error_estimate, "ok"] for k, p in enumerate(res.value)]
            except NUMERIC_ERRORS as exc:
                failed = True
                rows.append([t, -1, math.nan, math.nan, f"fail: {exc}"])
        text = _csv(["t", "k", "P", "error", "status"], rows)
        _emit(args, "distribution.csv", text, law, args._started)
        return EXIT_NUMERIC if failed else EXIT_OK

    if args.s is None:
        raise InvalidLawError("evolve needs --s GRID or --dist N")
    ss = parse_grid(args.s)
    rows = []
    for t in ts:
        try:
            ser_res = series_F(t, args.order, law, args.tol)
        except (DomainError, *NUMERIC_ERRORS):
            ser_res = None
        for s in ss:
            try:
                a = scalar_F(t, s, law, args.tol)
                vals = [a.value]
                row = [t, s, a.value, a.error_estimate]
                try:
                    b = integral_inverse(t, s, law)
                    row += [b.value, b.error_estimate]
                    vals.append(b.value)
                except DomainError:
                    row += [math.nan, math.nan]
                if ser_res is not None and s < 1:
                    c, ce = evaluate_series(ser_res, s)
                    row += [c, ce]
                    vals.append(c)
                else:
                    row += [math.nan, math.nan]
                row += [max(vals) - min(vals), "ok"]
            except NUMERIC_ERRORS as exc:
                failed = True
                row = [t, s] + [math.nan] * 7 + [f"fail: {exc}"]
            rows.append(row)
    header = ["t", "s", "F_ode", "err_ode", "F_integral", "err_integral", "F_series", "err_series", "route_residual", "status"]
    _emit(args, "evolve.csv", _csv(header, rows), law, args._started)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_limits(args, law: OffspringLaw) -> int:
    pe = pi_evaluator(law)
    regime = pe.fp.regime
    if regime is Regime.CRITICAL:
        ts = parse_grid(args.t or "log:10:10000:7")
        rep = critical_asymptotics(law, pe, ts)
        rows = []
        for i, t in enumerate(rep.t):
            pred = rep.predicted[i] if rep.predicted is not None else math.nan
            rows.append([t, rep.survival[i], pred, rep.survival[i] * law.lam * t * (rep.b if math.isfinite(rep.b) else math.nan)])
        text = _csv(["t", "Q", "Q_predicted", "Q_lambda_t_b"], rows)
        if rep.fitted_slope is not None:
            text += f"# fitted_slope={fmt(rep.fitted_slope)} expected={fmt(-1.0 / rep.alpha)}\n"
        _emit(args, "limits.csv", text, law, args._started)
        return EXIT_OK
    if regime is Regime.SUPERCRITICAL:
        rhos = parse_grid(args.rho or "0.25,1,4")
        loc = supercritical_local_limit(law, pe, args.order)
        mart = martingale_limit_transform(law, pe, rhos)
        out = {
            "regime": regime.value,
            "gamma": loc.gamma,
            "beta": loc.beta,
            "a": loc.a_coeffs.coeffs.tolist(),
            "extinction_limit": None if loc.extinction_limit is None else loc.extinction_limit.coeffs.tolist(),
            "degenerate": mart.degenerate,
            "rho": list(mart.laplace_table),
            "laplace": list(mart.laplace_table.values()),
            "phi": list(mart.phi_table.values()),
        }
    else:
        sl = subcritical_limit(law, pe, args.order)
        out = {"regime": regime.value, "c": sl.c, "pi_1_at_1": sl.pi_1_at_1, "psi": sl.psi.coeffs.tolist()}
    _emit(args, "limits.json", json.dumps(out, indent=2) + "\n", law, args._started)
    return EXIT_OK


def cmd_simulate(args, law: OffspringLaw) -> int:
    t = float(args.t)
    stats = simulate(SimConfig(law, t, args.reps, args.seed, args.cap))
    _emit(args, "simstats.json", stats.to_json() + "\n", law, args._started)
    return EXIT_OK


# -- verification suites -----------------------------------------------------


def _suite_semigroup(law):
    worst = 0.0
    for t, u in [(0.3, 0.7), (1.0, 0.5), (1.7, 0.2)]:
        for s in (0.0, 0.3, 0.7, 0.95):
            inner = scalar_F(u, s, law).value
            worst = max(worst, abs(scalar_F(t + u, s, law).value - scalar_F(t, inner, law).value))
    return worst < 1e-8, f"max |F_(t+u) - F_t(F_u)| = {worst:.3g}"


_T_GRID = (0.25, 0.5, 1.0, 2.0, 3.0)
_S_GRID = (0.0, 0.25, 0.5, 0.75, 0.9)


def _suite_routes(law):
    worst = 0.0
    for t in _T_GRID:
        sr = series_F(t, 256, law, 1e-12)
        for s in _S_GRID:
            a = scalar_F(t, s, law, 1e-12).value
            b = integral_inverse(t, s, law).value
            c, _ = evaluate_series(sr, s)
            worst = max(worst, abs(a - b), abs(a - c))
    return worst < 1e-7, f"max route disagreement = {worst:.3g}"


def _suite_main(law):
    pe = pi_evaluator(law)
    worst = 0.0
    for t in _T_GRID:
        for s in _S_GRID:
            worst = max(worst, pe.main_residual(t, s, scalar_F(t, s, law, 1e-12).value))
    return worst < 1e-6, f"max refined-equation residual = {worst:.3g}"


def _suite_mc(law):
    t = 1.0
    stats = simulate(SimConfig(law, t, 100_000, 20240601))
    probs = np.asarray(series_F(t, 256, law, 1e-11).value)
    p = histogram_chisquare(stats.counts, probs)
    mt = mean(t, law)
    z = (stats.mean - mt) / math.sqrt(stats.variance / stats.replicates)
    return p > 1e-3 and abs(z) < 4, f"chi-square p = {p:.3g}, mean z-score = {z:.2f}"


SUITES = {
    "semigroup": _suite_semigroup,
    "route-agreement": _suite_routes,
    "theorem-main": _suite_main,
    "mc-agreement": _suite_mc,
}


def cmd_verify(args, law: OffspringLaw) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    lines, ok = [], True
    for name in names:
        try:
            passed, detail = SUITES[name](law)
        except (DomainError, *NUMERIC_ERRORS) as exc:
            passed, detail = False, f"error: {exc}"
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}\n")
    _emit(args, "verify.txt", "".join(lines), law, args._started)
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="branchkit", description="Markov branching process toolkit")
    p.add_argument("--version", action="version", version=f"branchkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--law", required=True, help="law spec JSON file")
        sp.add_argument("--out", default=None, help="write outputs and manifest.json here")
        sp.set_defaults(func=func)
        return sp

    add("classify", cmd_classify, "fixed points, regime, beta, regularity")
    sp = add("evolve", cmd_evolve, "F_t(s) table or P(Z_t=k) table")
    sp.add_argument("--t", required=True)
    sp.add_argument("--s", default=None)
    sp.add_argument("--dist", type=int, default=None)
    sp.add_argument("--order", type=int, default=256)
    sp.add_argument("--tol", type=float, default=1e-11)
    sp = add("limits", cmd_limits, "limit laws for the law's regime")
    sp.add_argument("--t", default=None)
    sp.add_argument("--rho", default=None)
    sp.add_argument("--order", type=int, default=64)
    sp = add("simulate", cmd_simulate, "Monte Carlo statistics")
    sp.add_argument("--t", required=True, type=float)
    sp.add_argument("--reps", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cap", type=int, default=10**7)
    sp = add("verify", cmd_verify, "run an invariant suite")
    sp.add_argument("--suite", default="all", choices=["all", *SUITES])
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    args._started = _now()
    try:
        law = load_law(args.law)
        return args.func(args, law)
    except (OSError, InvalidLawError, DomainError, ValueError) as exc:
        print(f"branchkit: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BranchkitError, *NUMERIC_ERRORS) as exc:
        print(f"branchkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
