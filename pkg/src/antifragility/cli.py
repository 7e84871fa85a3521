"""Command-line front end.

Usage:
    antifragility validate  --model m.json
    antifragility rate      --model m.json --dose 1.0
    antifragility sweep     --model m.json --grid 0.1:5:64 --format json
    antifragility simulate  --model m.json --u 2 --v 0 --N 40 --output traj.csv
    antifragility compare   --model m.json --u 2 --v 0 --N 40
    antifragility dip       --model m.json --dose 1 --grid 1e2:1e5:4
    antifragility decompose --model m.json --dose 1.0

Reports go to --output (default stdout); diagnostics go to stderr. Exit
codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dip import closed_form_eigenvalue, dip_convergence_table, dip_rate
from .dose import DipFamily, SystemModel, load_model
from .errors import InputError, NumericalError
from .metzler import dominant_eigenvalue, flux_decompose, is_irreducible, perron_eigenpair
from .rates import DEFAULT_GRID_POINTS, classify_antifragility, compare_protocols, make_grid, sweep
from .simulation import Protocol, estimate_log_rate, simulate, total_drug, trajectory_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _parse_grid(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX:COUNT, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX:COUNT with numeric fields, got {text!r}") from None
    return lo, hi, count


def _unit_fraction(text: str) -> float:
    val = float(text)
    if not 0 < val <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return val


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="antifragility",
        description="Logarithmic growth rates of dose-parameterized positive linear systems "
        "and pulsed-versus-uniform dosing comparisons.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, metavar="PATH", help="model file (JSON)")
    common.add_argument("--format", choices=("csv", "json"), default=None, help="report format")
    common.add_argument("--output", metavar="PATH", default=None, help="report destination (default: stdout)")
    common.add_argument("--meta", action="store_true", help="prefix the report with a '# ' metadata header block")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser(
        "validate", parents=[common],
        help="check a model file",
        description="Load and validate a model: Metzler property of A(u) over the dose domain, "
        "positive readout c and initial state x0; reports irreducibility at the domain endpoints.",
    )

    p = sub.add_parser(
        "rate", parents=[common],
        help="logarithmic rate rho(u) at one dose",
        description="Logarithmic rate rho(u) = lim (1/t) ln y(t) at constant dose u, computed as the "
        "Frobenius (Perron) eigenvalue of A(u). Reducible A(u) reports the dominant eigenvalue with a flag.",
    )
    p.add_argument("--dose", type=float, required=True, metavar="F")

    p = sub.add_parser(
        "sweep", parents=[common],
        help="rate profile and convexity (antifragility) class",
        description="Sample rho(u) over a uniform dose grid, classify the rate function as convex, "
        "concave, linear or mixed by second differences, and give the antifragility verdict for "
        "reward maximization and cost minimization.",
    )
    p.add_argument("--grid", type=_parse_grid, metavar="MIN:MAX:COUNT", default=None,
                   help=f"dose grid (default: the dose domain with {DEFAULT_GRID_POINTS} points)")

    p = sub.add_parser(
        "simulate", parents=[common],
        help="simulate a uniform or pulsed protocol",
        description="Exact piecewise-constant simulation of x' = A(u) x, y = c x. Use --dose for a "
        "uniform protocol or --u/--v/--alpha for a pulsed one (u for a fraction alpha of each unit "
        "period, v for the rest), repeated N times. Emits t,y,log_y,x_1..x_n.",
    )
    p.add_argument("--dose", type=float, metavar="F")
    p.add_argument("--u", type=float, metavar="F")
    p.add_argument("--v", type=float, metavar="F")
    p.add_argument("--alpha", type=float, default=0.5, metavar="F")
    p.add_argument("--N", type=_positive_int, default=10, metavar="INT", help="number of unit periods")
    p.add_argument("--samples", type=_positive_int, default=8, metavar="INT", help="interior samples per segment")
    p.add_argument("--tail-fraction", type=_unit_fraction, default=0.5, metavar="F")

    p = sub.add_parser(
        "compare", parents=[common],
        help="pulsed (u, v) versus uniform (u+v)/2 with equal total drug",
        description="Pulsed protocol alternating u and v over half periods against the uniform "
        "protocol at the average dose w = (u+v)/2, both delivering the same total drug over N "
        "periods. Compares the measured log-ratio with N * (mean(rho(u), rho(v)) - rho(w)).",
    )
    p.add_argument("--u", type=float, required=True, metavar="F")
    p.add_argument("--v", type=float, required=True, metavar="F")
    p.add_argument("--N", type=_positive_int, required=True, metavar="INT")
    p.add_argument("--samples", type=_positive_int, default=8, metavar="INT")

    p = sub.add_parser(
        "dip", parents=[common],
        help="fast-exchange limit of the two-type model (DIP rate)",
        description="For a two-type (dip) model: convergence of the exact Frobenius eigenvalue to the "
        "drug-induced proliferation rate (b k + d u)/(k + u) as the exchange scale a grows. "
        "--grid gives a-values as AMIN:AMAX:COUNT, log-spaced.",
    )
    p.add_argument("--dose", type=float, default=1.0, metavar="F")
    p.add_argument("--grid", type=_parse_grid, default=(1e2, 1e5, 4), metavar="MIN:MAX:COUNT")

    p = sub.add_parser(
        "decompose", parents=[common],
        help="flux/growth decomposition of A(u)",
        description="Split A(u) into inter-compartment fluxes a_ij (type j to type i) and per-type net "
        "growth rates b_i, with diagonal = -(outflow) + growth.",
    )
    p.add_argument("--dose", type=float, required=True, metavar="F")
    return parser


def _rate_entry(model: SystemModel, u: float) -> dict:
    A = model.matrix_at(u)
    if is_irreducible(A):
        pd = perron_eigenpair(A)
        return {"dose": u, "rho": pd.lambda_F, "irreducible": True, "gap": pd.gap, "theorem_applies": True}
    return {
        "dose": u,
        "rho": dominant_eigenvalue(A),
        "irreducible": False,
        "gap": None,
        "theorem_applies": False,
        "warning": "reducible: rho is the dominant eigenvalue; rate theorem does not apply",
    }


def _cmd_validate(args, model, err):
    lo, hi = model.dose_domain
    return "json", _json({
        "valid": True,
        "n": model.n,
        "family": model.family.kind,
        "dose_domain": [lo, hi],
        "irreducible_at": {"u_min": is_irreducible(model.matrix_at(lo)), "u_max": is_irreducible(model.matrix_at(hi))},
    })


def _cmd_rate(args, model, err):
    return "json", _json(_rate_entry(model, args.dose))


def _cmd_sweep(args, model, err):
    lo, hi, count = args.grid if args.grid else (*model.dose_domain, DEFAULT_GRID_POINTS)
    profile = sweep(model, make_grid(lo, hi, count))
    if (args.format or "csv") == "csv":
        return "csv", _csv(["u", "rho", "second_diff", "irreducible"],
                           ((u, r, s, str(f).lower()) for u, r, s, f in profile.rows()))
    report = profile.to_dict()
    report["antifragility"] = {obj: classify_antifragility(profile, obj).verdict for obj in ("reward_max", "cost_min")}
    return "json", _json(report)


def _cmd_simulate(args, model, err):
    if args.dose is not None:
        if args.u is not None or args.v is not None:
            raise InputError("simulate: give either --dose or --u/--v, not both")
        protocol = Protocol.uniform(args.dose, args.N)
    elif args.u is not None and args.v is not None:
        protocol = Protocol.pulsed(args.u, args.v, args.N, args.alpha)
    else:
        raise InputError("simulate: a protocol needs --dose, or both --u and --v")
    traj = simulate(model, protocol, args.samples)
    rate = estimate_log_rate(traj, args.tail_fraction)
    T = protocol.total_time
    if traj.gap is not None and traj.gap * T * args.tail_fraction < 10:
        err.write(
            f"warning: gap*T*tail_fraction = {traj.gap * T * args.tail_fraction:.3g} < 10; "
            "the transient may bias the rate estimate\n"
        )
    sidecar = traj.sidecar()
    if (args.format or "csv") == "csv":
        if args.output:
            side = Path(args.output).with_suffix(".sidecar.json")
            side.write_text(_json(sidecar), encoding="utf-8")
        return "csv", trajectory_csv(traj)
    return "json", _json({
        "protocol": {"label": protocol.label, "segments": [list(s) for s in protocol.segments], "repeat": protocol.repeat},
        "total_time": T,
        "total_drug": total_drug(protocol),
        "estimated_rate": rate,
        "tail_fraction": args.tail_fraction,
        "gap": traj.gap,
        **sidecar,
        "final_log_y": float(traj.log_y[-1]),
    })


def _cmd_compare(args, model, err):
    cmp = compare_protocols(model, args.u, args.v, args.N, args.samples)
    if not cmp.theorem_applies:
        bad = [k for k, ok in cmp.irreducible.items() if not ok]
        err.write(f"warning: A(u) reducible at {', '.join(bad)}; those rates are dominant eigenvalues\n")
    return "json", _json(cmp.to_dict())


def _cmd_dip(args, model, err):
    fam = model.family
    if not isinstance(fam, DipFamily):
        raise InputError(f"dip: model family is {fam.kind!r}, the dip subcommand needs a 'dip' family")
    u = fam.check_dose(args.dose)
    lo, hi, count = args.grid
    if not (0 < lo <= hi) or count < 1:
        raise InputError(f"dip: a-grid needs 0 < MIN <= MAX and COUNT >= 1, got {lo}:{hi}:{count}")
    a_values = np.geomspace(lo, hi, count) if count > 1 else np.array([lo])
    rows = dip_convergence_table(fam.b, fam.d, fam.k, u, a_values)
    if (args.format or "csv") == "csv":
        return "csv", _csv(["a", "lambda_max", "dip_rate", "abs_error"],
                           ((r["a"], r["lambda_max"], r["dip_rate"], r["abs_error"]) for r in rows))
    ratios = [rows[i + 1]["abs_error"] / rows[i]["abs_error"] if rows[i]["abs_error"] > 0 else None
              for i in range(len(rows) - 1)]
    cf = closed_form_eigenvalue(fam.a, fam.b, fam.d, fam.k, u)
    return "json", _json({
        "dose": u,
        "dip_rate": dip_rate(fam.b, fam.d, fam.k, u),
        "model_a": fam.a,
        "lambda_max_at_model_a": cf.lambda_max,
        "closed_form": {"T": cf.T, "D": cf.D, "x": cf.x, "p": cf.p, "q": cf.q},
        "table": rows,
        "error_ratios": ratios,
        "root_branch": "dominant root taken as (T + sqrt(T^2 - 4D))/2 = (-x + sqrt(x^2 - p x + q))/2",
    })


def _cmd_decompose(args, model, err):
    fd = flux_decompose(model.matrix_at(args.dose))
    return "json", _json({"dose": args.dose, "fluxes": fd.fluxes, "growth": fd.growth})


_COMMANDS = {
    "validate": _cmd_validate,
    "rate": _cmd_rate,
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "dip": _cmd_dip,
    "decompose": _cmd_decompose,
}


def _meta_block(argv, raw: bytes) -> str:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return (
        f"# antifragility {__version__}\n"
        f"# argv: {' '.join(argv)}\n"
        f"# model_sha256: {hashlib.sha256(raw).hexdigest()}\n"
        f"# generated: {stamp}\n"
    )


def run(argv=None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, run one subcommand, write its report; returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.format == "csv" and args.command in ("validate", "rate", "compare", "decompose"):
        stderr.write(f"{args.command}: only --format json is supported\n")
        return EXIT_INPUT
    try:
        raw = Path(args.model).read_bytes()
    except OSError as exc:
        stderr.write(f"{args.command}: cannot read model file {args.model!r}: {exc.strerror}\n")
        return EXIT_INPUT
    try:
        model = load_model(raw)
        _, report = _COMMANDS[args.command](args, model, stderr)
    except InputError as exc:
        stderr.write(f"{args.command}: {exc}\n")
        return EXIT_INPUT
    except NumericalError as exc:
        stderr.write(f"{args.command}: numerical failure: {exc}\n")
        return EXIT_NUMERIC

    if args.meta:
        report = _meta_block(argv, raw) + report
    if args.output:
        Path(args.output).write_text(report, encoding="utf-8")
    else:
        stdout.write(report)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
